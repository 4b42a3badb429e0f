#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pertkit/rng.hpp"

namespace pertkit::classifier {

enum class Activation : std::uint8_t { relu = 0, identity = 1 };

struct Layer {
    Eigen::MatrixXd weights;  // output_dim x input_dim
    Eigen::VectorXd bias;
    Activation activation = Activation::relu;
};

// Small fully-connected network; the final layer's pre-activation feeds a
// softmax. Immutable once trained or loaded.
struct MlpModel {
    std::vector<Layer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weights.cols()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weights.rows()); }
    void validate() const;  // dimension chain + finite parameters
};

// Softmax belief vector; entries in [0,1], sum 1.
Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x);

// Final pre-activation values.
Eigen::VectorXd logits(const MlpModel& model, const Eigen::VectorXd& x);

// Argmax of forward(); ties go to the lowest index.
int predict(const MlpModel& model, const Eigen::VectorXd& x);

// Exact gradient of cross-entropy(forward(x), label) with respect to x.
Eigen::VectorXd loss_gradient(const MlpModel& model, const Eigen::VectorXd& x, int label);

// Backpropagates an arbitrary gradient w.r.t. the logits down to the input.
// Attack objectives that are not cross-entropy go through this.
Eigen::VectorXd input_gradient(const MlpModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& dloss_dlogits);

struct TrainConfig {
    int hidden = 64;
    int epochs = 30;
    double learning_rate = 0.05;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

struct TrainResult {
    MlpModel model;
    double train_accuracy = 0.0;
    double final_loss = 0.0;
};

// Seeded He-style initialization of an input->hidden(relu)->output model.
MlpModel make_mlp(int input_dim, int hidden, int num_classes, RandomStream& rng);

// Minibatch SGD on cross-entropy. Deterministic given (data order, config).
// Throws if the loss goes non-finite.
TrainResult train_mlp(const Eigen::MatrixXd& images, const std::vector<int>& labels, int num_classes,
                      const TrainConfig& config);

// Binary model file, magic "PMLP"; round-trips bit-exactly.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace pertkit::classifier
