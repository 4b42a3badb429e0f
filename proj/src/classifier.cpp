#include "pertkit/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pertkit/binio.hpp"

namespace pertkit::classifier {

namespace {

Eigen::VectorXd apply_activation(const Eigen::VectorXd& z, Activation act) {
    if (act == Activation::identity) return z;
    return z.cwiseMax(0.0);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    Eigen::VectorXd shifted = (z.array() - z.maxCoeff()).exp();
    return shifted / shifted.sum();
}

// Forward pass keeping pre-activations; needed by every backward path.
struct ForwardTrace {
    std::vector<Eigen::VectorXd> pre;   // z per layer
    std::vector<Eigen::VectorXd> post;  // activation output per layer
};

ForwardTrace run_forward(const MlpModel& model, const Eigen::VectorXd& x) {
    ForwardTrace trace;
    trace.pre.reserve(model.layers.size());
    trace.post.reserve(model.layers.size());
    const Eigen::VectorXd* current = &x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        Eigen::VectorXd z = layer.weights * (*current) + layer.bias;
        trace.pre.push_back(z);
        const bool last = (l + 1 == model.layers.size());
        trace.post.push_back(last ? z : apply_activation(z, layer.activation));
        current = &trace.post.back();
    }
    return trace;
}

void check_input(const MlpModel& model, const Eigen::VectorXd& x, const char* op) {
    if (model.layers.empty()) throw std::invalid_argument(std::string(op) + ": empty model");
    if (x.size() != model.input_dim()) {
        throw std::invalid_argument(std::string(op) + ": input dimension " + std::to_string(x.size()) +
                                    " does not match model input " + std::to_string(model.input_dim()));
    }
}

}  // namespace

void MlpModel::validate() const {
    if (layers.empty()) throw std::invalid_argument("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        if (layer.bias.size() != layer.weights.rows()) {
            throw std::invalid_argument("layer " + std::to_string(l) + " bias/weight row mismatch");
        }
        if (l > 0 && layers[l - 1].weights.rows() != layer.weights.cols()) {
            throw std::invalid_argument("layer " + std::to_string(l) + " breaks the dimension chain");
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw std::invalid_argument("layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
}

Eigen::VectorXd logits(const MlpModel& model, const Eigen::VectorXd& x) {
    check_input(model, x, "logits");
    ForwardTrace trace = run_forward(model, x);
    return trace.pre.back();
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x) {
    Eigen::VectorXd z = logits(model, x);
    if (!z.allFinite()) throw std::runtime_error("forward: non-finite activations (corrupted model?)");
    return softmax(z);
}

int predict(const MlpModel& model, const Eigen::VectorXd& x) {
    Eigen::VectorXd probs = forward(model, x);
    int best = 0;
    for (int i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;  // strict: ties keep the lowest index
    }
    return best;
}

Eigen::VectorXd input_gradient(const MlpModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& dloss_dlogits) {
    check_input(model, x, "input_gradient");
    if (dloss_dlogits.size() != model.output_dim()) {
        throw std::invalid_argument("input_gradient: logit gradient dimension mismatch");
    }
    ForwardTrace trace = run_forward(model, x);
    Eigen::VectorXd delta = dloss_dlogits;
    for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
        const Layer& layer = model.layers[static_cast<std::size_t>(l)];
        Eigen::VectorXd upstream = layer.weights.transpose() * delta;
        if (l == 0) return upstream;
        const Layer& below = model.layers[static_cast<std::size_t>(l - 1)];
        if (below.activation == Activation::relu) {
            const Eigen::VectorXd& z = trace.pre[static_cast<std::size_t>(l - 1)];
            delta = upstream;
            for (Eigen::Index i = 0; i < delta.size(); ++i) {
                if (z[i] <= 0.0) delta[i] = 0.0;
            }
        } else {
            delta = upstream;
        }
    }
    return Eigen::VectorXd::Zero(x.size());  // unreachable
}

Eigen::VectorXd loss_gradient(const MlpModel& model, const Eigen::VectorXd& x, int label) {
    if (label < 0 || label >= model.output_dim()) {
        throw std::invalid_argument("loss_gradient: label " + std::to_string(label) + " out of range");
    }
    Eigen::VectorXd dz = forward(model, x);
    dz[label] -= 1.0;
    return input_gradient(model, x, dz);
}

MlpModel make_mlp(int input_dim, int hidden, int num_classes, RandomStream& rng) {
    if (input_dim < 1 || hidden < 1 || num_classes < 2) {
        throw std::invalid_argument("make_mlp: bad dimensions");
    }
    auto init_layer = [&rng](int rows, int cols, Activation act) {
        Layer layer;
        layer.weights.resize(rows, cols);
        const double scale = std::sqrt(2.0 / static_cast<double>(cols));
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) layer.weights(r, c) = scale * rng.normal();
        }
        layer.bias = Eigen::VectorXd::Zero(rows);
        layer.activation = act;
        return layer;
    };
    MlpModel model;
    model.layers.push_back(init_layer(hidden, input_dim, Activation::relu));
    model.layers.push_back(init_layer(num_classes, hidden, Activation::identity));
    return model;
}

TrainResult train_mlp(const Eigen::MatrixXd& images, const std::vector<int>& labels, int num_classes,
                      const TrainConfig& config) {
    const Eigen::Index n = images.rows();
    if (n == 0) throw std::invalid_argument("train_mlp: empty dataset");
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw std::invalid_argument("train_mlp: image/label count mismatch");
    }
    for (int label : labels) {
        if (label < 0 || label >= num_classes) throw std::invalid_argument("train_mlp: label out of range");
    }
    if (config.epochs < 0 || config.batch_size < 1) throw std::invalid_argument("train_mlp: bad config");

    RandomStream rng(config.seed);
    MlpModel model = make_mlp(static_cast<int>(images.cols()), config.hidden, num_classes, rng);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the owned stream keeps shuffles reproducible.
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[rng.index(i + 1)]);
        }
        epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index stop = std::min<Eigen::Index>(start + config.batch_size, n);
            std::vector<Eigen::MatrixXd> grad_w(model.layers.size());
            std::vector<Eigen::VectorXd> grad_b(model.layers.size());
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                grad_w[l] = Eigen::MatrixXd::Zero(model.layers[l].weights.rows(), model.layers[l].weights.cols());
                grad_b[l] = Eigen::VectorXd::Zero(model.layers[l].bias.size());
            }
            for (Eigen::Index k = start; k < stop; ++k) {
                const Eigen::Index idx = order[static_cast<std::size_t>(k)];
                const Eigen::VectorXd x = images.row(idx).transpose();
                const int label = labels[static_cast<std::size_t>(idx)];

                // Forward with cached activations.
                std::vector<Eigen::VectorXd> pre, post;
                const Eigen::VectorXd* current = &x;
                for (std::size_t l = 0; l < model.layers.size(); ++l) {
                    const Layer& layer = model.layers[l];
                    Eigen::VectorXd z = layer.weights * (*current) + layer.bias;
                    pre.push_back(z);
                    const bool last = (l + 1 == model.layers.size());
                    post.push_back(last ? z : apply_activation(z, layer.activation));
                    current = &post.back();
                }
                const Eigen::VectorXd& z_out = pre.back();
                const double log_norm = std::log((z_out.array() - z_out.maxCoeff()).exp().sum()) + z_out.maxCoeff();
                epoch_loss += log_norm - z_out[label];

                Eigen::VectorXd delta = softmax(z_out);
                delta[label] -= 1.0;
                for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
                    const std::size_t ul = static_cast<std::size_t>(l);
                    const Eigen::VectorXd& input_act = (l == 0) ? x : post[ul - 1];
                    grad_w[ul] += delta * input_act.transpose();
                    grad_b[ul] += delta;
                    if (l > 0) {
                        Eigen::VectorXd upstream = model.layers[ul].weights.transpose() * delta;
                        if (model.layers[ul - 1].activation == Activation::relu) {
                            for (Eigen::Index i = 0; i < upstream.size(); ++i) {
                                if (pre[ul - 1][i] <= 0.0) upstream[i] = 0.0;
                            }
                        }
                        delta = upstream;
                    }
                }
            }
            const double scale = config.learning_rate / static_cast<double>(stop - start);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                model.layers[l].weights -= scale * grad_w[l];
                model.layers[l].bias -= scale * grad_b[l];
            }
        }
        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) {
            throw std::runtime_error("train_mlp diverged at epoch " + std::to_string(epoch) +
                                     " (non-finite loss); lower the learning rate");
        }
    }

    TrainResult result;
    result.model = std::move(model);
    result.final_loss = epoch_loss;
    int correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (predict(result.model, images.row(i).transpose()) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return result;
}

void save_model(const MlpModel& model, const std::string& path) {
    model.validate();
    auto out = binio::open_out(path);
    binio::write_magic(out, "PMLP");
    binio::write_u32(out, static_cast<std::uint32_t>(model.layers.size()));
    for (const Layer& layer : model.layers) {
        const auto rows = static_cast<std::uint32_t>(layer.weights.rows());
        const auto cols = static_cast<std::uint32_t>(layer.weights.cols());
        binio::write_u32(out, rows);
        binio::write_u32(out, cols);
        binio::write_u8(out, static_cast<std::uint8_t>(layer.activation));
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) binio::write_f64(out, layer.weights(r, c));
        }
        for (std::uint32_t r = 0; r < rows; ++r) binio::write_f64(out, layer.bias[r]);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

MlpModel load_model(const std::string& path) {
    auto in = binio::open_in(path);
    binio::expect_magic(in, "PMLP", "model");
    const auto layer_count = binio::read_u32(in, "layer count");
    if (layer_count == 0 || layer_count > 64) throw std::runtime_error("model file has implausible layer count");
    MlpModel model;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        Layer layer;
        const auto rows = binio::read_u32(in, "layer rows");
        const auto cols = binio::read_u32(in, "layer cols");
        const auto act = binio::read_u8(in, "activation tag");
        if (act > 1) throw std::runtime_error("model file has unknown activation tag");
        layer.activation = static_cast<Activation>(act);
        layer.weights.resize(rows, cols);
        layer.bias.resize(rows);
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) layer.weights(r, c) = binio::read_f64(in, "weights");
        }
        for (std::uint32_t r = 0; r < rows; ++r) layer.bias[r] = binio::read_f64(in, "biases");
        model.layers.push_back(std::move(layer));
    }
    binio::expect_eof(in, "model file");
    model.validate();
    return model;
}

}  // namespace pertkit::classifier
