#pragma once

#include <Eigen/Dense>

#include "pertkit/classifier.hpp"
#include "pertkit/rng.hpp"

namespace pertkit::attacks {

// Infinity-norm attack budget, pixel units.
struct AttackBudget {
    double epsilon = 0.1;
    double step_size = 0.02;
    int iterations = 10;

    void validate() const;
};

struct AttackResult {
    Eigen::VectorXd adversarial;
    bool success = false;  // predicted label changed from the clean prediction
    double l2_distortion = 0.0;
    double linf_distortion = 0.0;
    bool degenerate_gradient = false;  // gradient vanished everywhere, image returned unmodified
    int clean_label = -1;
    int adversarial_label = -1;
};

// One signed-gradient step, clipped to [0,1].
AttackResult fgsm(const classifier::MlpModel& model, const Eigen::VectorXd& x, int label, double epsilon);

// Iterated signed-gradient steps, each iterate clipped to [0,1] and to the
// epsilon ball around x.
AttackResult bim(const classifier::MlpModel& model, const Eigen::VectorXd& x, int label,
                 const AttackBudget& budget);

// bim with optional uniform random initialization inside the epsilon ball.
AttackResult pgd(const classifier::MlpModel& model, const Eigen::VectorXd& x, int label,
                 const AttackBudget& budget, bool random_start, RandomStream& rng);

struct CwConfig {
    double c_min = 1e-3;
    double c_max = 1e3;
    int rounds = 6;
    int iterations = 200;
    double learning_rate = 0.05;

    void validate() const;
};

// Minimizes ||x' - x||_2^2 + c * f(x') with f the hinge on the logit margin
// of the clean label; binary search keeps the smallest succeeding c and the
// result is the successful adversarial with the smallest L2 distortion.
AttackResult cw_l2(const classifier::MlpModel& model, const Eigen::VectorXd& x, int label,
                   const CwConfig& config);

}  // namespace pertkit::attacks
