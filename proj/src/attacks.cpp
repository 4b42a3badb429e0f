#include "pertkit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace pertkit::attacks {

namespace {

using classifier::MlpModel;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool all_zero(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff() == 0.0; }

void finish(AttackResult& result, const MlpModel& model, const Eigen::VectorXd& x) {
    result.clean_label = classifier::predict(model, x);
    result.adversarial_label = classifier::predict(model, result.adversarial);
    result.success = result.adversarial_label != result.clean_label;
    result.l2_distortion = (result.adversarial - x).norm();
    result.linf_distortion = (result.adversarial - x).cwiseAbs().maxCoeff();
}

void check_image(const MlpModel& model, const Eigen::VectorXd& x, int label) {
    if (x.size() != model.input_dim()) throw std::invalid_argument("attack: image/model dimension mismatch");
    if (label < 0 || label >= model.output_dim()) throw std::invalid_argument("attack: label out of range");
}

}  // namespace

void AttackBudget::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("budget: epsilon must be positive");
    if (!(step_size > 0.0) || step_size > epsilon) {
        throw std::invalid_argument("budget: step_size must be in (0, epsilon]");
    }
    if (iterations < 1) throw std::invalid_argument("budget: iterations must be >= 1");
}

void CwConfig::validate() const {
    if (!(c_min > 0.0) || !(c_max >= c_min)) throw std::invalid_argument("cw: multiplier range must be positive");
    if (rounds < 1 || iterations < 1) throw std::invalid_argument("cw: rounds and iterations must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("cw: learning rate must be positive");
}

AttackResult fgsm(const MlpModel& model, const Eigen::VectorXd& x, int label, double epsilon) {
    check_image(model, x, label);
    if (epsilon < 0.0 || !std::isfinite(epsilon)) throw std::invalid_argument("fgsm: epsilon must be >= 0");

    AttackResult result;
    Eigen::VectorXd grad = classifier::loss_gradient(model, x, label);
    if (all_zero(grad)) {
        result.adversarial = x;
        result.degenerate_gradient = true;
        finish(result, model, x);
        return result;
    }
    result.adversarial = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        result.adversarial[i] = std::clamp(x[i] + epsilon * sign_of(grad[i]), 0.0, 1.0);
    }
    finish(result, model, x);
    return result;
}

AttackResult bim(const MlpModel& model, const Eigen::VectorXd& x, int label, const AttackBudget& budget) {
    check_image(model, x, label);
    budget.validate();

    AttackResult result;
    Eigen::VectorXd current = x;
    bool any_movement = false;
    for (int iter = 0; iter < budget.iterations; ++iter) {
        Eigen::VectorXd grad = classifier::loss_gradient(model, current, label);
        if (!all_zero(grad)) any_movement = true;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double v = current[i] + budget.step_size * sign_of(grad[i]);
            v = std::clamp(v, x[i] - budget.epsilon, x[i] + budget.epsilon);
            current[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    result.adversarial = current;
    result.degenerate_gradient = !any_movement;
    finish(result, model, x);
    return result;
}

AttackResult pgd(const MlpModel& model, const Eigen::VectorXd& x, int label, const AttackBudget& budget,
                 bool random_start, RandomStream& rng) {
    check_image(model, x, label);
    budget.validate();

    Eigen::VectorXd start = x;
    if (random_start) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            start[i] = std::clamp(x[i] + rng.uniform(-budget.epsilon, budget.epsilon), 0.0, 1.0);
        }
    }

    AttackResult result;
    Eigen::VectorXd current = start;
    bool any_movement = random_start;
    for (int iter = 0; iter < budget.iterations; ++iter) {
        Eigen::VectorXd grad = classifier::loss_gradient(model, current, label);
        if (!all_zero(grad)) any_movement = true;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double v = current[i] + budget.step_size * sign_of(grad[i]);
            v = std::clamp(v, x[i] - budget.epsilon, x[i] + budget.epsilon);
            current[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    result.adversarial = current;
    result.degenerate_gradient = !any_movement;
    finish(result, model, x);
    return result;
}

AttackResult cw_l2(const MlpModel& model, const Eigen::VectorXd& x, int label, const CwConfig& config) {
    check_image(model, x, label);
    config.validate();
    const int num_classes = model.output_dim();

    // Hinge on the logit margin of the attacked label: zero once some other
    // class overtakes it, positive while the model still prefers `label`.
    auto margin_loss = [&](const Eigen::VectorXd& z, Eigen::VectorXd& dloss_dz) {
        int runner_up = label == 0 ? 1 : 0;
        for (int i = 0; i < num_classes; ++i) {
            if (i != label && z[i] > z[runner_up]) runner_up = i;
        }
        const double margin = z[label] - z[runner_up];
        dloss_dz = Eigen::VectorXd::Zero(num_classes);
        if (margin > 0.0) {
            dloss_dz[label] = 1.0;
            dloss_dz[runner_up] = -1.0;
        }
        return std::max(0.0, margin);
    };

    // Inner optimization at fixed multiplier c; returns the successful
    // iterate with the smallest L2, if any.
    auto run_round = [&](double c) -> std::optional<Eigen::VectorXd> {
        Eigen::VectorXd current = x;
        std::optional<Eigen::VectorXd> best;
        double best_l2 = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < config.iterations; ++iter) {
            Eigen::VectorXd z = classifier::logits(model, current);
            if (!z.allFinite()) return std::nullopt;  // divergence: drop this round
            Eigen::VectorXd dloss_dz;
            margin_loss(z, dloss_dz);
            Eigen::VectorXd grad = 2.0 * (current - x) + c * classifier::input_gradient(model, current, dloss_dz);
            current -= config.learning_rate * grad;
            if (!current.allFinite()) return std::nullopt;
            for (Eigen::Index i = 0; i < current.size(); ++i) current[i] = std::clamp(current[i], 0.0, 1.0);
            if (classifier::predict(model, current) != label) {
                const double l2 = (current - x).norm();
                if (l2 < best_l2) {
                    best_l2 = l2;
                    best = current;
                }
            }
        }
        return best;
    };

    AttackResult result;
    result.adversarial = x;
    double best_l2 = std::numeric_limits<double>::infinity();
    bool found = false;

    double lo = 0.0;
    double hi = config.c_max;
    double c = config.c_min;
    for (int round = 0; round < config.rounds; ++round) {
        auto candidate = run_round(c);
        if (candidate) {
            const double l2 = (*candidate - x).norm();
            if (l2 < best_l2) {
                best_l2 = l2;
                result.adversarial = *candidate;
            }
            found = true;
            hi = c;
            if (round == 0) break;  // c_min already succeeds: smallest c in range
            c = 0.5 * (lo + hi);
        } else {
            lo = c;
            c = found ? 0.5 * (lo + hi) : std::min(c * 10.0, config.c_max);
        }
    }

    finish(result, model, x);
    if (!found) {
        result.adversarial = x;
        result.success = false;
        result.l2_distortion = 0.0;
        result.linf_distortion = 0.0;
        result.adversarial_label = result.clean_label;
    }
    return result;
}

}  // namespace pertkit::attacks
