#include "pertkit/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pertkit::detect {

namespace {

void check_common(int max_samples, int coeff_count, double sigma, int basis_dim) {
    if (max_samples < 1) throw std::invalid_argument("detector: max_samples must be >= 1");
    if (coeff_count < 1 || coeff_count > basis_dim) {
        throw std::invalid_argument("detector: coeff_count " + std::to_string(coeff_count) +
                                    " out of range [1, " + std::to_string(basis_dim) + "]");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("detector: sigma must be positive");
}

}  // namespace

void PertConfig::validate(int basis_dim) const { check_common(max_samples, coeff_count, sigma, basis_dim); }

void SrtConfig::validate(int basis_dim) const {
    check_common(max_samples, coeff_count, sigma, basis_dim);
    if (!(lower > 0.0) || !(lower < upper)) {
        throw std::invalid_argument("srt: thresholds must satisfy 0 < lower < upper");
    }
    if (norm_order < 1.0) throw std::invalid_argument("srt: norm order must be >= 1");
    if (!(q_clamp > 0.0) || !(q_clamp < 0.5)) throw std::invalid_argument("srt: q_clamp must be in (0, 0.5)");
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::category_change: return "category_change";
        case StopReason::below_lower: return "below_A";
        case StopReason::above_upper: return "above_B";
        case StopReason::budget_exhausted: return "budget_exhausted";
    }
    return "unknown";
}

double q_statistic(const Eigen::VectorXd& y, const Eigen::VectorXd& y_perturbed, double norm_order,
                   double q_clamp) {
    if (y.size() != y_perturbed.size()) throw std::invalid_argument("q_statistic: belief dimension mismatch");
    if (norm_order < 1.0) throw std::invalid_argument("q_statistic: norm order must be >= 1");
    const double k = static_cast<double>(y.size());
    double accum = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        accum += std::pow(std::abs(y[i] - y_perturbed[i]), norm_order);
    }
    const double raw = std::pow(accum, 1.0 / norm_order) / k;
    return std::clamp(raw, q_clamp, 1.0 - q_clamp);
}

DetectionOutcome run_sequential_test(int max_samples, double lower, double upper, bool category_switch,
                                     double q_clamp, const StepFn& step) {
    const double log_lower = lower > 0.0 ? std::log(lower) : -std::numeric_limits<double>::infinity();
    const double log_upper = std::log(upper);

    DetectionOutcome outcome;
    double log_ratio = 0.0;  // R_0 = 1
    for (int j = 1; j <= max_samples; ++j) {
        const StepSample sample = step(j);
        const double q = std::clamp(sample.raw_q, q_clamp, 1.0 - q_clamp);
        outcome.q_trace.push_back(q);
        outcome.samples_used = j;
        if (category_switch && sample.category_changed) {
            outcome.adversarial = true;
            outcome.stop_reason = StopReason::category_change;
            return outcome;
        }
        log_ratio += std::log(q) - std::log1p(-q);
        if (log_ratio < log_lower) {
            outcome.adversarial = false;
            outcome.stop_reason = StopReason::below_lower;
            return outcome;
        }
        if (log_ratio > log_upper) {
            outcome.adversarial = true;
            outcome.stop_reason = StopReason::above_upper;
            return outcome;
        }
    }
    outcome.adversarial = false;
    outcome.samples_used = max_samples;
    outcome.stop_reason = StopReason::budget_exhausted;
    return outcome;
}

DetectionOutcome pert_detect(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                             const Eigen::VectorXd& image, const PertConfig& config, RandomStream& rng) {
    config.validate(basis.dim());
    if (image.size() != basis.dim()) throw std::invalid_argument("pert_detect: image/basis dimension mismatch");

    const Eigen::VectorXd belief = classifier::forward(model, image);
    const int clean_label = classifier::predict(model, image);
    const Eigen::VectorXd coeffs = spectral::project(image, basis);

    DetectionOutcome outcome;
    for (int j = 1; j <= config.max_samples; ++j) {
        Eigen::VectorXd perturbed =
            spectral::perturb_least_significant(coeffs, config.coeff_count, config.sigma, rng);
        Eigen::VectorXd candidate = spectral::reconstruct(perturbed, basis);
        Eigen::VectorXd candidate_belief = classifier::forward(model, candidate);
        outcome.q_trace.push_back(q_statistic(belief, candidate_belief, 2.0, 1e-6));
        outcome.samples_used = j;
        int candidate_label = 0;
        for (int i = 1; i < candidate_belief.size(); ++i) {
            if (candidate_belief[i] > candidate_belief[candidate_label]) candidate_label = i;
        }
        if (candidate_label != clean_label) {
            outcome.adversarial = true;
            outcome.stop_reason = StopReason::category_change;
            return outcome;
        }
    }
    outcome.adversarial = false;
    outcome.samples_used = config.max_samples;
    outcome.stop_reason = StopReason::budget_exhausted;
    return outcome;
}

DetectionOutcome srt_unchecked(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                               const Eigen::VectorXd& image, const SrtConfig& config, RandomStream& rng) {
    check_common(config.max_samples, config.coeff_count, config.sigma, basis.dim());
    if (image.size() != basis.dim()) throw std::invalid_argument("srt: image/basis dimension mismatch");

    const Eigen::VectorXd belief = classifier::forward(model, image);
    const int clean_label = classifier::predict(model, image);
    const Eigen::VectorXd coeffs = spectral::project(image, basis);

    auto step = [&](int) -> StepSample {
        Eigen::VectorXd perturbed =
            spectral::perturb_least_significant(coeffs, config.coeff_count, config.sigma, rng);
        Eigen::VectorXd candidate = spectral::reconstruct(perturbed, basis);
        Eigen::VectorXd candidate_belief = classifier::forward(model, candidate);
        StepSample sample;
        const double k = static_cast<double>(belief.size());
        double accum = 0.0;
        for (Eigen::Index i = 0; i < belief.size(); ++i) {
            accum += std::pow(std::abs(belief[i] - candidate_belief[i]), config.norm_order);
        }
        sample.raw_q = std::pow(accum, 1.0 / config.norm_order) / k;
        int candidate_label = 0;
        for (int i = 1; i < candidate_belief.size(); ++i) {
            if (candidate_belief[i] > candidate_belief[candidate_label]) candidate_label = i;
        }
        sample.category_changed = candidate_label != clean_label;
        return sample;
    };

    return run_sequential_test(config.max_samples, config.lower, config.upper, config.category_switch,
                               config.q_clamp, step);
}

DetectionOutcome srt(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                     const Eigen::VectorXd& image, const SrtConfig& config, RandomStream& rng) {
    config.validate(basis.dim());
    return srt_unchecked(model, basis, image, config, rng);
}

}  // namespace pertkit::detect
