#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "pertkit/classifier.hpp"
#include "pertkit/rng.hpp"
#include "pertkit/spectral.hpp"

namespace pertkit::detect {

struct PertConfig {
    int max_samples = 25;  // T
    int coeff_count = 1;   // C
    double sigma = 0.4;

    void validate(int basis_dim) const;
};

struct SrtConfig {
    double lower = 0.01;  // A
    double upper = 5.0;   // B
    int max_samples = 25;
    int coeff_count = 1;
    double sigma = 0.4;
    bool category_switch = true;  // Q
    double norm_order = 2.0;      // p
    double q_clamp = 1e-6;

    void validate(int basis_dim) const;
};

enum class StopReason { category_change, below_lower, above_upper, budget_exhausted };

std::string to_string(StopReason reason);

struct DetectionOutcome {
    bool adversarial = false;
    int samples_used = 0;            // N
    std::vector<double> q_trace;     // clamped q_j, one per sample used
    StopReason stop_reason = StopReason::budget_exhausted;
};

// Normalized p-norm distance between two belief vectors, clamped into
// [q_clamp, 1 - q_clamp].
double q_statistic(const Eigen::VectorXd& y, const Eigen::VectorXd& y_perturbed, double norm_order,
                   double q_clamp);

// One perturbation step as seen by the sequential test: the raw (pre-clamp)
// statistic and whether the predicted category changed.
struct StepSample {
    double raw_q = 0.0;
    bool category_changed = false;
};
using StepFn = std::function<StepSample(int step)>;

// Core doubly-threshold rule over an arbitrary step source. Accumulates the
// ratio prod q_j / (1-q_j) in log domain with R_0 = 1; strict comparisons
// against (lower, upper); equal values keep sampling. A nonpositive lower
// threshold disables the below-lower exit (the ratio is always positive).
DetectionOutcome run_sequential_test(int max_samples, double lower, double upper, bool category_switch,
                                     double q_clamp, const StepFn& step);

// Fixed-budget detector: flags the image at the first perturbed sample whose
// predicted category changes. q_trace is filled as a diagnostic using the
// default 2-norm statistic.
DetectionOutcome pert_detect(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                             const Eigen::VectorXd& image, const PertConfig& config, RandomStream& rng);

// Sequential ratio test with thresholds (lower, upper) and optional
// category-change early exit.
DetectionOutcome srt(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                     const Eigen::VectorXd& image, const SrtConfig& config, RandomStream& rng);

// srt without the threshold-range precondition on `lower`; used by threshold
// training where SPSA perturbation can push the lower threshold to zero or
// below. Public srt validates 0 < lower < upper and then delegates here.
DetectionOutcome srt_unchecked(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                               const Eigen::VectorXd& image, const SrtConfig& config, RandomStream& rng);

}  // namespace pertkit::detect
