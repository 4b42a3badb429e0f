#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pertkit/classifier.hpp"
#include "pertkit/detect.hpp"
#include "pertkit/rng.hpp"
#include "pertkit/spectral.hpp"

namespace pertkit::apert {

// Power-law step sizes: a(t) for the threshold (fast) timescale, d(n) for
// the Lagrange multiplier (slow) timescale, delta(t) for the SPSA probe.
struct StepSchedule {
    double a0 = 0.5;
    double d0 = 1.0;
    double delta0 = 0.1;
    double exp_a = 0.7;
    double exp_d = 1.0;
    double exp_delta = 0.1;

    double a(long t) const;      // a0 / (t+1)^exp_a
    double d(long n) const;      // d0 / n^exp_d, n >= 1
    double delta(long t) const;  // delta0 / (t+1)^exp_delta
};

// Analytic check of the stochastic-approximation conditions on the
// power-law family. Returns the violated conditions by name; empty = ok.
// Throws on nonpositive coefficients.
std::vector<std::string> validate_schedule(const StepSchedule& schedule);

struct ThresholdBox {
    double lower_min = 1e-12;
    double lower_max = 0.49;
    double upper_min = 0.51;
    double upper_max = 100.0;

    void validate() const;  // 0 < lower_min < lower_max < upper_min < upper_max
};

struct ApertConfig {
    double alpha = 0.05;  // false alarm budget
    double beta = 0.05;   // missed detection budget
    double theta = 50.0;  // adversarial mix percentage in [0, 100]
    int coeff_count = 1;
    int max_samples = 25;  // per-test perturbation cap, also the SPSA cost N ceiling
    double sigma = 0.4;
    double norm_order = 2.0;
    double q_clamp = 1e-6;
    double lower_init = 1e-10;
    double upper_init = 0.5;
    double lambda_init = 10.0;
    ThresholdBox box;
    StepSchedule schedule;
    long n_max = 2000;  // training iterations

    void validate() const;
};

struct TrainState {
    double lower = 1e-10;
    double upper = 0.5;
    double lambda_fa = 10.0;    // price of a false alarm
    double lambda_miss = 10.0;  // price of a missed detection
    long n_clean = 0;
    long n_adv = 0;
    long t = 0;
};

// Cost of one detector evaluation at thresholds (lower, upper) using the
// given noise stream. The production evaluator runs the sequential test;
// tests may substitute synthetic surfaces.
using ThresholdCost = std::function<double(double lower, double upper, RandomStream& rng)>;

struct SpsaInfo {
    double cost_plus = 0.0;   // at (lower + delta*b1, upper + delta*b2)
    double cost_minus = 0.0;  // at the mirrored pair
    double delta_used = 0.0;
    int sign_lower = 1;  // b1
    int sign_upper = 1;  // b2
};

// One simultaneous-perturbation update of (lower, upper), evaluated with
// common random numbers across the two cost calls and projected into the
// box. delta is halved locally until both perturbed pairs are ordered and
// the upper thresholds stay positive; lower probes may go nonpositive, in
// which case the below-lower exit of the test is simply unreachable.
SpsaInfo spsa_step(TrainState& state, const StepSchedule& schedule, const ThresholdBox& box,
                   const ThresholdCost& cost, RandomStream& rng);

// Asynchronous multiplier update: exactly one of (lambda_fa, lambda_miss)
// moves, chosen by the image's ground-truth class; both are floored at 0.
// Counters must already include the current image.
void lagrange_step(TrainState& state, bool clean_image, bool false_alarm, bool miss, double alpha,
                   double beta, const StepSchedule& schedule);

struct TraceRow {
    long t = 0;
    double lower = 0.0;
    double upper = 0.0;
    double lambda_fa = 0.0;
    double lambda_miss = 0.0;
    double cost_plus = 0.0;
    double cost_minus = 0.0;
    bool false_alarm = false;
    bool miss = false;
    int samples_used = 0;
};

struct TrainResult {
    double lower = 0.0;
    double upper = 0.0;
    double lambda_fa = 0.0;
    double lambda_miss = 0.0;
    std::vector<TraceRow> trace;
};

// Training phase: n_max iterations of spsa_step on a Bernoulli(theta/100)
// mix of clean and adversarial images, followed by a fresh detector
// evaluation at the updated thresholds that drives lagrange_step.
// Deterministic given the stream. Throws before iteration 0 if the step
// schedule fails validation.
TrainResult train_apert(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                        const Eigen::MatrixXd& clean_images, const Eigen::MatrixXd& adversarial_images,
                        const ApertConfig& config, RandomStream& rng);

// Test phase: the sequential test with the category-change switch on at the
// learned thresholds.
detect::DetectionOutcome apert_test(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                                    const Eigen::VectorXd& image, double lower, double upper,
                                    const ApertConfig& config, RandomStream& rng);

// Learned-threshold artifact (key=value text file).
struct Thresholds {
    double lower = 0.0;
    double upper = 0.0;
    double lambda_fa = 0.0;
    double lambda_miss = 0.0;
    int coeff_count = 1;
    int max_samples = 25;
    double sigma = 0.4;
    double norm_order = 2.0;
    std::uint64_t seed = 0;
};

void save_thresholds(const Thresholds& thresholds, const std::string& path);
Thresholds load_thresholds(const std::string& path);

// Per-iteration trace as CSV: t,A,B,lambda1,lambda2,c_prime,c_dprime,fa,miss,n_used.
void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace pertkit::apert
