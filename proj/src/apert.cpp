#include "pertkit/apert.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace pertkit::apert {

double StepSchedule::a(long t) const { return a0 / std::pow(static_cast<double>(t + 1), exp_a); }
double StepSchedule::d(long n) const { return d0 / std::pow(static_cast<double>(n), exp_d); }
double StepSchedule::delta(long t) const { return delta0 / std::pow(static_cast<double>(t + 1), exp_delta); }

std::vector<std::string> validate_schedule(const StepSchedule& s) {
    if (!(s.a0 > 0.0) || !(s.d0 > 0.0) || !(s.delta0 > 0.0)) {
        throw std::invalid_argument("schedule coefficients must be positive");
    }
    std::vector<std::string> violations;
    // Power-law family: sum of 1/t^p diverges iff p <= 1, converges iff p > 1.
    if (s.exp_a > 1.0) violations.push_back("sum_a_must_diverge (requires exp_a <= 1)");
    if (s.exp_d > 1.0) violations.push_back("sum_d_must_diverge (requires exp_d <= 1)");
    if (s.exp_a <= 0.5) violations.push_back("sum_a_sq_must_converge (requires exp_a > 0.5)");
    if (s.exp_d <= 0.5) violations.push_back("sum_d_sq_must_converge (requires exp_d > 0.5)");
    if (s.exp_delta <= 0.0) violations.push_back("delta_must_vanish (requires exp_delta > 0)");
    if (2.0 * (s.exp_a - s.exp_delta) <= 1.0) {
        violations.push_back("sum_a_sq_over_delta_sq_must_converge (requires 2*(exp_a - exp_delta) > 1)");
    }
    if (s.exp_d <= s.exp_a) violations.push_back("d_over_a_must_vanish (requires exp_d > exp_a)");
    return violations;
}

void ThresholdBox::validate() const {
    if (!(0.0 < lower_min && lower_min < lower_max && lower_max < upper_min && upper_min < upper_max)) {
        throw std::invalid_argument("threshold box must satisfy 0 < lower_min < lower_max < upper_min < upper_max");
    }
}

void ApertConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
        throw std::invalid_argument("apert: alpha and beta must be in (0, 1)");
    }
    if (theta < 0.0 || theta > 100.0) throw std::invalid_argument("apert: theta must be in [0, 100]");
    if (coeff_count < 1 || max_samples < 1 || n_max < 1) throw std::invalid_argument("apert: counts must be >= 1");
    if (!(sigma > 0.0)) throw std::invalid_argument("apert: sigma must be positive");
    if (norm_order < 1.0) throw std::invalid_argument("apert: norm order must be >= 1");
    if (!(q_clamp > 0.0 && q_clamp < 0.5)) throw std::invalid_argument("apert: q_clamp must be in (0, 0.5)");
    box.validate();
}

SpsaInfo spsa_step(TrainState& state, const StepSchedule& schedule, const ThresholdBox& box,
                   const ThresholdCost& cost, RandomStream& rng) {
    SpsaInfo info;
    info.sign_lower = rng.sign();
    info.sign_upper = rng.sign();
    const double b1 = static_cast<double>(info.sign_lower);
    const double b2 = static_cast<double>(info.sign_upper);

    // Probe size: halve until both perturbed pairs are ordered and the upper
    // probes stay positive. A nonpositive lower probe is evaluable (the
    // below-lower exit just cannot fire), so it does not force halving;
    // collapsing delta below the lower threshold's magnitude would zero out
    // the finite difference whenever the lower threshold sits near 0.
    double delta = schedule.delta(state.t);
    for (int guard = 0; guard < 200; ++guard) {
        const double lo_p = state.lower + delta * b1;
        const double up_p = state.upper + delta * b2;
        const double lo_m = state.lower - delta * b1;
        const double up_m = state.upper - delta * b2;
        if (lo_p < up_p && lo_m < up_m && up_p > 0.0 && up_m > 0.0) break;
        delta *= 0.5;
    }
    info.delta_used = delta;

    // Common random numbers: both evaluations replay one forked stream.
    RandomStream probe_stream = rng.fork();
    RandomStream stream_plus = probe_stream;
    RandomStream stream_minus = probe_stream;
    info.cost_plus = cost(state.lower + delta * b1, state.upper + delta * b2, stream_plus);
    info.cost_minus = cost(state.lower - delta * b1, state.upper - delta * b2, stream_minus);

    const double diff = info.cost_plus - info.cost_minus;
    const double step = schedule.a(state.t);
    const double lower_next = state.lower - step * diff / (2.0 * b1 * delta);
    const double upper_next = state.upper - step * diff / (2.0 * b2 * delta);
    state.lower = std::clamp(lower_next, box.lower_min, box.lower_max);
    state.upper = std::clamp(upper_next, box.upper_min, box.upper_max);
    return info;
}

void lagrange_step(TrainState& state, bool clean_image, bool false_alarm, bool miss, double alpha,
                   double beta, const StepSchedule& schedule) {
    if (clean_image) {
        if (state.n_clean < 1) throw std::logic_error("lagrange_step: clean counter not yet incremented");
        const double step = schedule.d(state.n_clean);
        state.lambda_fa = std::max(0.0, state.lambda_fa + step * ((false_alarm ? 1.0 : 0.0) - alpha));
    } else {
        if (state.n_adv < 1) throw std::logic_error("lagrange_step: adversarial counter not yet incremented");
        const double step = schedule.d(state.n_adv);
        state.lambda_miss = std::max(0.0, state.lambda_miss + step * ((miss ? 1.0 : 0.0) - beta));
    }
}

TrainResult train_apert(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                        const Eigen::MatrixXd& clean_images, const Eigen::MatrixXd& adversarial_images,
                        const ApertConfig& config, RandomStream& rng) {
    config.validate();
    const auto violations = validate_schedule(config.schedule);
    if (!violations.empty()) {
        std::string message = "step schedule violates:";
        for (const auto& v : violations) message += " " + v + ";";
        throw std::invalid_argument(message);
    }
    if (clean_images.rows() == 0) throw std::invalid_argument("train_apert: no clean images");
    if (config.theta > 0.0 && adversarial_images.rows() == 0) {
        throw std::invalid_argument("train_apert: adversarial mix requested but corpus is empty");
    }

    TrainState state;
    state.lower = std::clamp(config.lower_init, config.box.lower_min, config.box.lower_max);
    state.upper = std::clamp(config.upper_init, config.box.upper_min, config.box.upper_max);
    state.lambda_fa = std::max(0.0, config.lambda_init);
    state.lambda_miss = std::max(0.0, config.lambda_init);

    detect::SrtConfig test_config;
    test_config.max_samples = config.max_samples;
    test_config.coeff_count = config.coeff_count;
    test_config.sigma = config.sigma;
    test_config.category_switch = false;  // the threshold test alone drives training costs
    test_config.norm_order = config.norm_order;
    test_config.q_clamp = config.q_clamp;

    TrainResult result;
    result.trace.reserve(static_cast<std::size_t>(config.n_max));

    for (state.t = 0; state.t < config.n_max; ++state.t) {
        const bool is_adversarial = rng.bernoulli(config.theta / 100.0);
        const Eigen::MatrixXd& pool = is_adversarial ? adversarial_images : clean_images;
        const Eigen::VectorXd image = pool.row(static_cast<Eigen::Index>(rng.index(pool.rows()))).transpose();
        if (is_adversarial) {
            ++state.n_adv;
        } else {
            ++state.n_clean;
        }

        auto cost = [&](double lower, double upper, RandomStream& stream) {
            detect::SrtConfig probe = test_config;
            probe.lower = lower;
            probe.upper = upper;
            const auto outcome = detect::srt_unchecked(model, basis, image, probe, stream);
            const bool fa = !is_adversarial && outcome.adversarial;
            const bool miss = is_adversarial && !outcome.adversarial;
            return static_cast<double>(outcome.samples_used) + state.lambda_fa * (fa ? 1.0 : 0.0) +
                   state.lambda_miss * (miss ? 1.0 : 0.0);
        };

        const SpsaInfo info = spsa_step(state, config.schedule, config.box, cost, rng);

        // Fresh evaluation at the updated thresholds feeds the multipliers.
        detect::SrtConfig updated = test_config;
        updated.lower = state.lower;
        updated.upper = state.upper;
        const auto outcome = detect::srt_unchecked(model, basis, image, updated, rng);
        const bool fa = !is_adversarial && outcome.adversarial;
        const bool miss = is_adversarial && !outcome.adversarial;
        lagrange_step(state, !is_adversarial, fa, miss, config.alpha, config.beta, config.schedule);

        TraceRow row;
        row.t = state.t;
        row.lower = state.lower;
        row.upper = state.upper;
        row.lambda_fa = state.lambda_fa;
        row.lambda_miss = state.lambda_miss;
        row.cost_plus = info.cost_plus;
        row.cost_minus = info.cost_minus;
        row.false_alarm = fa;
        row.miss = miss;
        row.samples_used = outcome.samples_used;
        result.trace.push_back(row);
    }

    result.lower = state.lower;
    result.upper = state.upper;
    result.lambda_fa = state.lambda_fa;
    result.lambda_miss = state.lambda_miss;
    return result;
}

detect::DetectionOutcome apert_test(const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                                    const Eigen::VectorXd& image, double lower, double upper,
                                    const ApertConfig& config, RandomStream& rng) {
    detect::SrtConfig test_config;
    test_config.lower = lower;
    test_config.upper = upper;
    test_config.max_samples = config.max_samples;
    test_config.coeff_count = config.coeff_count;
    test_config.sigma = config.sigma;
    test_config.category_switch = true;
    test_config.norm_order = config.norm_order;
    test_config.q_clamp = config.q_clamp;
    return detect::srt(model, basis, image, test_config, rng);
}

void save_thresholds(const Thresholds& thresholds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    char line[128];
    auto put = [&](const char* key, double value) {
        std::snprintf(line, sizeof(line), "%s=%.17g\n", key, value);
        out << line;
    };
    put("A", thresholds.lower);
    put("B", thresholds.upper);
    put("lambda1", thresholds.lambda_fa);
    put("lambda2", thresholds.lambda_miss);
    out << "C=" << thresholds.coeff_count << "\n";
    put("sigma", thresholds.sigma);
    out << "T=" << thresholds.max_samples << "\n";
    put("p", thresholds.norm_order);
    out << "seed=" << thresholds.seed << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

Thresholds load_thresholds(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::map<std::string, std::string> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("thresholds file: malformed line '" + line + "'");
        values[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = values.find(key);
        if (it == values.end()) throw std::runtime_error("thresholds file: missing key '" + key + "'");
        return it->second;
    };
    Thresholds t;
    t.lower = std::stod(need("A"));
    t.upper = std::stod(need("B"));
    t.lambda_fa = std::stod(need("lambda1"));
    t.lambda_miss = std::stod(need("lambda2"));
    t.coeff_count = std::stoi(need("C"));
    t.sigma = std::stod(need("sigma"));
    t.max_samples = std::stoi(need("T"));
    t.norm_order = std::stod(need("p"));
    t.seed = std::stoull(need("seed"));
    if (!(t.lower > 0.0) || !(t.lower < t.upper)) {
        throw std::runtime_error("thresholds file: values violate 0 < A < B");
    }
    return t;
}

void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "t,A,B,lambda1,lambda2,c_prime,c_dprime,fa,miss,n_used\n";
    char line[320];
    for (const TraceRow& row : trace) {
        std::snprintf(line, sizeof(line), "%ld,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%d,%d,%d\n", row.t,
                      row.lower, row.upper, row.lambda_fa, row.lambda_miss, row.cost_plus, row.cost_minus,
                      row.false_alarm ? 1 : 0, row.miss ? 1 : 0, row.samples_used);
        out << line;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace pertkit::apert
