#pragma once

#include <cstdint>
#include <string>

namespace pertkit::config {

// Every tunable of the pipeline in one flat key=value file. Unknown keys
// are rejected; the canonical dump (and its hash) gives run provenance.
struct RunConfig {
    std::uint64_t seed = 1;

    // image geometry
    int image_height = 8;
    int image_width = 8;
    int image_channels = 1;

    // synthetic data
    int data_classes = 4;
    int data_train_per_class = 500;
    int data_test_per_class = 100;
    double data_separation = 0.8;
    double data_noise = 0.18;

    // classifier
    int mlp_hidden = 64;
    int mlp_epochs = 30;
    double mlp_learning_rate = 0.1;
    int mlp_batch_size = 32;

    // attacks
    double attack_epsilon = 0.1;
    double attack_step_size = 0.02;
    int attack_iterations = 10;
    bool attack_pgd_random_start = false;
    double attack_cw_c_min = 1e-3;
    double attack_cw_c_max = 1e3;
    int attack_cw_rounds = 6;
    int attack_cw_iterations = 100;
    double attack_cw_learning_rate = 0.05;

    // detectors; sigma = 0 means the default 0.05 * sqrt(M)
    int detect_T = 25;
    int detect_C = 32;
    double detect_sigma = 0.0;
    double detect_p = 2.0;
    double detect_q_clamp = 1e-6;
    double detect_A = 0.01;
    double detect_B = 5.0;
    bool detect_Q = true;

    // threshold training
    double apert_alpha = 0.05;
    double apert_beta = 0.05;
    double apert_theta = 50.0;
    long apert_n_max = 2000;
    double apert_A0 = 1e-10;
    double apert_B0 = 0.5;
    double apert_lambda0 = 10.0;
    double apert_A_min = 1e-12;
    double apert_A_max = 0.49;
    double apert_B_min = 0.51;
    double apert_B_max = 100.0;
    double apert_a0 = 0.5;
    double apert_d0 = 1.0;
    double apert_delta0 = 0.1;
    double apert_ea = 0.7;
    double apert_ed = 1.0;
    double apert_edelta = 0.1;

    // roc sweeps
    int roc_points = 9;
    double roc_sigma_min = 0.05;
    double roc_sigma_max = 2.0;
    double roc_scale_min = 0.0002;
    double roc_scale_max = 50.0;

    // Effective sigma for a basis of dimension m.
    double sigma_for_dim(int m) const;
};

// Parses a key=value file ('#' comments and blank lines allowed). Throws on
// unknown keys, duplicate keys, or unparseable values.
RunConfig load_config(const std::string& path);

// Applies "key=value" to an existing config (CLI overrides).
void apply_override(RunConfig& config, const std::string& assignment);

// Canonical dump: every key on its own line, fixed order, full precision.
std::string canonical_dump(const RunConfig& config);

// FNV-1a hash of the canonical dump, as fixed-width hex.
std::string config_hash(const RunConfig& config);

// Writes "<path>.meta": stage name, seed, config hash, and resolved values.
void write_meta(const RunConfig& config, const std::string& stage, const std::string& artifact_path);

}  // namespace pertkit::config
