#include "pertkit/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pertkit/rng.hpp"

namespace pertkit::config {

namespace {

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

long parse_long(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long parsed = 0;
    try {
        parsed = std::stol(value, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad integer for " + key + ": '" + value + "'");
    }
    if (used != value.size()) throw std::runtime_error("config: bad integer for " + key + ": '" + value + "'");
    return parsed;
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double parsed = 0;
    try {
        parsed = std::stod(value, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad number for " + key + ": '" + value + "'");
    }
    if (used != value.size()) throw std::runtime_error("config: bad number for " + key + ": '" + value + "'");
    return parsed;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<Field> build_registry() {
    std::vector<Field> fields;
    auto add_int = [&](const std::string& key, int RunConfig::* member) {
        fields.push_back({key,
                          [key, member](RunConfig& c, const std::string& v) {
                              c.*member = static_cast<int>(parse_long(key, v));
                          },
                          [member](const RunConfig& c) { return std::to_string(c.*member); }});
    };
    auto add_long = [&](const std::string& key, long RunConfig::* member) {
        fields.push_back({key,
                          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_long(key, v); },
                          [member](const RunConfig& c) { return std::to_string(c.*member); }});
    };
    auto add_double = [&](const std::string& key, double RunConfig::* member) {
        fields.push_back({key,
                          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_double(key, v); },
                          [member](const RunConfig& c) { return format_double(c.*member); }});
    };
    auto add_bool = [&](const std::string& key, bool RunConfig::* member) {
        fields.push_back({key,
                          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
                          [member](const RunConfig& c) { return std::string(c.*member ? "1" : "0"); }});
    };

    fields.push_back({"seed",
                      [](RunConfig& c, const std::string& v) {
                          try {
                              c.seed = std::stoull(v);
                          } catch (const std::exception&) {
                              throw std::runtime_error("config: bad seed '" + v + "'");
                          }
                      },
                      [](const RunConfig& c) { return std::to_string(c.seed); }});

    add_int("image.height", &RunConfig::image_height);
    add_int("image.width", &RunConfig::image_width);
    add_int("image.channels", &RunConfig::image_channels);

    add_int("data.classes", &RunConfig::data_classes);
    add_int("data.train_per_class", &RunConfig::data_train_per_class);
    add_int("data.test_per_class", &RunConfig::data_test_per_class);
    add_double("data.separation", &RunConfig::data_separation);
    add_double("data.noise", &RunConfig::data_noise);

    add_int("mlp.hidden", &RunConfig::mlp_hidden);
    add_int("mlp.epochs", &RunConfig::mlp_epochs);
    add_double("mlp.learning_rate", &RunConfig::mlp_learning_rate);
    add_int("mlp.batch_size", &RunConfig::mlp_batch_size);

    add_double("attack.epsilon", &RunConfig::attack_epsilon);
    add_double("attack.step_size", &RunConfig::attack_step_size);
    add_int("attack.iterations", &RunConfig::attack_iterations);
    add_bool("attack.pgd_random_start", &RunConfig::attack_pgd_random_start);
    add_double("attack.cw_c_min", &RunConfig::attack_cw_c_min);
    add_double("attack.cw_c_max", &RunConfig::attack_cw_c_max);
    add_int("attack.cw_rounds", &RunConfig::attack_cw_rounds);
    add_int("attack.cw_iterations", &RunConfig::attack_cw_iterations);
    add_double("attack.cw_learning_rate", &RunConfig::attack_cw_learning_rate);

    add_int("detect.T", &RunConfig::detect_T);
    add_int("detect.C", &RunConfig::detect_C);
    add_double("detect.sigma", &RunConfig::detect_sigma);
    add_double("detect.p", &RunConfig::detect_p);
    add_double("detect.q_clamp", &RunConfig::detect_q_clamp);
    add_double("detect.A", &RunConfig::detect_A);
    add_double("detect.B", &RunConfig::detect_B);
    add_bool("detect.Q", &RunConfig::detect_Q);

    add_double("apert.alpha", &RunConfig::apert_alpha);
    add_double("apert.beta", &RunConfig::apert_beta);
    add_double("apert.theta", &RunConfig::apert_theta);
    add_long("apert.n_max", &RunConfig::apert_n_max);
    add_double("apert.A0", &RunConfig::apert_A0);
    add_double("apert.B0", &RunConfig::apert_B0);
    add_double("apert.lambda0", &RunConfig::apert_lambda0);
    add_double("apert.A_min", &RunConfig::apert_A_min);
    add_double("apert.A_max", &RunConfig::apert_A_max);
    add_double("apert.B_min", &RunConfig::apert_B_min);
    add_double("apert.B_max", &RunConfig::apert_B_max);
    add_double("apert.a0", &RunConfig::apert_a0);
    add_double("apert.d0", &RunConfig::apert_d0);
    add_double("apert.delta0", &RunConfig::apert_delta0);
    add_double("apert.ea", &RunConfig::apert_ea);
    add_double("apert.ed", &RunConfig::apert_ed);
    add_double("apert.edelta", &RunConfig::apert_edelta);

    add_int("roc.points", &RunConfig::roc_points);
    add_double("roc.sigma_min", &RunConfig::roc_sigma_min);
    add_double("roc.sigma_max", &RunConfig::roc_sigma_max);
    add_double("roc.scale_min", &RunConfig::roc_scale_min);
    add_double("roc.scale_max", &RunConfig::roc_scale_max);
    return fields;
}

const std::vector<Field>& registry() {
    static const std::vector<Field> fields = build_registry();
    return fields;
}

const Field* find_field(const std::string& key) {
    for (const Field& field : registry()) {
        if (field.key == key) return &field;
    }
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

double RunConfig::sigma_for_dim(int m) const {
    return detect_sigma > 0.0 ? detect_sigma : 0.05 * std::sqrt(static_cast<double>(m));
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    RunConfig config;
    std::set<std::string> seen;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(line_number) + ": expected key=value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        const Field* field = find_field(key);
        if (!field) {
            throw std::runtime_error("config line " + std::to_string(line_number) + ": unknown key '" + key + "'");
        }
        if (!seen.insert(key).second) {
            throw std::runtime_error("config line " + std::to_string(line_number) + ": duplicate key '" + key + "'");
        }
        field->set(config, value);
    }
    return config;
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw std::runtime_error("override must be key=value: '" + assignment + "'");
    const std::string key = trim(assignment.substr(0, eq));
    const Field* field = find_field(key);
    if (!field) throw std::runtime_error("override: unknown key '" + key + "'");
    field->set(config, trim(assignment.substr(eq + 1)));
}

std::string canonical_dump(const RunConfig& config) {
    std::string dump;
    for (const Field& field : registry()) {
        dump += field.key;
        dump += '=';
        dump += field.get(config);
        dump += '\n';
    }
    return dump;
}

std::string config_hash(const RunConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_dump(config))));
    return buf;
}

void write_meta(const RunConfig& config, const std::string& stage, const std::string& artifact_path) {
    std::ofstream out(artifact_path + ".meta");
    if (!out) throw std::runtime_error("cannot open for writing: " + artifact_path + ".meta");
    out << "stage=" << stage << "\n";
    out << "config_hash=" << config_hash(config) << "\n";
    out << canonical_dump(config);
    if (!out) throw std::runtime_error("write failed: " + artifact_path + ".meta");
}

}  // namespace pertkit::config
