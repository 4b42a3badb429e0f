// pertkit command-line pipeline: synthesize data, train the classifier, fit
// the spectral basis, craft adversarial corpora, train detection thresholds,
// run detectors and emit evaluation reports.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pertkit/apert.hpp"
#include "pertkit/attacks.hpp"
#include "pertkit/classifier.hpp"
#include "pertkit/config.hpp"
#include "pertkit/detect.hpp"
#include "pertkit/harness.hpp"
#include "pertkit/rng.hpp"
#include "pertkit/spectral.hpp"

namespace {

using namespace pertkit;

struct GlobalOptions {
    std::string config_path;
    std::string seed_override;
    bool quiet = false;
    bool verbose = false;
    config::RunConfig run;
};

void info(const GlobalOptions& options, const std::string& message) {
    if (!options.quiet) std::cerr << message << "\n";
}

harness::SynthSpec synth_spec(const config::RunConfig& run, const std::string& split) {
    harness::SynthSpec spec;
    spec.classes = run.data_classes;
    spec.per_class = split == "test" ? run.data_test_per_class : run.data_train_per_class;
    spec.height = run.image_height;
    spec.width = run.image_width;
    spec.channels = run.image_channels;
    spec.separation = run.data_separation;
    spec.noise = run.data_noise;
    spec.seed = derive_seed(run.seed, "data/" + split);
    spec.class_seed = derive_seed(run.seed, "data/classes");
    return spec;
}

detect::PertConfig pert_config(const config::RunConfig& run, int dim) {
    detect::PertConfig config;
    config.max_samples = run.detect_T;
    config.coeff_count = run.detect_C;
    config.sigma = run.sigma_for_dim(dim);
    return config;
}

detect::SrtConfig srt_config(const config::RunConfig& run, int dim) {
    detect::SrtConfig config;
    config.lower = run.detect_A;
    config.upper = run.detect_B;
    config.max_samples = run.detect_T;
    config.coeff_count = run.detect_C;
    config.sigma = run.sigma_for_dim(dim);
    config.category_switch = run.detect_Q;
    config.norm_order = run.detect_p;
    config.q_clamp = run.detect_q_clamp;
    return config;
}

apert::ApertConfig apert_config(const config::RunConfig& run, int dim) {
    apert::ApertConfig config;
    config.alpha = run.apert_alpha;
    config.beta = run.apert_beta;
    config.theta = run.apert_theta;
    config.coeff_count = run.detect_C;
    config.max_samples = run.detect_T;
    config.sigma = run.sigma_for_dim(dim);
    config.norm_order = run.detect_p;
    config.q_clamp = run.detect_q_clamp;
    config.lower_init = run.apert_A0;
    config.upper_init = run.apert_B0;
    config.lambda_init = run.apert_lambda0;
    config.box.lower_min = run.apert_A_min;
    config.box.lower_max = run.apert_A_max;
    config.box.upper_min = run.apert_B_min;
    config.box.upper_max = run.apert_B_max;
    config.schedule.a0 = run.apert_a0;
    config.schedule.d0 = run.apert_d0;
    config.schedule.delta0 = run.apert_delta0;
    config.schedule.exp_a = run.apert_ea;
    config.schedule.exp_d = run.apert_ed;
    config.schedule.exp_delta = run.apert_edelta;
    config.n_max = run.apert_n_max;
    return config;
}

harness::CraftConfig craft_config(const config::RunConfig& run, const std::string& attack) {
    harness::CraftConfig config;
    config.attack = attack;
    config.budget.epsilon = run.attack_epsilon;
    config.budget.step_size = run.attack_step_size;
    config.budget.iterations = run.attack_iterations;
    config.pgd_random_start = run.attack_pgd_random_start;
    config.cw.c_min = run.attack_cw_c_min;
    config.cw.c_max = run.attack_cw_c_max;
    config.cw.rounds = run.attack_cw_rounds;
    config.cw.iterations = run.attack_cw_iterations;
    config.cw.learning_rate = run.attack_cw_learning_rate;
    if (attack == "fgsm") {
        config.budget.step_size = config.budget.epsilon;
        config.budget.iterations = 1;
    }
    return config;
}

// Successful corpus rows only; the detectors are scored against attacks
// that actually fooled the classifier.
Eigen::MatrixXd successful_images(const harness::AttackCorpus& corpus) {
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < corpus.meta.size(); ++i) {
        if (corpus.meta[i].success) keep.push_back(static_cast<Eigen::Index>(i));
    }
    Eigen::MatrixXd images(static_cast<Eigen::Index>(keep.size()), corpus.images.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) images.row(static_cast<Eigen::Index>(i)) = corpus.images.row(keep[i]);
    return images;
}

harness::DetectorSpec make_detector(const std::string& name, const config::RunConfig& run, int dim,
                                    const std::string& thresholds_path) {
    harness::DetectorSpec spec;
    if (name == "pert") {
        spec.kind = harness::DetectorSpec::Kind::pert;
        spec.pert = pert_config(run, dim);
    } else if (name == "srt") {
        spec.kind = harness::DetectorSpec::Kind::srt;
        spec.srt = srt_config(run, dim);
    } else if (name == "apert") {
        if (thresholds_path.empty()) {
            throw std::runtime_error("detector 'apert' requires --thresholds");
        }
        const auto learned = apert::load_thresholds(thresholds_path);
        spec.kind = harness::DetectorSpec::Kind::apert;
        spec.srt.lower = learned.lower;
        spec.srt.upper = learned.upper;
        spec.srt.max_samples = learned.max_samples;
        spec.srt.coeff_count = learned.coeff_count;
        spec.srt.sigma = learned.sigma;
        spec.srt.norm_order = learned.norm_order;
        spec.srt.q_clamp = run.detect_q_clamp;
        spec.srt.category_switch = true;
    } else {
        throw std::runtime_error("unknown detector '" + name + "' (expected pert, srt or apert)");
    }
    return spec;
}

std::vector<double> geometric_grid(double lo, double hi, int points) {
    if (points < 3) throw std::runtime_error("roc: need at least 3 sweep points");
    if (!(lo > 0.0) || !(hi > lo)) throw std::runtime_error("roc: sweep range must satisfy 0 < min < max");
    std::vector<double> grid;
    const double step = std::log(hi / lo) / (points - 1);
    for (int i = 0; i < points; ++i) grid.push_back(lo * std::exp(step * i));
    return grid;
}

int run_synth_data(const GlobalOptions& options, const std::string& split, const std::string& out_images,
                   const std::string& out_labels) {
    const auto dataset = harness::synth_dataset(synth_spec(options.run, split));
    harness::save_dataset(dataset, out_images, out_labels);
    config::write_meta(options.run, "synth-data/" + split, out_images);
    info(options, "wrote " + std::to_string(dataset.size()) + " images to " + out_images);
    return 0;
}

int run_train_classifier(const GlobalOptions& options, const std::string& images_path,
                         const std::string& labels_path, const std::string& out_model) {
    const auto dataset = harness::ingest_raw(images_path, labels_path);
    classifier::TrainConfig train;
    train.hidden = options.run.mlp_hidden;
    train.epochs = options.run.mlp_epochs;
    train.learning_rate = options.run.mlp_learning_rate;
    train.batch_size = options.run.mlp_batch_size;
    train.seed = derive_seed(options.run.seed, "classifier");
    const auto result = classifier::train_mlp(dataset.images, dataset.labels, options.run.data_classes, train);
    classifier::save_model(result.model, out_model);
    config::write_meta(options.run, "train-classifier", out_model);
    char line[128];
    std::snprintf(line, sizeof(line), "training accuracy %.4f, final loss %.6f", result.train_accuracy,
                  result.final_loss);
    info(options, line);
    return 0;
}

int run_fit_basis(const GlobalOptions& options, const std::string& images_path,
                  const std::string& labels_path, const std::string& out_basis) {
    const auto dataset = harness::ingest_raw(images_path, labels_path);
    const auto basis = spectral::fit_pca(dataset.images);
    spectral::save_basis(basis, out_basis);
    config::write_meta(options.run, "fit-basis", out_basis);
    const auto ev = spectral::explained_variance(basis);
    const std::size_t quarter = ev.cumulative.size() / 4;
    char line[160];
    std::snprintf(line, sizeof(line), "basis dim %d, explained variance at %zu components: %.4f",
                  basis.dim(), quarter, quarter > 0 ? ev.cumulative[quarter - 1] : 1.0);
    info(options, line);
    return 0;
}

int run_craft(const GlobalOptions& options, const std::string& model_path, const std::string& images_path,
              const std::string& labels_path, const std::string& attack, const std::string& out_images,
              const std::string& out_meta) {
    const auto model = classifier::load_model(model_path);
    const auto dataset = harness::ingest_raw(images_path, labels_path);
    RandomStream rng(derive_seed(options.run.seed, "craft/" + attack));
    const auto corpus = harness::craft_corpus(model, dataset, craft_config(options.run, attack), rng);
    harness::save_corpus(corpus, out_images, out_meta);
    config::write_meta(options.run, "craft/" + attack, out_images);
    info(options, attack + ": " + std::to_string(corpus.success_count()) + "/" +
                      std::to_string(corpus.meta.size()) + " successful adversarial images");
    return 0;
}

int run_train_apert(const GlobalOptions& options, const std::string& model_path,
                    const std::string& basis_path, const std::string& clean_images_path,
                    const std::string& corpus_images_path, const std::string& corpus_meta_path,
                    const std::string& out_thresholds, const std::string& out_trace) {
    const auto config = apert_config(options.run, 0);
    {
        // Schedule problems are config errors; surface them before any
        // artifact is loaded or any compute happens.
        const auto violations = apert::validate_schedule(config.schedule);
        if (!violations.empty()) {
            std::string message = "invalid step schedule:";
            for (const auto& v : violations) message += "\n  " + v;
            throw std::runtime_error(message);
        }
    }
    const auto model = classifier::load_model(model_path);
    const auto basis = spectral::load_basis(basis_path);
    int h, w, c;
    const auto cleans = harness::load_images(clean_images_path, h, w, c);
    const auto corpus = harness::load_corpus(corpus_images_path, corpus_meta_path);
    const auto adversarial = successful_images(corpus);

    auto resolved = apert_config(options.run, basis.dim());
    const std::uint64_t seed = derive_seed(options.run.seed, "apert");
    RandomStream rng(seed);
    const auto result = apert::train_apert(model, basis, cleans, adversarial, resolved, rng);

    apert::Thresholds thresholds;
    thresholds.lower = result.lower;
    thresholds.upper = result.upper;
    thresholds.lambda_fa = result.lambda_fa;
    thresholds.lambda_miss = result.lambda_miss;
    thresholds.coeff_count = resolved.coeff_count;
    thresholds.max_samples = resolved.max_samples;
    thresholds.sigma = resolved.sigma;
    thresholds.norm_order = resolved.norm_order;
    thresholds.seed = seed;
    apert::save_thresholds(thresholds, out_thresholds);
    apert::save_trace_csv(result.trace, out_trace);
    config::write_meta(options.run, "train-apert", out_thresholds);

    char line[160];
    std::snprintf(line, sizeof(line), "learned A=%.6g B=%.6g lambda1=%.6g lambda2=%.6g", result.lower,
                  result.upper, result.lambda_fa, result.lambda_miss);
    info(options, line);
    return 0;
}

int run_detect(const GlobalOptions& options, const std::string& model_path, const std::string& basis_path,
               const std::string& images_path, const std::string& detector_name,
               const std::string& thresholds_path) {
    const auto model = classifier::load_model(model_path);
    const auto basis = spectral::load_basis(basis_path);
    int h, w, c;
    const auto images = harness::load_images(images_path, h, w, c);
    const auto spec = make_detector(detector_name, options.run, basis.dim(), thresholds_path);

    for (Eigen::Index i = 0; i < images.rows(); ++i) {
        RandomStream rng(derive_seed(options.run.seed, "detect/" + std::to_string(i)));
        detect::DetectionOutcome outcome;
        switch (spec.kind) {
            case harness::DetectorSpec::Kind::pert:
                outcome = detect::pert_detect(model, basis, images.row(i).transpose(), spec.pert, rng);
                break;
            default:
                outcome = detect::srt(model, basis, images.row(i).transpose(), spec.srt, rng);
                break;
        }
        std::cout << i << "," << (outcome.adversarial ? "adversarial" : "clean") << ","
                  << outcome.samples_used << "," << detect::to_string(outcome.stop_reason) << "\n";
    }
    return 0;
}

int run_evaluate(const GlobalOptions& options, const std::string& model_path, const std::string& basis_path,
                 const std::string& clean_images_path, const std::vector<std::string>& corpus_images,
                 const std::vector<std::string>& corpus_metas, const std::string& detector_name,
                 const std::string& thresholds_path, const std::string& out_csv) {
    if (corpus_images.size() != corpus_metas.size() || corpus_images.empty()) {
        throw std::runtime_error("evaluate: need matching --corpus-images/--corpus-meta lists");
    }
    const auto model = classifier::load_model(model_path);
    const auto basis = spectral::load_basis(basis_path);
    int h, w, c;
    const auto cleans = harness::load_images(clean_images_path, h, w, c);
    const auto spec = make_detector(detector_name, options.run, basis.dim(), thresholds_path);

    std::vector<harness::EvalRow> rows;
    for (std::size_t k = 0; k < corpus_images.size(); ++k) {
        const auto corpus = harness::load_corpus(corpus_images[k], corpus_metas[k]);
        rows.push_back(harness::evaluate_detector(spec, model, basis, cleans, corpus,
                                                  derive_seed(options.run.seed, "evaluate")));
        info(options, rows.back().attack + ": detection " + std::to_string(rows.back().detection_pct) +
                          "%, false alarm " + std::to_string(rows.back().false_alarm_pct) + "%");
    }
    harness::report_csv(rows, out_csv);
    config::write_meta(options.run, "evaluate", out_csv);
    return 0;
}

int run_roc(const GlobalOptions& options, const std::string& model_path, const std::string& basis_path,
            const std::string& clean_images_path, const std::string& corpus_images_path,
            const std::string& corpus_meta_path, const std::vector<std::string>& detector_names,
            const std::string& thresholds_path, const std::string& out_csv, const std::string& out_svg) {
    const auto model = classifier::load_model(model_path);
    const auto basis = spectral::load_basis(basis_path);
    int h, w, c;
    const auto cleans = harness::load_images(clean_images_path, h, w, c);
    const auto corpus = harness::load_corpus(corpus_images_path, corpus_meta_path);
    const std::uint64_t seed = derive_seed(options.run.seed, "roc");

    std::vector<harness::RocCurve> curves;
    for (const auto& name : detector_names) {
        const auto spec = make_detector(name, options.run, basis.dim(), thresholds_path);
        const auto kind = spec.kind == harness::DetectorSpec::Kind::pert ? harness::SweepKind::sigma
                                                                         : harness::SweepKind::threshold_scale;
        const auto sweep = kind == harness::SweepKind::sigma
                               ? geometric_grid(options.run.roc_sigma_min, options.run.roc_sigma_max,
                                                options.run.roc_points)
                               : geometric_grid(options.run.roc_scale_min, options.run.roc_scale_max,
                                                options.run.roc_points);
        auto curve = harness::roc_sweep(spec, kind, sweep, model, basis, cleans, corpus, seed);
        if (name == "apert" && spec.srt.category_switch) curve.detector = "apert_q1";
        char line[96];
        std::snprintf(line, sizeof(line), "%s: auc %.4f", curve.detector.c_str(), curve.auc);
        info(options, line);
        curves.push_back(std::move(curve));
    }
    if (!out_csv.empty()) {
        harness::roc_csv(curves, out_csv);
        config::write_meta(options.run, "roc", out_csv);
    }
    if (!out_svg.empty()) harness::roc_svg(curves, out_svg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spectral-perturbation adversarial image detection pipeline"};
    app.require_subcommand(1);

    GlobalOptions options;
    app.add_option("--config", options.config_path, "key=value run configuration file");
    app.add_option("--seed", options.seed_override, "override the config seed");
    app.add_flag("--quiet", options.quiet, "suppress progress output");
    app.add_flag("--verbose", options.verbose, "print the resolved configuration");

    std::string split = "train", out_images, out_labels;
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
    synth->add_option("--split", split, "train or test (selects count and seed stream)");
    synth->add_option("--out-images", out_images)->required();
    synth->add_option("--out-labels", out_labels)->required();

    std::string images_path, labels_path, model_out;
    auto* train_cls = app.add_subcommand("train-classifier", "train the built-in classifier");
    train_cls->add_option("--images", images_path)->required();
    train_cls->add_option("--labels", labels_path)->required();
    train_cls->add_option("--out", model_out)->required();

    std::string basis_out;
    auto* fit = app.add_subcommand("fit-basis", "fit the spectral basis from clean images");
    fit->add_option("--images", images_path)->required();
    fit->add_option("--labels", labels_path)->required();
    fit->add_option("--out", basis_out)->required();

    std::string model_path, attack_name = "fgsm", corpus_images_out, corpus_meta_out;
    auto* craft = app.add_subcommand("craft", "generate an adversarial corpus");
    craft->add_option("--model", model_path)->required();
    craft->add_option("--images", images_path)->required();
    craft->add_option("--labels", labels_path)->required();
    craft->add_option("--attack", attack_name, "fgsm, bim, pgd or cw")->required();
    craft->add_option("--out-images", corpus_images_out)->required();
    craft->add_option("--out-meta", corpus_meta_out)->required();

    std::string basis_path, clean_images_path, corpus_images_path, corpus_meta_path;
    std::string thresholds_out, trace_out;
    auto* train_ap = app.add_subcommand("train-apert", "learn the sequential test thresholds");
    train_ap->add_option("--model", model_path)->required();
    train_ap->add_option("--basis", basis_path)->required();
    train_ap->add_option("--clean-images", clean_images_path)->required();
    train_ap->add_option("--corpus-images", corpus_images_path)->required();
    train_ap->add_option("--corpus-meta", corpus_meta_path)->required();
    train_ap->add_option("--out-thresholds", thresholds_out)->required();
    train_ap->add_option("--out-trace", trace_out)->required();

    std::string detector_name = "pert", thresholds_path;
    auto* det = app.add_subcommand("detect", "classify images as clean or adversarial");
    det->add_option("--model", model_path)->required();
    det->add_option("--basis", basis_path)->required();
    det->add_option("--images", images_path)->required();
    det->add_option("--detector", detector_name, "pert, srt or apert")->required();
    det->add_option("--thresholds", thresholds_path, "learned thresholds (apert)");

    std::vector<std::string> eval_corpus_images, eval_corpus_metas;
    std::string report_out;
    auto* eval = app.add_subcommand("evaluate", "score a detector against corpora");
    eval->add_option("--model", model_path)->required();
    eval->add_option("--basis", basis_path)->required();
    eval->add_option("--clean-images", clean_images_path)->required();
    eval->add_option("--corpus-images", eval_corpus_images)->required();
    eval->add_option("--corpus-meta", eval_corpus_metas)->required();
    eval->add_option("--detector", detector_name)->required();
    eval->add_option("--thresholds", thresholds_path);
    eval->add_option("--out", report_out)->required();

    std::vector<std::string> roc_detectors;
    std::string roc_csv_out, roc_svg_out;
    auto* roc = app.add_subcommand("roc", "sweep detector knobs into ROC curves");
    roc->add_option("--model", model_path)->required();
    roc->add_option("--basis", basis_path)->required();
    roc->add_option("--clean-images", clean_images_path)->required();
    roc->add_option("--corpus-images", corpus_images_path)->required();
    roc->add_option("--corpus-meta", corpus_meta_path)->required();
    roc->add_option("--detectors", roc_detectors, "comma-separated list")->required()->delimiter(',');
    roc->add_option("--thresholds", thresholds_path);
    roc->add_option("--out-csv", roc_csv_out);
    roc->add_option("--out-svg", roc_svg_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!options.config_path.empty()) {
            options.run = config::load_config(options.config_path);
        }
        if (!options.seed_override.empty()) {
            config::apply_override(options.run, "seed=" + options.seed_override);
        }
        if (options.verbose) {
            std::cerr << "config hash " << config::config_hash(options.run) << "\n"
                      << config::canonical_dump(options.run);
        }

        if (synth->parsed()) {
            if (split != "train" && split != "test") throw std::runtime_error("--split must be train or test");
            return run_synth_data(options, split, out_images, out_labels);
        }
        if (train_cls->parsed()) return run_train_classifier(options, images_path, labels_path, model_out);
        if (fit->parsed()) return run_fit_basis(options, images_path, labels_path, basis_out);
        if (craft->parsed()) {
            return run_craft(options, model_path, images_path, labels_path, attack_name, corpus_images_out,
                             corpus_meta_out);
        }
        if (train_ap->parsed()) {
            return run_train_apert(options, model_path, basis_path, clean_images_path, corpus_images_path,
                                   corpus_meta_path, thresholds_out, trace_out);
        }
        if (det->parsed()) {
            return run_detect(options, model_path, basis_path, images_path, detector_name, thresholds_path);
        }
        if (eval->parsed()) {
            return run_evaluate(options, model_path, basis_path, clean_images_path, eval_corpus_images,
                                eval_corpus_metas, detector_name, thresholds_path, report_out);
        }
        if (roc->parsed()) {
            return run_roc(options, model_path, basis_path, clean_images_path, corpus_images_path,
                           corpus_meta_path, roc_detectors, thresholds_path, roc_csv_out, roc_svg_out);
        }
        throw std::runtime_error("no subcommand selected");
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
    }
}
