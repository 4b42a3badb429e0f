#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pertkit/apert.hpp"
#include "pertkit/attacks.hpp"
#include "pertkit/classifier.hpp"
#include "pertkit/detect.hpp"
#include "pertkit/harness.hpp"
#include "pertkit/rng.hpp"
#include "pertkit/spectral.hpp"

namespace py = pybind11;
using namespace pertkit;

namespace {

harness::Dataset dataset_from(const Eigen::MatrixXd& images, const std::vector<int>& labels, int height,
                              int width, int channels) {
    harness::Dataset dataset;
    dataset.images = images;
    dataset.labels = labels;
    dataset.height = height;
    dataset.width = width;
    dataset.channels = channels;
    return dataset;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Adversarial image detection via spectral perturbation: PCA basis "
              "fitting, white-box attacks, fixed-budget and sequential detectors, "
              "and SPSA threshold training.";

    // ---- spectral -------------------------------------------------------
    py::class_<spectral::SpectralBasis>(m, "SpectralBasis")
        .def_readonly("components", &spectral::SpectralBasis::components)
        .def_readonly("eigenvalues", &spectral::SpectralBasis::eigenvalues)
        .def_readonly("mean", &spectral::SpectralBasis::mean)
        .def_property_readonly("dim", &spectral::SpectralBasis::dim);

    m.def("fit_pca", &spectral::fit_pca, py::arg("images"),
          "Fit the orthonormal basis from row-per-image data.");
    m.def("project", &spectral::project, py::arg("image"), py::arg("basis"));
    m.def("reconstruct", &spectral::reconstruct, py::arg("coeffs"), py::arg("basis"));
    m.def(
        "perturb_least_significant",
        [](const Eigen::VectorXd& coeffs, int count, double sigma, std::uint64_t seed) {
            RandomStream rng(seed);
            return spectral::perturb_least_significant(coeffs, count, sigma, rng);
        },
        py::arg("coeffs"), py::arg("count"), py::arg("sigma"), py::arg("seed"));
    m.def(
        "explained_variance",
        [](const spectral::SpectralBasis& basis) {
            const auto ev = spectral::explained_variance(basis);
            return py::make_tuple(ev.cumulative, ev.degenerate);
        },
        py::arg("basis"), "Returns (cumulative_ratios, degenerate_flag).");
    m.def("save_basis", &spectral::save_basis, py::arg("basis"), py::arg("path"));
    m.def("load_basis", &spectral::load_basis, py::arg("path"));

    // ---- classifier -----------------------------------------------------
    py::class_<classifier::MlpModel>(m, "MlpModel")
        .def_property_readonly("input_dim", &classifier::MlpModel::input_dim)
        .def_property_readonly("output_dim", &classifier::MlpModel::output_dim)
        .def_property_readonly("layer_count",
                               [](const classifier::MlpModel& model) { return model.layers.size(); });

    m.def(
        "train_mlp",
        [](const Eigen::MatrixXd& images, const std::vector<int>& labels, int num_classes, int hidden,
           int epochs, double learning_rate, int batch_size, std::uint64_t seed) {
            classifier::TrainConfig config;
            config.hidden = hidden;
            config.epochs = epochs;
            config.learning_rate = learning_rate;
            config.batch_size = batch_size;
            config.seed = seed;
            auto result = classifier::train_mlp(images, labels, num_classes, config);
            return py::make_tuple(std::move(result.model), result.train_accuracy, result.final_loss);
        },
        py::arg("images"), py::arg("labels"), py::arg("num_classes"), py::arg("hidden") = 64,
        py::arg("epochs") = 30, py::arg("learning_rate") = 0.05, py::arg("batch_size") = 32,
        py::arg("seed") = 1, "Returns (model, train_accuracy, final_loss).");
    m.def("forward", &classifier::forward, py::arg("model"), py::arg("x"));
    m.def("predict", &classifier::predict, py::arg("model"), py::arg("x"));
    m.def("loss_gradient", &classifier::loss_gradient, py::arg("model"), py::arg("x"), py::arg("label"));
    m.def("save_model", &classifier::save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &classifier::load_model, py::arg("path"));

    // ---- attacks --------------------------------------------------------
    py::class_<attacks::AttackResult>(m, "AttackResult")
        .def_readonly("adversarial", &attacks::AttackResult::adversarial)
        .def_readonly("success", &attacks::AttackResult::success)
        .def_readonly("l2_distortion", &attacks::AttackResult::l2_distortion)
        .def_readonly("linf_distortion", &attacks::AttackResult::linf_distortion)
        .def_readonly("degenerate_gradient", &attacks::AttackResult::degenerate_gradient)
        .def_readonly("clean_label", &attacks::AttackResult::clean_label)
        .def_readonly("adversarial_label", &attacks::AttackResult::adversarial_label);

    m.def("fgsm", &attacks::fgsm, py::arg("model"), py::arg("x"), py::arg("label"), py::arg("epsilon"));
    m.def(
        "bim",
        [](const classifier::MlpModel& model, const Eigen::VectorXd& x, int label, double epsilon,
           double step_size, int iterations) {
            attacks::AttackBudget budget{epsilon, step_size, iterations};
            return attacks::bim(model, x, label, budget);
        },
        py::arg("model"), py::arg("x"), py::arg("label"), py::arg("epsilon"), py::arg("step_size"),
        py::arg("iterations"));
    m.def(
        "pgd",
        [](const classifier::MlpModel& model, const Eigen::VectorXd& x, int label, double epsilon,
           double step_size, int iterations, bool random_start, std::uint64_t seed) {
            attacks::AttackBudget budget{epsilon, step_size, iterations};
            RandomStream rng(seed);
            return attacks::pgd(model, x, label, budget, random_start, rng);
        },
        py::arg("model"), py::arg("x"), py::arg("label"), py::arg("epsilon"), py::arg("step_size"),
        py::arg("iterations"), py::arg("random_start") = false, py::arg("seed") = 1);
    m.def(
        "cw_l2",
        [](const classifier::MlpModel& model, const Eigen::VectorXd& x, int label, double c_min,
           double c_max, int rounds, int iterations, double learning_rate) {
            attacks::CwConfig config{c_min, c_max, rounds, iterations, learning_rate};
            return attacks::cw_l2(model, x, label, config);
        },
        py::arg("model"), py::arg("x"), py::arg("label"), py::arg("c_min") = 1e-3,
        py::arg("c_max") = 1e3, py::arg("rounds") = 6, py::arg("iterations") = 200,
        py::arg("learning_rate") = 0.05);

    // ---- detect ---------------------------------------------------------
    py::class_<detect::DetectionOutcome>(m, "DetectionOutcome")
        .def_readonly("adversarial", &detect::DetectionOutcome::adversarial)
        .def_readonly("samples_used", &detect::DetectionOutcome::samples_used)
        .def_readonly("q_trace", &detect::DetectionOutcome::q_trace)
        .def_property_readonly("stop_reason", [](const detect::DetectionOutcome& outcome) {
            return detect::to_string(outcome.stop_reason);
        });

    m.def("q_statistic", &detect::q_statistic, py::arg("y"), py::arg("y_perturbed"),
          py::arg("norm_order") = 2.0, py::arg("q_clamp") = 1e-6);
    m.def(
        "pert_detect",
        [](const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
           const Eigen::VectorXd& image, int max_samples, int coeff_count, double sigma,
           std::uint64_t seed) {
            detect::PertConfig config;
            config.max_samples = max_samples;
            config.coeff_count = coeff_count;
            config.sigma = sigma;
            RandomStream rng(seed);
            return detect::pert_detect(model, basis, image, config, rng);
        },
        py::arg("model"), py::arg("basis"), py::arg("image"), py::arg("max_samples"),
        py::arg("coeff_count"), py::arg("sigma"), py::arg("seed") = 1);
    m.def(
        "srt",
        [](const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
           const Eigen::VectorXd& image, double lower, double upper, int max_samples, int coeff_count,
           double sigma, bool category_switch, double norm_order, double q_clamp, std::uint64_t seed) {
            detect::SrtConfig config;
            config.lower = lower;
            config.upper = upper;
            config.max_samples = max_samples;
            config.coeff_count = coeff_count;
            config.sigma = sigma;
            config.category_switch = category_switch;
            config.norm_order = norm_order;
            config.q_clamp = q_clamp;
            RandomStream rng(seed);
            return detect::srt(model, basis, image, config, rng);
        },
        py::arg("model"), py::arg("basis"), py::arg("image"), py::arg("lower"), py::arg("upper"),
        py::arg("max_samples"), py::arg("coeff_count"), py::arg("sigma"),
        py::arg("category_switch") = true, py::arg("norm_order") = 2.0, py::arg("q_clamp") = 1e-6,
        py::arg("seed") = 1);

    // ---- apert ----------------------------------------------------------
    m.def(
        "validate_schedule",
        [](double a0, double d0, double delta0, double exp_a, double exp_d, double exp_delta) {
            apert::StepSchedule schedule{a0, d0, delta0, exp_a, exp_d, exp_delta};
            return apert::validate_schedule(schedule);
        },
        py::arg("a0") = 0.5, py::arg("d0") = 1.0, py::arg("delta0") = 0.1, py::arg("exp_a") = 0.7,
        py::arg("exp_d") = 1.0, py::arg("exp_delta") = 0.1,
        "Returns the list of violated step-size conditions (empty when valid).");

    py::class_<apert::ApertConfig>(m, "ApertConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &apert::ApertConfig::alpha)
        .def_readwrite("beta", &apert::ApertConfig::beta)
        .def_readwrite("theta", &apert::ApertConfig::theta)
        .def_readwrite("coeff_count", &apert::ApertConfig::coeff_count)
        .def_readwrite("max_samples", &apert::ApertConfig::max_samples)
        .def_readwrite("sigma", &apert::ApertConfig::sigma)
        .def_readwrite("norm_order", &apert::ApertConfig::norm_order)
        .def_readwrite("n_max", &apert::ApertConfig::n_max);

    m.def(
        "train_apert",
        [](const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
           const Eigen::MatrixXd& clean_images, const Eigen::MatrixXd& adversarial_images,
           const apert::ApertConfig& config, std::uint64_t seed) {
            RandomStream rng(seed);
            const auto result = apert::train_apert(model, basis, clean_images, adversarial_images, config, rng);
            py::dict out;
            out["A"] = result.lower;
            out["B"] = result.upper;
            out["lambda1"] = result.lambda_fa;
            out["lambda2"] = result.lambda_miss;
            out["trace_length"] = result.trace.size();
            return out;
        },
        py::arg("model"), py::arg("basis"), py::arg("clean_images"), py::arg("adversarial_images"),
        py::arg("config"), py::arg("seed") = 1);
    m.def(
        "apert_test",
        [](const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
           const Eigen::VectorXd& image, double lower, double upper, const apert::ApertConfig& config,
           std::uint64_t seed) {
            RandomStream rng(seed);
            return apert::apert_test(model, basis, image, lower, upper, config, rng);
        },
        py::arg("model"), py::arg("basis"), py::arg("image"), py::arg("lower"), py::arg("upper"),
        py::arg("config"), py::arg("seed") = 1);

    // ---- harness --------------------------------------------------------
    m.def(
        "synth_dataset",
        [](int classes, int per_class, int height, int width, int channels, double separation,
           double noise, std::uint64_t seed, std::uint64_t class_seed) {
            harness::SynthSpec spec;
            spec.classes = classes;
            spec.per_class = per_class;
            spec.height = height;
            spec.width = width;
            spec.channels = channels;
            spec.separation = separation;
            spec.noise = noise;
            spec.seed = seed;
            spec.class_seed = class_seed;
            const auto dataset = harness::synth_dataset(spec);
            return py::make_tuple(dataset.images, dataset.labels);
        },
        py::arg("classes") = 4, py::arg("per_class") = 500, py::arg("height") = 8, py::arg("width") = 8,
        py::arg("channels") = 1, py::arg("separation") = 1.0, py::arg("noise") = 0.1, py::arg("seed") = 1,
        py::arg("class_seed") = 1, "Returns (images, labels).");
    m.def(
        "evaluate_pert",
        [](const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
           const Eigen::MatrixXd& clean_images, const Eigen::MatrixXd& adversarial_images,
           const std::vector<int>& clean_labels_of_adv, int max_samples, int coeff_count, double sigma,
           std::uint64_t seed) {
            harness::AttackCorpus corpus;
            corpus.images = adversarial_images;
            for (std::size_t i = 0; i < clean_labels_of_adv.size(); ++i) {
                harness::CorpusEntry entry;
                entry.index = static_cast<int>(i);
                entry.attack = "external";
                entry.success = true;
                entry.clean_label = clean_labels_of_adv[i];
                entry.adv_label = -1;
                corpus.meta.push_back(entry);
            }
            harness::DetectorSpec spec;
            spec.kind = harness::DetectorSpec::Kind::pert;
            spec.pert.max_samples = max_samples;
            spec.pert.coeff_count = coeff_count;
            spec.pert.sigma = sigma;
            const auto row = harness::evaluate_detector(spec, model, basis, clean_images, corpus, seed);
            py::dict out;
            out["false_alarm_pct"] = row.false_alarm_pct;
            out["detection_pct"] = row.detection_pct;
            out["missed_pct"] = row.missed_pct;
            out["mean_n_det"] = row.mean_n_det;
            out["mean_n_clean"] = row.mean_n_clean;
            return out;
        },
        py::arg("model"), py::arg("basis"), py::arg("clean_images"), py::arg("adversarial_images"),
        py::arg("clean_labels_of_adv"), py::arg("max_samples"), py::arg("coeff_count"), py::arg("sigma"),
        py::arg("seed") = 1,
        "Score the fixed-budget detector on clean and adversarial image matrices.");
}
