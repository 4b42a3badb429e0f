#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pertkit/apert.hpp"
#include "pertkit/attacks.hpp"
#include "pertkit/classifier.hpp"
#include "pertkit/detect.hpp"
#include "pertkit/rng.hpp"
#include "pertkit/spectral.hpp"

namespace pertkit::harness {

enum class Provenance { synthetic, ingested };

struct Dataset {
    Eigen::MatrixXd images;  // one row per image, values in [0,1]
    std::vector<int> labels;
    int height = 0;
    int width = 0;
    int channels = 0;
    Provenance provenance = Provenance::synthetic;

    int size() const { return static_cast<int>(images.rows()); }
    int dim() const { return height * width * channels; }
};

struct SynthSpec {
    int classes = 4;
    int per_class = 500;
    int height = 8;
    int width = 8;
    int channels = 1;
    double separation = 1.0;     // scale of the class-mean blob fields
    double noise = 0.1;          // per-pixel sample noise
    std::uint64_t seed = 1;      // sample noise stream
    std::uint64_t class_seed = 1;  // class-mean stream; share it across splits
};

// Smooth per-class mean fields (coarse Gaussian grids, bilinearly upsampled
// around a 0.5 baseline) plus iid pixel noise, clipped to [0,1].
Dataset synth_dataset(const SynthSpec& spec);

// Raw tensor files: images "PIMG" (count, h, w, channels, f64 pixels) and
// labels "PLBL" (count, u32 labels). The loader validates pixel range and
// label/count consistency.
void save_images(const Eigen::MatrixXd& images, int height, int width, int channels,
                 const std::string& path);
Eigen::MatrixXd load_images(const std::string& path, int& height, int& width, int& channels);
void save_labels(const std::vector<int>& labels, const std::string& path);
std::vector<int> load_labels(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& images_path, const std::string& labels_path);
Dataset ingest_raw(const std::string& images_path, const std::string& labels_path);

struct CorpusEntry {
    int index = 0;  // position in the source dataset
    std::string attack;
    double epsilon = 0.0;
    bool success = false;
    double l2 = 0.0;
    double linf = 0.0;
    int clean_label = -1;
    int adv_label = -1;
};

// Attacked images (all attempts) with per-image metadata; detectors are
// evaluated on the successful entries only.
struct AttackCorpus {
    Eigen::MatrixXd images;
    std::vector<CorpusEntry> meta;
    int height = 0;
    int width = 0;
    int channels = 0;

    int success_count() const;
};

struct CraftConfig {
    std::string attack = "fgsm";  // fgsm | bim | pgd | cw
    attacks::AttackBudget budget;
    bool pgd_random_start = false;
    attacks::CwConfig cw;
};

// Runs the attack on every correctly classified image of the dataset
// (misclassified cleans are skipped: adversarial is defined relative to a
// correct clean prediction).
AttackCorpus craft_corpus(const classifier::MlpModel& model, const Dataset& dataset,
                          const CraftConfig& config, RandomStream& rng);

void save_corpus(const AttackCorpus& corpus, const std::string& images_path, const std::string& meta_path);
AttackCorpus load_corpus(const std::string& images_path, const std::string& meta_path);

struct DetectorSpec {
    enum class Kind { pert, srt, apert } kind = Kind::pert;
    detect::PertConfig pert;
    detect::SrtConfig srt;  // apert uses this with category_switch forced on

    std::string name() const;
    double knob() const;  // reported "param" column: sigma for pert, upper threshold otherwise
};

struct EvalRow {
    std::string attack;
    std::string detector;
    double param = 0.0;
    double false_alarm_pct = 0.0;
    double detection_pct = 0.0;
    double missed_pct = 0.0;
    double mean_n_fa = 0.0;
    double mean_n_det = 0.0;
    double mean_n_miss = 0.0;
    double mean_n_clean = 0.0;
    int clean_count = 0;
    int adversarial_count = 0;
};

// Runs the detector over the clean set and the successful corpus entries;
// per-image noise streams are derived from `seed` and the image index.
EvalRow evaluate_detector(const DetectorSpec& spec, const classifier::MlpModel& model,
                          const spectral::SpectralBasis& basis, const Eigen::MatrixXd& clean_images,
                          const AttackCorpus& corpus, std::uint64_t seed);

struct RocPoint {
    double param = 0.0;
    double fa_rate = 0.0;
    double det_rate = 0.0;
};

struct RocCurve {
    std::string detector;
    std::vector<RocPoint> points;  // sorted by fa_rate
    double auc = 0.0;
    bool degenerate = false;  // all operating points identical
};

enum class SweepKind { sigma, threshold_scale };

// One operating point per sweep value. sigma sweeps the perturbation
// strength (the natural knob of the fixed-budget detector); threshold_scale
// multiplies the upper threshold and divides the lower one, widening or
// narrowing the sequential test's continue region.
RocCurve roc_sweep(const DetectorSpec& base, SweepKind kind, const std::vector<double>& sweep_values,
                   const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                   const Eigen::MatrixXd& clean_images, const AttackCorpus& corpus, std::uint64_t seed);

// Trapezoid AUC over points sorted by fa_rate with (0,0) and (1,1) anchors
// appended and exact duplicates removed.
double trapezoid_auc(std::vector<RocPoint> points);

void report_csv(const std::vector<EvalRow>& rows, const std::string& path);
void roc_csv(const std::vector<RocCurve>& curves, const std::string& path);
void roc_svg(const std::vector<RocCurve>& curves, const std::string& path);

}  // namespace pertkit::harness
