#include "pertkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pertkit/binio.hpp"

namespace pertkit::harness {

namespace {

// Bilinear upsample of a coarse grid to (height, width).
Eigen::MatrixXd upsample(const Eigen::MatrixXd& coarse, int height, int width) {
    Eigen::MatrixXd fine(height, width);
    const int gh = static_cast<int>(coarse.rows());
    const int gw = static_cast<int>(coarse.cols());
    for (int r = 0; r < height; ++r) {
        const double u = height > 1 ? static_cast<double>(r) * (gh - 1) / (height - 1) : 0.0;
        const int r0 = std::min(static_cast<int>(u), gh - 1);
        const int r1 = std::min(r0 + 1, gh - 1);
        const double fr = u - r0;
        for (int c = 0; c < width; ++c) {
            const double v = width > 1 ? static_cast<double>(c) * (gw - 1) / (width - 1) : 0.0;
            const int c0 = std::min(static_cast<int>(v), gw - 1);
            const int c1 = std::min(c0 + 1, gw - 1);
            const double fc = v - c0;
            fine(r, c) = (1 - fr) * ((1 - fc) * coarse(r0, c0) + fc * coarse(r0, c1)) +
                         fr * ((1 - fc) * coarse(r1, c0) + fc * coarse(r1, c1));
        }
    }
    return fine;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream stream(line);
    std::string field;
    while (std::getline(stream, field, ',')) fields.push_back(field);
    return fields;
}

detect::DetectionOutcome run_detector(const DetectorSpec& spec, const classifier::MlpModel& model,
                                      const spectral::SpectralBasis& basis, const Eigen::VectorXd& image,
                                      RandomStream& rng) {
    switch (spec.kind) {
        case DetectorSpec::Kind::pert:
            return detect::pert_detect(model, basis, image, spec.pert, rng);
        case DetectorSpec::Kind::srt:
            return detect::srt(model, basis, image, spec.srt, rng);
        case DetectorSpec::Kind::apert: {
            detect::SrtConfig config = spec.srt;
            config.category_switch = true;
            return detect::srt(model, basis, image, config, rng);
        }
    }
    throw std::logic_error("unknown detector kind");
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
    if (spec.per_class < 1) throw std::invalid_argument("synth_dataset: per_class must be >= 1");
    if (spec.height < 1 || spec.width < 1 || spec.channels < 1) {
        throw std::invalid_argument("synth_dataset: degenerate dimensions");
    }
    if (spec.noise < 0.0 || spec.separation < 0.0) {
        throw std::invalid_argument("synth_dataset: separation and noise must be >= 0");
    }

    RandomStream class_rng(spec.class_seed);
    RandomStream rng(spec.seed);
    const int dim = spec.height * spec.width * spec.channels;
    const int gh = std::min(4, spec.height);
    const int gw = std::min(4, spec.width);

    // Class means come from their own stream so train/test splits can share
    // the same classes while drawing independent sample noise.
    Eigen::MatrixXd means(spec.classes, dim);
    for (int k = 0; k < spec.classes; ++k) {
        for (int ch = 0; ch < spec.channels; ++ch) {
            Eigen::MatrixXd coarse(gh, gw);
            for (int r = 0; r < gh; ++r) {
                for (int c = 0; c < gw; ++c) coarse(r, c) = spec.separation * 0.25 * class_rng.normal();
            }
            Eigen::MatrixXd field = upsample(coarse, spec.height, spec.width);
            for (int r = 0; r < spec.height; ++r) {
                for (int c = 0; c < spec.width; ++c) {
                    means(k, (r * spec.width + c) * spec.channels + ch) = 0.5 + field(r, c);
                }
            }
        }
    }

    Dataset dataset;
    dataset.height = spec.height;
    dataset.width = spec.width;
    dataset.channels = spec.channels;
    dataset.provenance = Provenance::synthetic;
    dataset.images.resize(static_cast<Eigen::Index>(spec.classes) * spec.per_class, dim);
    dataset.labels.reserve(static_cast<std::size_t>(spec.classes) * spec.per_class);
    Eigen::Index row = 0;
    for (int k = 0; k < spec.classes; ++k) {
        for (int i = 0; i < spec.per_class; ++i, ++row) {
            for (int d = 0; d < dim; ++d) {
                dataset.images(row, d) = std::clamp(means(k, d) + spec.noise * rng.normal(), 0.0, 1.0);
            }
            dataset.labels.push_back(k);
        }
    }
    return dataset;
}

void save_images(const Eigen::MatrixXd& images, int height, int width, int channels,
                 const std::string& path) {
    if (images.cols() != static_cast<Eigen::Index>(height) * width * channels) {
        throw std::invalid_argument("save_images: dims do not match image width");
    }
    auto out = binio::open_out(path);
    binio::write_magic(out, "PIMG");
    binio::write_u32(out, static_cast<std::uint32_t>(images.rows()));
    binio::write_u32(out, static_cast<std::uint32_t>(height));
    binio::write_u32(out, static_cast<std::uint32_t>(width));
    binio::write_u32(out, static_cast<std::uint32_t>(channels));
    for (Eigen::Index r = 0; r < images.rows(); ++r) {
        for (Eigen::Index c = 0; c < images.cols(); ++c) binio::write_f64(out, images(r, c));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Eigen::MatrixXd load_images(const std::string& path, int& height, int& width, int& channels) {
    auto in = binio::open_in(path);
    binio::expect_magic(in, "PIMG", "image tensor");
    const auto count = binio::read_u32(in, "image count");
    height = static_cast<int>(binio::read_u32(in, "height"));
    width = static_cast<int>(binio::read_u32(in, "width"));
    channels = static_cast<int>(binio::read_u32(in, "channels"));
    if (height < 1 || width < 1 || channels < 1) throw std::runtime_error("image tensor: degenerate dims");
    const Eigen::Index dim = static_cast<Eigen::Index>(height) * width * channels;
    Eigen::MatrixXd images(count, dim);
    for (std::uint32_t r = 0; r < count; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            const double v = binio::read_f64(in, "pixels");
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw std::runtime_error("image tensor: pixel out of range [0,1] at image " +
                                         std::to_string(r) + ", offset " + std::to_string(c));
            }
            images(r, c) = v;
        }
    }
    binio::expect_eof(in, "image tensor");
    return images;
}

void save_labels(const std::vector<int>& labels, const std::string& path) {
    auto out = binio::open_out(path);
    binio::write_magic(out, "PLBL");
    binio::write_u32(out, static_cast<std::uint32_t>(labels.size()));
    for (int label : labels) {
        if (label < 0) throw std::invalid_argument("save_labels: negative label");
        binio::write_u32(out, static_cast<std::uint32_t>(label));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<int> load_labels(const std::string& path) {
    auto in = binio::open_in(path);
    binio::expect_magic(in, "PLBL", "labels");
    const auto count = binio::read_u32(in, "label count");
    std::vector<int> labels(count);
    for (std::uint32_t i = 0; i < count; ++i) labels[i] = static_cast<int>(binio::read_u32(in, "labels"));
    binio::expect_eof(in, "labels file");
    return labels;
}

void save_dataset(const Dataset& dataset, const std::string& images_path, const std::string& labels_path) {
    save_images(dataset.images, dataset.height, dataset.width, dataset.channels, images_path);
    save_labels(dataset.labels, labels_path);
}

Dataset ingest_raw(const std::string& images_path, const std::string& labels_path) {
    Dataset dataset;
    dataset.images = load_images(images_path, dataset.height, dataset.width, dataset.channels);
    dataset.labels = load_labels(labels_path);
    dataset.provenance = Provenance::ingested;
    if (static_cast<Eigen::Index>(dataset.labels.size()) != dataset.images.rows()) {
        throw std::runtime_error("ingest_raw: image count " + std::to_string(dataset.images.rows()) +
                                 " does not match label count " + std::to_string(dataset.labels.size()));
    }
    return dataset;
}

int AttackCorpus::success_count() const {
    int n = 0;
    for (const auto& entry : meta) n += entry.success ? 1 : 0;
    return n;
}

AttackCorpus craft_corpus(const classifier::MlpModel& model, const Dataset& dataset,
                          const CraftConfig& config, RandomStream& rng) {
    if (dataset.size() == 0) throw std::invalid_argument("craft_corpus: empty dataset");

    std::vector<Eigen::VectorXd> rows;
    std::vector<CorpusEntry> meta;
    for (int i = 0; i < dataset.size(); ++i) {
        const Eigen::VectorXd x = dataset.images.row(i).transpose();
        const int label = dataset.labels[static_cast<std::size_t>(i)];
        if (classifier::predict(model, x) != label) continue;  // only correctly classified cleans

        attacks::AttackResult result;
        if (config.attack == "fgsm") {
            result = attacks::fgsm(model, x, label, config.budget.epsilon);
        } else if (config.attack == "bim") {
            result = attacks::bim(model, x, label, config.budget);
        } else if (config.attack == "pgd") {
            RandomStream attack_rng = rng.fork();
            result = attacks::pgd(model, x, label, config.budget, config.pgd_random_start, attack_rng);
        } else if (config.attack == "cw") {
            result = attacks::cw_l2(model, x, label, config.cw);
        } else {
            throw std::invalid_argument("craft_corpus: unknown attack '" + config.attack + "'");
        }

        CorpusEntry entry;
        entry.index = i;
        entry.attack = config.attack;
        entry.epsilon = config.attack == "cw" ? 0.0 : config.budget.epsilon;
        entry.success = result.success;
        entry.l2 = result.l2_distortion;
        entry.linf = result.linf_distortion;
        entry.clean_label = result.clean_label;
        entry.adv_label = result.adversarial_label;
        meta.push_back(entry);
        rows.push_back(result.adversarial);
    }

    AttackCorpus corpus;
    corpus.height = dataset.height;
    corpus.width = dataset.width;
    corpus.channels = dataset.channels;
    corpus.meta = std::move(meta);
    corpus.images.resize(static_cast<Eigen::Index>(rows.size()), dataset.dim());
    for (std::size_t r = 0; r < rows.size(); ++r) corpus.images.row(static_cast<Eigen::Index>(r)) = rows[r];
    return corpus;
}

void save_corpus(const AttackCorpus& corpus, const std::string& images_path, const std::string& meta_path) {
    save_images(corpus.images, corpus.height, corpus.width, corpus.channels, images_path);
    std::ofstream out(meta_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + meta_path);
    out << "index,attack,epsilon,success,l2,linf,clean_label,adv_label\n";
    char line[256];
    for (const CorpusEntry& e : corpus.meta) {
        std::snprintf(line, sizeof(line), "%d,%s,%.12g,%d,%.12g,%.12g,%d,%d\n", e.index, e.attack.c_str(),
                      e.epsilon, e.success ? 1 : 0, e.l2, e.linf, e.clean_label, e.adv_label);
        out << line;
    }
    if (!out) throw std::runtime_error("write failed: " + meta_path);
}

AttackCorpus load_corpus(const std::string& images_path, const std::string& meta_path) {
    AttackCorpus corpus;
    corpus.images = load_images(images_path, corpus.height, corpus.width, corpus.channels);
    std::ifstream in(meta_path);
    if (!in) throw std::runtime_error("cannot open for reading: " + meta_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("corpus metadata: empty file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 8) throw std::runtime_error("corpus metadata: malformed row '" + line + "'");
        CorpusEntry e;
        e.index = std::stoi(fields[0]);
        e.attack = fields[1];
        e.epsilon = std::stod(fields[2]);
        e.success = fields[3] == "1";
        e.l2 = std::stod(fields[4]);
        e.linf = std::stod(fields[5]);
        e.clean_label = std::stoi(fields[6]);
        e.adv_label = std::stoi(fields[7]);
        corpus.meta.push_back(e);
    }
    if (static_cast<Eigen::Index>(corpus.meta.size()) != corpus.images.rows()) {
        throw std::runtime_error("corpus metadata row count does not match corpus image count");
    }
    return corpus;
}

std::string DetectorSpec::name() const {
    switch (kind) {
        case Kind::pert: return "pert";
        case Kind::srt: return "srt";
        case Kind::apert: return "apert";
    }
    return "unknown";
}

double DetectorSpec::knob() const {
    return kind == Kind::pert ? pert.sigma : srt.upper;
}

EvalRow evaluate_detector(const DetectorSpec& spec, const classifier::MlpModel& model,
                          const spectral::SpectralBasis& basis, const Eigen::MatrixXd& clean_images,
                          const AttackCorpus& corpus, std::uint64_t seed) {
    if (clean_images.rows() == 0) throw std::invalid_argument("evaluate_detector: empty clean set");
    if (corpus.success_count() == 0) throw std::invalid_argument("evaluate_detector: no successful attacks in corpus");

    EvalRow row;
    row.detector = spec.name();
    row.param = spec.knob();
    row.attack = corpus.meta.empty() ? "" : corpus.meta.front().attack;

    long fa_n = 0, clean_n = 0, det_n = 0, miss_n = 0;
    double fa_sum = 0, clean_sum = 0, det_sum = 0, miss_sum = 0;

    for (Eigen::Index i = 0; i < clean_images.rows(); ++i) {
        RandomStream rng(derive_seed(seed, "clean/" + std::to_string(i)));
        const auto outcome = run_detector(spec, model, basis, clean_images.row(i).transpose(), rng);
        if (outcome.adversarial) {
            ++fa_n;
            fa_sum += outcome.samples_used;
        } else {
            ++clean_n;
            clean_sum += outcome.samples_used;
        }
    }
    for (std::size_t i = 0; i < corpus.meta.size(); ++i) {
        if (!corpus.meta[i].success) continue;
        RandomStream rng(derive_seed(seed, "adv/" + std::to_string(i)));
        const auto outcome =
            run_detector(spec, model, basis, corpus.images.row(static_cast<Eigen::Index>(i)).transpose(), rng);
        if (outcome.adversarial) {
            ++det_n;
            det_sum += outcome.samples_used;
        } else {
            ++miss_n;
            miss_sum += outcome.samples_used;
        }
    }

    row.clean_count = static_cast<int>(fa_n + clean_n);
    row.adversarial_count = static_cast<int>(det_n + miss_n);
    row.false_alarm_pct = 100.0 * static_cast<double>(fa_n) / static_cast<double>(row.clean_count);
    row.detection_pct = 100.0 * static_cast<double>(det_n) / static_cast<double>(row.adversarial_count);
    row.missed_pct = 100.0 * static_cast<double>(miss_n) / static_cast<double>(row.adversarial_count);
    row.mean_n_fa = fa_n ? fa_sum / static_cast<double>(fa_n) : std::nan("");
    row.mean_n_det = det_n ? det_sum / static_cast<double>(det_n) : std::nan("");
    row.mean_n_miss = miss_n ? miss_sum / static_cast<double>(miss_n) : std::nan("");
    row.mean_n_clean = clean_n ? clean_sum / static_cast<double>(clean_n) : std::nan("");
    return row;
}

double trapezoid_auc(std::vector<RocPoint> points) {
    points.push_back({0.0, 0.0, 0.0});
    points.push_back({0.0, 1.0, 1.0});
    std::sort(points.begin(), points.end(), [](const RocPoint& a, const RocPoint& b) {
        return a.fa_rate != b.fa_rate ? a.fa_rate < b.fa_rate : a.det_rate < b.det_rate;
    });
    points.erase(std::unique(points.begin(), points.end(),
                             [](const RocPoint& a, const RocPoint& b) {
                                 return a.fa_rate == b.fa_rate && a.det_rate == b.det_rate;
                             }),
                 points.end());
    double auc = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        auc += 0.5 * (points[i].fa_rate - points[i - 1].fa_rate) * (points[i].det_rate + points[i - 1].det_rate);
    }
    return auc;
}

RocCurve roc_sweep(const DetectorSpec& base, SweepKind kind, const std::vector<double>& sweep_values,
                   const classifier::MlpModel& model, const spectral::SpectralBasis& basis,
                   const Eigen::MatrixXd& clean_images, const AttackCorpus& corpus, std::uint64_t seed) {
    if (sweep_values.size() < 3) throw std::invalid_argument("roc_sweep: need at least 3 sweep points");

    RocCurve curve;
    curve.detector = base.name();
    for (double value : sweep_values) {
        DetectorSpec spec = base;
        if (kind == SweepKind::sigma) {
            spec.pert.sigma = value;
            spec.srt.sigma = value;
        } else {
            if (!(value > 0.0)) throw std::invalid_argument("roc_sweep: threshold scale must be positive");
            spec.srt.upper = base.srt.upper * value;
            spec.srt.lower = base.srt.lower / value;
            if (spec.srt.lower >= spec.srt.upper) spec.srt.lower = spec.srt.upper * 0.5;
        }
        const EvalRow row = evaluate_detector(spec, model, basis, clean_images, corpus, seed);
        RocPoint point;
        point.param = value;
        point.fa_rate = row.false_alarm_pct / 100.0;
        point.det_rate = row.detection_pct / 100.0;
        curve.points.push_back(point);
    }

    std::sort(curve.points.begin(), curve.points.end(), [](const RocPoint& a, const RocPoint& b) {
        return a.fa_rate != b.fa_rate ? a.fa_rate < b.fa_rate : a.det_rate < b.det_rate;
    });
    curve.degenerate = std::all_of(curve.points.begin(), curve.points.end(), [&](const RocPoint& p) {
        return p.fa_rate == curve.points.front().fa_rate && p.det_rate == curve.points.front().det_rate;
    });
    curve.auc = trapezoid_auc(curve.points);
    return curve;
}

void report_csv(const std::vector<EvalRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "attack,detector,param,false_alarm_pct,detection_pct,missed_pct,mean_n_fa,mean_n_det,mean_n_miss,"
           "mean_n_clean\n";
    char line[512];
    for (const EvalRow& row : rows) {
        std::snprintf(line, sizeof(line), "%s,%s,%.12g,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                      row.attack.c_str(), row.detector.c_str(), row.param, row.false_alarm_pct,
                      row.detection_pct, row.missed_pct, row.mean_n_fa, row.mean_n_det, row.mean_n_miss,
                      row.mean_n_clean);
        out << line;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void roc_csv(const std::vector<RocCurve>& curves, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "detector,param,fa_rate,det_rate\n";
    char line[256];
    for (const RocCurve& curve : curves) {
        for (const RocPoint& point : curve.points) {
            std::snprintf(line, sizeof(line), "%s,%.12g,%.6f,%.6f\n", curve.detector.c_str(), point.param,
                          point.fa_rate, point.det_rate);
            out << line;
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void roc_svg(const std::vector<RocCurve>& curves, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);

    // Plot area inside an 800x600 viewbox with fixed margins; both axes 0-1.
    const double x0 = 80, y0 = 40, x1 = 760, y1 = 540;
    auto px = [&](double fa) { return x0 + fa * (x1 - x0); };
    auto py = [&](double det) { return y1 - det * (y1 - y0); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", x0, y1, x1, y1);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", x0, y1, x0, y0);
    out << buf;
    for (int tick = 0; tick <= 5; ++tick) {
        const double f = tick / 5.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"14\" text-anchor=\"middle\">%.1f</text>\n",
                      px(f), y1 + 20.0, f);
        out << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"14\" text-anchor=\"end\">%.1f</text>\n",
                      x0 - 8.0, py(f) + 5.0, f);
        out << buf;
    }
    out << "<text x=\"420\" y=\"585\" font-size=\"16\" text-anchor=\"middle\">False alarm rate</text>\n";
    out << "<text x=\"20\" y=\"290\" font-size=\"16\" text-anchor=\"middle\" transform=\"rotate(-90 20 290)\">"
           "Detection rate</text>\n";

    int color_index = 0;
    double legend_y = 60.0;
    for (const RocCurve& curve : curves) {
        const char* color = palette[color_index % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const RocPoint& point : curve.points) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(point.fa_rate), py(point.det_rate));
            out << buf;
        }
        out << "\"/>\n";
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"640\" y=\"%.1f\" font-size=\"14\" fill=\"%s\">%s (auc %.3f)</text>\n",
                      legend_y, color, curve.detector.c_str(), curve.auc);
        out << buf;
        legend_y += 20.0;
        ++color_index;
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace pertkit::harness
