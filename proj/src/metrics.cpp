#include "uwbrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "uwbrl/config.hpp"
#include "uwbrl/error.hpp"

namespace uwbrl {

double mae(std::span<const double> residuals) {
    if (residuals.empty()) throw EmptyInput("MAE of an empty residual set");
    double sum = 0.0;
    for (double r : residuals) sum += std::abs(r);
    return sum / static_cast<double>(residuals.size());
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw EmptyInput("quantile of an empty set");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxplotStats boxplot_stats(std::span<const double> residuals) {
    if (residuals.empty()) throw EmptyInput("boxplot of an empty residual set");
    std::vector<double> v(residuals.begin(), residuals.end());
    std::sort(v.begin(), v.end());
    BoxplotStats s;
    s.q1 = quantile_sorted(v, 0.25);
    s.median = quantile_sorted(v, 0.5);
    s.q3 = quantile_sorted(v, 0.75);
    s.iqr = s.q3 - s.q1;
    const double lo_fence = s.q1 - 1.5 * s.iqr;
    const double hi_fence = s.q3 + 1.5 * s.iqr;
    s.whisker_low = *std::lower_bound(v.begin(), v.end(), lo_fence);
    s.whisker_high = *(std::upper_bound(v.begin(), v.end(), hi_fence) - 1);
    for (double x : v) {
        if (x < lo_fence || x > hi_fence) s.outliers.push_back(x);
    }
    return s;
}

Corrector zero_corrector() {
    return [](const nn::Matrix& states) { return nn::Vector::Zero(states.cols()); };
}

Corrector actor_corrector(nn::ActorNet& net) {
    return [&net](const nn::Matrix& states) { return net.forward(states, nn::Context{}); };
}

namespace {

EvalSummary summarize(const std::vector<ResidualRow>& rows, bool nlos_only) {
    std::vector<double> before;
    std::vector<double> after;
    for (const auto& r : rows) {
        if (nlos_only && r.los) continue;
        before.push_back(r.before_mm);
        after.push_back(r.after_mm);
    }
    EvalSummary s;
    s.count = before.size();
    if (s.count == 0) return s;
    s.mae_before = mae(before);
    s.mae_after = mae(after);
    s.box_before = boxplot_stats(before);
    s.box_after = boxplot_stats(after);
    return s;
}

Json box_json(const BoxplotStats& b) {
    return Json{{"median", b.median},           {"q1", b.q1},
                {"q3", b.q3},                   {"iqr", b.iqr},
                {"whisker_low", b.whisker_low}, {"whisker_high", b.whisker_high},
                {"outlier_count", b.outliers.size()}};
}

Json summary_json(const EvalSummary& s) {
    Json j{{"count", s.count}};
    if (s.count == 0) return j;
    j["mae_before_mm"] = s.mae_before;
    j["mae_after_mm"] = s.mae_after;
    j["mae_reduction"] = s.mae_before > 0.0 ? 1.0 - s.mae_after / s.mae_before : 0.0;
    j["box_before"] = box_json(s.box_before);
    j["box_after"] = box_json(s.box_after);
    return j;
}

}  // namespace

EvalReport evaluate(const Corrector& corrector, const Episode& episode, const std::vector<std::size_t>& indices,
                    Split split) {
    std::vector<std::size_t> chosen;
    if (indices.empty()) {
        chosen.resize(episode.size());
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    } else {
        chosen = indices;
    }
    std::vector<std::size_t> kept;
    for (std::size_t i : chosen) {
        if (i >= episode.size()) throw InvalidArgument("evaluation index out of range");
        const GroundTruth& truth = episode.measurements[i].ground_truth();
        if (split == Split::NlosOnly && truth.los) continue;
        kept.push_back(i);
    }
    EvalReport report;
    report.split = split == Split::All ? "all" : "nlos";
    if (kept.empty()) throw EmptyInput("no samples to evaluate");

    std::vector<const PreprocessedCir*> cirs;
    cirs.reserve(kept.size());
    for (std::size_t i : kept) cirs.push_back(&episode.measurements[i].cir);
    // Chunked so large sets do not blow up convolution workspaces.
    constexpr std::size_t kChunk = 256;
    nn::Vector corrections(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t start = 0; start < kept.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, kept.size() - start);
        std::vector<const PreprocessedCir*> part(cirs.begin() + static_cast<std::ptrdiff_t>(start),
                                                 cirs.begin() + static_cast<std::ptrdiff_t>(start + n));
        const nn::Vector c = corrector(nn::stack_states(part));
        if (c.size() != static_cast<Eigen::Index>(n)) throw ShapeMismatch("corrector returned the wrong count");
        corrections.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = c;
    }

    report.rows.reserve(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const RangeMeasurement& m = episode.measurements[kept[k]];
        const GroundTruth& truth = m.ground_truth();
        ResidualRow row;
        row.index = kept[k];
        row.timestamp = m.timestamp;
        row.anchor_id = m.anchor_id;
        row.los = truth.los;
        row.measured_mm = m.measured_range_mm;
        row.true_mm = truth.true_range_mm;
        row.correction_mm = corrections(static_cast<Eigen::Index>(k));
        row.before_mm = m.measured_range_mm - truth.true_range_mm;
        row.after_mm = m.measured_range_mm - row.correction_mm - truth.true_range_mm;
        report.rows.push_back(row);
    }
    report.all = summarize(report.rows, false);
    report.nlos = summarize(report.rows, true);
    return report;
}

void write_residuals_csv(const EvalReport& report, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw IoError("cannot write " + path);
    std::fprintf(f, "index,timestamp_s,anchor_id,los_flag,measured_range_mm,true_range_mm,correction_mm,"
                    "residual_before_mm,residual_after_mm\n");
    for (const auto& r : report.rows) {
        std::fprintf(f, "%zu,%.9g,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.index, r.timestamp, r.anchor_id, r.los ? 1 : 0,
                     r.measured_mm, r.true_mm, r.correction_mm, r.before_mm, r.after_mm);
    }
    if (std::fclose(f) != 0) throw IoError("failed writing " + path);
}

void write_report_json(const EvalReport& report, const std::string& path) {
    const Json j{{"schema_version", 1},
                 {"split", report.split},
                 {"all", summary_json(report.all)},
                 {"nlos", summary_json(report.nlos)}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

// Supervised baseline ----------------------------------------------------------

void validate(const SupervisedConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw ConfigError("supervised lr must be positive");
    if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1) {
        throw ConfigError("supervised batch size, epochs and patience must be positive");
    }
}

std::vector<LabeledSample> labeled_samples(const Episode& episode, const std::vector<std::size_t>& indices) {
    std::vector<LabeledSample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        const RangeMeasurement& m = episode.measurements.at(i);
        out.push_back({&m.cir, m.measured_range_mm - m.ground_truth().true_range_mm});
    }
    return out;
}

namespace {

double validation_mae(nn::ActorNet& net, const std::vector<LabeledSample>& val) {
    constexpr std::size_t kChunk = 256;
    double sum = 0.0;
    for (std::size_t start = 0; start < val.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, val.size() - start);
        std::vector<const PreprocessedCir*> cirs;
        for (std::size_t i = start; i < start + n; ++i) cirs.push_back(val[i].cir);
        const nn::Vector pred = net.forward(nn::stack_states(cirs), nn::Context{});
        for (std::size_t i = 0; i < n; ++i) sum += std::abs(val[start + i].error_mm - pred(static_cast<Eigen::Index>(i)));
    }
    return sum / static_cast<double>(val.size());
}

}  // namespace

SupervisedModel train_supervised(const std::vector<LabeledSample>& train, const std::vector<LabeledSample>& val,
                                 nn::OutputHead head, const SupervisedConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    if (train.empty() || val.empty()) throw EmptyInput("supervised training needs train and validation samples");
    Rng rng(seed);
    SupervisedModel model{nn::ActorNet(cfg.network, head, rng), {}, -1, 0.0};
    nn::ActorNet best = model.net;
    nn::Adam opt(cfg.lr);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const nn::Context ctx{true, &rng};
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t n = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
            // A lone trailing sample would give degenerate batch statistics.
            if (n < 2) continue;
            std::vector<const PreprocessedCir*> cirs;
            nn::Vector target(static_cast<Eigen::Index>(n));
            for (std::size_t k = 0; k < n; ++k) {
                const LabeledSample& s = train[order[start + k]];
                cirs.push_back(s.cir);
                target(static_cast<Eigen::Index>(k)) = s.error_mm;
            }
            const nn::Vector pred = model.net.forward(nn::stack_states(cirs), ctx);
            const nn::Vector diff = pred - target;
            if (!diff.allFinite()) throw NonFiniteLoss("supervised loss is not finite");
            model.net.backward(2.0 * diff / static_cast<double>(n));
            opt.step(model.net.params());
        }
        const double v = validation_mae(model.net, val);
        model.val_mae_history.push_back(v);
        if (model.best_epoch < 0 || v < model.best_val_mae) {
            model.best_val_mae = v;
            model.best_epoch = epoch;
            best = model.net;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    model.net = std::move(best);
    return model;
}

}  // namespace uwbrl
