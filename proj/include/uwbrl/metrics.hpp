#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uwbrl/measurement.hpp"
#include "uwbrl/nn.hpp"

namespace uwbrl {

// Mean absolute value. Throws EmptyInput.
double mae(std::span<const double> residuals);

// Linear-interpolation (type 7) quantile of ascending data, p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);

struct BoxplotStats {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double whisker_low = 0.0;   // smallest datum >= q1 - 1.5 iqr
    double whisker_high = 0.0;  // largest datum <= q3 + 1.5 iqr
    std::vector<double> outliers;
};

// Throws EmptyInput.
BoxplotStats boxplot_stats(std::span<const double> residuals);

// Correction in mm for each window (column) of states, eval mode.
using Corrector = std::function<nn::Vector(const nn::Matrix& states)>;

Corrector zero_corrector();
Corrector actor_corrector(nn::ActorNet& net);

enum class Split { All, NlosOnly };

struct ResidualRow {
    std::size_t index = 0;
    double timestamp = 0.0;
    int anchor_id = 0;
    bool los = true;
    double measured_mm = 0.0;
    double true_mm = 0.0;
    double correction_mm = 0.0;
    double before_mm = 0.0;  // measured - true
    double after_mm = 0.0;   // measured - correction - true
};

struct EvalSummary {
    std::size_t count = 0;
    double mae_before = 0.0;
    double mae_after = 0.0;
    BoxplotStats box_before;
    BoxplotStats box_after;
};

struct EvalReport {
    std::string split = "all";
    std::vector<ResidualRow> rows;
    EvalSummary all;
    EvalSummary nlos;  // count 0 when no NLOS samples were evaluated
};

// Evaluates the corrector on the chosen samples (all when indices is empty)
// of an episode with ground truth. Throws MissingGroundTruth.
EvalReport evaluate(const Corrector& corrector, const Episode& episode,
                    const std::vector<std::size_t>& indices = {}, Split split = Split::All);

void write_residuals_csv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);

// Supervised baseline: Table-style CNN trained on true errors.

struct SupervisedConfig {
    double lr = 1e-4;
    int batch_size = 50;
    int max_epochs = 200;
    int patience = 20;  // epochs without validation improvement
    nn::NetworkShape network;
};

void validate(const SupervisedConfig& cfg);

struct LabeledSample {
    const PreprocessedCir* cir = nullptr;
    double error_mm = 0.0;  // measured - true
};

// Reads ground truth of the chosen samples (labels are allowed here).
std::vector<LabeledSample> labeled_samples(const Episode& episode, const std::vector<std::size_t>& indices);

struct SupervisedModel {
    nn::ActorNet net;
    std::vector<double> val_mae_history;  // per epoch, residual MAE in mm
    int best_epoch = -1;
    double best_val_mae = 0.0;
};

SupervisedModel train_supervised(const std::vector<LabeledSample>& train, const std::vector<LabeledSample>& val,
                                 nn::OutputHead head, const SupervisedConfig& cfg, std::uint64_t seed);

// Standalone actor network files (weights, batch-norm statistics, shape, head).
// Throws IoError, CorruptFile, VersionMismatch.
void save_model(const nn::ActorNet& net, const std::string& path);
nn::ActorNet load_model(const std::string& path);

}  // namespace uwbrl
