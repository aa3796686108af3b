#pragma once

#include "otce/dataset.hpp"
#include "otce/fit.hpp"
#include "otce/metrics.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace otce {

/// One task pair's transferability score joined with its measured accuracy.
struct EvalRecord {
    std::string pair_id;
    double score = 0.0;
    double accuracy = 0.0;  // in [0,1]
};

/// Sample Pearson correlation; needs >= 2 records and nonzero variance on
/// both coordinates.
double pearson(std::span<const EvalRecord> records);
double pearson_xy(std::span<const double> x, std::span<const double> y);

struct SourceCandidate {
    std::string source_id;
    double score = 0.0;
    double accuracy = 0.0;
};

struct SelectionGroup {
    std::string target_id;
    std::vector<SourceCandidate> sources;
};

/// Fraction of groups whose top-scoring source is also the top-accuracy
/// source. Ties in either argmax break toward the lexicographically lowest
/// source_id.
double selection_accuracy(std::span<const SelectionGroup> groups);

/// softmax(scores / temperature), computed with max subtraction.
std::vector<double> fusion_weights(std::span<const double> scores,
                                   double temperature = 1.0);

struct ExperimentConfig {
    double aux_fraction = 0.10;
    std::uint64_t seed = 0;
    PairMetricsConfig metrics_config;
    std::vector<std::string> metric_set = {"otce", "otnce", "wd", "wt"};
    // Sensitivity alternative: standardize a fitted model with statistics
    // over auxiliary+test instead of auxiliary only.
    bool standardize_with_test = false;
    FitOptions fit;
};

struct MetricOutcome {
    std::optional<double> pearson_r;
    std::optional<std::string> error;
};

struct ExperimentReport {
    std::uint64_t seed = 0;
    double aux_fraction = 0.0;
    double epsilon = 0.0;
    std::vector<TaskPairMetrics> pair_metrics;   // manifest order
    std::vector<double> accuracies;              // manifest order
    std::vector<std::string> aux_ids;            // split order
    std::vector<std::string> test_ids;           // manifest order
    bool split_disjoint = false;
    OtceModel model;
    std::map<std::string, MetricOutcome> correlations;

    bool all_ok() const;
    nlohmann::ordered_json to_json() const;
};

/// Computes pair metrics for every entry, splits auxiliary/test by seed,
/// fits the model on the auxiliary split (or takes the pre-defined one when
/// aux_fraction is 0), scores the test split and reports per-metric Pearson
/// correlation. Deterministic given the seed.
ExperimentReport run_experiment(const Manifest& manifest, const ExperimentConfig& config);

}  // namespace otce
