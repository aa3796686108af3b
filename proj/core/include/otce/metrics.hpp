#pragma once

#include "otce/dataset.hpp"
#include "otce/fit.hpp"
#include "otce/ot.hpp"

#include <span>
#include <string>
#include <vector>

namespace otce {

/// Domain difference and task difference for one source->target pair.
struct TaskPairMetrics {
    std::string pair_id;
    double w_d = 0.0;      // transport cost under the optimal coupling
    double w_t = 0.0;      // conditional entropy H(Y_t | Y_s), nats
    double epsilon = 0.0;  // regularization used for the coupling
    Eigen::Index n_source = 0;
    Eigen::Index n_target = 0;
};

/// sum_ij cost[i][j] * plan[i][j].
double domain_difference(const CostMatrix& cost, const Coupling& coupling);

/// Joint distribution of (source label, target label) under a coupling.
struct LabelJoint {
    Matrix joint;            // |Y_s| x |Y_t|
    Vector source_marginal;  // row sums of joint
};

/// Aggregates coupling mass by label pair. Class counts of 0 mean
/// "infer as 1 + max(label)".
LabelJoint label_joint(const Coupling& coupling,
                       std::span<const std::uint32_t> source_labels,
                       std::span<const std::uint32_t> target_labels,
                       std::uint32_t num_source_classes = 0,
                       std::uint32_t num_target_classes = 0);

/// H(Y_t | Y_s) in nats; zero-mass cells contribute nothing.
double conditional_entropy(const LabelJoint& joint);

/// Negative task difference; a fit-free transferability score.
double ot_nce(const TaskPairMetrics& metrics);

/// Applies a model carrying standardization statistics to one pair.
double otce_score(const TaskPairMetrics& metrics, const OtceModel& model);

struct PairMetricsConfig {
    SinkhornConfig sinkhorn;
    // Non-default: divide the cost matrix by its median before solving.
    bool normalize_cost = false;
};

/// cost_matrix -> sinkhorn -> domain_difference + label_joint -> conditional
/// entropy, one coupling per pair.
TaskPairMetrics compute_pair_metrics(const TaskPair& pair,
                                     const PairMetricsConfig& config = {});

/// Standardization statistics of a batch of pair metrics.
OtceModel::Stats batch_stats(std::span<const TaskPairMetrics> batch);

/// Scores a batch; a model without statistics (the pre-defined one) is
/// standardized against this batch.
std::vector<double> score_batch(std::span<const TaskPairMetrics> batch,
                                OtceModel model);

}  // namespace otce
