#include "otce/metrics.hpp"

#include "otce/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace otce {

double domain_difference(const CostMatrix& cost, const Coupling& coupling) {
    if (cost.rows() != coupling.plan.rows() || cost.cols() != coupling.plan.cols()) {
        throw InputError("domain_difference: cost and coupling dimensions differ");
    }
    return (cost.values.array() * coupling.plan.array()).sum();
}

namespace {

std::uint32_t infer_classes(std::span<const std::uint32_t> labels,
                            std::uint32_t declared, const char* side) {
    if (declared == 0) {
        return 1 + *std::max_element(labels.begin(), labels.end());
    }
    for (const auto l : labels) {
        if (l >= declared) {
            throw InputError(std::string("label_joint: ") + side +
                             " label out of range: " + std::to_string(l));
        }
    }
    return declared;
}

}  // namespace

LabelJoint label_joint(const Coupling& coupling,
                       std::span<const std::uint32_t> source_labels,
                       std::span<const std::uint32_t> target_labels,
                       std::uint32_t num_source_classes,
                       std::uint32_t num_target_classes) {
    const Eigen::Index m = coupling.plan.rows();
    const Eigen::Index n = coupling.plan.cols();
    if (static_cast<Eigen::Index>(source_labels.size()) != m ||
        static_cast<Eigen::Index>(target_labels.size()) != n) {
        throw InputError("label_joint: label vector lengths do not match the coupling");
    }
    const std::uint32_t ks = infer_classes(source_labels, num_source_classes, "source");
    const std::uint32_t kt = infer_classes(target_labels, num_target_classes, "target");

    LabelJoint out;
    out.joint = Matrix::Zero(ks, kt);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto tv = target_labels[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < m; ++i) {
            out.joint(source_labels[static_cast<std::size_t>(i)], tv) +=
                coupling.plan(i, j);
        }
    }
    out.source_marginal = out.joint.rowwise().sum();
    return out;
}

double conditional_entropy(const LabelJoint& joint) {
    if (joint.joint.rows() < 1 || joint.joint.cols() < 1) {
        throw InputError("conditional_entropy: empty joint");
    }
    if (!joint.joint.allFinite() || (joint.joint.array() < 0.0).any()) {
        throw InputError("conditional_entropy: joint entries must be finite and >= 0");
    }
    if (joint.source_marginal.size() != joint.joint.rows()) {
        throw InputError("conditional_entropy: marginal size mismatch");
    }
    double h = 0.0;
    for (Eigen::Index u = 0; u < joint.joint.rows(); ++u) {
        const double mu = joint.source_marginal(u);
        if (mu <= 0.0) continue;  // zero-mass source class, vacuous term
        for (Eigen::Index v = 0; v < joint.joint.cols(); ++v) {
            const double p = joint.joint(u, v);
            if (p <= 0.0) continue;  // 0 * log 0 := 0
            h -= p * std::log(p / mu);
        }
    }
    return h;
}

double ot_nce(const TaskPairMetrics& metrics) { return -metrics.w_t; }

namespace {

double standardized(double value, double mean, double std) {
    if (std <= 0.0) return 0.0;  // degenerate axis contributes nothing
    return (value - mean) / std;
}

}  // namespace

double otce_score(const TaskPairMetrics& metrics, const OtceModel& model) {
    if (!model.stats) {
        throw InputError(
            "otce_score: model has no standardization statistics; "
            "score a batch or fit on auxiliary tasks first");
    }
    const auto& s = *model.stats;
    return model.lambda1 * standardized(metrics.w_d, s.mean_wd, s.std_wd) +
           model.lambda2 * standardized(metrics.w_t, s.mean_wt, s.std_wt) + model.b;
}

TaskPairMetrics compute_pair_metrics(const TaskPair& pair,
                                     const PairMetricsConfig& config) {
    validate_task_pair(pair);

    CostMatrix cost = cost_matrix(pair.source.features, pair.target.features,
                                  config.sinkhorn.threads);
    if (config.normalize_cost) {
        std::vector<double> flat(cost.values.data(),
                                 cost.values.data() + cost.values.size());
        auto mid = flat.begin() + flat.size() / 2;
        std::nth_element(flat.begin(), mid, flat.end());
        if (*mid > 0.0) cost.values /= *mid;
    }

    const MarginalWeights weights =
        MarginalWeights::uniform(cost.rows(), cost.cols());
    const Coupling coupling = sinkhorn(cost, weights, config.sinkhorn);

    TaskPairMetrics out;
    out.pair_id = pair.pair_id;
    out.epsilon = config.sinkhorn.epsilon;
    out.n_source = pair.source.n();
    out.n_target = pair.target.n();
    out.w_d = domain_difference(cost, coupling);
    const LabelJoint joint =
        label_joint(coupling, pair.source.labels, pair.target.labels,
                    pair.source.num_classes, pair.target.num_classes);
    out.w_t = conditional_entropy(joint);
    return out;
}

OtceModel::Stats batch_stats(std::span<const TaskPairMetrics> batch) {
    if (batch.empty()) throw InputError("batch_stats: empty batch");
    std::vector<double> wd, wt;
    wd.reserve(batch.size());
    wt.reserve(batch.size());
    for (const auto& m : batch) {
        wd.push_back(m.w_d);
        wt.push_back(m.w_t);
    }
    const MeanStd sd = mean_std(wd);
    const MeanStd st = mean_std(wt);
    return OtceModel::Stats{sd.mean, sd.std, st.mean, st.std};
}

std::vector<double> score_batch(std::span<const TaskPairMetrics> batch,
                                OtceModel model) {
    if (!model.stats) model.stats = batch_stats(batch);
    std::vector<double> scores;
    scores.reserve(batch.size());
    for (const auto& m : batch) scores.push_back(otce_score(m, model));
    return scores;
}

}  // namespace otce
