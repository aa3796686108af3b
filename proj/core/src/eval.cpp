#include "otce/eval.hpp"

#include "otce/baselines.hpp"
#include "otce/error.hpp"
#include "otce/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace otce {

double pearson_xy(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("pearson: size mismatch");
    const auto n = x.size();
    if (n < 2) throw InputError("pearson: need at least 2 records");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw InputError("pearson: non-finite value");
        }
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw InputError("pearson: undefined correlation (zero variance)");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(std::span<const EvalRecord> records) {
    std::vector<double> scores, accs;
    scores.reserve(records.size());
    accs.reserve(records.size());
    for (const auto& r : records) {
        if (r.accuracy < 0.0 || r.accuracy > 1.0) {
            throw InputError("pearson: accuracy outside [0,1] in record '" +
                             r.pair_id + "'");
        }
        scores.push_back(r.score);
        accs.push_back(r.accuracy);
    }
    return pearson_xy(scores, accs);
}

double selection_accuracy(std::span<const SelectionGroup> groups) {
    if (groups.empty()) throw InputError("selection_accuracy: no groups");
    std::size_t hits = 0;
    for (const auto& g : groups) {
        if (g.sources.size() < 2) {
            throw InputError("selection_accuracy: group '" + g.target_id +
                             "' needs at least 2 sources");
        }
        const SourceCandidate* by_score = &g.sources.front();
        const SourceCandidate* by_acc = &g.sources.front();
        for (const auto& s : g.sources) {
            if (s.score > by_score->score ||
                (s.score == by_score->score && s.source_id < by_score->source_id)) {
                by_score = &s;
            }
            if (s.accuracy > by_acc->accuracy ||
                (s.accuracy == by_acc->accuracy && s.source_id < by_acc->source_id)) {
                by_acc = &s;
            }
        }
        if (by_score->source_id == by_acc->source_id) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(groups.size());
}

std::vector<double> fusion_weights(std::span<const double> scores, double temperature) {
    if (scores.empty()) throw InputError("fusion_weights: need at least one score");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InputError("fusion_weights: temperature must be positive");
    }
    double mx = scores[0];
    for (const double s : scores) {
        if (!std::isfinite(s)) throw InputError("fusion_weights: non-finite score");
        mx = std::max(mx, s);
    }
    std::vector<double> w(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        w[i] = std::exp((scores[i] - mx) / temperature);
        total += w[i];
    }
    for (auto& v : w) v /= total;
    return w;
}

bool ExperimentReport::all_ok() const {
    for (const auto& [name, outcome] : correlations) {
        if (outcome.error) return false;
    }
    return true;
}

namespace {

nlohmann::ordered_json model_to_json(const OtceModel& m) {
    nlohmann::ordered_json j;
    j["lambda1"] = m.lambda1;
    j["lambda2"] = m.lambda2;
    j["b"] = m.b;
    if (m.stats) {
        j["mean_wd"] = m.stats->mean_wd;
        j["std_wd"] = m.stats->std_wd;
        j["mean_wt"] = m.stats->mean_wt;
        j["std_wt"] = m.stats->std_wt;
    } else {
        j["mean_wd"] = nullptr;
        j["std_wd"] = nullptr;
        j["mean_wt"] = nullptr;
        j["std_wt"] = nullptr;
    }
    j["degenerate_wd"] = m.degenerate_wd;
    j["degenerate_wt"] = m.degenerate_wt;
    j["n_auxiliary"] = m.n_auxiliary;
    if (m.r2_train) {
        j["r2_train"] = *m.r2_train;
    } else {
        j["r2_train"] = nullptr;
    }
    return j;
}

}  // namespace

nlohmann::ordered_json ExperimentReport::to_json() const {
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["seed"] = seed;
    doc["aux_fraction"] = aux_fraction;
    doc["epsilon"] = epsilon;
    doc["n_pairs"] = pair_metrics.size();
    doc["aux_ids"] = aux_ids;
    doc["test_ids"] = test_ids;
    doc["split_disjoint"] = split_disjoint;
    doc["model"] = model_to_json(model);
    doc["correlations"] = nlohmann::ordered_json::object();
    for (const auto& [name, outcome] : correlations) {
        nlohmann::ordered_json o;
        if (outcome.pearson_r) {
            o["pearson_r"] = *outcome.pearson_r;
        } else {
            o["pearson_r"] = nullptr;
        }
        if (outcome.error) o["error"] = *outcome.error;
        doc["correlations"][name] = std::move(o);
    }
    doc["pairs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < pair_metrics.size(); ++i) {
        const auto& m = pair_metrics[i];
        nlohmann::ordered_json p;
        p["pair_id"] = m.pair_id;
        p["w_d"] = m.w_d;
        p["w_t"] = m.w_t;
        p["epsilon"] = m.epsilon;
        p["n_source"] = m.n_source;
        p["n_target"] = m.n_target;
        p["accuracy"] = accuracies[i];
        doc["pairs"].push_back(std::move(p));
    }
    return doc;
}

namespace {

const std::set<std::string> kKnownMetrics = {"otce", "otnce", "leep", "nce",
                                             "hscore", "wd", "wt"};

}  // namespace

ExperimentReport run_experiment(const Manifest& manifest, const ExperimentConfig& config) {
    if (config.aux_fraction < 0.0 || config.aux_fraction >= 1.0) {
        throw InputError("run_experiment: aux_fraction must lie in [0,1)");
    }
    for (const auto& name : config.metric_set) {
        if (!kKnownMetrics.count(name)) {
            throw InputError("run_experiment: unknown metric '" + name + "'");
        }
    }
    const std::size_t k = manifest.entries.size();
    if (k < 2) throw InputError("run_experiment: need at least 2 manifest entries");
    for (const auto& e : manifest.entries) {
        if (!e.transfer_accuracy) {
            throw InputError("run_experiment: entry '" + e.pair_id +
                             "' has no transfer accuracy (no ground truth)");
        }
    }

    ExperimentReport report;
    report.seed = config.seed;
    report.aux_fraction = config.aux_fraction;
    report.epsilon = config.metrics_config.sinkhorn.epsilon;

    // Pair metrics in manifest order; loaded pairs kept only as long as
    // needed, target datasets retained for feature-based baselines.
    std::vector<Dataset> targets;
    targets.reserve(k);
    for (const auto& entry : manifest.entries) {
        TaskPair pair = load_task_pair(entry);
        report.pair_metrics.push_back(compute_pair_metrics(pair, config.metrics_config));
        report.accuracies.push_back(*entry.transfer_accuracy);
        targets.push_back(std::move(pair.target));
    }

    // Seeded auxiliary/test split: Fisher-Yates over entry indices.
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    Rng rng(config.seed);
    for (std::size_t i = k; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(order[i - 1], order[j]);
    }
    const auto n_aux =
        static_cast<std::size_t>(config.aux_fraction * static_cast<double>(k));
    if (config.aux_fraction > 0.0 && n_aux < 3) {
        throw InputError("run_experiment: too few entries for the split (" +
                         std::to_string(n_aux) + " auxiliary, need >= 3)");
    }
    if (k - n_aux < 2) {
        throw InputError("run_experiment: too few test entries after the split");
    }

    std::set<std::size_t> aux_set(order.begin(), order.begin() + n_aux);
    for (std::size_t i = 0; i < n_aux; ++i) {
        report.aux_ids.push_back(manifest.entries[order[i]].pair_id);
    }
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < k; ++i) {
        if (!aux_set.count(i)) {
            test_idx.push_back(i);
            report.test_ids.push_back(manifest.entries[i].pair_id);
        }
    }
    {
        std::set<std::string> a(report.aux_ids.begin(), report.aux_ids.end());
        std::set<std::string> t(report.test_ids.begin(), report.test_ids.end());
        std::vector<std::string> overlap;
        std::set_intersection(a.begin(), a.end(), t.begin(), t.end(),
                              std::back_inserter(overlap));
        report.split_disjoint = overlap.empty();
        if (!report.split_disjoint) {
            throw ComputeError("run_experiment: auxiliary pairs leaked into the test set");
        }
    }

    // Model: fitted on the auxiliary split, or the pre-defined coefficients
    // standardized over the batch being scored when aux_fraction is 0.
    std::vector<TaskPairMetrics> test_metrics;
    std::vector<double> test_accs;
    for (const auto i : test_idx) {
        test_metrics.push_back(report.pair_metrics[i]);
        test_accs.push_back(report.accuracies[i]);
    }
    if (n_aux > 0) {
        std::vector<AuxiliaryRecord> aux;
        for (const auto i : aux_set) {
            aux.push_back(AuxiliaryRecord{report.pair_metrics[i].pair_id,
                                          report.pair_metrics[i].w_d,
                                          report.pair_metrics[i].w_t,
                                          report.accuracies[i]});
        }
        report.model = fit_otce(std::move(aux), config.fit);
        if (config.standardize_with_test) {
            report.model.stats = batch_stats(report.pair_metrics);
        }
    } else {
        report.model = default_model();
        report.model.stats = batch_stats(test_metrics);
    }

    for (const auto& name : config.metric_set) {
        MetricOutcome outcome;
        try {
            std::vector<double> scores;
            scores.reserve(test_idx.size());
            if (name == "otce") {
                for (const auto& m : test_metrics) {
                    scores.push_back(otce_score(m, report.model));
                }
            } else if (name == "otnce") {
                for (const auto& m : test_metrics) scores.push_back(ot_nce(m));
            } else if (name == "wd") {
                for (const auto& m : test_metrics) scores.push_back(m.w_d);
            } else if (name == "wt") {
                for (const auto& m : test_metrics) scores.push_back(m.w_t);
            } else if (name == "hscore") {
                for (const auto i : test_idx) {
                    scores.push_back(h_score(targets[i].features, targets[i].labels));
                }
            } else {  // leep / nce need prediction matrices
                for (const auto i : test_idx) {
                    const auto& entry = manifest.entries[i];
                    if (!entry.prediction_path) {
                        throw InputError("entry '" + entry.pair_id +
                                         "' has no prediction matrix, required for " +
                                         name);
                    }
                    const PredictionMatrix preds = load_predictions(*entry.prediction_path);
                    scores.push_back(name == "leep"
                                         ? leep(preds, targets[i].labels)
                                         : nce_dummy(preds, targets[i].labels));
                }
            }
            outcome.pearson_r = pearson_xy(scores, test_accs);
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
        report.correlations[name] = std::move(outcome);
    }
    return report;
}

}  // namespace otce
