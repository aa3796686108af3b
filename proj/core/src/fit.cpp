#include "otce/fit.hpp"

#include "otce/error.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace otce {

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    const auto n = values.size();
    if (n == 0) throw InputError("mean_std: empty sample");
    double sum = 0.0;
    for (const double v : values) sum += v;
    out.mean = sum / static_cast<double>(n);
    if (n < 2) return out;
    double ss = 0.0;
    for (const double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(n - 1));
    return out;
}

void validate_model(const OtceModel& model) {
    for (const double v : {model.lambda1, model.lambda2, model.b}) {
        if (!std::isfinite(v)) throw InputError("model: non-finite coefficient");
    }
    if (model.n_auxiliary < 0) throw InputError("model: n_auxiliary must be >= 0");
    if (model.stats) {
        const auto& s = *model.stats;
        for (const double v : {s.mean_wd, s.std_wd, s.mean_wt, s.std_wt}) {
            if (!std::isfinite(v)) throw InputError("model: non-finite statistic");
        }
        if (s.std_wd <= 0.0 && !model.degenerate_wd) {
            throw InputError("model: std_wd must be positive unless flagged degenerate");
        }
        if (s.std_wt <= 0.0 && !model.degenerate_wt) {
            throw InputError("model: std_wt must be positive unless flagged degenerate");
        }
    }
    if (model.degenerate_wd && model.lambda1 != 0.0) {
        throw InputError("model: degenerate w_d requires lambda1 = 0");
    }
    if (model.degenerate_wt && model.lambda2 != 0.0) {
        throw InputError("model: degenerate w_t requires lambda2 = 0");
    }
}

OtceModel fit_otce(std::vector<AuxiliaryRecord> records, const FitOptions& options) {
    if (records.size() < 3) {
        throw InputError("fit_otce: too few records (" + std::to_string(records.size()) +
                         "), need at least 3");
    }
    for (const auto& r : records) {
        if (!std::isfinite(r.w_d) || !std::isfinite(r.w_t)) {
            throw InputError("fit_otce: non-finite metric in record '" + r.pair_id + "'");
        }
        if (!std::isfinite(r.transfer_accuracy) || r.transfer_accuracy < 0.0 ||
            r.transfer_accuracy > 1.0) {
            throw InputError("fit_otce: transfer_accuracy outside [0,1] in record '" +
                             r.pair_id + "'");
        }
    }
    // Order-stable accumulation regardless of caller ordering.
    std::sort(records.begin(), records.end(),
              [](const AuxiliaryRecord& x, const AuxiliaryRecord& y) {
                  return x.pair_id < y.pair_id;
              });
    const auto n = static_cast<Eigen::Index>(records.size());

    std::vector<double> wd(records.size()), wt(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        wd[i] = records[i].w_d;
        wt[i] = records[i].w_t;
    }
    const MeanStd sd = mean_std(wd);
    const MeanStd st = mean_std(wt);

    OtceModel model;
    model.stats = OtceModel::Stats{sd.mean, sd.std, st.mean, st.std};
    model.n_auxiliary = static_cast<int>(records.size());
    model.degenerate_wd = sd.std <= options.degenerate_std_tol * (1.0 + std::abs(sd.mean));
    model.degenerate_wt = st.std <= options.degenerate_std_tol * (1.0 + std::abs(st.mean));

    const bool use_wd = !model.degenerate_wd;
    const bool use_wt = !model.degenerate_wt;
    const Eigen::Index cols = (use_wd ? 1 : 0) + (use_wt ? 1 : 0) + 1;

    Eigen::MatrixXd design(n, cols);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index c = 0;
        if (use_wd) design(i, c++) = (wd[static_cast<std::size_t>(i)] - sd.mean) / sd.std;
        if (use_wt) design(i, c++) = (wt[static_cast<std::size_t>(i)] - st.mean) / st.std;
        design(i, c) = 1.0;
        target(i) = records[static_cast<std::size_t>(i)].transfer_accuracy;
    }

    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
    Eigen::Index c = 0;
    model.lambda1 = use_wd ? coef(c++) : 0.0;
    model.lambda2 = use_wt ? coef(c++) : 0.0;
    model.b = coef(c);

    const double rss = (design * coef - target).squaredNorm();
    const double tss = (target.array() - target.mean()).matrix().squaredNorm();
    model.r2_train = tss > 0.0 ? 1.0 - rss / tss : 1.0;

    validate_model(model);
    return model;
}

OtceModel default_model() {
    OtceModel model;
    model.lambda1 = -0.5;
    model.lambda2 = -0.5;
    model.b = 0.0;
    model.n_auxiliary = 0;
    return model;
}

namespace {

using nlohmann::json;

double require_number(const json& doc, const char* key,
                      const std::filesystem::path& path) {
    if (!doc.contains(key)) {
        throw InputError(path.string() + ": model file missing field '" +
                         std::string(key) + "'");
    }
    if (!doc[key].is_number()) {
        throw InputError(path.string() + ": model field '" + std::string(key) +
                         "' must be a number");
    }
    return doc[key].get<double>();
}

}  // namespace

void save_model(const OtceModel& model, const std::filesystem::path& path) {
    validate_model(model);
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["lambda1"] = model.lambda1;
    doc["lambda2"] = model.lambda2;
    doc["b"] = model.b;
    if (model.stats) {
        doc["mean_wd"] = model.stats->mean_wd;
        doc["std_wd"] = model.stats->std_wd;
        doc["mean_wt"] = model.stats->mean_wt;
        doc["std_wt"] = model.stats->std_wt;
    } else {
        doc["mean_wd"] = nullptr;
        doc["std_wd"] = nullptr;
        doc["mean_wt"] = nullptr;
        doc["std_wt"] = nullptr;
    }
    doc["degenerate_wd"] = model.degenerate_wd;
    doc["degenerate_wt"] = model.degenerate_wt;
    doc["n_auxiliary"] = model.n_auxiliary;
    if (model.r2_train) {
        doc["r2_train"] = *model.r2_train;
    } else {
        doc["r2_train"] = nullptr;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError(path.string() + ": cannot open file for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw InputError(path.string() + ": write failed");
}

OtceModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError(path.string() + ": cannot open file");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    if (!doc.contains("version")) {
        throw InputError(path.string() + ": model file missing field 'version'");
    }
    if (doc["version"].get<int>() != 1) {
        throw InputError(path.string() + ": unsupported model version");
    }

    OtceModel model;
    model.lambda1 = require_number(doc, "lambda1", path);
    model.lambda2 = require_number(doc, "lambda2", path);
    model.b = require_number(doc, "b", path);

    for (const char* key : {"mean_wd", "std_wd", "mean_wt", "std_wt",
                            "degenerate_wd", "degenerate_wt", "n_auxiliary",
                            "r2_train"}) {
        if (!doc.contains(key)) {
            throw InputError(path.string() + ": model file missing field '" +
                             std::string(key) + "'");
        }
    }
    const bool has_stats = !doc["mean_wd"].is_null();
    if (has_stats) {
        model.stats = OtceModel::Stats{
            require_number(doc, "mean_wd", path), require_number(doc, "std_wd", path),
            require_number(doc, "mean_wt", path), require_number(doc, "std_wt", path)};
    }
    model.degenerate_wd = doc["degenerate_wd"].get<bool>();
    model.degenerate_wt = doc["degenerate_wt"].get<bool>();
    model.n_auxiliary = doc["n_auxiliary"].get<int>();
    if (!doc["r2_train"].is_null()) model.r2_train = doc["r2_train"].get<double>();

    validate_model(model);
    return model;
}

}  // namespace otce
