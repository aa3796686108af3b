#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace otce {

/// Mean and sample standard deviation (n-1 normalizer; 0 when n < 2).
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(std::span<const double> values);

/// Linear transferability model: score = lambda1 * wd_hat + lambda2 * wt_hat + b
/// over standardized differences. The standardization statistics that make
/// the coefficients applicable travel with the model; the pre-defined model
/// (n_auxiliary = 0) carries none and is standardized against the batch
/// being scored.
struct OtceModel {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double b = 0.0;

    struct Stats {
        double mean_wd = 0.0;
        double std_wd = 0.0;
        double mean_wt = 0.0;
        double std_wt = 0.0;
    };
    std::optional<Stats> stats;

    // A degenerate regressor (no variance over the auxiliary set) forces the
    // corresponding lambda to 0.
    bool degenerate_wd = false;
    bool degenerate_wt = false;

    int n_auxiliary = 0;
    std::optional<double> r2_train;
};

void validate_model(const OtceModel& model);

struct AuxiliaryRecord {
    std::string pair_id;
    double w_d = 0.0;
    double w_t = 0.0;
    double transfer_accuracy = 0.0;  // in [0,1]
};

struct FitOptions {
    // Regressor counts as degenerate when its std falls below
    // tol * (1 + |mean|).
    double degenerate_std_tol = 1e-9;
};

/// Ordinary least squares on standardized (w_d, w_t) against transfer
/// accuracy. Records are sorted by pair_id before accumulation so the result
/// does not depend on input order. Needs at least 3 records.
OtceModel fit_otce(std::vector<AuxiliaryRecord> records, const FitOptions& options = {});

/// lambda1 = lambda2 = -0.5, b = 0, no standardization statistics.
OtceModel default_model();

// Versioned structured-text round-trip, exact on all fields.
void save_model(const OtceModel& model, const std::filesystem::path& path);
OtceModel load_model(const std::filesystem::path& path);

}  // namespace otce
