#pragma once

#include "otce/dataset.hpp"
#include "otce/metrics.hpp"

#include <cstdint>
#include <filesystem>

namespace otce {

/// Controls for one synthetic cross-domain cross-task pair: Gaussian
/// clusters on a seeded lattice, a seeded translation between domains, and a
/// label-correspondence map corrupted with label noise.
struct SynthConfig {
    std::uint64_t seed = 0;
    int n_source = 300;
    int n_target = 300;
    int d = 8;
    int num_source_classes = 4;
    int num_target_classes = 4;
    double domain_shift = 0.0;   // translation magnitude between domains
    double label_noise = 0.0;    // probability a target label is resampled
    double cluster_spread = 1.0; // isotropic cluster std
};

void validate_synth_config(const SynthConfig& config);

/// Deterministic per seed; features are float32-representable so binary
/// round-trips reproduce them exactly.
TaskPair generate_pair(const SynthConfig& config);

// Planted accuracy model over suite-standardized differences:
//   accuracy = clamp(b0 + b1 * wd_hat + b2 * wt_hat + noise, 0, 1)
inline constexpr double kPlantedIntercept = 0.7;
inline constexpr double kPlantedWdCoef = -0.15;
inline constexpr double kPlantedWtCoef = -0.25;

struct SuiteConfig {
    SynthConfig base;
    int k = 50;  // number of pairs, >= 3
    double shift_lo = 0.2, shift_hi = 2.0;
    double noise_lo = 0.0, noise_hi = 0.6;
    double accuracy_noise_sigma = 0.02;
    PairMetricsConfig metrics;  // used when planting accuracies
};

/// Writes one shared source dataset, k target datasets and a manifest with
/// planted transfer accuracies under out_dir; returns the manifest with
/// resolved paths. Pair i reproduces generate_pair with the same base seed
/// and target stream i.
Manifest generate_suite(const SuiteConfig& config, const std::filesystem::path& out_dir);

/// Keeps at most max_per_class points of every class (seeded choice,
/// original order preserved).
Dataset subsample_per_class(const Dataset& ds, std::uint32_t max_per_class,
                            std::uint64_t seed);

}  // namespace otce
