#pragma once

#include "otce/dataset.hpp"

#include <filesystem>
#include <span>

namespace otce {

/// Source-model softmax outputs on target inputs, n_t x |Y_s|. Supplied
/// externally; this library never runs the source network.
struct PredictionMatrix {
    Matrix probs;
};

/// Entries in [0,1], every row summing to 1 within 1e-6.
void validate_predictions(const PredictionMatrix& preds);

// "OTPM" matrix files.
PredictionMatrix load_predictions(const std::filesystem::path& path);
void save_predictions(const PredictionMatrix& preds, const std::filesystem::path& path);

/// Average log-likelihood of the expected empirical predictor. <= 0,
/// higher is better.
double leep(const PredictionMatrix& preds, std::span<const std::uint32_t> target_labels);

/// Negative conditional entropy of target labels given argmax dummy labels
/// (ties toward the lowest class index). <= 0, higher is better.
double nce_dummy(const PredictionMatrix& preds,
                 std::span<const std::uint32_t> target_labels);

/// trace(pinv(cov(features)) * cov(class-conditional means)). >= 0. Needs at
/// least two classes present among the labels.
double h_score(const Matrix& target_features,
               std::span<const std::uint32_t> target_labels);

}  // namespace otce
