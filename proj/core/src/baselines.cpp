#include "otce/baselines.hpp"

#include "otce/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace otce {

void validate_predictions(const PredictionMatrix& preds) {
    if (preds.probs.rows() < 1 || preds.probs.cols() < 1) {
        throw InputError("prediction matrix must be non-empty");
    }
    if (!preds.probs.allFinite() || (preds.probs.array() < 0.0).any() ||
        (preds.probs.array() > 1.0).any()) {
        throw InputError("prediction entries must lie in [0,1]");
    }
    for (Eigen::Index i = 0; i < preds.probs.rows(); ++i) {
        const double s = preds.probs.row(i).sum();
        if (std::abs(s - 1.0) > 1e-6) {
            throw InputError("prediction row " + std::to_string(i) +
                             " sums to " + std::to_string(s) + ", expected 1");
        }
    }
}

PredictionMatrix load_predictions(const std::filesystem::path& path) {
    PredictionMatrix preds{load_matrix(path, "OTPM")};
    validate_predictions(preds);
    return preds;
}

void save_predictions(const PredictionMatrix& preds, const std::filesystem::path& path) {
    validate_predictions(preds);
    save_matrix(preds.probs, path, "OTPM");
}

namespace {

std::uint32_t max_label_plus_one(std::span<const std::uint32_t> labels) {
    return 1 + *std::max_element(labels.begin(), labels.end());
}

void check_rows_match(const Matrix& m, std::span<const std::uint32_t> labels,
                      const char* what) {
    if (static_cast<std::size_t>(m.rows()) != labels.size()) {
        throw InputError(std::string(what) + ": row count " +
                         std::to_string(m.rows()) + " does not match " +
                         std::to_string(labels.size()) + " labels");
    }
}

}  // namespace

double leep(const PredictionMatrix& preds, std::span<const std::uint32_t> target_labels) {
    validate_predictions(preds);
    check_rows_match(preds.probs, target_labels, "leep");
    const Eigen::Index n = preds.probs.rows();
    const Eigen::Index ks = preds.probs.cols();
    const std::uint32_t kt = max_label_plus_one(target_labels);

    // joint(t, s) = (1/n) sum_{i: y_i = t} probs[i][s]
    Matrix joint = Matrix::Zero(kt, ks);
    for (Eigen::Index i = 0; i < n; ++i) {
        joint.row(target_labels[static_cast<std::size_t>(i)]) += preds.probs.row(i);
    }
    joint /= static_cast<double>(n);
    const Vector source_marginal = joint.colwise().sum();

    // conditional(t, s) = joint(t, s) / marginal(s) where the marginal has mass
    Matrix conditional = Matrix::Zero(kt, ks);
    for (Eigen::Index s = 0; s < ks; ++s) {
        if (source_marginal(s) > 0.0) {
            conditional.col(s) = joint.col(s) / source_marginal(s);
        }
    }

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto t = target_labels[static_cast<std::size_t>(i)];
        const double p = conditional.row(t).dot(preds.probs.row(i));
        if (p <= 0.0) {
            throw ComputeError("leep: zero expected-predictor probability");
        }
        total += std::log(p);
    }
    return total / static_cast<double>(n);
}

double nce_dummy(const PredictionMatrix& preds,
                 std::span<const std::uint32_t> target_labels) {
    validate_predictions(preds);
    check_rows_match(preds.probs, target_labels, "nce_dummy");
    const Eigen::Index n = preds.probs.rows();
    const Eigen::Index ks = preds.probs.cols();
    const std::uint32_t kt = max_label_plus_one(target_labels);

    Matrix joint = Matrix::Zero(ks, kt);  // (dummy z, target y)
    const double w = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // argmax with ties toward the lowest class index
        Eigen::Index z = 0;
        for (Eigen::Index s = 1; s < ks; ++s) {
            if (preds.probs(i, s) > preds.probs(i, z)) z = s;
        }
        joint(z, target_labels[static_cast<std::size_t>(i)]) += w;
    }

    double h = 0.0;
    for (Eigen::Index z = 0; z < ks; ++z) {
        const double mz = joint.row(z).sum();
        if (mz <= 0.0) continue;
        for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(kt); ++t) {
            const double p = joint(z, t);
            if (p <= 0.0) continue;
            h -= p * std::log(p / mz);
        }
    }
    return -h;
}

double h_score(const Matrix& target_features,
               std::span<const std::uint32_t> target_labels) {
    check_rows_match(target_features, target_labels, "h_score");
    if (!target_features.allFinite()) {
        throw InputError("h_score: features contain NaN or infinite entries");
    }
    const Eigen::Index n = target_features.rows();
    const Eigen::Index d = target_features.cols();
    const std::uint32_t k = max_label_plus_one(target_labels);

    std::vector<Eigen::Index> counts(k, 0);
    for (const auto l : target_labels) ++counts[l];
    const auto present =
        std::count_if(counts.begin(), counts.end(), [](Eigen::Index c) { return c > 0; });
    if (present < 2) {
        throw InputError("h_score: needs at least 2 classes present, got " +
                         std::to_string(present));
    }

    const Eigen::RowVectorXd mean = target_features.colwise().mean();
    const Matrix centered = target_features.rowwise() - mean;
    // 1/n normalizer in both covariances so their ratio is normalizer-free
    const Matrix cov_f = centered.transpose() * centered / static_cast<double>(n);

    Matrix class_means = Matrix::Zero(k, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        class_means.row(target_labels[static_cast<std::size_t>(i)]) +=
            target_features.row(i);
    }
    Matrix cov_g = Matrix::Zero(d, d);
    for (std::uint32_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        const Eigen::RowVectorXd diff =
            class_means.row(c) / static_cast<double>(counts[c]) - mean;
        cov_g += (static_cast<double>(counts[c]) / static_cast<double>(n)) *
                 (diff.transpose() * diff);
    }

    // Moore-Penrose pseudo-inverse of the symmetric PSD cov_f; eigenvalues
    // below 1e-10 * largest are truncated.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov_f);
    if (eig.info() != Eigen::Success) {
        throw ComputeError("h_score: eigendecomposition failed");
    }
    const Vector& evals = eig.eigenvalues();
    const double cutoff = 1e-10 * std::max(evals.cwiseAbs().maxCoeff(), 0.0);
    Vector inv = Vector::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (evals(i) > cutoff && evals(i) > 0.0) inv(i) = 1.0 / evals(i);
    }
    const Matrix pinv =
        eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    return (pinv * cov_g).trace();
}

}  // namespace otce
