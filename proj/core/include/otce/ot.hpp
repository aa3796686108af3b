#pragma once

#include "otce/dataset.hpp"

#include <cstdint>

namespace otce {

/// Pairwise squared Euclidean distances, m x n.
struct CostMatrix {
    Matrix values;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

/// Throws InputError unless all entries are finite and nonnegative.
void validate_cost_matrix(const CostMatrix& cost);

/// cost[i][j] = sum_k (source[i][k] - target[j][k])^2, computed term by term
/// so that cost_matrix(A, B) is bitwise the transpose of cost_matrix(B, A).
CostMatrix cost_matrix(const Matrix& source_features, const Matrix& target_features,
                       int threads = 0);

/// Strictly positive marginal weights summing to 1.
struct MarginalWeights {
    Vector a;  // length m
    Vector b;  // length n

    static MarginalWeights uniform(Eigen::Index m, Eigen::Index n);
};

void validate_marginals(const MarginalWeights& weights);

struct SinkhornConfig {
    double epsilon = 0.1;
    int max_iters = 1000;
    double tol = 1e-9;  // L1 marginal error
    int threads = 0;    // 0 = hardware concurrency
};

/// Entropic-OT transport plan with its achieved feasibility errors.
struct Coupling {
    Matrix plan;  // m x n, nonnegative, total mass ~1
    double row_marginal_error = 0.0;
    double col_marginal_error = 0.0;
    int iterations_used = 0;
    double epsilon = 0.0;

    bool converged(double tol) const {
        return row_marginal_error <= tol && col_marginal_error <= tol;
    }
};

/// Log-domain Sinkhorn. Always returns a coupling; when tol is not reached in
/// max_iters the achieved errors are reported in the result.
Coupling sinkhorn(const CostMatrix& cost, const MarginalWeights& weights,
                  const SinkhornConfig& config = {});

double transport_cost(const CostMatrix& cost, const Matrix& plan);

struct ExactPlan {
    Matrix plan;
    double cost_value = 0.0;
};

/// Unregularized optimal transport solved exactly by the transportation
/// simplex. Desk-scale verification oracle: requires m*n <= 400.
ExactPlan exact_ot(const CostMatrix& cost, const MarginalWeights& weights);

}  // namespace otce
