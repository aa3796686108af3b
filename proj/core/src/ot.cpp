#include "otce/ot.hpp"

#include "otce/error.hpp"
#include "otce/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace otce {

void validate_cost_matrix(const CostMatrix& cost) {
    if (cost.rows() < 1 || cost.cols() < 1) {
        throw InputError("cost matrix must have positive dimensions");
    }
    if (!cost.values.allFinite() || (cost.values.array() < 0.0).any()) {
        throw InputError("cost matrix entries must be finite and nonnegative");
    }
}

CostMatrix cost_matrix(const Matrix& source_features, const Matrix& target_features,
                       int threads) {
    if (source_features.cols() != target_features.cols()) {
        throw InputError("cost_matrix: feature dimension mismatch (" +
                         std::to_string(source_features.cols()) + " vs " +
                         std::to_string(target_features.cols()) + ")");
    }
    if (source_features.rows() < 1 || target_features.rows() < 1) {
        throw InputError("cost_matrix: empty point set");
    }
    const Eigen::Index m = source_features.rows();
    const Eigen::Index n = target_features.rows();

    // Column-contiguous copies; (u - v).squaredNorm() is evaluated by the
    // same kernel on both orientations, which keeps
    // cost_matrix(A,B) == cost_matrix(B,A)^T bitwise.
    const Matrix src_t = source_features.transpose();
    const Matrix tgt_t = target_features.transpose();

    CostMatrix cost;
    cost.values.resize(m, n);
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) {
            const auto v = tgt_t.col(static_cast<Eigen::Index>(j));
            for (Eigen::Index i = 0; i < m; ++i) {
                cost.values(i, static_cast<Eigen::Index>(j)) =
                    (src_t.col(i) - v).squaredNorm();
            }
        }
    });
    return cost;
}

MarginalWeights MarginalWeights::uniform(Eigen::Index m, Eigen::Index n) {
    MarginalWeights w;
    w.a = Vector::Constant(m, 1.0 / static_cast<double>(m));
    w.b = Vector::Constant(n, 1.0 / static_cast<double>(n));
    return w;
}

void validate_marginals(const MarginalWeights& weights) {
    if (weights.a.size() < 1 || weights.b.size() < 1) {
        throw InputError("marginal weights must be non-empty");
    }
    if (!weights.a.allFinite() || !weights.b.allFinite() ||
        (weights.a.array() <= 0.0).any() || (weights.b.array() <= 0.0).any()) {
        throw InputError("marginal weights must be strictly positive");
    }
    if (std::abs(weights.a.sum() - 1.0) > 1e-12 || std::abs(weights.b.sum() - 1.0) > 1e-12) {
        throw InputError("marginal weights must sum to 1 within 1e-12");
    }
}

namespace {

// log(sum_k exp(x_k)) with max subtraction.
double log_sum_exp(const Eigen::ArrayXd& x) {
    const double m = x.maxCoeff();
    return m + std::log((x - m).exp().sum());
}

struct PlanErrors {
    double row = 0.0;
    double col = 0.0;
};

PlanErrors measure_errors(const Matrix& plan, const MarginalWeights& weights) {
    PlanErrors e;
    e.row = (plan.rowwise().sum() - weights.a).cwiseAbs().sum();
    e.col = (plan.colwise().sum().transpose() - weights.b).cwiseAbs().sum();
    return e;
}

}  // namespace

Coupling sinkhorn(const CostMatrix& cost, const MarginalWeights& weights,
                  const SinkhornConfig& config) {
    validate_cost_matrix(cost);
    validate_marginals(weights);
    if (!(config.epsilon > 0.0) || !std::isfinite(config.epsilon)) {
        throw InputError("sinkhorn: epsilon must be positive and finite");
    }
    if (config.max_iters < 1) throw InputError("sinkhorn: max_iters must be >= 1");
    if (!(config.tol > 0.0)) throw InputError("sinkhorn: tol must be positive");
    const Eigen::Index m = cost.rows();
    const Eigen::Index n = cost.cols();
    if (weights.a.size() != m || weights.b.size() != n) {
        throw InputError("sinkhorn: marginal sizes do not match the cost matrix");
    }

    const double eps = config.epsilon;
    const Matrix& c_cols = cost.values;          // columns contiguous over i
    const Matrix c_rows = cost.values.transpose();  // columns contiguous over j

    const Vector eps_log_a = eps * weights.a.array().log();
    const Vector eps_log_b = eps * weights.b.array().log();

    Vector f = Vector::Zero(m);
    Vector g = Vector::Zero(n);

    Coupling result;
    result.epsilon = eps;
    result.plan.resize(m, n);

    constexpr int kCheckInterval = 10;
    const int threads = config.threads;

    auto materialize = [&]() {
        parallel_for(static_cast<std::size_t>(n), threads,
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t j = lo; j < hi; ++j) {
                             const auto jj = static_cast<Eigen::Index>(j);
                             result.plan.col(jj) =
                                 ((f.array() + g(jj) - c_cols.col(jj).array()) / eps).exp();
                         }
                     });
    };

    int iter = 0;
    PlanErrors errors;
    while (iter < config.max_iters) {
        ++iter;
        parallel_for(static_cast<std::size_t>(m), threads,
                     [&](std::size_t lo, std::size_t hi) {
                         Eigen::ArrayXd tmp(n);
                         for (std::size_t i = lo; i < hi; ++i) {
                             const auto ii = static_cast<Eigen::Index>(i);
                             tmp = (g.array() - c_rows.col(ii).array()) / eps;
                             f(ii) = eps_log_a(ii) - eps * log_sum_exp(tmp);
                         }
                     });
        parallel_for(static_cast<std::size_t>(n), threads,
                     [&](std::size_t lo, std::size_t hi) {
                         Eigen::ArrayXd tmp(m);
                         for (std::size_t j = lo; j < hi; ++j) {
                             const auto jj = static_cast<Eigen::Index>(j);
                             tmp = (f.array() - c_cols.col(jj).array()) / eps;
                             g(jj) = eps_log_b(jj) - eps * log_sum_exp(tmp);
                         }
                     });

        if (iter % kCheckInterval == 0 || iter == config.max_iters) {
            if (!f.allFinite() || !g.allFinite()) {
                throw ComputeError(
                    "sinkhorn: internal error, non-finite dual potentials");
            }
            materialize();
            errors = measure_errors(result.plan, weights);
            if (errors.row <= config.tol && errors.col <= config.tol) break;
        }
    }

    result.iterations_used = iter;
    result.row_marginal_error = errors.row;
    result.col_marginal_error = errors.col;
    return result;
}

double transport_cost(const CostMatrix& cost, const Matrix& plan) {
    if (cost.rows() != plan.rows() || cost.cols() != plan.cols()) {
        throw InputError("transport_cost: dimension mismatch");
    }
    return (cost.values.array() * plan.array()).sum();
}

namespace {

// Transportation simplex over the bipartite row/column node graph. Bland's
// rule on both the entering and leaving arc; finite even under degeneracy.
class TransportationSimplex {
public:
    TransportationSimplex(const Matrix& cost, const Vector& a, const Vector& b)
        : cost_(cost),
          m_(cost.rows()),
          n_(cost.cols()),
          flow_(Matrix::Zero(cost.rows(), cost.cols())),
          basic_(cost.rows(), std::vector<char>(cost.cols(), 0)),
          supply_(a),
          demand_(b) {}

    ExactPlan solve() {
        build_northwest_basis();
        const double enter_tol = 1e-12 * (1.0 + cost_.cwiseAbs().maxCoeff());
        const long max_pivots = 200000;
        for (long pivot = 0; pivot < max_pivots; ++pivot) {
            compute_duals();
            Eigen::Index ei = -1, ej = -1;
            if (!find_entering(enter_tol, ei, ej)) {
                return extract();
            }
            pivot_on(ei, ej);
        }
        throw ComputeError("exact_ot: simplex pivot limit exceeded");
    }

private:
    void build_northwest_basis() {
        Eigen::Index i = 0, j = 0;
        double ra = supply_(0), rb = demand_(0);
        while (true) {
            const double f = std::min(ra, rb);
            flow_(i, j) = f;
            basic_[i][j] = 1;
            if (i == m_ - 1 && j == n_ - 1) break;
            if (ra <= rb && i < m_ - 1) {
                rb -= f;
                ++i;
                ra = supply_(i);
            } else if (j < n_ - 1) {
                ra -= f;
                ++j;
                rb = demand_(j);
            } else {
                rb -= f;
                ++i;
                ra = supply_(i);
            }
        }
    }

    // Duals from the spanning tree: u[0] = 0, then u_i + v_j = C_ij on basic
    // cells. Iterative propagation; the basis stays connected across pivots.
    void compute_duals() {
        u_.assign(static_cast<std::size_t>(m_), 0.0);
        v_.assign(static_cast<std::size_t>(n_), 0.0);
        std::vector<char> u_set(static_cast<std::size_t>(m_), 0);
        std::vector<char> v_set(static_cast<std::size_t>(n_), 0);
        u_set[0] = 1;
        bool progress = true;
        while (progress) {
            progress = false;
            for (Eigen::Index i = 0; i < m_; ++i) {
                for (Eigen::Index j = 0; j < n_; ++j) {
                    if (!basic_[i][j]) continue;
                    if (u_set[i] && !v_set[j]) {
                        v_[j] = cost_(i, j) - u_[i];
                        v_set[j] = 1;
                        progress = true;
                    } else if (!u_set[i] && v_set[j]) {
                        u_[i] = cost_(i, j) - v_[j];
                        u_set[i] = 1;
                        progress = true;
                    }
                }
            }
        }
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (!u_set[i]) throw ComputeError("exact_ot: basis lost connectivity");
        }
        for (Eigen::Index j = 0; j < n_; ++j) {
            if (!v_set[j]) throw ComputeError("exact_ot: basis lost connectivity");
        }
    }

    bool find_entering(double tol, Eigen::Index& ei, Eigen::Index& ej) const {
        for (Eigen::Index i = 0; i < m_; ++i) {
            for (Eigen::Index j = 0; j < n_; ++j) {
                if (basic_[i][j]) continue;
                if (cost_(i, j) - u_[i] - v_[j] < -tol) {
                    ei = i;
                    ej = j;
                    return true;
                }
            }
        }
        return false;
    }

    // Unique tree path from row node ei to column node ej; the entering arc
    // closes it into a cycle with alternating +/- positions.
    bool find_path(Eigen::Index ei, Eigen::Index ej,
                   std::vector<std::pair<Eigen::Index, Eigen::Index>>& path) const {
        // Nodes: rows [0, m), columns [m, m+n). DFS over basic arcs.
        const Eigen::Index total = m_ + n_;
        std::vector<Eigen::Index> parent(static_cast<std::size_t>(total), -1);
        std::vector<char> seen(static_cast<std::size_t>(total), 0);
        std::vector<Eigen::Index> stack;
        stack.push_back(ei);
        seen[static_cast<std::size_t>(ei)] = 1;
        while (!stack.empty()) {
            const Eigen::Index node = stack.back();
            stack.pop_back();
            if (node == m_ + ej) break;
            if (node < m_) {
                for (Eigen::Index j = 0; j < n_; ++j) {
                    if (basic_[node][j] && !seen[static_cast<std::size_t>(m_ + j)]) {
                        seen[static_cast<std::size_t>(m_ + j)] = 1;
                        parent[static_cast<std::size_t>(m_ + j)] = node;
                        stack.push_back(m_ + j);
                    }
                }
            } else {
                const Eigen::Index j = node - m_;
                for (Eigen::Index i = 0; i < m_; ++i) {
                    if (basic_[i][j] && !seen[static_cast<std::size_t>(i)]) {
                        seen[static_cast<std::size_t>(i)] = 1;
                        parent[static_cast<std::size_t>(i)] = node;
                        stack.push_back(i);
                    }
                }
            }
        }
        if (!seen[static_cast<std::size_t>(m_ + ej)]) return false;
        // Walk back, collecting the arcs (row, col) on the path.
        Eigen::Index node = m_ + ej;
        while (node != ei) {
            const Eigen::Index par = parent[static_cast<std::size_t>(node)];
            if (node >= m_) {
                path.emplace_back(par, node - m_);
            } else {
                path.emplace_back(node, par - m_);
            }
            node = par;
        }
        std::reverse(path.begin(), path.end());
        return true;
    }

    void pivot_on(Eigen::Index ei, Eigen::Index ej) {
        std::vector<std::pair<Eigen::Index, Eigen::Index>> path;
        if (!find_path(ei, ej, path)) {
            throw ComputeError("exact_ot: no cycle for entering arc");
        }
        // Cycle: entering arc (+), then path arcs from ej back to ei. Path
        // arcs alternate; the one incident to the entering column comes first
        // and takes a minus.
        std::vector<std::pair<Eigen::Index, Eigen::Index>> minus, plus;
        bool positive = false;  // path is traversed from ei side; see below
        // path[0] starts at the ei row node, so positions alternate -, +, ...
        for (const auto& arc : path) {
            (positive ? plus : minus).push_back(arc);
            positive = !positive;
        }

        double theta = std::numeric_limits<double>::infinity();
        std::pair<Eigen::Index, Eigen::Index> leaving{-1, -1};
        for (const auto& arc : minus) {
            const double fl = flow_(arc.first, arc.second);
            if (fl < theta ||
                (fl == theta && (arc.first < leaving.first ||
                                 (arc.first == leaving.first && arc.second < leaving.second)))) {
                theta = fl;
                leaving = arc;
            }
        }

        flow_(ei, ej) += theta;
        basic_[ei][ej] = 1;
        for (const auto& arc : plus) flow_(arc.first, arc.second) += theta;
        for (const auto& arc : minus) flow_(arc.first, arc.second) -= theta;
        flow_(leaving.first, leaving.second) = 0.0;
        basic_[leaving.first][leaving.second] = 0;
    }

    ExactPlan extract() const {
        ExactPlan out;
        out.plan = flow_;
        for (Eigen::Index i = 0; i < m_; ++i) {
            for (Eigen::Index j = 0; j < n_; ++j) {
                if (out.plan(i, j) < 0.0) {
                    if (out.plan(i, j) < -1e-12) {
                        throw ComputeError("exact_ot: negative flow");
                    }
                    out.plan(i, j) = 0.0;
                }
            }
        }
        out.cost_value = (cost_.array() * out.plan.array()).sum();
        return out;
    }

    const Matrix& cost_;
    const Eigen::Index m_, n_;
    Matrix flow_;
    std::vector<std::vector<char>> basic_;
    Vector supply_, demand_;
    std::vector<double> u_, v_;
};

}  // namespace

ExactPlan exact_ot(const CostMatrix& cost, const MarginalWeights& weights) {
    validate_cost_matrix(cost);
    validate_marginals(weights);
    if (cost.rows() != weights.a.size() || cost.cols() != weights.b.size()) {
        throw InputError("exact_ot: marginal sizes do not match the cost matrix");
    }
    if (cost.rows() * cost.cols() > 400) {
        throw InputError("exact_ot: instance too large (m*n must be <= 400)");
    }
    TransportationSimplex simplex(cost.values, weights.a, weights.b);
    return simplex.solve();
}

}  // namespace otce
