// Test-only reference implementations, kept independent of the library paths
// they check.
#pragma once

#include "dpc/qp.hpp"
#include "dpc/types.hpp"

#include <random>

namespace dpc::testing {

// Naive triple-loop matrix multiply.
inline MatX matmul_loop(const MatX& a, const MatX& b) {
    MatX out = MatX::Zero(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j)
            for (int k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
    return out;
}

// Projected gradient on a box-constrained QP (ineq_matrix must be identity);
// runs to convergence, independent of the ADMM path.
inline VecX projected_gradient_box(const QpProblem& p, int max_iter = 2000000) {
    const int n = p.n();
    Eigen::SelfAdjointEigenSolver<MatX> es(p.hessian);
    const double lip = std::max(es.eigenvalues().maxCoeff(), 1e-12);
    const double step = 1.0 / lip;
    VecX x = VecX::Zero(n);
    for (int it = 0; it < max_iter; ++it) {
        VecX next = x - step * (p.hessian * x + p.linear_term);
        if (p.m() > 0) next = next.cwiseMax(p.ineq_lower).cwiseMin(p.ineq_upper);
        if ((next - x).lpNorm<Eigen::Infinity>() < 1e-13) return next;
        x = next;
    }
    return x;
}

// Random strictly feasible QP with PSD Hessian; rows are two-sided by default
// with a chance of dropping either bound.
inline QpProblem random_qp(std::mt19937_64& rng, int max_n = 12, int max_m = 24,
                           bool box_only = false) {
    std::uniform_int_distribution<int> ndist(1, max_n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int n = ndist(rng);
    const int m = box_only ? n : std::uniform_int_distribution<int>(0, max_m)(rng);

    MatX g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = gauss(rng);
    QpProblem p;
    p.hessian = g.transpose() * g + 1e-3 * MatX::Identity(n, n);
    p.linear_term = VecX::NullaryExpr(n, [&](int) { return gauss(rng); });
    if (box_only) {
        p.ineq_matrix = MatX::Identity(n, n);
    } else {
        p.ineq_matrix = MatX::NullaryExpr(m, n, [&](int, int) { return gauss(rng); });
    }
    VecX x0 = VecX::NullaryExpr(n, [&](int) { return gauss(rng); });
    VecX center = m > 0 ? VecX(p.ineq_matrix * x0) : VecX();
    p.ineq_lower.resize(m);
    p.ineq_upper.resize(m);
    const double inf = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        p.ineq_lower(i) = center(i) - (0.1 + std::abs(gauss(rng)));
        p.ineq_upper(i) = center(i) + (0.1 + std::abs(gauss(rng)));
        if (!box_only) {
            const double roll = unif(rng);
            if (roll < 0.15) p.ineq_lower(i) = -inf;
            else if (roll < 0.3) p.ineq_upper(i) = inf;
        }
    }
    return p;
}

}  // namespace dpc::testing
