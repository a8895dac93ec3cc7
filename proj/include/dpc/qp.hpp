#pragma once

#include "dpc/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpc {

/// Dense convex QP:  min 1/2 x'Hx + c'x  s.t.  l <= Ax <= u.
/// One-sided rows use +-inf bounds.
struct QpProblem {
    MatX hessian;
    VecX linear_term;
    MatX ineq_matrix;
    VecX ineq_lower;
    VecX ineq_upper;

    int n() const { return static_cast<int>(linear_term.size()); }
    int m() const { return static_cast<int>(ineq_lower.size()); }

    void validate() const {
        if (hessian.rows() != n() || hessian.cols() != n())
            throw std::invalid_argument("QpProblem: hessian shape mismatch");
        if (!hessian.isApprox(hessian.transpose(), 1e-10))
            throw std::invalid_argument("QpProblem: hessian not symmetric");
        if (ineq_matrix.rows() != m() || (m() > 0 && ineq_matrix.cols() != n()))
            throw std::invalid_argument("QpProblem: constraint shape mismatch");
        if (ineq_upper.size() != m())
            throw std::invalid_argument("QpProblem: bound shape mismatch");
    }

    double objective(const VecX& x) const {
        return 0.5 * x.dot(hessian * x) + linear_term.dot(x);
    }
};

enum class QpStatus { optimal, max_iter, infeasible };

struct QpSolution {
    VecX x;
    VecX multipliers;
    double objective = 0.0;
    double kkt_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    QpStatus status = QpStatus::max_iter;
};

/// Max of stationarity, primal violation and complementarity violation.
/// Multiplier convention: y_i > 0 pushes against the upper bound, y_i < 0
/// against the lower bound. Zero exactly at a KKT point.
inline double kkt_residual(const QpProblem& p, const VecX& x, const VecX& y) {
    if (x.size() != p.n() || y.size() != p.m())
        throw std::invalid_argument("kkt_residual: dimension mismatch");
    VecX grad = p.hessian * x + p.linear_term;
    if (p.m() > 0) grad += p.ineq_matrix.transpose() * y;
    double stat = p.n() > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;

    double primal = 0.0, comp = 0.0;
    if (p.m() > 0) {
        VecX ax = p.ineq_matrix * x;
        for (int i = 0; i < p.m(); ++i) {
            const double lo = p.ineq_lower(i), hi = p.ineq_upper(i);
            primal = std::max(primal, ax(i) - hi);
            primal = std::max(primal, lo - ax(i));
            const double yp = std::max(y(i), 0.0), ym = std::max(-y(i), 0.0);
            const double gap_u = std::isfinite(hi) ? std::min(1.0, std::abs(hi - ax(i))) : 1.0;
            const double gap_l = std::isfinite(lo) ? std::min(1.0, std::abs(ax(i) - lo)) : 1.0;
            comp = std::max(comp, yp * gap_u);
            comp = std::max(comp, ym * gap_l);
        }
        primal = std::max(primal, 0.0);
    }
    return std::max({stat, primal, comp});
}

/// ADMM solver with an active-set polish step. Holds warm-start state; reuse
/// one instance per control loop, one instance per thread.
class QpSolver {
public:
    QpSolution solve(const QpProblem& p, double tolerance = 1e-8, int max_iter = 20000) {
        p.validate();
        const int n = p.n(), m = p.m();
        QpSolution sol;
        sol.x = VecX::Zero(n);
        sol.multipliers = VecX::Zero(m);

        for (int i = 0; i < m; ++i) {
            if (p.ineq_lower(i) > p.ineq_upper(i)) {
                sol.status = QpStatus::infeasible;
                sol.objective = 0.0;
                return sol;
            }
        }

        // Tikhonov floor keeps the problem strictly convex.
        MatX h_reg = p.hessian + 1e-8 * MatX::Identity(n, n);

        if (m == 0) {
            // Prefer the exact Hessian; fall back to the regularized one when
            // it is only semidefinite.
            sol.x = p.hessian.ldlt().solve(-p.linear_term);
            if (!sol.x.allFinite() || kkt_residual(p, sol.x, sol.multipliers) > tolerance)
                sol.x = h_reg.ldlt().solve(-p.linear_term);
            sol.kkt_residual = kkt_residual(p, sol.x, sol.multipliers);
            sol.objective = p.objective(sol.x);
            sol.status = sol.kkt_residual <= tolerance ? QpStatus::optimal : QpStatus::max_iter;
            return sol;
        }

        VecX x = VecX::Zero(n), y = VecX::Zero(m);
        if (warm_valid_ && warm_x_.size() == n && warm_y_.size() == m) {
            x = warm_x_;
            y = warm_y_;
        }
        VecX z = (p.ineq_matrix * x).cwiseMax(p.ineq_lower).cwiseMin(p.ineq_upper);

        double rho = 1.0, sigma = 1e-6;
        Eigen::LDLT<MatX> kkt_fact;
        auto refactor = [&] {
            MatX k = h_reg + sigma * MatX::Identity(n, n) +
                     rho * p.ineq_matrix.transpose() * p.ineq_matrix;
            kkt_fact.compute(k);
        };
        refactor();

        const int check_every = 25;
        int it = 0;
        double best_res = std::numeric_limits<double>::infinity();
        VecX best_x = x, best_y = y;

        while (it < max_iter) {
            for (int k = 0; k < check_every && it < max_iter; ++k, ++it) {
                VecX rhs = sigma * x - p.linear_term + p.ineq_matrix.transpose() * (rho * z - y);
                x = kkt_fact.solve(rhs);
                VecX ax = p.ineq_matrix * x;
                z = (ax + y / rho).cwiseMax(p.ineq_lower).cwiseMin(p.ineq_upper);
                y += rho * (ax - z);
            }

            double res = kkt_residual(p, x, y);
            if (res < best_res) { best_res = res; best_x = x; best_y = y; }
            if (res <= tolerance) break;

            VecX px, py;
            if (polish(p, p.hessian, x, y, px, py) || polish(p, h_reg, x, y, px, py)) {
                double pres = kkt_residual(p, px, py);
                if (pres < best_res) { best_res = pres; best_x = px; best_y = py; }
                if (pres <= tolerance) break;
            }

            // Residual balancing on the ADMM splitting.
            VecX ax = p.ineq_matrix * x;
            double rp = (ax - z).lpNorm<Eigen::Infinity>();
            double rd = (h_reg * x + p.linear_term + p.ineq_matrix.transpose() * y)
                            .lpNorm<Eigen::Infinity>();
            if (rp > 10.0 * rd && rho < 1e6) {
                rho = std::min(rho * 5.0, 1e6);
                refactor();
            } else if (rd > 10.0 * rp && rho > 1e-6) {
                rho = std::max(rho / 5.0, 1e-6);
                refactor();
            }
        }

        sol.x = best_x;
        sol.multipliers = best_y;
        sol.kkt_residual = best_res;
        sol.iterations = it;
        sol.objective = p.objective(best_x);
        sol.status = best_res <= tolerance ? QpStatus::optimal : QpStatus::max_iter;
        warm_x_ = best_x;
        warm_y_ = best_y;
        warm_valid_ = true;
        return sol;
    }

    void reset_warm_start() { warm_valid_ = false; }

private:
    // Equality-solve on the active set guessed from multiplier signs.
    static bool polish(const QpProblem& p, const MatX& hessian, const VecX& x, const VecX& y,
                       VecX& px, VecX& py) {
        const int n = p.n(), m = p.m();
        std::vector<int> act;
        std::vector<double> act_bound;
        VecX ax = p.ineq_matrix * x;
        for (int i = 0; i < m; ++i) {
            const double lo = p.ineq_lower(i), hi = p.ineq_upper(i);
            bool up = (y(i) > 1e-12) || (std::isfinite(hi) && ax(i) >= hi - 1e-9);
            bool lw = (y(i) < -1e-12) || (std::isfinite(lo) && ax(i) <= lo + 1e-9);
            if (up && std::isfinite(hi)) {
                act.push_back(i);
                act_bound.push_back(hi);
            } else if (lw && std::isfinite(lo)) {
                act.push_back(i);
                act_bound.push_back(lo);
            }
        }
        const int k = static_cast<int>(act.size());
        MatX kkt = MatX::Zero(n + k, n + k);
        kkt.topLeftCorner(n, n) = hessian;
        VecX rhs(n + k);
        rhs.head(n) = -p.linear_term;
        for (int j = 0; j < k; ++j) {
            kkt.block(n + j, 0, 1, n) = p.ineq_matrix.row(act[j]);
            kkt.block(0, n + j, n, 1) = p.ineq_matrix.row(act[j]).transpose();
            rhs(n + j) = act_bound[j];
        }
        Eigen::FullPivLU<MatX> lu(kkt);
        if (!lu.isInvertible()) return false;
        VecX sol = lu.solve(rhs);
        px = sol.head(n);
        py = VecX::Zero(m);
        for (int j = 0; j < k; ++j) py(act[j]) = sol(n + j);
        return px.allFinite() && py.allFinite();
    }

    VecX warm_x_, warm_y_;
    bool warm_valid_ = false;
};

}  // namespace dpc
