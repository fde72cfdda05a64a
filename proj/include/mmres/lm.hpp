#pragma once

// Damped least squares (Levenberg-Marquardt with Marquardt column scaling).
//
// A problem provides
//     bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const;
// returning false when x is outside the feasible region, and optionally
//     void jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const;
// When no analytic Jacobian is supplied, central differences are used.
//
// Accepted steps never increase the cost. Each trial step solves the damped
// normal equations through a QR factorization of the augmented system, which
// keeps full precision on well-posed, noiseless problems.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mmres::optim {

struct LmOptions {
    int max_iterations = 200;
    double ftol = 1e-15;  // relative cost reduction treated as stagnation
    double xtol = 1e-13;  // relative scaled step treated as stagnation
    double gtol = 1e-300; // absolute scaled-gradient floor
    double initial_lambda = 1e-3;
    double fd_step = 1e-7; // relative central-difference step
};

struct LmResult {
    Eigen::VectorXd x;
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;
    double cost = 0.0; // 0.5 * |r|^2
    int iterations = 0;
    bool converged = false;
    std::string reason;
};

template <class P>
concept HasJacobian = requires(const P& p, const Eigen::VectorXd& x, Eigen::MatrixXd& J) {
    p.jacobian(x, J);
};

template <class Problem>
void numeric_jacobian(const Problem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& r0,
                      Eigen::MatrixXd& J, double rel_step) {
    J.resize(r0.size(), x.size());
    Eigen::VectorXd xp = x, rp(r0.size()), rm(r0.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(std::abs(x[j]), 1.0);
        xp[j] = x[j] + h;
        const bool up = p.residuals(xp, rp);
        xp[j] = x[j] - h;
        const bool dn = p.residuals(xp, rm);
        xp[j] = x[j];
        if (up && dn) J.col(j) = (rp - rm) / (2.0 * h);
        else if (up) J.col(j) = (rp - r0) / h;
        else if (dn) J.col(j) = (r0 - rm) / h;
        else J.col(j).setZero();
    }
}

template <class Problem>
void evaluate_jacobian(const Problem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& r,
                       Eigen::MatrixXd& J, double rel_step) {
    if constexpr (HasJacobian<Problem>) {
        (void)r;
        (void)rel_step;
        p.jacobian(x, J);
    } else {
        numeric_jacobian(p, x, r, J, rel_step);
    }
}

template <class Problem>
LmResult levenberg_marquardt(const Problem& problem, Eigen::VectorXd x0, const LmOptions& opt = {}) {
    LmResult res;
    res.x = std::move(x0);
    if (!problem.residuals(res.x, res.residual))
        throw std::invalid_argument("initial point is infeasible");
    res.cost = 0.5 * res.residual.squaredNorm();
    if (!std::isfinite(res.cost)) throw std::invalid_argument("non-finite initial cost");

    const Eigen::Index n = res.x.size();
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    double lambda = opt.initial_lambda;
    Eigen::VectorXd r_new;

    for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
        if (res.cost == 0.0) {
            res.converged = true;
            res.reason = "zero residual";
            break;
        }
        evaluate_jacobian(problem, res.x, res.residual, res.jacobian, opt.fd_step);
        const Eigen::MatrixXd& J = res.jacobian;
        for (Eigen::Index j = 0; j < n; ++j) diag[j] = std::max(diag[j], J.col(j).norm());
        Eigen::VectorXd scale = diag;
        for (Eigen::Index j = 0; j < n; ++j)
            if (scale[j] == 0.0) scale[j] = 1.0;

        const Eigen::VectorXd grad = J.transpose() * res.residual;
        if ((grad.array() / scale.array()).abs().maxCoeff() <= opt.gtol) {
            res.converged = true;
            res.reason = "gradient below tolerance";
            break;
        }

        bool accepted = false;
        bool stagnated = false;
        while (!accepted) {
            Eigen::MatrixXd A(J.rows() + n, n);
            A.topRows(J.rows()) = J;
            A.bottomRows(n) = (std::sqrt(lambda) * scale).asDiagonal();
            Eigen::VectorXd b = Eigen::VectorXd::Zero(J.rows() + n);
            b.head(J.rows()) = -res.residual;
            const Eigen::VectorXd step = A.colPivHouseholderQr().solve(b);
            const Eigen::VectorXd x_new = res.x + step;

            const double scaled_step = (scale.array() * step.array()).matrix().norm();
            const double scaled_x = (scale.array() * res.x.array()).matrix().norm();

            double cost_new = std::numeric_limits<double>::infinity();
            if (step.allFinite() && problem.residuals(x_new, r_new)) cost_new = 0.5 * r_new.squaredNorm();

            if (std::isfinite(cost_new) && cost_new <= res.cost) {
                const double reduction = res.cost - cost_new;
                res.x = x_new;
                res.residual = r_new;
                res.cost = cost_new;
                lambda = std::max(lambda / 10.0, 1e-20);
                accepted = true;
                if (reduction <= opt.ftol * cost_new || scaled_step <= opt.xtol * (scaled_x + opt.xtol))
                    stagnated = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e20 || scaled_step <= opt.xtol * (scaled_x + opt.xtol)) {
                    // No descent left at machine precision.
                    stagnated = true;
                    break;
                }
            }
        }
        if (stagnated) {
            res.converged = true;
            res.reason = "no further reduction";
            ++res.iterations;
            break;
        }
    }
    if (!res.converged) res.reason = "iteration limit";
    evaluate_jacobian(problem, res.x, res.residual, res.jacobian, opt.fd_step);
    return res;
}

/// Pseudo-inverse of J^T J, scaled by `sigma2`. Always symmetric PSD.
inline Eigen::MatrixXd covariance_from_jacobian(const Eigen::MatrixXd& J, double sigma2) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double cutoff = s.size() ? s[0] * 1e-14 * std::max(J.rows(), J.cols()) : 0.0;
    Eigen::VectorXd inv2 = Eigen::VectorXd::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] > cutoff) inv2[i] = 1.0 / (s[i] * s[i]);
    const Eigen::MatrixXd& V = svd.matrixV();
    Eigen::MatrixXd C = V * inv2.asDiagonal() * V.transpose();
    C = 0.5 * (C + C.transpose());
    return sigma2 * C;
}

} // namespace mmres::optim
