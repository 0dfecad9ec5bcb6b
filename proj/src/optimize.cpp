#include "samq/optimize.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace samq {

namespace {

double inf_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/** Tracks the best point ever evaluated and the improvement trace. */
struct BestTracker {
    const Objective& f;
    OptimResult& res;
    std::size_t& evals;

    double operator()(const std::vector<double>& v) const {
        const double val = f(v);
        ++evals;
        if (val > res.f) {
            res.f = val;
            res.x = v;
            res.trace.emplace_back(v, val);
        }
        return val;
    }
};

}  // namespace

OptimResult nelder_mead_maximize(const Objective& f, const ThetaVector& init,
                                 const OptimOptions& opts) {
    init.validate();
    const std::size_t p = init.size();
    if (p == 0)
        throw std::invalid_argument("nelder_mead_maximize: empty parameter vector");

    OptimResult res;
    res.f = -std::numeric_limits<double>::infinity();
    std::size_t evals = 0;
    const BestTracker eval{f, res, evals};
    const auto clamp = [&init](const std::vector<double>& v) { return init.clamped(v).values; };

    // Initial simplex: the start plus one per-coordinate step, projected into
    // the box. A step swallowed by the box flips direction so the simplex
    // stays non-degenerate.
    std::vector<std::vector<double>> simplex;
    simplex.reserve(p + 1);
    simplex.push_back(clamp(init.values));
    for (std::size_t i = 0; i < p; ++i) {
        auto v = simplex.front();
        const double step = opts.init_step * std::max(1.0, std::abs(v[i]));
        v[i] += step;
        v = clamp(v);
        if (v[i] == simplex.front()[i]) {
            v[i] -= 2.0 * step;
            v = clamp(v);
        }
        simplex.push_back(std::move(v));
    }
    std::vector<double> value(p + 1);
    for (std::size_t i = 0; i <= p; ++i) value[i] = eval(simplex[i]);

    std::vector<std::size_t> order(p + 1);
    std::size_t iter = 0;
    for (; iter < opts.max_iter; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&value](std::size_t a, std::size_t b) { return value[a] > value[b]; });
        const std::size_t best = order[0];
        const std::size_t second_worst = order[p - 1];
        const std::size_t worst = order[p];

        double diameter = 0.0;
        for (std::size_t i = 0; i <= p; ++i)
            diameter = std::max(diameter, inf_dist(simplex[i], simplex[best]));
        if (diameter <= opts.tol_x || value[best] - value[worst] <= opts.tol_f) {
            res.converged = true;
            break;
        }

        std::vector<double> centroid(p, 0.0);
        for (std::size_t i = 0; i <= p; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < p; ++j) centroid[j] += simplex[i][j];
        }
        for (std::size_t j = 0; j < p; ++j) centroid[j] /= static_cast<double>(p);

        const auto move = [&](double coeff) {
            std::vector<double> v(p);
            for (std::size_t j = 0; j < p; ++j)
                v[j] = centroid[j] + coeff * (centroid[j] - simplex[worst][j]);
            return clamp(v);
        };

        const auto reflected = move(1.0);
        const double f_r = eval(reflected);
        if (f_r > value[best]) {
            const auto expanded = move(2.0);
            const double f_e = eval(expanded);
            if (f_e > f_r) {
                simplex[worst] = expanded;
                value[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                value[worst] = f_r;
            }
        } else if (f_r > value[second_worst]) {
            simplex[worst] = reflected;
            value[worst] = f_r;
        } else {
            const auto contracted = move(f_r > value[worst] ? 0.5 : -0.5);
            const double f_c = eval(contracted);
            if (f_c > std::max(f_r, value[worst])) {
                simplex[worst] = contracted;
                value[worst] = f_c;
            } else {
                // Shrink everything toward the best vertex.
                for (std::size_t i = 0; i <= p; ++i) {
                    if (i == best) continue;
                    for (std::size_t j = 0; j < p; ++j)
                        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
                    simplex[i] = clamp(simplex[i]);
                    value[i] = eval(simplex[i]);
                }
            }
        }
    }
    res.iterations = iter;
    res.evaluations = evals;
    return res;
}

OptimResult gradient_ascent_maximize(const Objective& f, const ThetaVector& init,
                                     const OptimOptions& opts, double fd_step) {
    init.validate();
    const std::size_t p = init.size();
    if (p == 0)
        throw std::invalid_argument("gradient_ascent_maximize: empty parameter vector");

    OptimResult res;
    res.f = -std::numeric_limits<double>::infinity();
    std::size_t evals = 0;
    const BestTracker eval{f, res, evals};
    const auto clamp = [&init](const std::vector<double>& v) { return init.clamped(v).values; };

    std::vector<double> x = clamp(init.values);
    double fx = eval(x);
    std::size_t iter = 0;
    for (; iter < opts.max_iter; ++iter) {
        const auto g = fd_gradient(f, x, fd_step);
        evals += 2 * p;
        double g_norm2 = 0.0;
        for (double gi : g) g_norm2 += gi * gi;

        // Backtracking line search along the projected gradient step.
        double t = 1.0;
        std::vector<double> y;
        double fy = -std::numeric_limits<double>::infinity();
        bool improved = false;
        while (t > 1e-12) {
            y.assign(p, 0.0);
            for (std::size_t j = 0; j < p; ++j) y[j] = x[j] + t * g[j];
            y = clamp(y);
            fy = eval(y);
            if (fy > fx + 1e-4 * t * g_norm2) {
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved) {
            res.converged = true;
            break;
        }
        const double step_size = inf_dist(x, y);
        const double gain = fy - fx;
        x = std::move(y);
        fx = fy;
        if (step_size <= opts.tol_x || gain <= opts.tol_f) {
            res.converged = true;
            ++iter;
            break;
        }
    }
    res.iterations = iter;
    res.evaluations = evals;
    return res;
}

std::vector<double> fd_gradient(const Objective& f, const std::vector<double>& x, double h) {
    if (h <= 0.0)
        throw std::invalid_argument("fd_gradient: h must be positive");
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x[i]));
        auto hi = x;
        auto lo = x;
        hi[i] += step;
        lo[i] -= step;
        g[i] = (f(hi) - f(lo)) / (2.0 * step);
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const Objective& f, const std::vector<double>& x, double h) {
    if (h <= 0.0)
        throw std::invalid_argument("fd_hessian: h must be positive");
    const auto p = static_cast<Eigen::Index>(x.size());
    std::vector<double> step(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) step[i] = h * std::max(1.0, std::abs(x[i]));

    Eigen::MatrixXd hess(p, p);
    const double f0 = f(x);
    for (Eigen::Index i = 0; i < p; ++i) {
        const auto si = static_cast<std::size_t>(i);
        auto hi = x;
        auto lo = x;
        hi[si] += step[si];
        lo[si] -= step[si];
        hess(i, i) = (f(hi) - 2.0 * f0 + f(lo)) / (step[si] * step[si]);
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            auto pp = x, pm = x, mp = x, mm = x;
            pp[si] += step[si];
            pp[sj] += step[sj];
            pm[si] += step[si];
            pm[sj] -= step[sj];
            mp[si] -= step[si];
            mp[sj] += step[sj];
            mm[si] -= step[si];
            mm[sj] -= step[sj];
            hess(i, j) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * step[si] * step[sj]);
            hess(j, i) = hess(i, j);
        }
    }
    return hess;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols() || m.rows() == 0)
        throw std::invalid_argument("min_eigenvalue: matrix must be square and nonempty");
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("min_eigenvalue: eigenvalue decomposition failed");
    return solver.eigenvalues().minCoeff();
}

}  // namespace samq
