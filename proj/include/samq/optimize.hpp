#pragma once

#include <Eigen/Dense>

#include <functional>
#include <utility>
#include <vector>

#include "samq/mdp.hpp"

namespace samq {

using Objective = std::function<double(const std::vector<double>&)>;

struct OptimOptions {
    double tol_x = 1e-6;       // simplex diameter / step-norm tolerance
    double tol_f = 1e-8;       // objective-spread tolerance
    std::size_t max_iter = 1000;
    double init_step = 0.25;   // initial simplex edge scale
};

struct OptimResult {
    std::vector<double> x;     // best-ever point
    double f = 0.0;            // objective there
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
    // accepted improvements (x, f) in order; f is non-decreasing
    std::vector<std::pair<std::vector<double>, double>> trace;
};

/**
Derivative-free Nelder–Mead ascent (reflection 1, expansion 2, contraction
0.5, shrink 0.5) with trial points projected into `init`'s box when bounds are
present. Returns the best point ever evaluated, which keeps an optimum
supplied as the starting point exact. Stops on simplex diameter <= tol_x or
objective spread <= tol_f; otherwise runs out the iteration budget with
converged = false.
*/
OptimResult nelder_mead_maximize(const Objective& f, const ThetaVector& init,
                                 const OptimOptions& opts = {});

/**
Projected gradient ascent with central finite-difference gradients and
backtracking line search — the derivative-based alternative outer optimizer.
*/
OptimResult gradient_ascent_maximize(const Objective& f, const ThetaVector& init,
                                     const OptimOptions& opts = {}, double fd_step = 1e-5);

/** Central finite-difference gradient with per-coordinate steps h*max(1,|x_i|). */
std::vector<double> fd_gradient(const Objective& f, const std::vector<double>& x, double h);

/**
Central finite-difference Hessian (symmetric by construction of the stencil);
h is relative: the coordinate step is h*max(1,|x_i|).
*/
Eigen::MatrixXd fd_hessian(const Objective& f, const std::vector<double>& x, double h);

/** Smallest eigenvalue of a symmetric matrix. */
double min_eigenvalue(const Eigen::MatrixXd& m);

}  // namespace samq
