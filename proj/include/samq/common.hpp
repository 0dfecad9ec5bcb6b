#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace samq {

/**
Raised when the fixed-point or outer iteration fails to reach its tolerance
within the iteration budget. Carries the last residual so callers can decide
whether the result is still usable.
*/
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual, std::size_t iterations)
        : std::runtime_error(what), residual(residual), iterations(iterations) {}
    double residual;
    std::size_t iterations;
};

/**
Raised when an aggregated state-action cell has no (or too few) observations,
i.e. the empirical operator of the dataset violates the full-coverage
assumption. Names the offending cell.
*/
class CoverageError : public std::runtime_error {
public:
    CoverageError(const std::string& what, int cluster, int action)
        : std::runtime_error(what), cluster(cluster), action(action) {}
    int cluster;
    int action;
};

/**
Raised by the finite-sample bound calculator when the bound is undefined for
the supplied inputs (sample-size precondition violated, or n_s = 1 which
zeroes the bias denominator). Carries the offending margin.
*/
class BoundUndefinedError : public std::runtime_error {
public:
    BoundUndefinedError(const std::string& what, double margin)
        : std::runtime_error(what), margin(margin) {}
    double margin;
};

/**
Run `count` independent jobs, each writing only into its own output slot.
Worker threads are taken from the SAMQ_WORKERS environment variable (default
1); results are identical for any worker count because jobs share no mutable
state and are keyed by index.
*/
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job);

/** Worker count resolved from SAMQ_WORKERS (>= 1). */
unsigned worker_count();

}  // namespace samq
