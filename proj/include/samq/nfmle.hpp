#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "samq/aggregation.hpp"
#include "samq/dataset.hpp"
#include "samq/mdp.hpp"
#include "samq/optimize.hpp"

namespace samq {

/** Q-table on the aggregated space: n_s x n_a. */
struct AggregatedQ {
    Eigen::MatrixXd table;
    std::shared_ptr<const Aggregation> aggregation;

    int n_s() const { return static_cast<int>(table.rows()); }
    int n_actions() const { return static_cast<int>(table.cols()); }
};

/**
The dataset compressed onto aggregated cells, so the empirical Bellman
operator costs O(n_s^2 n_a) per application instead of O(N). Holds, per cell
(s_tilde, a): the observation count, the distinct source states with
multiplicities (for averaging r(s_i, a; theta)), and the empirical
distribution of the projected successor Pi(s_i').
*/
class AggregatedData {
public:
    AggregatedData(const Dataset& dataset, std::shared_ptr<const Aggregation> aggregation);

    int n_s() const { return n_s_; }
    int n_actions() const { return n_a_; }
    std::size_t n_total() const { return n_total_; }
    const Eigen::MatrixXd& cell_counts() const { return cell_counts_; }
    const std::shared_ptr<const Aggregation>& aggregation() const { return aggregation_; }

    /** Smallest cell count; 0 signals an uncovered (s_tilde, a) cell. */
    double min_cell_count() const { return cell_counts_.minCoeff(); }

    /** Throws CoverageError naming the first cell below min_count. */
    void require_coverage(double min_count = 1.0) const;

    /** Cell-average reward matrix r_bar(s_tilde, a; theta). */
    Eigen::MatrixXd average_rewards(const RewardModel& reward,
                                    const ThetaVector& theta) const;

    /** One application of T_hat^Pi given precomputed cell rewards. */
    Eigen::MatrixXd apply(const Eigen::MatrixXd& f, const Eigen::MatrixXd& r_bar,
                          double gamma) const;

private:
    int n_s_ = 0;
    int n_a_ = 0;
    std::size_t n_total_ = 0;
    std::shared_ptr<const Aggregation> aggregation_;
    Eigen::MatrixXd cell_counts_;  // n_s x n_a
    // distinct source states with multiplicities per cell, first-seen order
    std::vector<std::vector<std::pair<StatePoint, double>>> cell_states_;
    // next_weights_[a].row(c) = empirical distribution of Pi(s') in cell (c,a)
    std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> next_weights_;
};

/**
The sample-estimated aggregated Bellman operator T_hat^Pi (one application):
  T f(s_tilde, a) = mean over {i : Pi(s_i)=s_tilde, a_i=a} of
                    [ r(s_i, a_i; theta) + gamma * log_sum_exp(f(Pi(s_i'), .)) ].
A gamma-contraction in sup norm. Throws CoverageError on an empty cell.
*/
AggregatedQ empirical_bellman_apply(const AggregatedQ& f, const Dataset& dataset,
                                    const RewardModel& reward, const ThetaVector& theta,
                                    double gamma);

struct AggregatedSolution {
    AggregatedQ q;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/**
Fixed point of T_hat^Pi by successive application, warm-startable from a
previous theta's solution. Throws CoverageError before iterating when a cell
is empty and ConvergenceError when max_iter is exhausted.
*/
AggregatedSolution solve_aggregated_q(const AggregatedData& data, const RewardModel& reward,
                                      const ThetaVector& theta, double gamma, double tol = 1e-10,
                                      std::size_t max_iter = 10000,
                                      const Eigen::MatrixXd* warm_start = nullptr);
AggregatedSolution solve_aggregated_q(const Dataset& dataset,
                                      std::shared_ptr<const Aggregation> aggregation,
                                      const RewardModel& reward, const ThetaVector& theta,
                                      double gamma, double tol = 1e-10,
                                      std::size_t max_iter = 10000);

/**
Estimated aggregated likelihood (the NF-MLE objective):
  L_hat = (1/N) sum_i [ Q_hat^theta(Pi(s_i), a_i) - log sum_a' exp(Q_hat^theta(Pi(s_i), a')) ].
Always <= 0; equals the mean log model choice probability.
*/
double aggregated_log_likelihood(const AggregatedData& data, const RewardModel& reward,
                                 const ThetaVector& theta, double gamma, double tol = 1e-10);
double aggregated_log_likelihood(const Dataset& dataset,
                                 std::shared_ptr<const Aggregation> aggregation,
                                 const RewardModel& reward, const ThetaVector& theta,
                                 double gamma, double tol = 1e-10);

enum class OuterOptimizer { NelderMead, GradientAscent };

struct NfmleOptions {
    OuterOptimizer optimizer = OuterOptimizer::NelderMead;
    OptimOptions outer;
    double inner_tol = 1e-10;
    std::size_t inner_max_iter = 10000;
    double min_cell_count = 1.0;
};

/** Result of one estimation run. */
struct EstimationReport {
    ThetaVector theta_hat;
    double log_likelihood = 0.0;
    bool converged = false;
    std::string warning;
    std::size_t outer_iterations = 0;
    // inner fixed-point iteration counts, one per objective evaluation
    std::vector<std::size_t> inner_iterations;
    // accepted (theta, L_hat) improvements, in order
    std::vector<std::pair<std::vector<double>, double>> outer_trace;

    nlohmann::json to_json() const;
};

/**
Step 3 of the SAmQ pipeline (Algorithm 1): maximize the estimated aggregated
likelihood over theta, solving the n_s x n_a fixed point per candidate with
warm starts. Non-convergence returns the best-so-far theta with a warning;
coverage failure aborts with CoverageError.
*/
EstimationReport nfmle_estimate(const Dataset& dataset,
                                std::shared_ptr<const Aggregation> aggregation,
                                const RewardModel& reward, const ThetaVector& theta_init,
                                const NfmleOptions& opts = {});

/**
The no-aggregation baseline: same outer loop, but the inner solve is
soft_q_solve on the full MdpSpec and the likelihood is evaluated at the
dataset's (s_i, a_i) rows directly.
*/
EstimationReport exact_nfmle(const Dataset& dataset, const MdpSpec& mdp,
                             const ThetaVector& theta_init, const NfmleOptions& opts = {});

}  // namespace samq
