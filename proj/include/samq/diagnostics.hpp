#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "samq/aggregation.hpp"
#include "samq/dataset.hpp"
#include "samq/mdp.hpp"
#include "samq/nfmle.hpp"
#include "samq/optimize.hpp"

namespace samq {

/** One checked inequality: lhs <= rhs with the slack preserved. */
struct InequalityRecord {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;

    static InequalityRecord make(const std::string& name, double lhs, double rhs) {
        return InequalityRecord{name, lhs, rhs, lhs <= rhs};
    }
    nlohmann::json to_json() const;
};

/**
Exact population-level quantities of a small tabular instance: the true
policy, the population aggregated likelihood E[L_tilde(X; theta)] built from
the aggregated operator T_tilde with exact kernel weights, and its maximizer
theta_tilde. The data distribution mu defaults to uniform over states.
*/
class PopulationModel {
public:
    PopulationModel(const MdpSpec& mdp, const Aggregation& aggregation,
                    const ThetaVector& theta_star, std::vector<double> mu = {});

    /** E[L(X; theta*)] = sum_s mu(s) sum_a pi*(a|s) log pi*(a|s). */
    double exact_likelihood_at_star() const { return exact_l_star_; }

    /** E[L_tilde(X; theta)], solving the T_tilde fixed point for theta. */
    double aggregated_likelihood(const ThetaVector& theta) const;

    /** Fixed point of the population aggregated operator T_tilde. */
    Eigen::MatrixXd solve_aggregated_q(const ThetaVector& theta, double tol = 1e-12) const;

    /** theta_tilde = argmax E[L_tilde] by Nelder–Mead from theta*. */
    ThetaVector maximize_aggregated_likelihood(const OptimOptions& opts = {}) const;

    /**
    Concavity constant for the lemma chain: the minimum eigenvalue of
    -FD-Hessian of E[L_tilde], minimized over points sampled on the segment
    [theta*, theta_tilde] (where the Taylor midpoint lives), scaled by 0.95 to
    absorb finite-difference error. Underestimating C_H only loosens the
    bounds being checked.
    */
    double concavity_on_segment(const ThetaVector& theta_tilde, int points = 5,
                                double h = 1e-4) const;

    const ThetaVector& theta_star() const { return theta_star_; }
    const QFunction& q_star() const { return q_star_; }

private:
    const MdpSpec& mdp_;
    const Aggregation& aggregation_;
    ThetaVector theta_star_;
    std::vector<double> mu_;            // state weights, sum 1
    std::vector<int> cluster_of_;       // state row -> cluster
    QFunction q_star_;                  // true Q at theta*
    Eigen::MatrixXd pi_star_;           // |S| x n_a true policy
    double exact_l_star_ = 0.0;
    // T_tilde structure: within-cluster weights and the per-action matrix
    // W[a](c, c') = sum_s w(c,s) sum_{s' in c'} P[s][a][s']
    std::vector<std::vector<std::pair<int, double>>> cluster_members_;  // (state row, weight)
    std::vector<Eigen::MatrixXd> next_cluster_;
};

/**
epsilon_Q (Eq. distance): max_(s,a) |Q^theta*(s,a) - Q^theta*(Pi(s),a)|.
Identical formula to aggregation_q_error, applied to the true Q.
*/
double q_error(const QFunction& q_true, const Aggregation& aggregation);

/**
Numerically certify local strong concavity: minimum eigenvalue of the negated
central-FD Hessian of the estimated aggregated likelihood at theta (positive
values certify the constant). The objective overload serves surrogates and
population likelihoods.
*/
double estimate_concavity(const Objective& f, const std::vector<double>& theta, double h = 1e-3);
double estimate_concavity(const Dataset& dataset, std::shared_ptr<const Aggregation> aggregation,
                          const RewardModel& reward, const ThetaVector& theta,
                          double gamma, double h = 1e-3);

/**
Theorem 1: eps_asy(Pi) = ||theta_tilde - theta*||^2 <= 4 eps_Q / (C_H (1-gamma)).
Both sides computed exactly on a tabular instance (theta_tilde by maximizing
the population aggregated likelihood).
*/
InequalityRecord theorem1_check(const MdpSpec& mdp, const ThetaVector& theta_star,
                                const Aggregation& aggregation, double c_h);

/**
Appendix lemma "likelihood-bound" and its chain at theta*:
  ||theta_tilde - theta*||^2 <= E[L(X;theta*) - L_tilde(X;theta*)] / c_H
  E[L(X;theta*) - L_tilde(X;theta*)] <= 4 eps_Q / (1 - gamma).
Returns both records (in that order).
*/
std::vector<InequalityRecord> lemma_likelihood_bound_check(const MdpSpec& mdp,
                                                           const ThetaVector& theta_star,
                                                           const Aggregation& aggregation,
                                                           double c_h);

struct Theorem2Inputs {
    double c_h = 1.0;
    double c_uni = 0.0;
    double r_max = 1.0;
    double gamma = 0.95;
    int n_s = 2;
    int n_a = 2;
    double c_q = 0.0;
    double c_clustering = 0.0;
};

struct Theorem2Bound {
    double bias = 0.0;
    double variance = 0.0;
    double total = 0.0;
};

/**
Theorem 2 evaluated verbatim:
  bias = 4/(C_H(1-g)) [ (R+1)/(1-g) * 4/(n_s^{1/n_a}-1) + 2 C_Q + C_clustering ]
  variance = 4(R+1)/((1-g)C_H) sqrt(log(4|Theta|/d)/(2N))
           + (R+1)/((1-g)^2 C_H) sqrt(log(8 n_s n_a |Theta|/d)/(2N))
             * 4/(C_uni - sqrt(log(4 n_s n_a |Theta|/d)/(2N))).
Throws BoundUndefinedError when the sample-size precondition
  N C_uni - sqrt(N log(4 n_s n_a |Theta|/d)/2) >= 1
fails (carrying the margin) or when n_s = 1 zeroes the bias denominator.
*/
Theorem2Bound theorem2_bound(const Theorem2Inputs& params, std::size_t n, double delta,
                             double theta_card);

/**
Covering-number proxy for |Theta| when theta has box bounds: box volume /
resolution^p at resolution 0.01 (the finite-Theta modeling gap is documented,
not hidden). Throws invalid_argument without bounds.
*/
double theta_cardinality_proxy(const ThetaVector& theta, double resolution = 0.01);

/**
C_clustering exactly, by exhaustive search over all
representative subsets of size n_s with Chebyshev-nearest assignment:
  |eps_hat_dis(Pi) - eps_hat_dis(Pi*)|.
Only for supports of at most max_states states (default 10); returns nullopt
beyond that rather than an approximation.
*/
std::optional<double> exact_clustering_constant(const QFunction& q_hat,
                                                const Aggregation& aggregation,
                                                int max_states = 10);

/** Everything the `diagnose` subcommand reports. */
struct BoundReport {
    double eps_q = 0.0;
    double eps_dis_hat = 0.0;
    double c_h = 0.0;
    double c_uni = 0.0;
    double r_max = 0.0;
    double gamma = 0.0;
    int n_s = 0;
    int n_a = 0;
    int n_param = 0;
    double theta_gap = 0.0;
    double thm1_bound = 0.0;
    double thm2_bias = 0.0;
    double thm2_variance = 0.0;
    std::vector<InequalityRecord> inequalities;

    nlohmann::json to_json() const;
    /** Human-readable (inequality, lhs, rhs, slack) table. */
    std::string table() const;
};

}  // namespace samq
