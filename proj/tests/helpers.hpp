#pragma once

// Shared construction helpers for the test suites: random tabular MDPs with
// linear-in-parameters rewards, plus hand-rolled reference computations kept
// deliberately independent of the library implementations they check.

#include <cmath>
#include <vector>

#include "samq/env_bus.hpp"
#include "samq/mdp.hpp"
#include "samq/rng.hpp"

namespace test_helpers {

/** Dense random row-stochastic tabular MDP with a feature-linear reward. */
inline samq::MdpSpec make_random_mdp(samq::Rng& rng, int n_states, int n_actions,
                                     double gamma, int n_params = 2) {
    samq::MdpSpec mdp;
    mdp.gamma = gamma;
    for (int i = 0; i < n_states; ++i)
        mdp.states.push_back({static_cast<double>(i)});
    for (int a = 0; a < n_actions; ++a)
        mdp.actions.push_back("a" + std::to_string(a));
    mdp.reindex();

    std::vector<std::vector<std::vector<double>>> coeffs(
        static_cast<std::size_t>(n_params));
    for (auto& per_action : coeffs) {
        per_action.resize(static_cast<std::size_t>(n_actions));
        for (auto& c : per_action) {
            c.resize(2);
            c[0] = 2.0 * rng.uniform() - 1.0;
            c[1] = 2.0 * rng.uniform() - 1.0;
        }
    }
    mdp.reward_model = samq::make_reward_model("feature_linear", {{"coeffs", coeffs}});

    for (int a = 0; a < n_actions; ++a) {
        Eigen::SparseMatrix<double, Eigen::RowMajor> t(n_states, n_states);
        std::vector<Eigen::Triplet<double>> trips;
        for (int s = 0; s < n_states; ++s) {
            std::vector<double> row(static_cast<std::size_t>(n_states));
            double total = 0.0;
            for (auto& x : row) {
                x = 0.05 + rng.uniform();
                total += x;
            }
            for (int sp = 0; sp < n_states; ++sp)
                trips.emplace_back(s, sp, row[static_cast<std::size_t>(sp)] / total);
        }
        t.setFromTriplets(trips.begin(), trips.end());
        mdp.transition.push_back(std::move(t));
    }
    return mdp;
}

/** Random Q table shaped to an MDP, entries uniform in [-scale, scale]. */
inline samq::QFunction random_q(samq::Rng& rng, const samq::MdpSpec& mdp,
                                double scale = 5.0) {
    samq::QFunction q = samq::QFunction::zeros(mdp);
    for (int s = 0; s < q.n_states(); ++s)
        for (int a = 0; a < q.n_actions(); ++a)
            q.table(s, a) = scale * (2.0 * rng.uniform() - 1.0);
    return q;
}

/** Reference log-sum-exp written independently of the library. */
inline double ref_lse(const std::vector<double>& v) {
    double m = v.front();
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/**
Truncated value-iteration reference for the entropy-regularized fixed point:
plain nested loops over dense tables, no library calls.
*/
inline std::vector<std::vector<double>> ref_soft_q(const samq::MdpSpec& mdp,
                                                   const samq::ThetaVector& theta,
                                                   int sweeps) {
    const int n = mdp.n_states();
    const int m = mdp.n_actions();
    std::vector<std::vector<double>> q(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(m), 0.0));
    Eigen::MatrixXd dense_sum(n, n);
    std::vector<Eigen::MatrixXd> dense;
    for (int a = 0; a < m; ++a) dense.push_back(Eigen::MatrixXd(mdp.transition[static_cast<std::size_t>(a)]));
    for (int k = 0; k < sweeps; ++k) {
        auto next = q;
        for (int s = 0; s < n; ++s) {
            for (int a = 0; a < m; ++a) {
                double cont = 0.0;
                for (int sp = 0; sp < n; ++sp) {
                    const double p = dense[static_cast<std::size_t>(a)](s, sp);
                    if (p == 0.0) continue;
                    cont += p * ref_lse(q[static_cast<std::size_t>(sp)]);
                }
                next[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] =
                    mdp.reward(s, a, theta) + mdp.gamma * cont;
            }
        }
        q = std::move(next);
    }
    return q;
}

/** Small interior-policy bus world used across the data-driven suites. */
inline samq::BusEnvConfig small_bus_env(int grid = 10, double mileage_max = -1.0,
                                        int dummy_dims = 0, int dummy_grid = 11,
                                        std::vector<double> theta = {0.25, 3.0}) {
    samq::BusEnvConfig env;
    env.mileage_grid_size = grid;
    env.mileage_max = mileage_max;
    env.theta_true = samq::ThetaVector(std::move(theta));
    env.gamma = 0.95;
    env.dummy_dims = dummy_dims;
    env.dummy_grid_size = dummy_grid;
    return env;
}

}  // namespace test_helpers
