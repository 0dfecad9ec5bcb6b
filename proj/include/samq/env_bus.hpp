#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "samq/dataset.hpp"
#include "samq/mdp.hpp"

namespace samq {

struct Aggregation;  // aggregation.hpp

/**
Configuration of the bus engine replacement world: a mileage grid with upward
drift, a continue/replace action pair, and optionally extra "dummy" state
dimensions that affect neither rewards nor the true-state transition.
*/
struct BusEnvConfig {
    int mileage_grid_size = 200;
    double mileage_max = -1.0;       // < 0: defaults to mileage_grid_size - 1
    ThetaVector theta_true{{0.1, 5.0}};  // (per-mile maintenance cost, replacement cost)
    double gamma = 0.95;
    std::vector<double> drift = {0.3, 0.5, 0.2};  // mileage increment 0,1,2,...
    int dummy_dims = 0;
    std::pair<double, double> dummy_range = {-5.0, 5.0};
    int dummy_grid_size = 21;        // grid points per dummy dimension
    double r_max = -1.0;             // < 0: derived from theta bounds when given

    void validate() const;
    double mileage_value(int grid_idx) const;

    nlohmann::json to_json() const;
    static BusEnvConfig from_json(const nlohmann::json& j);
};

/**
Build the finite MDP of the bus world. Actions are {continue=0, replace=1};
r(s, continue; theta) = -theta_1 * mileage(s), r(s, replace; theta) = -theta_2.
Continuing drifts the mileage up (capped at the grid top); replacing resets it
to zero and then drifts. Dummy coordinates redraw uniformly on their grid,
identically for both actions. Throws invalid_argument on bad config fields.
*/
MdpSpec make_bus_env(const BusEnvConfig& config);

struct SimulateOptions {
    std::vector<double> init_weights;  // empty: uniform over states
    bool chained = false;              // true: one trajectory instead of restarts
    nlohmann::json env_config;         // embedded in the dataset sidecar
    double solve_tol = 1e-10;
};

/**
Draw n transitions from the model at theta_true: s_i from the initial
distribution (or chained from s_{i-1}'), a_i from the Gibbs choice
probabilities of the solved Q, s_i' from the transition kernel. Deterministic
byte-for-byte given the seed.
*/
Dataset simulate(const MdpSpec& mdp, const ThetaVector& theta_true, std::size_t n,
                 std::uint64_t seed, const SimulateOptions& opts = {});

/**
Minimum over aggregated state-action cells of the empirical probability
P(Pi(s_i) = s_tilde, a_i = a); zero signals an uncovered cell (the coverage
constant C_uni, estimated from the data).
*/
double empirical_coverage(const Dataset& dataset, const Aggregation& aggregation);

}  // namespace samq
