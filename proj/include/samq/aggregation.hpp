#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "samq/mdp.hpp"

namespace samq {

/**
State aggregation Pi: S -> S_tilde. Representatives are actual states from S;
`assign` maps each covered state (by row of `index`) to its representative.
Projection of a state not in `index` uses the fallback locator when one is
attached (Chebyshev-nearest representative in estimated-Q space for clustered
aggregations, cell lookup for ad-hoc grids); otherwise it is an error.
*/
struct Aggregation {
    std::vector<StatePoint> representatives;
    StateIndex index;          // covered states
    std::vector<int> assign;   // state row -> representative index
    int n_s = 0;
    // Q rows of the representatives in the space the aggregation was built in
    // (empty for ad-hoc aggregations)
    Eigen::MatrixXd rep_q;
    std::function<int(const StatePoint&)> fallback;

    /** Representative index of a state; throws invalid_argument if unknown and no fallback. */
    int project_index(const StatePoint& s) const;

    /** Representative state of s; idempotent by construction. */
    const StatePoint& project(const StatePoint& s) const;

    /** Representatives distinct, assignment total, Pi idempotent on reps. */
    void validate() const;

    nlohmann::json to_json() const;
    static Aggregation from_json(const nlohmann::json& j);
};

/**
Aggregation distance d(s,s') = max_a |Q(s,a) - Q(s',a)| (Chebyshev on Q rows).
Throws invalid_argument when either state is outside q's support.
*/
double q_distance(const QFunction& q, const StatePoint& s, const StatePoint& s_prime);

/**
Step 2 of the SAmQ pipeline: K-means (Euclidean, k-means++ seeding, best of
`restarts` by within-cluster sum of squares) on the n_a-dimensional Q-vector
embedding of each state. Each cluster is represented by its Chebyshev medoid
— the member minimizing the maximum q_distance to the other members — so
representatives are actual states. Empty clusters are re-seeded to the point
farthest from its center; persistent emptiness is an error.
Throws invalid_argument unless 1 <= n_s <= |states|.
*/
Aggregation cluster_states(const QFunction& q, const std::vector<StatePoint>& states,
                           int n_s, std::uint64_t seed, int restarts = 10);

/**
epsilon_hat_dis: exact max over covered states and actions of
|Q(s,a) - Q(Pi(s),a)| — the clustering objective, and the Q
error when q is the true Q-function.
*/
double aggregation_q_error(const QFunction& q, const Aggregation& aggregation);

/**
Value-based baseline (NF-MLE-SA): per-dimension quantile cuts forming a
product grid of about n_s cells; each nonempty cell is represented by the
member nearest its coordinate-wise median. The dummy-state experiment
contrasts this with cluster_states, which learns to ignore payoff-irrelevant
dimensions.
*/
Aggregation ad_hoc_aggregation(const std::vector<StatePoint>& states, int n_s);

/** Identity aggregation (every state its own representative). */
Aggregation identity_aggregation(const std::vector<StatePoint>& states,
                                 const QFunction* q = nullptr);

void save_aggregation(const Aggregation& aggregation, const std::string& path);
Aggregation load_aggregation(const std::string& path);

}  // namespace samq
