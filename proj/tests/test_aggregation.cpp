#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "samq/aggregation.hpp"
#include "samq/env_bus.hpp"
#include "samq/irl.hpp"
#include "samq/mdp.hpp"
#include "samq/rng.hpp"

using namespace samq;

namespace {

/** One-dimensional states 0..n-1 with prescribed Q rows. */
QFunction line_q(const std::vector<std::vector<double>>& rows) {
    QFunction q;
    const auto n_a = static_cast<Eigen::Index>(rows.front().size());
    q.table = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), n_a);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        q.index.add({static_cast<double>(i)});
        for (Eigen::Index a = 0; a < n_a; ++a)
            q.table(static_cast<Eigen::Index>(i), a) = rows[i][static_cast<std::size_t>(a)];
    }
    return q;
}

/** Chebyshev distance between two Q rows of a one-dimensional instance. */
double cheb(const QFunction& q, int i, int j) {
    return (q.table.row(i) - q.table.row(j)).cwiseAbs().maxCoeff();
}

/**
Exact minimax clustering error with k representatives: minimize over all
representative subsets the max over states of the Chebyshev distance to the
nearest representative. Exhaustive over subsets, so keep n small.
*/
double optimal_epsilon(const QFunction& q, int k) {
    const int n = q.index.size();
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) != k) continue;
        double eps = 0.0;
        for (int i = 0; i < n; ++i) {
            double nearest = std::numeric_limits<double>::infinity();
            for (int r = 0; r < n; ++r)
                if (mask & (1u << r)) nearest = std::min(nearest, cheb(q, i, r));
            eps = std::max(eps, nearest);
        }
        best = std::min(best, eps);
    }
    return best;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("aggregation") {

TEST_CASE("the aggregation distance is Chebyshev on Q rows") {
    const auto q = line_q({{1.0, 2.0}, {3.0, 1.0}});
    CHECK(q_distance(q, {0.0}, {1.0}) == 2.0);
    CHECK(q_distance(q, {1.0}, {0.0}) == 2.0);
    CHECK(q_distance(q, {0.0}, {0.0}) == 0.0);
    CHECK_THROWS_AS(q_distance(q, {0.0}, {9.0}), std::invalid_argument);
}

TEST_CASE("clustering separates well-split Q vectors") {
    const auto q = line_q({{0.0, 0.0}, {0.01, 0.0}, {5.0, 5.0}, {5.01, 5.0}});
    const std::vector<StatePoint> states = {{0.0}, {1.0}, {2.0}, {3.0}};
    const auto agg = cluster_states(q, states, 2, 42, 10);

    CHECK(agg.n_s == 2);
    CHECK(agg.assign[0] == agg.assign[1]);
    CHECK(agg.assign[2] == agg.assign[3]);
    CHECK(agg.assign[0] != agg.assign[2]);
    // medoid ties break to the lowest state row
    const bool low_first = agg.project({1.0}) == StatePoint{0.0};
    CHECK(low_first);
    CHECK(agg.project({3.0}) == StatePoint{2.0});
    CHECK(aggregation_q_error(q, agg) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("singleton clustering is exact") {
    const auto q = line_q({{0.0, 0.0}, {0.01, 0.0}, {5.0, 5.0}, {5.01, 5.0}});
    const std::vector<StatePoint> states = {{0.0}, {1.0}, {2.0}, {3.0}};
    const auto agg = cluster_states(q, states, 4, 1, 3);
    CHECK(agg.n_s == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(agg.assign[static_cast<std::size_t>(i)] == i);
        CHECK(agg.representatives[static_cast<std::size_t>(i)] ==
              states[static_cast<std::size_t>(i)]);
    }
    CHECK(aggregation_q_error(q, agg) == 0.0);
}

TEST_CASE("a single cluster picks the exhaustive Chebyshev medoid") {
    const auto q = line_q({{0.0, 0.0}, {0.01, 0.0}, {5.0, 5.0}, {5.01, 5.0}});
    const std::vector<StatePoint> states = {{0.0}, {1.0}, {2.0}, {3.0}};
    const auto agg = cluster_states(q, states, 1, 5, 2);
    CHECK(agg.n_s == 1);
    // rows 1 and 2 tie at radius 5; either is a valid minimax medoid
    const bool valid_medoid =
        agg.representatives[0] == StatePoint{1.0} || agg.representatives[0] == StatePoint{2.0};
    CHECK(valid_medoid);
    CHECK(aggregation_q_error(q, agg) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(aggregation_q_error(q, agg) == doctest::Approx(optimal_epsilon(q, 1)).epsilon(1e-12));
}

TEST_CASE("clustered errors respect the exhaustive optimum") {
    const auto q =
        line_q({{0.0, 0.0}, {0.1, 0.0}, {1.0, 0.0}, {1.1, 0.0}, {3.0, 0.0}, {3.2, 0.0}});
    std::vector<StatePoint> states;
    for (int i = 0; i < 6; ++i) states.push_back({static_cast<double>(i)});

    std::vector<double> clustered, optimal;
    for (int k = 1; k <= 6; ++k) {
        clustered.push_back(aggregation_q_error(q, cluster_states(q, states, k, 99, 20)));
        optimal.push_back(optimal_epsilon(q, k));
    }
    for (int k = 0; k < 6; ++k) {
        CHECK(clustered[static_cast<std::size_t>(k)] >=
              optimal[static_cast<std::size_t>(k)] - 1e-12);
        if (k > 0) {
            // more representatives never hurt, for the optimum and in practice
            CHECK(optimal[static_cast<std::size_t>(k)] <=
                  optimal[static_cast<std::size_t>(k - 1)] + 1e-12);
            CHECK(clustered[static_cast<std::size_t>(k)] <=
                  clustered[static_cast<std::size_t>(k - 1)] + 1e-12);
        }
    }
    CHECK(clustered[0] == doctest::Approx(optimal[0]).epsilon(1e-12));
    CHECK(clustered[5] == 0.0);
}

TEST_CASE("converged k-means assignments are locally optimal") {
    Rng rng(314159);
    QFunction q;
    q.table = Eigen::MatrixXd(40, 3);
    std::vector<StatePoint> states;
    for (int i = 0; i < 40; ++i) {
        states.push_back({static_cast<double>(i)});
        q.index.add(states.back());
        for (int a = 0; a < 3; ++a) q.table(i, a) = rng.uniform(-5.0, 5.0);
    }
    const int k = 5;
    const auto agg = cluster_states(q, states, k, 7, 10);

    // recompute the cluster means implied by the final assignment
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(k, 3);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < 40; ++i) {
        means.row(agg.assign[static_cast<std::size_t>(i)]) += q.table.row(i);
        counts(agg.assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
        REQUIRE(counts(c) > 0.0);
        means.row(c) /= counts(c);
    }
    // every point sits with its nearest mean (no improving move remains)
    for (int i = 0; i < 40; ++i) {
        const double own = (q.table.row(i) - means.row(agg.assign[static_cast<std::size_t>(i)]))
                               .squaredNorm();
        for (int c = 0; c < k; ++c)
            CHECK(own <= (q.table.row(i) - means.row(c)).squaredNorm() + 1e-9);
    }
}

TEST_CASE("projection is idempotent and total on covered states") {
    const auto q = line_q({{0.0, 0.0}, {0.4, 0.1}, {2.0, 2.0}, {2.2, 1.9}, {4.0, 0.0}});
    std::vector<StatePoint> states;
    for (int i = 0; i < 5; ++i) states.push_back({static_cast<double>(i)});
    const auto agg = cluster_states(q, states, 3, 11, 10);

    for (const auto& s : states) {
        const auto& rep = agg.project(s);
        CHECK(agg.project(rep) == rep);
        const int c = agg.project_index(s);
        CHECK(agg.representatives[static_cast<std::size_t>(c)] == rep);
    }
}

TEST_CASE("clustered aggregations extend to Q-known states via the fallback") {
    const auto q = line_q({{0.0, 0.0}, {0.1, 0.0}, {5.0, 5.0}, {5.1, 5.0}, {4.8, 4.9}});
    // cluster only the first four states; the fifth stays outside Pi's table
    const std::vector<StatePoint> states = {{0.0}, {1.0}, {2.0}, {3.0}};
    const auto agg = cluster_states(q, states, 2, 17, 10);

    const int c = agg.project_index({4.0});  // known to q, unknown to Pi
    CHECK(c == agg.project_index({2.0}));    // nearest in Q space
    // a point the Q estimate has never seen cannot be projected
    CHECK_THROWS_AS(agg.project_index({9.0}), std::invalid_argument);
}

TEST_CASE("clustering validates its inputs") {
    const auto q = line_q({{0.0, 0.0}, {1.0, 0.0}});
    const std::vector<StatePoint> states = {{0.0}, {1.0}};
    CHECK_THROWS_AS(cluster_states(q, states, 0, 1, 10), std::invalid_argument);
    CHECK_THROWS_AS(cluster_states(q, states, 3, 1, 10), std::invalid_argument);
    CHECK_THROWS_AS(cluster_states(q, states, 1, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(cluster_states(q, {}, 1, 1, 10), std::invalid_argument);
    CHECK_THROWS_AS(cluster_states(q, {{0.0}, {0.0}}, 1, 1, 10), std::invalid_argument);
}

TEST_CASE("ad-hoc grids cut at quantiles with ties to the left") {
    std::vector<StatePoint> states;
    for (int i = 0; i < 100; ++i) states.push_back({static_cast<double>(i)});
    const auto agg = ad_hoc_aggregation(states, 2);

    REQUIRE(agg.n_s == 2);
    // the median cut lands at 50 and a value equal to the cut stays left
    CHECK(agg.project_index({50.0}) == agg.project_index({0.0}));
    CHECK(agg.project_index({51.0}) == agg.project_index({99.0}));
    // each cell is represented by the member nearest its median
    CHECK(agg.representatives[0] == StatePoint{25.0});
    CHECK(agg.representatives[1] == StatePoint{75.0});

    SUBCASE("the cell fallback covers unseen points") {
        CHECK(agg.project_index({-3.5}) == agg.project_index({0.0}));
        CHECK(agg.project_index({200.0}) == agg.project_index({99.0}));
        CHECK_THROWS_AS(agg.project_index({1.0, 2.0}), std::invalid_argument);
    }
}

TEST_CASE("ad-hoc grids split every effective dimension") {
    std::vector<StatePoint> states;
    for (int x = 0; x < 10; ++x)
        for (int y = 0; y < 10; ++y)
            states.push_back({static_cast<double>(x), static_cast<double>(y)});
    const auto agg = ad_hoc_aggregation(states, 4);

    REQUIRE(agg.n_s == 4);
    // cells are the quadrants of the 2-d median cuts at 5
    for (std::size_t i = 0; i < states.size(); ++i) {
        const bool hi_x = states[i][0] > 5.0;
        const bool hi_y = states[i][1] > 5.0;
        const int expected = (hi_x ? 2 : 0) + (hi_y ? 1 : 0);
        CHECK(agg.assign[i] == expected);
    }
    for (int c = 0; c < 4; ++c) {
        const auto& rep = agg.representatives[static_cast<std::size_t>(c)];
        CHECK((rep[0] > 5.0) == (c >= 2));
        CHECK((rep[1] > 5.0) == (c % 2 == 1));
    }

    SUBCASE("constant dimensions are never split") {
        std::vector<StatePoint> flat;
        for (int x = 0; x < 10; ++x) flat.push_back({static_cast<double>(x), 7.0});
        const auto agg_flat = ad_hoc_aggregation(flat, 4);
        CHECK(agg_flat.n_s == 4);
        for (const auto& rep : agg_flat.representatives) CHECK(rep[1] == 7.0);
    }
}

TEST_CASE("ad-hoc aggregation validates its inputs") {
    CHECK_THROWS_AS(ad_hoc_aggregation({}, 1), std::invalid_argument);
    CHECK_THROWS_AS(ad_hoc_aggregation({{0.0}, {1.0}}, 0), std::invalid_argument);
    CHECK_THROWS_AS(ad_hoc_aggregation({{0.0}, {1.0}}, 3), std::invalid_argument);
    CHECK_THROWS_AS(ad_hoc_aggregation({{0.0}, {0.0}}, 1), std::invalid_argument);
}

TEST_CASE("identity aggregation fixes every state with zero error") {
    const auto q = line_q({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    const std::vector<StatePoint> states = {{0.0}, {1.0}, {2.0}};
    const auto agg = identity_aggregation(states, &q);
    CHECK(agg.n_s == 3);
    for (const auto& s : states) CHECK(agg.project(s) == s);
    CHECK(aggregation_q_error(q, agg) == 0.0);
    CHECK(agg.rep_q.rows() == 3);
    CHECK(agg.rep_q(1, 1) == 4.0);
    CHECK_THROWS_AS(identity_aggregation({}), std::invalid_argument);
    CHECK_THROWS_AS(identity_aggregation({{0.0}, {0.0}}), std::invalid_argument);
}

TEST_CASE("learned aggregations beat the value grid on payoff-irrelevant dimensions") {
    const auto env = test_helpers::small_bus_env(6, 5.0, 1, 5, {0.4, 3.0});
    const auto mdp = make_bus_env(env);

    int cluster_wins = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto d = simulate(mdp, env.theta_true, 20000, seed);
        const auto est = estimate_q(d, env.gamma);
        std::vector<StatePoint> support;
        for (int i = 0; i < est.q.index.size(); ++i) support.push_back(est.q.index.state(i));

        const auto learned = cluster_states(est.q, support, 6, derive_seed(seed, 1), 10);
        const auto grid = ad_hoc_aggregation(support, 6);
        if (aggregation_q_error(est.q, learned) < aggregation_q_error(est.q, grid))
            ++cluster_wins;
    }
    CHECK(cluster_wins >= 8);  // the grid wastes cells on the dummy dimension
}

TEST_CASE("aggregation structures survive the JSON round trip") {
    const auto q = line_q({{0.0, 0.0}, {0.1, 0.0}, {5.0, 5.0}, {5.1, 5.0}});
    const std::vector<StatePoint> states = {{0.0}, {1.0}, {2.0}, {3.0}};
    const auto agg = cluster_states(q, states, 2, 23, 10);

    const auto path = temp_path("samq_aggregation_roundtrip.json");
    save_aggregation(agg, path);
    const auto back = load_aggregation(path);
    std::remove(path.c_str());

    CHECK(back.n_s == agg.n_s);
    CHECK(back.assign == agg.assign);
    CHECK(back.representatives == agg.representatives);
    for (const auto& s : states) CHECK(back.project(s) == agg.project(s));
    // the serialized form carries no fallback, so unseen states are an error
    CHECK_THROWS_AS(back.project_index({9.0}), std::invalid_argument);
}

TEST_CASE("aggregation validation catches inconsistent structures") {
    const std::vector<StatePoint> states = {{0.0}, {1.0}, {2.0}};
    auto agg = identity_aggregation(states);

    SUBCASE("representative count must match n_s") {
        agg.n_s = 2;
        CHECK_THROWS_AS(agg.validate(), std::invalid_argument);
    }
    SUBCASE("assignments must stay in range") {
        agg.assign[1] = 7;
        CHECK_THROWS_AS(agg.validate(), std::invalid_argument);
    }
    SUBCASE("representatives must be distinct") {
        agg.representatives[1] = agg.representatives[0];
        CHECK_THROWS_AS(agg.validate(), std::invalid_argument);
    }
    SUBCASE("representatives must be fixed points of Pi") {
        agg.assign[2] = 0;
        CHECK_THROWS_AS(agg.validate(), std::invalid_argument);
    }
    SUBCASE("loading rejects corrupted structures") {
        auto j = agg.to_json();
        j["assign"][2] = 0;
        CHECK_THROWS_AS(Aggregation::from_json(j), std::invalid_argument);
    }
}

}  // TEST_SUITE
