#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "samq/aggregation.hpp"
#include "samq/common.hpp"
#include "samq/diagnostics.hpp"
#include "samq/env_bus.hpp"
#include "samq/rng.hpp"

using namespace samq;

namespace {

/** Verbatim re-transcription of the Theorem 2 terms, kept independent of the
library so a transcription slip in either copy fails the comparison. */
Theorem2Bound reference_theorem2(const Theorem2Inputs& p, double n, double delta, double card) {
    const double cells = static_cast<double>(p.n_s) * static_cast<double>(p.n_a);
    const double omg = 1.0 - p.gamma;
    const double r_plus = p.r_max + 1.0;
    Theorem2Bound b;
    b.bias = 4.0 / (p.c_h * omg) *
             (r_plus / omg * 4.0 / (std::pow(p.n_s, 1.0 / p.n_a) - 1.0) + 2.0 * p.c_q +
              p.c_clustering);
    const double t1 = 4.0 * r_plus / (omg * p.c_h) * std::sqrt(std::log(4.0 * card / delta) /
                                                               (2.0 * n));
    const double t2 = r_plus / (omg * omg * p.c_h) *
                      std::sqrt(std::log(8.0 * cells * card / delta) / (2.0 * n)) * 4.0 /
                      (p.c_uni - std::sqrt(std::log(4.0 * cells * card / delta) / (2.0 * n)));
    b.variance = t1 + t2;
    b.total = b.bias + b.variance;
    return b;
}

double precondition_margin(const Theorem2Inputs& p, double n, double delta, double card) {
    const double cells = static_cast<double>(p.n_s) * static_cast<double>(p.n_a);
    return n * p.c_uni - std::sqrt(n * std::log(4.0 * cells * card / delta) / 2.0);
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("concavity estimates recover quadratic curvature") {
    const Objective parabola = [](const std::vector<double>& v) {
        return -(v[0] - 1.0) * (v[0] - 1.0);
    };
    CHECK(estimate_concavity(parabola, {1.0}) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(estimate_concavity(parabola, {5.0}) == doctest::Approx(2.0).epsilon(1e-6));

    SUBCASE("the reported constant is the smallest eigenvalue") {
        const Objective bowl = [](const std::vector<double>& v) {
            return -3.0 * v[0] * v[0] - 0.5 * v[1] * v[1] + 0.2 * v[0] * v[1];
        };
        // -H = [[6, -0.2], [-0.2, 1]]
        const double expected = (7.0 - std::sqrt(25.0 + 4.0 * 0.04)) / 2.0;
        CHECK(estimate_concavity(bowl, {0.0, 0.0}) == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("finite-difference Hessians are symmetric by construction") {
    const Objective f = [](const std::vector<double>& v) {
        return -v[0] * v[0] - 2.0 * v[1] * v[1] - 0.7 * v[0] * v[1] +
               0.3 * v[0] * v[0] * v[0] * v[1];
    };
    const auto h = fd_hessian(f, {0.4, -1.3}, 1e-4);
    CHECK(h(0, 1) == h(1, 0));
    CHECK(min_eigenvalue(Eigen::MatrixXd(Eigen::Vector2d(3.0, -1.0).asDiagonal())) == -1.0);
}

TEST_CASE("the concavity constant is positive on simulated bus data") {
    const auto env = test_helpers::small_bus_env(5, 4.0, 0, 11, {0.4, 3.0});
    const auto mdp = make_bus_env(env);
    const auto d = simulate(mdp, env.theta_true, 5000, 9);
    const auto agg = std::make_shared<const Aggregation>(identity_aggregation(d.support().states()));
    CHECK(estimate_concavity(d, agg, *mdp.reward_model, env.theta_true, env.gamma) > 0.0);
}

TEST_CASE("the population model reproduces the exact likelihood at the truth") {
    Rng rng(77);
    const auto mdp = test_helpers::make_random_mdp(rng, 4, 2, 0.8);
    const ThetaVector theta({0.5, -0.3});
    const auto agg = identity_aggregation(mdp.states);
    const PopulationModel pop(mdp, agg, theta);

    // direct cross-entropy oracle: sum_s mu(s) sum_a pi* log pi*
    const auto truth = soft_q_solve(mdp, theta, 1e-12, 100000);
    double oracle = 0.0;
    for (int s = 0; s < mdp.n_states(); ++s) {
        const auto pi = choice_prob(truth.q, s);
        for (double p : pi) oracle += 0.25 * p * std::log(p);
    }
    CHECK(pop.exact_likelihood_at_star() == doctest::Approx(oracle).epsilon(1e-12));
    // identity aggregation leaves the aggregated operator exact
    CHECK(pop.aggregated_likelihood(theta) ==
          doctest::Approx(pop.exact_likelihood_at_star()).epsilon(1e-9));

    SUBCASE("custom state weights are normalized") {
        const PopulationModel weighted(mdp, agg, theta, {2.0, 1.0, 1.0, 0.0});
        double expected = 0.0;
        const std::vector<double> mu = {0.5, 0.25, 0.25, 0.0};
        for (int s = 0; s < mdp.n_states(); ++s) {
            const auto pi = choice_prob(truth.q, s);
            for (double p : pi) expected += mu[static_cast<std::size_t>(s)] * p * std::log(p);
        }
        CHECK(weighted.exact_likelihood_at_star() == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("invalid weights are rejected") {
        CHECK_THROWS_AS(PopulationModel(mdp, agg, theta, {1.0, 1.0}), std::invalid_argument);
        CHECK_THROWS_AS(PopulationModel(mdp, agg, theta, {1.0, -1.0, 1.0, 1.0}),
                        std::invalid_argument);
        CHECK_THROWS_AS(PopulationModel(mdp, agg, theta, {0.0, 0.0, 0.0, 0.0}),
                        std::invalid_argument);
    }
}

TEST_CASE("aggregation can only lower the population likelihood at the truth") {
    Rng rng(123);
    const auto mdp = test_helpers::make_random_mdp(rng, 6, 2, 0.85);
    const ThetaVector theta({0.7, 0.2});
    const auto truth = soft_q_solve(mdp, theta, 1e-12, 100000);
    const auto agg = cluster_states(truth.q, mdp.states, 3, 5, 10);
    const PopulationModel pop(mdp, agg, theta);
    CHECK(pop.aggregated_likelihood(theta) <= pop.exact_likelihood_at_star() + 1e-12);
    CHECK(pop.concavity_on_segment(pop.maximize_aggregated_likelihood()) ==
          doctest::Approx(pop.concavity_on_segment(pop.maximize_aggregated_likelihood()))
              .epsilon(1e-12));
    CHECK_THROWS_AS(pop.concavity_on_segment(theta, 0), std::invalid_argument);
}

TEST_CASE("the identity aggregation satisfies the first theorem with both sides zero") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const int n = 2 + static_cast<int>(rng.index(4));
        const auto mdp = test_helpers::make_random_mdp(rng, n, 2, 0.3 + 0.5 * rng.uniform());
        const ThetaVector theta({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
        const auto agg = identity_aggregation(mdp.states);
        const auto rec = theorem1_check(mdp, theta, agg, 0.1);
        CHECK(rec.lhs == 0.0);
        CHECK(rec.rhs == 0.0);
        CHECK(rec.holds);
    }
    Rng rng(1);
    const auto mdp = test_helpers::make_random_mdp(rng, 3, 2, 0.8);
    CHECK_THROWS_AS(theorem1_check(mdp, ThetaVector({0.0, 0.0}),
                                   identity_aggregation(mdp.states), 0.0),
                    std::invalid_argument);
}

TEST_CASE("the first theorem and its lemma chain hold on random instances") {
    int done = 0;
    std::uint64_t seed = 0;
    while (done < 4 && ++seed < 50) {
        Rng rng(seed);
        const int n = 4 + static_cast<int>(rng.index(3));
        const auto mdp = test_helpers::make_random_mdp(rng, n, 2, 0.3 + 0.5 * rng.uniform());
        const ThetaVector theta({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
        const auto truth = soft_q_solve(mdp, theta, 1e-12, 100000);
        const int n_s = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(n - 2)));
        const auto agg = cluster_states(truth.q, mdp.states, n_s, derive_seed(seed, 1), 10);

        const PopulationModel pop(mdp, agg, theta);
        const auto tilde = pop.maximize_aggregated_likelihood();
        const double c_h = pop.concavity_on_segment(tilde);
        if (c_h < 1e-3) continue;  // effectively unidentified draw
        ++done;

        const auto thm1 = theorem1_check(mdp, theta, agg, c_h);
        CHECK(thm1.holds);
        CHECK(thm1.name == "theorem-1");

        const auto lemma = lemma_likelihood_bound_check(mdp, theta, agg, c_h);
        REQUIRE(lemma.size() == 2);
        CHECK(lemma[0].name == "likelihood-bound");
        CHECK(lemma[1].name == "likelihood-gap");
        CHECK(lemma[0].holds);
        CHECK(lemma[1].holds);
        CHECK(lemma[1].lhs >= -1e-12);  // the likelihood gap is nonnegative
        // the chain composes: ||theta_tilde - theta*||^2 <= 4 eps_Q / (c_H (1-gamma))
        CHECK(lemma[0].rhs <= thm1.rhs + 1e-12);
    }
    REQUIRE(done == 4);
}

TEST_CASE("the q error of the true Q is the aggregation error") {
    Rng rng(31);
    const auto mdp = test_helpers::make_random_mdp(rng, 5, 2, 0.7);
    const ThetaVector theta({0.4, -0.6});
    const auto truth = soft_q_solve(mdp, theta, 1e-12, 100000);
    const auto agg = cluster_states(truth.q, mdp.states, 2, 3, 10);
    CHECK(q_error(truth.q, agg) == aggregation_q_error(truth.q, agg));
    CHECK(q_error(truth.q, identity_aggregation(mdp.states)) == 0.0);
}

TEST_CASE("the second theorem evaluates to the worked example") {
    Theorem2Inputs p;
    p.c_h = 1.0;
    p.c_uni = 0.01;
    p.r_max = 1.0;
    p.gamma = 0.95;
    p.n_s = 10;
    p.n_a = 2;
    const auto b = theorem2_bound(p, 1000000, 0.05, 1e6);
    CHECK(b.bias == doctest::Approx(5919.683783350572).epsilon(1e-12));
    CHECK(b.variance == doctest::Approx(1569.964407508744).epsilon(1e-12));
    CHECK(b.total == doctest::Approx(b.bias + b.variance).epsilon(1e-15));
    CHECK(precondition_margin(p, 1e6, 0.05, 1e6) ==
          doctest::Approx(6744.752738562542).epsilon(1e-12));
}

TEST_CASE("the second theorem matches an independent transcription") {
    Rng rng(271828);
    for (int trial = 0; trial < 20; ++trial) {
        Theorem2Inputs p;
        p.c_h = rng.uniform(0.05, 2.0);
        p.c_uni = rng.uniform(0.2, 0.9);
        p.r_max = rng.uniform(0.5, 10.0);
        p.gamma = rng.uniform(0.3, 0.95);
        p.n_s = 2 + static_cast<int>(rng.index(29));
        p.n_a = 2 + static_cast<int>(rng.index(3));
        p.c_q = rng.uniform(0.0, 1.0);
        p.c_clustering = rng.uniform(0.0, 1.0);
        const double delta = rng.uniform(0.01, 0.5);
        const double card = std::pow(10.0, rng.uniform(2.0, 8.0));
        const std::size_t n = 100000000;

        const auto lib = theorem2_bound(p, n, delta, card);
        const auto ref = reference_theorem2(p, static_cast<double>(n), delta, card);
        CHECK(lib.bias == doctest::Approx(ref.bias).epsilon(1e-12));
        CHECK(lib.variance == doctest::Approx(ref.variance).epsilon(1e-12));
        CHECK(lib.total == doctest::Approx(ref.total).epsilon(1e-12));
    }
}

TEST_CASE("the bias shrinks with finer aggregation and the variance with more data") {
    Theorem2Inputs p;
    p.c_h = 0.5;
    p.c_uni = 0.5;
    p.r_max = 2.0;
    p.gamma = 0.9;
    p.n_a = 2;

    double last_bias = std::numeric_limits<double>::infinity();
    for (int n_s : {2, 4, 8, 16, 64, 256}) {
        p.n_s = n_s;
        const auto b = theorem2_bound(p, 1000000, 0.05, 1e4);
        CHECK(b.bias < last_bias);
        last_bias = b.bias;
    }

    p.n_s = 10;
    double last_var = std::numeric_limits<double>::infinity();
    for (std::size_t n : {std::size_t{100000}, std::size_t{10000000},
                          std::size_t{1000000000}, std::size_t{100000000000}}) {
        const auto b = theorem2_bound(p, n, 0.05, 1e4);
        CHECK(b.variance < last_var);
        CHECK(b.total < last_var + b.bias);  // total falls with the variance
        last_var = b.variance;
    }
    CHECK(last_var < 0.05);
}

TEST_CASE("the bound trades bias against variance at an interior aggregation size") {
    // C_uni = 1/(2 n_s n_a) mimics coverage thinning as cells multiply
    auto total_at = [](int n_s) {
        Theorem2Inputs p;
        p.c_h = 1.0;
        p.r_max = 1.0;
        p.gamma = 0.9;
        p.n_a = 2;
        p.n_s = n_s;
        p.c_uni = 1.0 / (2.0 * n_s * 2.0);
        return theorem2_bound(p, 10000000, 0.05, 1e6).total;
    };
    int argmin = 2;
    double best = std::numeric_limits<double>::infinity();
    for (int n_s = 2; n_s <= 199; ++n_s) {
        const double t = total_at(n_s);
        if (t < best) {
            best = t;
            argmin = n_s;
        }
    }
    CHECK(argmin == 52);
    CHECK(best < total_at(2));
    CHECK(best < total_at(199));
}

TEST_CASE("the second theorem refuses undefined regimes") {
    Theorem2Inputs p;
    p.c_h = 1.0;
    p.c_uni = 0.01;
    p.r_max = 1.0;
    p.gamma = 0.95;
    p.n_s = 10;
    p.n_a = 2;

    SUBCASE("a single aggregated state zeroes the bias denominator") {
        p.n_s = 1;
        CHECK_THROWS_AS(theorem2_bound(p, 1000000, 0.05, 1e6), BoundUndefinedError);
    }
    SUBCASE("too little data fails the precondition and carries the margin") {
        try {
            theorem2_bound(p, 1000, 0.05, 1e6);
            FAIL("expected an undefined bound");
        } catch (const BoundUndefinedError& e) {
            CHECK(e.margin == doctest::Approx(precondition_margin(p, 1000.0, 0.05, 1e6))
                                  .epsilon(1e-12));
            CHECK(e.margin < 1.0);
        }
    }
    SUBCASE("malformed constants are arguments errors, not undefined bounds") {
        auto bad = p;
        bad.c_uni = 0.0;
        CHECK_THROWS_AS(theorem2_bound(bad, 1000000, 0.05, 1e6), std::invalid_argument);
        bad = p;
        bad.c_h = -1.0;
        CHECK_THROWS_AS(theorem2_bound(bad, 1000000, 0.05, 1e6), std::invalid_argument);
        CHECK_THROWS_AS(theorem2_bound(p, 0, 0.05, 1e6), std::invalid_argument);
        CHECK_THROWS_AS(theorem2_bound(p, 1000000, 1.5, 1e6), std::invalid_argument);
        CHECK_THROWS_AS(theorem2_bound(p, 1000000, 0.05, 0.5), std::invalid_argument);
    }
}

TEST_CASE("the parameter-set cardinality proxy counts resolution boxes") {
    const ThetaVector theta({0.5, 1.0}, {0.0, 0.0}, {1.0, 2.0});
    CHECK(theta_cardinality_proxy(theta) == doctest::Approx(20000.0).epsilon(1e-12));
    CHECK(theta_cardinality_proxy(theta, 0.1) == doctest::Approx(200.0).epsilon(1e-12));
    // a box narrower than the resolution still counts one point
    const ThetaVector narrow({0.0}, {0.0}, {0.001});
    CHECK(theta_cardinality_proxy(narrow) == 1.0);
    CHECK_THROWS_AS(theta_cardinality_proxy(ThetaVector({1.0})), std::invalid_argument);
    CHECK_THROWS_AS(theta_cardinality_proxy(theta, 0.0), std::invalid_argument);
}

TEST_CASE("the clustering constant compares against the exhaustive optimum") {
    // values {0, 1, 1.2, 3, 3.1}: the hand-built aggregation is suboptimal
    QFunction q;
    q.table = Eigen::MatrixXd(5, 2);
    const std::vector<double> vals = {0.0, 1.0, 1.2, 3.0, 3.1};
    std::vector<StatePoint> states;
    for (int i = 0; i < 5; ++i) {
        states.push_back({static_cast<double>(i)});
        q.index.add(states.back());
        q.table(i, 0) = vals[static_cast<std::size_t>(i)];
        q.table(i, 1) = 0.0;
    }
    Aggregation agg;
    agg.n_s = 2;
    agg.index = StateIndex(states);
    agg.assign = {0, 0, 1, 1, 1};
    agg.representatives = {{0.0}, {3.0}};
    agg.validate();

    // eps_hat(Pi) = max(1.0, 1.8, 0.1) = 1.8; the optimal subset reaches 1.0
    CHECK(aggregation_q_error(q, agg) == doctest::Approx(1.8).epsilon(1e-12));
    const auto c = exact_clustering_constant(q, agg);
    REQUIRE(c.has_value());
    CHECK(*c == doctest::Approx(0.8).epsilon(1e-12));

    SUBCASE("optimal aggregations have zero clustering constant") {
        agg.assign = {0, 1, 1, 1, 1};  // rep {3} covers 1, 1.2, 3.1 within 2.0? no:
        // switch to the truly optimal split {0},{1,1.2},{3,3.1} is n_s=3; here
        // instead verify the constant of a best-of-two split found by search
        const auto best2 = cluster_states(q, states, 2, 12, 20);
        const auto c2 = exact_clustering_constant(q, best2);
        REQUIRE(c2.has_value());
        CHECK(*c2 >= 0.0);
        CHECK(*c2 <= 0.8);  // the learned split is no further from optimal
    }
    SUBCASE("large supports return no value rather than an approximation") {
        QFunction big;
        std::vector<StatePoint> big_states;
        big.table = Eigen::MatrixXd(11, 2);
        for (int i = 0; i < 11; ++i) {
            big_states.push_back({static_cast<double>(i)});
            big.index.add(big_states.back());
            big.table(i, 0) = static_cast<double>(i);
            big.table(i, 1) = 0.0;
        }
        const auto agg_big = cluster_states(big, big_states, 3, 1, 5);
        CHECK(!exact_clustering_constant(big, agg_big).has_value());
        CHECK(exact_clustering_constant(big, agg_big, 11).has_value());
    }
}

TEST_CASE("inequality records and bound reports serialize their fields") {
    const auto good = InequalityRecord::make("demo", 1.0, 2.0);
    CHECK(good.holds);
    const auto tight = InequalityRecord::make("tight", 2.0, 2.0);
    CHECK(tight.holds);
    const auto bad = InequalityRecord::make("broken", 3.0, 2.0);
    CHECK(!bad.holds);

    BoundReport report;
    report.eps_q = 0.25;
    report.gamma = 0.9;
    report.n_s = 4;
    report.n_a = 2;
    report.inequalities = {good, bad};

    const auto j = report.to_json();
    CHECK(j.at("eps_q").get<double>() == 0.25);
    CHECK(j.at("inequalities").size() == 2);
    CHECK(j.at("inequalities")[1].at("holds").get<bool>() == false);

    const auto text = report.table();
    CHECK(text.find("demo") != std::string::npos);
    CHECK(text.find("broken") != std::string::npos);
    CHECK(text.find("yes") != std::string::npos);
    CHECK(text.find("NO") != std::string::npos);
}

}  // TEST_SUITE
