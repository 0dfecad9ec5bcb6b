#include "samq/env_bus.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "samq/aggregation.hpp"
#include "samq/rng.hpp"

namespace samq {

void BusEnvConfig::validate() const {
    if (mileage_grid_size < 2)
        throw std::invalid_argument("BusEnvConfig: mileage_grid_size must be at least 2");
    if (theta_true.size() != 2)
        throw std::invalid_argument("BusEnvConfig: theta_true must have two entries");
    theta_true.validate();
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("BusEnvConfig: gamma must lie in [0,1)");
    if (drift.size() < 2)
        throw std::invalid_argument("BusEnvConfig: drift needs at least two increments");
    double total = 0.0;
    for (double p : drift) {
        if (p < 0.0)
            throw std::invalid_argument("BusEnvConfig: drift probabilities must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("BusEnvConfig: drift probabilities must sum to one");
    if (dummy_dims < 0)
        throw std::invalid_argument("BusEnvConfig: dummy_dims must be nonnegative");
    if (dummy_dims > 0) {
        if (dummy_grid_size < 2)
            throw std::invalid_argument("BusEnvConfig: dummy_grid_size must be at least 2");
        if (dummy_range.second <= dummy_range.first)
            throw std::invalid_argument("BusEnvConfig: dummy_range must be nonempty");
    }
}

double BusEnvConfig::mileage_value(int grid_idx) const {
    const double top = mileage_max > 0.0 ? mileage_max
                                         : static_cast<double>(mileage_grid_size - 1);
    return static_cast<double>(grid_idx) * top / static_cast<double>(mileage_grid_size - 1);
}

nlohmann::json BusEnvConfig::to_json() const {
    nlohmann::json j{{"env", "bus"},
                     {"mileage_grid_size", mileage_grid_size},
                     {"mileage_max", mileage_max},
                     {"theta_true", theta_true.values},
                     {"gamma", gamma},
                     {"drift", drift},
                     {"dummy_dims", dummy_dims},
                     {"dummy_range", {dummy_range.first, dummy_range.second}},
                     {"dummy_grid_size", dummy_grid_size},
                     {"r_max", r_max}};
    if (theta_true.has_bounds()) {
        j["theta_lower"] = theta_true.lower;
        j["theta_upper"] = theta_true.upper;
    }
    return j;
}

BusEnvConfig BusEnvConfig::from_json(const nlohmann::json& j) {
    BusEnvConfig c;
    c.mileage_grid_size = j.value("mileage_grid_size", c.mileage_grid_size);
    c.mileage_max = j.value("mileage_max", c.mileage_max);
    if (j.contains("theta_true"))
        c.theta_true = ThetaVector(j.at("theta_true").get<std::vector<double>>());
    if (j.contains("theta_lower")) {
        c.theta_true.lower = j.at("theta_lower").get<std::vector<double>>();
        c.theta_true.upper = j.at("theta_upper").get<std::vector<double>>();
    }
    c.gamma = j.value("gamma", c.gamma);
    if (j.contains("drift")) c.drift = j.at("drift").get<std::vector<double>>();
    c.dummy_dims = j.value("dummy_dims", c.dummy_dims);
    if (j.contains("dummy_range")) {
        auto r = j.at("dummy_range").get<std::vector<double>>();
        if (r.size() != 2)
            throw std::invalid_argument("BusEnvConfig: dummy_range must have two entries");
        c.dummy_range = {r[0], r[1]};
    }
    c.dummy_grid_size = j.value("dummy_grid_size", c.dummy_grid_size);
    c.r_max = j.value("r_max", c.r_max);
    c.validate();
    return c;
}

MdpSpec make_bus_env(const BusEnvConfig& config) {
    config.validate();
    const int m = config.mileage_grid_size;
    const int k = config.dummy_dims > 0 ? config.dummy_grid_size : 1;
    const int dummies = config.dummy_dims;

    // Dummy coordinates live on grid midpoints so quantile-style cuts never
    // coincide with a sample value.
    std::vector<double> dummy_levels(static_cast<std::size_t>(k));
    if (dummies > 0) {
        const double lo = config.dummy_range.first;
        const double width = (config.dummy_range.second - lo) / static_cast<double>(k);
        for (int i = 0; i < k; ++i)
            dummy_levels[static_cast<std::size_t>(i)] = lo + (static_cast<double>(i) + 0.5) * width;
    }

    std::size_t n_states = static_cast<std::size_t>(m);
    for (int d = 0; d < dummies; ++d) n_states *= static_cast<std::size_t>(k);

    MdpSpec mdp;
    mdp.gamma = config.gamma;
    mdp.actions = {"continue", "replace"};
    mdp.states.reserve(n_states);

    // Row-major product enumeration, mileage slowest.
    std::vector<int> digits(static_cast<std::size_t>(dummies), 0);
    for (int j = 0; j < m; ++j) {
        std::fill(digits.begin(), digits.end(), 0);
        while (true) {
            StatePoint s(1 + static_cast<std::size_t>(dummies));
            s[0] = config.mileage_value(j);
            for (int d = 0; d < dummies; ++d)
                s[1 + static_cast<std::size_t>(d)] =
                    dummy_levels[static_cast<std::size_t>(digits[static_cast<std::size_t>(d)])];
            mdp.states.push_back(std::move(s));
            int pos = dummies - 1;
            while (pos >= 0 && ++digits[static_cast<std::size_t>(pos)] == k) {
                digits[static_cast<std::size_t>(pos)] = 0;
                --pos;
            }
            if (pos < 0) break;
        }
    }
    mdp.reindex();

    // Mileage masses: continue drifts up with the top index absorbing
    // overflow; replace resets to zero and then drifts.
    const int n_inc = static_cast<int>(config.drift.size());
    auto mileage_mass = [&](int from, int action) {
        std::vector<std::pair<int, double>> mass;
        const int base = action == 0 ? from : 0;
        for (int inc = 0; inc < n_inc; ++inc) {
            const double p = config.drift[static_cast<std::size_t>(inc)];
            if (p <= 0.0) continue;
            const int to = std::min(base + inc, m - 1);
            bool merged = false;
            for (auto& entry : mass)
                if (entry.first == to) {
                    entry.second += p;
                    merged = true;
                    break;
                }
            if (!merged) mass.emplace_back(to, p);
        }
        return mass;
    };

    std::size_t dummy_cells = 1;
    for (int d = 0; d < dummies; ++d) dummy_cells *= static_cast<std::size_t>(k);
    const double cell_p = 1.0 / static_cast<double>(dummy_cells);

    mdp.transition.assign(2, Eigen::SparseMatrix<double, Eigen::RowMajor>(
                                 static_cast<Eigen::Index>(n_states),
                                 static_cast<Eigen::Index>(n_states)));
    for (int a = 0; a < 2; ++a) {
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(n_states * static_cast<std::size_t>(n_inc) * dummy_cells);
        for (std::size_t s = 0; s < n_states; ++s) {
            const int from_mileage = static_cast<int>(s / dummy_cells);
            for (const auto& [to_mileage, p] : mileage_mass(from_mileage, a)) {
                const std::size_t block = static_cast<std::size_t>(to_mileage) * dummy_cells;
                for (std::size_t c = 0; c < dummy_cells; ++c)
                    triplets.emplace_back(static_cast<Eigen::Index>(s),
                                          static_cast<Eigen::Index>(block + c), p * cell_p);
            }
        }
        mdp.transition[static_cast<std::size_t>(a)].setFromTriplets(triplets.begin(),
                                                                    triplets.end());
    }

    mdp.reward_model = make_reward_model("bus_linear", {{"mileage_coord", 0}});

    // A reward magnitude cap follows from the parameter box when one is given.
    const double top_mileage = config.mileage_value(m - 1);
    if (config.r_max > 0.0) {
        mdp.r_max = config.r_max;
    } else if (config.theta_true.has_bounds()) {
        const auto& th = config.theta_true;
        const double b0 = std::max(std::abs(th.lower[0]), std::abs(th.upper[0]));
        const double b1 = std::max(std::abs(th.lower[1]), std::abs(th.upper[1]));
        mdp.r_max = std::max(b0 * top_mileage, b1);
    }
    mdp.validate();
    return mdp;
}

Dataset simulate(const MdpSpec& mdp, const ThetaVector& theta_true, std::size_t n,
                 std::uint64_t seed, const SimulateOptions& opts) {
    if (n == 0)
        throw std::invalid_argument("simulate: n must be positive");
    mdp.validate();
    const auto solution = soft_q_solve(mdp, theta_true, opts.solve_tol);
    const std::size_t n_states = mdp.states.size();
    const int n_a = mdp.n_actions();

    std::vector<double> init = opts.init_weights;
    if (init.empty()) init.assign(n_states, 1.0);
    if (init.size() != n_states)
        throw std::invalid_argument("simulate: init_weights size must match the state count");

    // Per-state choice probabilities under the soft-optimal policy.
    std::vector<std::vector<double>> pi(n_states);
    for (std::size_t s = 0; s < n_states; ++s)
        pi[s] = choice_prob(solution.q, static_cast<int>(s));

    Rng rng(seed);
    Dataset dataset;
    dataset.transitions.reserve(n);
    std::vector<double> row_probs;
    std::vector<std::size_t> row_cols;
    std::size_t current = 0;
    bool have_current = false;

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s_idx =
            (opts.chained && have_current) ? current : rng.discrete(init);
        const int a = static_cast<int>(rng.discrete(pi[s_idx]));

        row_probs.clear();
        row_cols.clear();
        const auto& P = mdp.transition[static_cast<std::size_t>(a)];
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                 P, static_cast<Eigen::Index>(s_idx));
             it; ++it) {
            row_cols.push_back(static_cast<std::size_t>(it.col()));
            row_probs.push_back(it.value());
        }
        if (row_probs.empty())
            throw std::runtime_error("simulate: state has no outgoing transitions");
        const std::size_t next = row_cols[rng.discrete(row_probs)];

        Transition t;
        t.s = mdp.states[s_idx];
        t.a = a;
        t.s_next = mdp.states[next];
        dataset.transitions.push_back(std::move(t));
        current = next;
        have_current = true;
    }

    dataset.meta.gamma = mdp.gamma;
    dataset.meta.n_actions = n_a;
    dataset.meta.seed = seed;
    dataset.meta.n = n;
    dataset.meta.env_config = opts.env_config;
    dataset.meta.env_digest = config_digest(opts.env_config);
    dataset.validate();
    return dataset;
}

double empirical_coverage(const Dataset& dataset, const Aggregation& aggregation) {
    dataset.validate();
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(aggregation.n_s, dataset.meta.n_actions);
    for (const auto& t : dataset.transitions)
        counts(aggregation.project_index(t.s), t.a) += 1.0;
    return counts.minCoeff() / static_cast<double>(dataset.size());
}

}  // namespace samq
