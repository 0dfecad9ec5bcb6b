#include "samq/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "samq/rng.hpp"

namespace samq {

namespace {

double chebyshev(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

/** Chebyshev-nearest row of `reps` to `row`; ties to the lowest index. */
int nearest_rep(const Eigen::MatrixXd& reps, const Eigen::RowVectorXd& row) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < reps.rows(); ++r) {
        const double d = chebyshev(reps.row(r), row);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(r);
        }
    }
    return best;
}

struct KmeansRun {
    std::vector<int> assign;
    double wcss = std::numeric_limits<double>::infinity();
};

KmeansRun lloyd_once(const Eigen::MatrixXd& x, int k, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    Rng rng(seed);

    // k-means++ seeding: the first center uniform, the rest D^2-weighted.
    Eigen::MatrixXd centers(k, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
    Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        std::vector<double> weights(static_cast<std::size_t>(n));
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            weights[static_cast<std::size_t>(i)] = d2(i);
            total += d2(i);
        }
        // All remaining points coincide with chosen centers: fall back to a
        // uniform draw rather than a zero-weight lottery.
        const Eigen::Index pick =
            total > 0.0 ? static_cast<Eigen::Index>(rng.discrete(weights))
                        : static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
        centers.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    KmeansRun run;
    run.assign.assign(static_cast<std::size_t>(n), 0);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    int reseeds = 0;
    const int max_sweeps = 200;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool changed = sweep == 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (x.row(i) - centers.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (run.assign[static_cast<std::size_t>(i)] != best) {
                run.assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        std::fill(counts.begin(), counts.end(), 0);
        for (Eigen::Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(run.assign[static_cast<std::size_t>(i)])];

        // Re-seed an empty cluster to the point farthest from its own center.
        bool reseeded = false;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            if (++reseeds > k + static_cast<int>(n))
                throw std::runtime_error("cluster_states: persistent empty cluster");
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d =
                    (x.row(i) - centers.row(run.assign[static_cast<std::size_t>(i)])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            centers.row(c) = x.row(far);
            reseeded = true;
        }
        if (reseeded) continue;

        if (!changed) break;
        for (int c = 0; c < k; ++c) centers.row(c).setZero();
        for (Eigen::Index i = 0; i < n; ++i)
            centers.row(run.assign[static_cast<std::size_t>(i)]) += x.row(i);
        for (int c = 0; c < k; ++c)
            centers.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }

    run.wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        run.wcss += (x.row(i) - centers.row(run.assign[static_cast<std::size_t>(i)])).squaredNorm();
    return run;
}

nlohmann::json points_to_json(const std::vector<StatePoint>& points) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : points) arr.push_back(p);
    return arr;
}

std::vector<StatePoint> points_from_json(const nlohmann::json& arr) {
    std::vector<StatePoint> points;
    points.reserve(arr.size());
    for (const auto& p : arr) points.push_back(p.get<StatePoint>());
    return points;
}

}  // namespace

int Aggregation::project_index(const StatePoint& s) const {
    if (index.contains(s)) return assign[static_cast<std::size_t>(index.at(s))];
    if (fallback) return fallback(s);
    throw std::invalid_argument("Aggregation: state outside the covered set and no fallback");
}

const StatePoint& Aggregation::project(const StatePoint& s) const {
    return representatives[static_cast<std::size_t>(project_index(s))];
}

void Aggregation::validate() const {
    if (n_s < 1)
        throw std::invalid_argument("Aggregation: n_s must be positive");
    if (static_cast<int>(representatives.size()) != n_s)
        throw std::invalid_argument("Aggregation: representative count disagrees with n_s");
    if (static_cast<std::size_t>(index.size()) != assign.size())
        throw std::invalid_argument("Aggregation: assign length disagrees with the covered set");
    if (index.size() < n_s)
        throw std::invalid_argument("Aggregation: fewer covered states than representatives");
    for (int a : assign)
        if (a < 0 || a >= n_s)
            throw std::invalid_argument("Aggregation: assignment index out of range");
    StateIndex distinct;
    for (const auto& r : representatives) distinct.add(r);
    if (distinct.size() != n_s)
        throw std::invalid_argument("Aggregation: representatives must be distinct");
    // Pi must fix its own representatives (idempotence).
    for (int c = 0; c < n_s; ++c) {
        const auto& rep = representatives[static_cast<std::size_t>(c)];
        if (!index.contains(rep) || assign[static_cast<std::size_t>(index.at(rep))] != c)
            throw std::invalid_argument("Aggregation: representative not fixed by Pi");
    }
    if (rep_q.size() > 0 && rep_q.rows() != n_s)
        throw std::invalid_argument("Aggregation: rep_q row count disagrees with n_s");
}

nlohmann::json Aggregation::to_json() const {
    return nlohmann::json{{"n_s", n_s},
                          {"representatives", points_to_json(representatives)},
                          {"states", points_to_json(index.states())},
                          {"assign", assign}};
}

Aggregation Aggregation::from_json(const nlohmann::json& j) {
    Aggregation agg;
    agg.n_s = j.at("n_s").get<int>();
    agg.representatives = points_from_json(j.at("representatives"));
    agg.index = StateIndex(points_from_json(j.at("states")));
    agg.assign = j.at("assign").get<std::vector<int>>();
    agg.validate();
    return agg;
}

double q_distance(const QFunction& q, const StatePoint& s, const StatePoint& s_prime) {
    return chebyshev(q.row_of(s), q.row_of(s_prime));
}

Aggregation cluster_states(const QFunction& q, const std::vector<StatePoint>& states,
                           int n_s, std::uint64_t seed, int restarts) {
    if (states.empty())
        throw std::invalid_argument("cluster_states: no states to cluster");
    if (n_s < 1 || n_s > static_cast<int>(states.size()))
        throw std::invalid_argument("cluster_states: need 1 <= n_s <= |states|");
    if (restarts < 1)
        throw std::invalid_argument("cluster_states: restarts must be positive");

    const int n = static_cast<int>(states.size());
    const int n_a = q.n_actions();
    Eigen::MatrixXd x(n, n_a);
    for (int i = 0; i < n; ++i) x.row(i) = q.row_of(states[static_cast<std::size_t>(i)]);

    KmeansRun best;
    if (n_s == n) {
        // Singleton clusters: k-means is a no-op.
        best.assign.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) best.assign[static_cast<std::size_t>(i)] = i;
        best.wcss = 0.0;
    } else {
        for (int r = 0; r < restarts; ++r) {
            auto run = lloyd_once(x, n_s, derive_seed(seed, static_cast<std::uint64_t>(r)));
            if (run.wcss < best.wcss) best = std::move(run);
        }
    }

    // Members per cluster, in state order.
    std::vector<std::vector<int>> members(static_cast<std::size_t>(n_s));
    for (int i = 0; i < n; ++i)
        members[static_cast<std::size_t>(best.assign[static_cast<std::size_t>(i)])].push_back(i);

    Aggregation agg;
    agg.n_s = n_s;
    agg.index = StateIndex(states);
    if (agg.index.size() != n)
        throw std::invalid_argument("cluster_states: duplicate states");
    agg.assign = best.assign;
    agg.representatives.resize(static_cast<std::size_t>(n_s));
    agg.rep_q = Eigen::MatrixXd(n_s, n_a);
    for (int c = 0; c < n_s; ++c) {
        const auto& m = members[static_cast<std::size_t>(c)];
        // Chebyshev medoid: the member minimizing its maximum q_distance to
        // the rest of the cluster, so ties break to the lowest state row.
        int medoid = m.front();
        double medoid_radius = std::numeric_limits<double>::infinity();
        for (int i : m) {
            double radius = 0.0;
            for (int j : m) radius = std::max(radius, chebyshev(x.row(i), x.row(j)));
            if (radius < medoid_radius) {
                medoid_radius = radius;
                medoid = i;
            }
        }
        agg.representatives[static_cast<std::size_t>(c)] = states[static_cast<std::size_t>(medoid)];
        agg.rep_q.row(c) = x.row(medoid);
    }

    // Unseen states project to the representative with the Chebyshev-nearest
    // Q row, provided the Q estimate knows them.
    const QFunction q_copy = q;
    const Eigen::MatrixXd rep_rows = agg.rep_q;
    agg.fallback = [q_copy, rep_rows](const StatePoint& s) {
        return nearest_rep(rep_rows, q_copy.row_of(s));
    };
    agg.validate();
    return agg;
}

double aggregation_q_error(const QFunction& q, const Aggregation& aggregation) {
    aggregation.validate();
    double err = 0.0;
    for (int i = 0; i < aggregation.index.size(); ++i) {
        const auto& s = aggregation.index.state(i);
        const auto& rep =
            aggregation.representatives[static_cast<std::size_t>(aggregation.assign[static_cast<std::size_t>(i)])];
        err = std::max(err, q_distance(q, s, rep));
    }
    return err;
}

Aggregation ad_hoc_aggregation(const std::vector<StatePoint>& states, int n_s) {
    if (states.empty())
        throw std::invalid_argument("ad_hoc_aggregation: no states");
    if (n_s < 1 || n_s > static_cast<int>(states.size()))
        throw std::invalid_argument("ad_hoc_aggregation: need 1 <= n_s <= |states|");

    const std::size_t d = states.front().size();
    const int n = static_cast<int>(states.size());

    // Dimensions with a single observed value cannot be split.
    std::vector<std::vector<double>> sorted(d);
    std::vector<bool> effective(d, false);
    int d_eff = 0;
    for (std::size_t j = 0; j < d; ++j) {
        sorted[j].reserve(states.size());
        for (const auto& s : states) sorted[j].push_back(s[j]);
        std::sort(sorted[j].begin(), sorted[j].end());
        if (sorted[j].front() != sorted[j].back()) {
            effective[j] = true;
            ++d_eff;
        }
    }

    // Split counts per effective dimension: start at floor(n_s^(1/d_eff)) and
    // greedily raise single dimensions while the product stays within n_s.
    std::vector<int> bins(d, 1);
    if (d_eff > 0) {
        const int base = std::max(
            1, static_cast<int>(std::floor(std::pow(static_cast<double>(n_s),
                                                    1.0 / static_cast<double>(d_eff)))));
        for (std::size_t j = 0; j < d; ++j)
            if (effective[j]) bins[j] = base;
        bool grew = true;
        while (grew) {
            grew = false;
            for (std::size_t j = 0; j < d && !grew; ++j) {
                if (!effective[j]) continue;
                long long product = 1;
                for (std::size_t l = 0; l < d; ++l)
                    product *= (l == j) ? bins[l] + 1 : bins[l];
                if (product <= n_s) {
                    ++bins[j];
                    grew = true;
                }
            }
        }
    }

    // Interior quantile cuts; a value equal to a cut lands on its left.
    std::vector<std::vector<double>> cuts(d);
    for (std::size_t j = 0; j < d; ++j) {
        for (int c = 1; c < bins[j]; ++c) {
            const double qpos = static_cast<double>(c) / static_cast<double>(bins[j]);
            const auto pos = static_cast<std::size_t>(
                std::min<double>(qpos * static_cast<double>(n), static_cast<double>(n - 1)));
            cuts[j].push_back(sorted[j][pos]);
        }
        cuts[j].erase(std::unique(cuts[j].begin(), cuts[j].end()), cuts[j].end());
    }

    // captured by value: the fallback outlives this frame
    auto cell_of = [cuts, d](const StatePoint& s) {
        if (s.size() != d)
            throw std::invalid_argument("ad_hoc_aggregation: point dimension mismatch");
        long long cell = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const auto& cj = cuts[j];
            const auto idx = std::lower_bound(cj.begin(), cj.end(), s[j]) - cj.begin();
            cell = cell * (static_cast<long long>(cj.size()) + 1) + idx;
        }
        return cell;
    };

    // Nonempty cells become clusters, numbered in first-seen state order.
    std::map<long long, int> cell_to_cluster;
    std::vector<int> assign(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> members;
    for (int i = 0; i < n; ++i) {
        const long long cell = cell_of(states[static_cast<std::size_t>(i)]);
        auto [it, inserted] = cell_to_cluster.try_emplace(cell, static_cast<int>(members.size()));
        if (inserted) members.emplace_back();
        assign[static_cast<std::size_t>(i)] = it->second;
        members[static_cast<std::size_t>(it->second)].push_back(i);
    }

    Aggregation agg;
    agg.n_s = static_cast<int>(members.size());
    agg.index = StateIndex(states);
    if (agg.index.size() != n)
        throw std::invalid_argument("ad_hoc_aggregation: duplicate states");
    agg.assign = std::move(assign);
    agg.representatives.resize(static_cast<std::size_t>(agg.n_s));
    for (int c = 0; c < agg.n_s; ++c) {
        const auto& m = members[static_cast<std::size_t>(c)];
        // Coordinate-wise median of the cell.
        StatePoint median(d);
        std::vector<double> coord(m.size());
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < m.size(); ++i)
                coord[i] = states[static_cast<std::size_t>(m[i])][j];
            std::sort(coord.begin(), coord.end());
            median[j] = m.size() % 2 == 1
                            ? coord[m.size() / 2]
                            : 0.5 * (coord[m.size() / 2 - 1] + coord[m.size() / 2]);
        }
        int best = m.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (int i : m) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = states[static_cast<std::size_t>(i)][j] - median[j];
                dist += diff * diff;
            }
            if (dist < best_d) {
                best_d = dist;
                best = i;
            }
        }
        agg.representatives[static_cast<std::size_t>(c)] = states[static_cast<std::size_t>(best)];
    }

    agg.fallback = [cell_of, cell_to_cluster](const StatePoint& s) {
        auto it = cell_to_cluster.find(cell_of(s));
        if (it == cell_to_cluster.end())
            throw std::invalid_argument("ad_hoc_aggregation: point falls in an empty cell");
        return it->second;
    };
    agg.validate();
    return agg;
}

Aggregation identity_aggregation(const std::vector<StatePoint>& states, const QFunction* q) {
    if (states.empty())
        throw std::invalid_argument("identity_aggregation: no states");
    Aggregation agg;
    agg.n_s = static_cast<int>(states.size());
    agg.index = StateIndex(states);
    if (agg.index.size() != agg.n_s)
        throw std::invalid_argument("identity_aggregation: duplicate states");
    agg.representatives = states;
    agg.assign.resize(states.size());
    for (int i = 0; i < agg.n_s; ++i) agg.assign[static_cast<std::size_t>(i)] = i;
    if (q != nullptr) {
        agg.rep_q = Eigen::MatrixXd(agg.n_s, q->n_actions());
        for (int i = 0; i < agg.n_s; ++i)
            agg.rep_q.row(i) = q->row_of(states[static_cast<std::size_t>(i)]);
    }
    agg.validate();
    return agg;
}

void save_aggregation(const Aggregation& aggregation, const std::string& path) {
    aggregation.validate();
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("save_aggregation: cannot open " + path);
    out << aggregation.to_json().dump(2) << "\n";
    if (!out)
        throw std::runtime_error("save_aggregation: write failed for " + path);
}

Aggregation load_aggregation(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("load_aggregation: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return Aggregation::from_json(j);
}

}  // namespace samq
