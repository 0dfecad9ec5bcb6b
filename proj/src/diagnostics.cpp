#include "samq/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace samq {

namespace {

Eigen::VectorXd row_lse(const Eigen::MatrixXd& f) {
    Eigen::VectorXd out(f.rows());
    for (Eigen::Index c = 0; c < f.rows(); ++c) out(c) = log_sum_exp(f.row(c));
    return out;
}

double squared_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        d2 += diff * diff;
    }
    return d2;
}

}  // namespace

nlohmann::json InequalityRecord::to_json() const {
    return nlohmann::json{{"name", name}, {"lhs", lhs}, {"rhs", rhs}, {"holds", holds}};
}

PopulationModel::PopulationModel(const MdpSpec& mdp, const Aggregation& aggregation,
                                 const ThetaVector& theta_star, std::vector<double> mu)
    : mdp_(mdp), aggregation_(aggregation), theta_star_(theta_star), mu_(std::move(mu)) {
    mdp_.validate();
    aggregation_.validate();
    theta_star_.validate();
    const int n = mdp_.n_states();
    const int n_a = mdp_.n_actions();
    const int n_s = aggregation_.n_s;

    if (mu_.empty()) {
        mu_.assign(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
    } else {
        if (static_cast<int>(mu_.size()) != n)
            throw std::invalid_argument("PopulationModel: mu size must match the state count");
        double total = 0.0;
        for (double m : mu_) {
            if (m < 0.0)
                throw std::invalid_argument("PopulationModel: mu must be nonnegative");
            total += m;
        }
        if (total <= 0.0)
            throw std::invalid_argument("PopulationModel: mu must have positive mass");
        for (double& m : mu_) m /= total;
    }

    cluster_of_.resize(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s)
        cluster_of_[static_cast<std::size_t>(s)] =
            aggregation_.project_index(mdp_.states[static_cast<std::size_t>(s)]);

    q_star_ = soft_q_solve(mdp_, theta_star_, 1e-12, 100000).q;
    pi_star_ = Eigen::MatrixXd(n, n_a);
    for (int s = 0; s < n; ++s) {
        const auto probs = choice_prob(q_star_, s);
        for (int a = 0; a < n_a; ++a) pi_star_(s, a) = probs[static_cast<std::size_t>(a)];
    }

    exact_l_star_ = 0.0;
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < n_a; ++a)
            exact_l_star_ +=
                mu_[static_cast<std::size_t>(s)] * pi_star_(s, a) * std::log(pi_star_(s, a));

    // Within-cluster weights w(c, s) = mu(s) / mu(cluster c); a zero-mass
    // cluster never enters the likelihood, so it gets uniform weights just to
    // keep the operator total.
    cluster_members_.resize(static_cast<std::size_t>(n_s));
    std::vector<double> cluster_mass(static_cast<std::size_t>(n_s), 0.0);
    for (int s = 0; s < n; ++s) {
        const auto c = static_cast<std::size_t>(cluster_of_[static_cast<std::size_t>(s)]);
        cluster_members_[c].emplace_back(s, mu_[static_cast<std::size_t>(s)]);
        cluster_mass[c] += mu_[static_cast<std::size_t>(s)];
    }
    for (int c = 0; c < n_s; ++c) {
        auto& members = cluster_members_[static_cast<std::size_t>(c)];
        if (members.empty())
            throw std::invalid_argument("PopulationModel: aggregation has a memberless cluster");
        const double mass = cluster_mass[static_cast<std::size_t>(c)];
        for (auto& [s, w] : members)
            w = mass > 0.0 ? w / mass : 1.0 / static_cast<double>(members.size());
    }

    // W[a](c, c') = sum_{s in c} w(c,s) P(cluster(s') = c' | s, a).
    next_cluster_.assign(static_cast<std::size_t>(n_a), Eigen::MatrixXd::Zero(n_s, n_s));
    for (int a = 0; a < n_a; ++a) {
        auto& w_mat = next_cluster_[static_cast<std::size_t>(a)];
        const auto& p_mat = mdp_.transition[static_cast<std::size_t>(a)];
        for (int c = 0; c < n_s; ++c)
            for (const auto& [s, w] : cluster_members_[static_cast<std::size_t>(c)])
                for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(p_mat, s); it;
                     ++it)
                    w_mat(c, cluster_of_[static_cast<std::size_t>(it.col())]) += w * it.value();
    }
}

Eigen::MatrixXd PopulationModel::solve_aggregated_q(const ThetaVector& theta, double tol) const {
    const int n_s = aggregation_.n_s;
    const int n_a = mdp_.n_actions();

    Eigen::MatrixXd r_bar(n_s, n_a);
    for (int c = 0; c < n_s; ++c)
        for (int a = 0; a < n_a; ++a) {
            double sum = 0.0;
            for (const auto& [s, w] : cluster_members_[static_cast<std::size_t>(c)])
                sum += w * mdp_.reward(s, a, theta);
            r_bar(c, a) = sum;
        }

    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n_s, n_a);
    double residual = std::numeric_limits<double>::infinity();
    const std::size_t max_iter = 100000;
    for (std::size_t iter = 0; iter < max_iter && residual > tol; ++iter) {
        const Eigen::VectorXd lse = row_lse(f);
        Eigen::MatrixXd next = r_bar;
        for (int a = 0; a < n_a; ++a)
            next.col(a) += mdp_.gamma * (next_cluster_[static_cast<std::size_t>(a)] * lse);
        residual = (next - f).cwiseAbs().maxCoeff();
        f = std::move(next);
    }
    if (residual > tol)
        throw ConvergenceError("PopulationModel: aggregated fixed point did not converge",
                               residual, max_iter);
    return f;
}

double PopulationModel::aggregated_likelihood(const ThetaVector& theta) const {
    const Eigen::MatrixXd q = solve_aggregated_q(theta);
    const Eigen::VectorXd lse = row_lse(q);
    double ll = 0.0;
    for (int s = 0; s < mdp_.n_states(); ++s) {
        const int c = cluster_of_[static_cast<std::size_t>(s)];
        for (int a = 0; a < mdp_.n_actions(); ++a)
            ll += mu_[static_cast<std::size_t>(s)] * pi_star_(s, a) * (q(c, a) - lse(c));
    }
    return ll;
}

ThetaVector PopulationModel::maximize_aggregated_likelihood(const OptimOptions& opts) const {
    const Objective objective = [this](const std::vector<double>& v) {
        return aggregated_likelihood(theta_star_.clamped(v));
    };
    const OptimResult res = nelder_mead_maximize(objective, theta_star_, opts);
    return ThetaVector(res.x, theta_star_.lower, theta_star_.upper);
}

double PopulationModel::concavity_on_segment(const ThetaVector& theta_tilde, int points,
                                             double h) const {
    if (points < 1)
        throw std::invalid_argument("PopulationModel: need at least one segment point");
    const Objective objective = [this](const std::vector<double>& v) {
        return aggregated_likelihood(ThetaVector(v, theta_star_.lower, theta_star_.upper));
    };
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < points; ++k) {
        const double t = points == 1 ? 0.5
                                     : static_cast<double>(k) / static_cast<double>(points - 1);
        std::vector<double> x(theta_star_.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = theta_star_.values[i] + t * (theta_tilde.values[i] - theta_star_.values[i]);
        worst = std::min(worst, min_eigenvalue(-fd_hessian(objective, x, h)));
    }
    // Shaved by 5% to absorb finite-difference error; an underestimate only
    // loosens the bounds this constant feeds.
    return 0.95 * worst;
}

double q_error(const QFunction& q_true, const Aggregation& aggregation) {
    return aggregation_q_error(q_true, aggregation);
}

double estimate_concavity(const Objective& f, const std::vector<double>& theta, double h) {
    return min_eigenvalue(-fd_hessian(f, theta, h));
}

double estimate_concavity(const Dataset& dataset, std::shared_ptr<const Aggregation> aggregation,
                          const RewardModel& reward, const ThetaVector& theta, double gamma,
                          double h) {
    AggregatedData data(dataset, std::move(aggregation));
    data.require_coverage();
    const Objective objective = [&](const std::vector<double>& v) {
        return aggregated_log_likelihood(data, reward, theta.clamped(v), gamma);
    };
    return estimate_concavity(objective, theta.values, h);
}

InequalityRecord theorem1_check(const MdpSpec& mdp, const ThetaVector& theta_star,
                                const Aggregation& aggregation, double c_h) {
    if (c_h <= 0.0)
        throw std::invalid_argument("theorem1_check: c_h must be positive");
    const PopulationModel model(mdp, aggregation, theta_star);
    const ThetaVector theta_tilde = model.maximize_aggregated_likelihood();
    const double lhs = squared_norm_diff(theta_tilde.values, theta_star.values);
    const double eps_q = q_error(model.q_star(), aggregation);
    const double rhs = 4.0 * eps_q / (c_h * (1.0 - mdp.gamma));
    return InequalityRecord::make("theorem-1", lhs, rhs);
}

std::vector<InequalityRecord> lemma_likelihood_bound_check(const MdpSpec& mdp,
                                                           const ThetaVector& theta_star,
                                                           const Aggregation& aggregation,
                                                           double c_h) {
    if (c_h <= 0.0)
        throw std::invalid_argument("lemma_likelihood_bound_check: c_h must be positive");
    const PopulationModel model(mdp, aggregation, theta_star);
    const ThetaVector theta_tilde = model.maximize_aggregated_likelihood();
    const double gap = model.exact_likelihood_at_star() - model.aggregated_likelihood(theta_star);
    const double eps_q = q_error(model.q_star(), aggregation);
    std::vector<InequalityRecord> records;
    records.push_back(InequalityRecord::make(
        "likelihood-bound", squared_norm_diff(theta_tilde.values, theta_star.values),
        gap / c_h));
    records.push_back(
        InequalityRecord::make("likelihood-gap", gap, 4.0 * eps_q / (1.0 - mdp.gamma)));
    return records;
}

Theorem2Bound theorem2_bound(const Theorem2Inputs& params, std::size_t n, double delta,
                             double theta_card) {
    if (params.n_s < 1 || params.n_a < 1)
        throw std::invalid_argument("theorem2_bound: n_s and n_a must be positive");
    if (params.c_h <= 0.0)
        throw std::invalid_argument("theorem2_bound: c_h must be positive");
    if (params.c_uni <= 0.0 || params.c_uni > 1.0)
        throw std::invalid_argument("theorem2_bound: c_uni must lie in (0,1]");
    if (params.gamma < 0.0 || params.gamma >= 1.0)
        throw std::invalid_argument("theorem2_bound: gamma must lie in [0,1)");
    if (params.r_max < 0.0 || params.c_q < 0.0 || params.c_clustering < 0.0)
        throw std::invalid_argument("theorem2_bound: constants must be nonnegative");
    if (delta <= 0.0 || delta >= 1.0)
        throw std::invalid_argument("theorem2_bound: delta must lie in (0,1)");
    if (theta_card < 1.0)
        throw std::invalid_argument("theorem2_bound: theta cardinality must be at least 1");
    if (n == 0)
        throw std::invalid_argument("theorem2_bound: n must be positive");
    if (params.n_s == 1)
        throw BoundUndefinedError("theorem2_bound: n_s = 1 zeroes the bias denominator", 0.0);

    const double n_real = static_cast<double>(n);
    const double cells = static_cast<double>(params.n_s) * static_cast<double>(params.n_a);
    const double log_cells = std::log(4.0 * cells * theta_card / delta);

    // Sample-size precondition: N C_uni - sqrt(N log(4 n_s n_a |Theta|/delta) / 2) >= 1.
    const double margin = n_real * params.c_uni - std::sqrt(n_real * log_cells / 2.0);
    if (margin < 1.0)
        throw BoundUndefinedError(
            "theorem2_bound: sample size too small for the coverage concentration step", margin);

    const double one_minus_gamma = 1.0 - params.gamma;
    const double r_plus = params.r_max + 1.0;

    const double ns_root =
        std::pow(static_cast<double>(params.n_s), 1.0 / static_cast<double>(params.n_a));
    Theorem2Bound bound;
    bound.bias = 4.0 / (params.c_h * one_minus_gamma) *
                 (r_plus / one_minus_gamma * 4.0 / (ns_root - 1.0) + 2.0 * params.c_q +
                  params.c_clustering);

    const double term1 = 4.0 * r_plus / (one_minus_gamma * params.c_h) *
                         std::sqrt(std::log(4.0 * theta_card / delta) / (2.0 * n_real));
    const double denom = params.c_uni - std::sqrt(log_cells / (2.0 * n_real));
    const double term2 = r_plus / (one_minus_gamma * one_minus_gamma * params.c_h) *
                         std::sqrt(std::log(8.0 * cells * theta_card / delta) / (2.0 * n_real)) *
                         4.0 / denom;
    bound.variance = term1 + term2;
    bound.total = bound.bias + bound.variance;
    return bound;
}

double theta_cardinality_proxy(const ThetaVector& theta, double resolution) {
    if (resolution <= 0.0)
        throw std::invalid_argument("theta_cardinality_proxy: resolution must be positive");
    if (!theta.has_bounds())
        throw std::invalid_argument("theta_cardinality_proxy: theta carries no box bounds");
    double card = 1.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double width = theta.upper[i] - theta.lower[i];
        if (width < 0.0)
            throw std::invalid_argument("theta_cardinality_proxy: inverted bounds");
        card *= std::max(width / resolution, 1.0);
    }
    return card;
}

std::optional<double> exact_clustering_constant(const QFunction& q_hat,
                                                const Aggregation& aggregation,
                                                int max_states) {
    aggregation.validate();
    const int n = aggregation.index.size();
    if (n > max_states) return std::nullopt;
    const int n_s = aggregation.n_s;

    Eigen::MatrixXd rows(n, q_hat.n_actions());
    for (int i = 0; i < n; ++i) rows.row(i) = q_hat.row_of(aggregation.index.state(i));

    // epsilon_hat_dis of the best representative subset, by exhaustive
    // enumeration with Chebyshev-nearest assignment.
    std::vector<int> pick(static_cast<std::size_t>(n_s));
    std::iota(pick.begin(), pick.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        double eps = 0.0;
        for (int i = 0; i < n; ++i) {
            double nearest = std::numeric_limits<double>::infinity();
            for (int r : pick)
                nearest = std::min(nearest, (rows.row(i) - rows.row(r)).cwiseAbs().maxCoeff());
            eps = std::max(eps, nearest);
        }
        best = std::min(best, eps);

        // Next combination in lexicographic order.
        int pos = n_s - 1;
        while (pos >= 0 && pick[static_cast<std::size_t>(pos)] == n - n_s + pos) --pos;
        if (pos < 0) break;
        ++pick[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < n_s; ++j)
            pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }

    return std::abs(aggregation_q_error(q_hat, aggregation) - best);
}

nlohmann::json BoundReport::to_json() const {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : inequalities) records.push_back(rec.to_json());
    return nlohmann::json{{"eps_q", eps_q},
                          {"eps_dis_hat", eps_dis_hat},
                          {"c_h", c_h},
                          {"c_uni", c_uni},
                          {"r_max", r_max},
                          {"gamma", gamma},
                          {"n_s", n_s},
                          {"n_a", n_a},
                          {"n_param", n_param},
                          {"theta_gap", theta_gap},
                          {"thm1_bound", thm1_bound},
                          {"thm2_bias", thm2_bias},
                          {"thm2_variance", thm2_variance},
                          {"inequalities", records}};
}

std::string BoundReport::table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line),
                  "eps_q=%.6g  eps_dis_hat=%.6g  c_h=%.6g  c_uni=%.6g  r_max=%.6g  gamma=%.6g\n",
                  eps_q, eps_dis_hat, c_h, c_uni, r_max, gamma);
    out << line;
    std::snprintf(line, sizeof(line),
                  "n_s=%d  n_a=%d  n_param=%d  theta_gap=%.6g  thm1_bound=%.6g  "
                  "thm2_bias=%.6g  thm2_variance=%.6g\n",
                  n_s, n_a, n_param, theta_gap, thm1_bound, thm2_bias, thm2_variance);
    out << line;
    std::snprintf(line, sizeof(line), "%-24s %14s %14s %14s %6s\n", "inequality", "lhs", "rhs",
                  "slack", "holds");
    out << line;
    for (const auto& rec : inequalities) {
        std::snprintf(line, sizeof(line), "%-24s %14.6g %14.6g %14.6g %6s\n", rec.name.c_str(),
                      rec.lhs, rec.rhs, rec.rhs - rec.lhs, rec.holds ? "yes" : "NO");
        out << line;
    }
    return out.str();
}

}  // namespace samq
