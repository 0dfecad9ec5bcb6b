#include "samq/nfmle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace samq {

namespace {

/** log_sum_exp of every row of a Q table. */
Eigen::VectorXd row_lse(const Eigen::MatrixXd& f) {
    Eigen::VectorXd out(f.rows());
    for (Eigen::Index c = 0; c < f.rows(); ++c) out(c) = log_sum_exp(f.row(c));
    return out;
}

/** Mean log choice probability under a Q table, weighted by cell counts. */
double likelihood_from_table(const Eigen::MatrixXd& q, const Eigen::MatrixXd& counts,
                             double n_total) {
    const Eigen::VectorXd lse = row_lse(q);
    double ll = 0.0;
    for (Eigen::Index c = 0; c < q.rows(); ++c)
        for (Eigen::Index a = 0; a < q.cols(); ++a)
            if (counts(c, a) > 0.0) ll += counts(c, a) * (q(c, a) - lse(c));
    return ll / n_total;
}

/** Shared outer loop: maximize `objective` and package the result. */
EstimationReport outer_maximize(const Objective& objective, const ThetaVector& theta_init,
                                const NfmleOptions& opts) {
    OptimResult res = opts.optimizer == OuterOptimizer::NelderMead
                          ? nelder_mead_maximize(objective, theta_init, opts.outer)
                          : gradient_ascent_maximize(objective, theta_init, opts.outer);
    EstimationReport report;
    report.theta_hat = ThetaVector(res.x, theta_init.lower, theta_init.upper);
    report.log_likelihood = res.f;
    report.converged = res.converged;
    if (!res.converged)
        report.warning = "outer optimizer exhausted its iteration budget; returning best theta";
    report.outer_iterations = res.iterations;
    report.outer_trace = std::move(res.trace);
    return report;
}

}  // namespace

AggregatedData::AggregatedData(const Dataset& dataset,
                               std::shared_ptr<const Aggregation> aggregation)
    : aggregation_(std::move(aggregation)) {
    if (!aggregation_)
        throw std::invalid_argument("AggregatedData: null aggregation");
    dataset.validate();
    aggregation_->validate();
    n_s_ = aggregation_->n_s;
    n_a_ = dataset.meta.n_actions;
    n_total_ = dataset.size();

    cell_counts_ = Eigen::MatrixXd::Zero(n_s_, n_a_);
    cell_states_.resize(static_cast<std::size_t>(n_s_) * static_cast<std::size_t>(n_a_));
    std::vector<std::unordered_map<StatePoint, std::size_t, StatePointHash, StatePointEq>>
        positions(cell_states_.size());
    std::vector<std::vector<Eigen::Triplet<double>>> triplets(static_cast<std::size_t>(n_a_));

    for (const auto& t : dataset.transitions) {
        const int c = aggregation_->project_index(t.s);
        const int c_next = aggregation_->project_index(t.s_next);
        cell_counts_(c, t.a) += 1.0;
        const std::size_t cell =
            static_cast<std::size_t>(c) * static_cast<std::size_t>(n_a_) +
            static_cast<std::size_t>(t.a);
        auto [it, inserted] = positions[cell].try_emplace(t.s, cell_states_[cell].size());
        if (inserted)
            cell_states_[cell].emplace_back(t.s, 1.0);
        else
            cell_states_[cell][it->second].second += 1.0;
        triplets[static_cast<std::size_t>(t.a)].emplace_back(c, c_next, 1.0);
    }

    next_weights_.assign(static_cast<std::size_t>(n_a_),
                         Eigen::SparseMatrix<double, Eigen::RowMajor>(n_s_, n_s_));
    for (int a = 0; a < n_a_; ++a) {
        auto& w = next_weights_[static_cast<std::size_t>(a)];
        w.setFromTriplets(triplets[static_cast<std::size_t>(a)].begin(),
                          triplets[static_cast<std::size_t>(a)].end());
        // Normalize each visited row into an empirical distribution.
        for (int c = 0; c < n_s_; ++c) {
            const double total = cell_counts_(c, a);
            if (total == 0.0) continue;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(w, c); it; ++it)
                it.valueRef() /= total;
        }
    }
}

void AggregatedData::require_coverage(double min_count) const {
    for (int c = 0; c < n_s_; ++c)
        for (int a = 0; a < n_a_; ++a)
            if (cell_counts_(c, a) < min_count)
                throw CoverageError("aggregated cell (" + std::to_string(c) + ", " +
                                        std::to_string(a) + ") has " +
                                        std::to_string(cell_counts_(c, a)) +
                                        " observations, below " + std::to_string(min_count),
                                    c, a);
}

Eigen::MatrixXd AggregatedData::average_rewards(const RewardModel& reward,
                                                const ThetaVector& theta) const {
    theta.validate();
    if (reward.param_count() != static_cast<int>(theta.size()))
        throw std::invalid_argument("AggregatedData: theta size disagrees with the reward model");
    Eigen::MatrixXd r_bar = Eigen::MatrixXd::Zero(n_s_, n_a_);
    for (int c = 0; c < n_s_; ++c)
        for (int a = 0; a < n_a_; ++a) {
            const double total = cell_counts_(c, a);
            if (total == 0.0) continue;
            double sum = 0.0;
            for (const auto& [s, mult] :
                 cell_states_[static_cast<std::size_t>(c) * static_cast<std::size_t>(n_a_) +
                              static_cast<std::size_t>(a)])
                sum += mult * reward.eval(s, a, theta.values);
            r_bar(c, a) = sum / total;
        }
    return r_bar;
}

Eigen::MatrixXd AggregatedData::apply(const Eigen::MatrixXd& f, const Eigen::MatrixXd& r_bar,
                                      double gamma) const {
    if (f.rows() != n_s_ || f.cols() != n_a_)
        throw std::invalid_argument("AggregatedData: Q table shape mismatch");
    const Eigen::VectorXd lse = row_lse(f);
    Eigen::MatrixXd out = r_bar;
    for (int a = 0; a < n_a_; ++a)
        out.col(a) += gamma * (next_weights_[static_cast<std::size_t>(a)] * lse);
    return out;
}

AggregatedQ empirical_bellman_apply(const AggregatedQ& f, const Dataset& dataset,
                                    const RewardModel& reward, const ThetaVector& theta,
                                    double gamma) {
    AggregatedData data(dataset, f.aggregation);
    data.require_coverage();
    const Eigen::MatrixXd r_bar = data.average_rewards(reward, theta);
    return AggregatedQ{data.apply(f.table, r_bar, gamma), f.aggregation};
}

AggregatedSolution solve_aggregated_q(const AggregatedData& data, const RewardModel& reward,
                                      const ThetaVector& theta, double gamma, double tol,
                                      std::size_t max_iter, const Eigen::MatrixXd* warm_start) {
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("solve_aggregated_q: gamma must lie in [0,1)");
    if (tol <= 0.0)
        throw std::invalid_argument("solve_aggregated_q: tol must be positive");
    data.require_coverage();
    const Eigen::MatrixXd r_bar = data.average_rewards(reward, theta);

    AggregatedSolution sol;
    sol.q.aggregation = data.aggregation();
    sol.q.table = warm_start != nullptr ? *warm_start
                                        : Eigen::MatrixXd::Zero(data.n_s(), data.n_actions());
    if (sol.q.table.rows() != data.n_s() || sol.q.table.cols() != data.n_actions())
        throw std::invalid_argument("solve_aggregated_q: warm start shape mismatch");

    double residual = std::numeric_limits<double>::infinity();
    std::size_t iter = 0;
    for (; iter < max_iter && residual > tol; ++iter) {
        Eigen::MatrixXd next = data.apply(sol.q.table, r_bar, gamma);
        residual = (next - sol.q.table).cwiseAbs().maxCoeff();
        sol.q.table = std::move(next);
    }
    if (residual > tol)
        throw ConvergenceError("solve_aggregated_q: no fixed point within budget", residual,
                               iter);
    sol.iterations = iter;
    sol.residual = residual;
    return sol;
}

AggregatedSolution solve_aggregated_q(const Dataset& dataset,
                                      std::shared_ptr<const Aggregation> aggregation,
                                      const RewardModel& reward, const ThetaVector& theta,
                                      double gamma, double tol, std::size_t max_iter) {
    AggregatedData data(dataset, std::move(aggregation));
    return solve_aggregated_q(data, reward, theta, gamma, tol, max_iter);
}

double aggregated_log_likelihood(const AggregatedData& data, const RewardModel& reward,
                                 const ThetaVector& theta, double gamma, double tol) {
    const auto sol = solve_aggregated_q(data, reward, theta, gamma, tol);
    return likelihood_from_table(sol.q.table, data.cell_counts(),
                                 static_cast<double>(data.n_total()));
}

double aggregated_log_likelihood(const Dataset& dataset,
                                 std::shared_ptr<const Aggregation> aggregation,
                                 const RewardModel& reward, const ThetaVector& theta,
                                 double gamma, double tol) {
    AggregatedData data(dataset, std::move(aggregation));
    return aggregated_log_likelihood(data, reward, theta, gamma, tol);
}

nlohmann::json EstimationReport::to_json() const {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [x, f] : outer_trace) trace.push_back({{"theta", x}, {"value", f}});
    nlohmann::json j{{"theta_hat", theta_hat.values},
                     {"log_likelihood", log_likelihood},
                     {"converged", converged},
                     {"warning", warning},
                     {"outer_iterations", outer_iterations},
                     {"inner_iterations", inner_iterations},
                     {"trace", trace}};
    if (theta_hat.has_bounds()) {
        j["theta_lower"] = theta_hat.lower;
        j["theta_upper"] = theta_hat.upper;
    }
    return j;
}

EstimationReport nfmle_estimate(const Dataset& dataset,
                                std::shared_ptr<const Aggregation> aggregation,
                                const RewardModel& reward, const ThetaVector& theta_init,
                                const NfmleOptions& opts) {
    theta_init.validate();
    if (reward.param_count() != static_cast<int>(theta_init.size()))
        throw std::invalid_argument("nfmle_estimate: theta size disagrees with the reward model");
    AggregatedData data(dataset, std::move(aggregation));
    data.require_coverage(opts.min_cell_count);
    const double gamma = dataset.meta.gamma;

    Eigen::MatrixXd warm = Eigen::MatrixXd::Zero(data.n_s(), data.n_actions());
    std::vector<std::size_t> inner_iterations;
    const Objective objective = [&](const std::vector<double>& v) {
        const ThetaVector theta = theta_init.clamped(v);
        const auto sol = solve_aggregated_q(data, reward, theta, gamma, opts.inner_tol,
                                            opts.inner_max_iter, &warm);
        warm = sol.q.table;
        inner_iterations.push_back(sol.iterations);
        return likelihood_from_table(sol.q.table, data.cell_counts(),
                                     static_cast<double>(data.n_total()));
    };

    EstimationReport report = outer_maximize(objective, theta_init, opts);
    report.inner_iterations = std::move(inner_iterations);
    return report;
}

EstimationReport exact_nfmle(const Dataset& dataset, const MdpSpec& mdp,
                             const ThetaVector& theta_init, const NfmleOptions& opts) {
    theta_init.validate();
    mdp.validate();
    if (!mdp.reward_model)
        throw std::invalid_argument("exact_nfmle: MDP carries no reward model");
    if (mdp.reward_model->param_count() != static_cast<int>(theta_init.size()))
        throw std::invalid_argument("exact_nfmle: theta size disagrees with the reward model");
    dataset.validate();
    if (dataset.meta.n_actions != mdp.n_actions())
        throw std::invalid_argument("exact_nfmle: action count mismatch");
    if (std::abs(dataset.meta.gamma - mdp.gamma) > 1e-12)
        throw std::invalid_argument("exact_nfmle: gamma disagrees between dataset and model");

    // The dataset collapses to per-(state,action) counts; unknown states are
    // an error from StateIndex.
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_actions());
    for (const auto& t : dataset.transitions) counts(mdp.index.at(t.s), t.a) += 1.0;

    QFunction warm = QFunction::zeros(mdp);
    std::vector<std::size_t> inner_iterations;
    const Objective objective = [&](const std::vector<double>& v) {
        const ThetaVector theta = theta_init.clamped(v);
        const auto sol = soft_q_solve(mdp, theta, opts.inner_tol, opts.inner_max_iter, &warm);
        warm = sol.q;
        inner_iterations.push_back(sol.iterations);
        return likelihood_from_table(sol.q.table, counts, static_cast<double>(dataset.size()));
    };

    EstimationReport report = outer_maximize(objective, theta_init, opts);
    report.inner_iterations = std::move(inner_iterations);
    return report;
}

}  // namespace samq
