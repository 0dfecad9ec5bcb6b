#include "samq/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace samq {

void ThetaVector::validate() const {
    for (double v : values) {
        if (!std::isfinite(v))
            throw std::invalid_argument("ThetaVector: non-finite entry");
    }
    if (!lower.empty() || !upper.empty()) {
        if (lower.size() != values.size() || upper.size() != values.size())
            throw std::invalid_argument("ThetaVector: bounds dimension mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (lower[i] > upper[i])
                throw std::invalid_argument("ThetaVector: lower bound above upper bound");
            if (values[i] < lower[i] || values[i] > upper[i]) {
                std::ostringstream os;
                os << "ThetaVector: value " << values[i] << " outside box ["
                   << lower[i] << ", " << upper[i] << "] at coordinate " << i;
                throw std::invalid_argument(os.str());
            }
        }
    }
}

ThetaVector ThetaVector::clamped(const std::vector<double>& v) const {
    ThetaVector out = *this;
    out.values = v;
    if (!lower.empty()) {
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] = std::clamp(out.values[i], lower[i], upper[i]);
    }
    return out;
}

void MdpSpec::validate() const {
    if (states.empty())
        throw std::invalid_argument("MdpSpec: needs at least one state");
    if (n_actions() < 2)
        throw std::invalid_argument("MdpSpec: needs at least two actions");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("MdpSpec: gamma must lie in [0,1)");
    if (!reward_model)
        throw std::invalid_argument("MdpSpec: missing reward model");
    if (static_cast<int>(transition.size()) != n_actions())
        throw std::invalid_argument("MdpSpec: one transition matrix per action required");
    const std::size_t d = states.front().size();
    for (const auto& s : states) {
        if (s.size() != d)
            throw std::invalid_argument("MdpSpec: state dimensions are not uniform");
    }
    const int n = n_states();
    for (int a = 0; a < n_actions(); ++a) {
        const auto& P = transition[a];
        if (P.rows() != n || P.cols() != n)
            throw std::invalid_argument("MdpSpec: transition matrix shape mismatch");
        for (int s = 0; s < n; ++s) {
            double row_sum = 0.0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(P, s); it; ++it) {
                if (it.value() < 0.0) {
                    std::ostringstream os;
                    os << "MdpSpec: negative transition probability at (s=" << s
                       << ", a=" << a << ", s'=" << it.col() << ")";
                    throw std::invalid_argument(os.str());
                }
                row_sum += it.value();
            }
            if (std::abs(row_sum - 1.0) > 1e-9) {
                std::ostringstream os;
                os << "MdpSpec: transition row (s=" << s << ", a=" << a
                   << ") sums to " << row_sum;
                throw std::invalid_argument(os.str());
            }
        }
    }
    if (index.size() != n)
        throw std::invalid_argument("MdpSpec: state index out of date; call reindex()");
}

double MdpSpec::reward(int s, int a, const ThetaVector& theta) const {
    double r = reward_model->eval(states[s], a, theta.values);
    if (std::isfinite(r_max) && std::abs(r) > r_max + 1e-12) {
        std::ostringstream os;
        os << "reward " << r << " at (s=" << s << ", a=" << a
           << ") exceeds the declared bound R_max=" << r_max;
        throw std::domain_error(os.str());
    }
    return r;
}

QFunction QFunction::zeros(const MdpSpec& mdp) {
    return QFunction(Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_actions()),
                     mdp.index);
}

double log_sum_exp(const std::vector<double>& v) {
    return log_sum_exp(Eigen::Map<const Eigen::RowVectorXd>(v.data(),
                                                            static_cast<Eigen::Index>(v.size())));
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
    if (v.size() == 0)
        throw std::invalid_argument("log_sum_exp: empty input");
    const double m = v.maxCoeff();
    if (!std::isfinite(m))
        throw std::invalid_argument("log_sum_exp: non-finite entry");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
    return m + std::log(acc);
}

QFunction soft_bellman_apply(const QFunction& q, const MdpSpec& mdp, const ThetaVector& theta) {
    const int n = mdp.n_states();
    const int n_a = mdp.n_actions();
    if (q.table.rows() != n || q.table.cols() != n_a)
        throw std::invalid_argument("soft_bellman_apply: Q shape does not match the MDP");
    theta.validate();

    // continuation values V(s') = log sum_a' exp(Q(s',a'))
    Eigen::VectorXd v(n);
    for (int s = 0; s < n; ++s) v[s] = log_sum_exp(q.table.row(s));

    QFunction out(Eigen::MatrixXd(n, n_a), q.index);
    for (int a = 0; a < n_a; ++a) {
        Eigen::VectorXd cont = mdp.transition[a] * v;
        for (int s = 0; s < n; ++s)
            out.table(s, a) = mdp.reward(s, a, theta) + mdp.gamma * cont[s];
    }
    return out;
}

SoftQSolution soft_q_solve(const MdpSpec& mdp, const ThetaVector& theta,
                           double tol, std::size_t max_iter,
                           const QFunction* warm_start) {
    if (!(tol > 0.0))
        throw std::invalid_argument("soft_q_solve: tol must be positive");
    if (max_iter < 1)
        throw std::invalid_argument("soft_q_solve: max_iter must be at least 1");

    SoftQSolution sol;
    sol.q = warm_start != nullptr ? *warm_start : QFunction::zeros(mdp);
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < max_iter; ++k) {
        QFunction next = soft_bellman_apply(sol.q, mdp, theta);
        residual = (next.table - sol.q.table).cwiseAbs().maxCoeff();
        sol.q = std::move(next);
        sol.iterations = k + 1;
        if (residual <= tol) {
            sol.residual = residual;
            return sol;
        }
    }
    std::ostringstream os;
    os << "soft_q_solve: no fixed point within " << max_iter
       << " iterations (residual " << residual << ", tol " << tol << ")";
    throw ConvergenceError(os.str(), residual, max_iter);
}

std::vector<double> softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
    const double m = v.maxCoeff();
    std::vector<double> p(static_cast<std::size_t>(v.size()));
    double total = 0.0;
    for (Eigen::Index a = 0; a < v.size(); ++a) {
        p[static_cast<std::size_t>(a)] = std::exp(v[a] - m);
        total += p[static_cast<std::size_t>(a)];
    }
    for (double& x : p) x /= total;
    return p;
}

std::vector<double> choice_prob(const QFunction& q, int s) {
    if (s < 0 || s >= q.n_states())
        throw std::invalid_argument("choice_prob: state index out of range");
    return softmax_row(q.table.row(s));
}

double soft_value(const QFunction& q, int s) {
    if (s < 0 || s >= q.n_states())
        throw std::invalid_argument("soft_value: state index out of range");
    return log_sum_exp(q.table.row(s));
}

nlohmann::json MdpSpec::to_json() const {
    nlohmann::json j;
    j["states"] = states;
    j["actions"] = actions;
    j["gamma"] = gamma;
    if (std::isfinite(r_max)) j["r_max"] = r_max;
    // dense row-stochastic tensor, indexed [s][a][s']
    const int n = n_states();
    auto tensor = nlohmann::json::array();
    for (int s = 0; s < n; ++s) {
        auto per_action = nlohmann::json::array();
        for (int a = 0; a < n_actions(); ++a) {
            std::vector<double> row(static_cast<std::size_t>(n), 0.0);
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(transition[a], s); it; ++it)
                row[static_cast<std::size_t>(it.col())] = it.value();
            per_action.push_back(row);
        }
        tensor.push_back(per_action);
    }
    j["transition"] = tensor;
    j["reward"] = reward_model_to_json(*reward_model);
    return j;
}

MdpSpec MdpSpec::from_json(const nlohmann::json& j) {
    MdpSpec mdp;
    mdp.states = j.at("states").get<std::vector<StatePoint>>();
    mdp.actions = j.at("actions").get<std::vector<std::string>>();
    mdp.gamma = j.at("gamma").get<double>();
    if (j.contains("r_max")) mdp.r_max = j.at("r_max").get<double>();
    mdp.reward_model = reward_model_from_json(j.at("reward"));

    const auto& tensor = j.at("transition");
    const int n = static_cast<int>(mdp.states.size());
    const int n_a = static_cast<int>(mdp.actions.size());
    if (static_cast<int>(tensor.size()) != n)
        throw std::invalid_argument("MdpSpec::from_json: transition tensor state count mismatch");
    std::vector<std::vector<Eigen::Triplet<double>>> triplets(static_cast<std::size_t>(n_a));
    for (int s = 0; s < n; ++s) {
        const auto& per_action = tensor.at(static_cast<std::size_t>(s));
        if (static_cast<int>(per_action.size()) != n_a)
            throw std::invalid_argument("MdpSpec::from_json: transition tensor action count mismatch");
        for (int a = 0; a < n_a; ++a) {
            const auto row = per_action.at(static_cast<std::size_t>(a)).get<std::vector<double>>();
            if (static_cast<int>(row.size()) != n)
                throw std::invalid_argument("MdpSpec::from_json: transition row length mismatch");
            for (int t = 0; t < n; ++t) {
                if (row[static_cast<std::size_t>(t)] != 0.0)
                    triplets[static_cast<std::size_t>(a)].emplace_back(s, t, row[static_cast<std::size_t>(t)]);
            }
        }
    }
    mdp.transition.resize(static_cast<std::size_t>(n_a));
    for (int a = 0; a < n_a; ++a) {
        mdp.transition[static_cast<std::size_t>(a)].resize(n, n);
        mdp.transition[static_cast<std::size_t>(a)].setFromTriplets(
            triplets[static_cast<std::size_t>(a)].begin(),
            triplets[static_cast<std::size_t>(a)].end());
    }
    mdp.reindex();
    mdp.validate();
    return mdp;
}

}  // namespace samq
