#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "samq/common.hpp"

namespace samq {

/** A state is a point in R^d; d is uniform across a model or dataset. */
using StatePoint = std::vector<double>;

struct StatePointHash {
    std::size_t operator()(const StatePoint& s) const {
        // FNV-1a over the raw bytes; states are only ever compared against
        // values produced by the same generation path, so bit equality is the
        // right notion and no tolerance is needed.
        std::size_t h = 1469598103934665603ULL;
        for (double x : s) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &x, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ULL;
            }
        }
        return h;
    }
};

struct StatePointEq {
    bool operator()(const StatePoint& a, const StatePoint& b) const {
        if (a.size() != b.size()) return false;
        return a.empty() ||
               std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
    }
};

/** Bidirectional map between state points and dense row indices. */
class StateIndex {
public:
    StateIndex() = default;
    explicit StateIndex(const std::vector<StatePoint>& states) {
        for (const auto& s : states) add(s);
    }

    /** Insert a state; returns its row. Duplicate inserts return the old row. */
    int add(const StatePoint& s) {
        auto [it, inserted] = map_.try_emplace(s, static_cast<int>(states_.size()));
        if (inserted) states_.push_back(s);
        return it->second;
    }

    /** Row of a known state; throws invalid_argument for unknown states. */
    int at(const StatePoint& s) const {
        auto it = map_.find(s);
        if (it == map_.end())
            throw std::invalid_argument("StateIndex: unknown state point");
        return it->second;
    }

    bool contains(const StatePoint& s) const { return map_.count(s) > 0; }
    int size() const { return static_cast<int>(states_.size()); }
    const StatePoint& state(int row) const { return states_.at(row); }
    const std::vector<StatePoint>& states() const { return states_; }

private:
    std::unordered_map<StatePoint, int, StatePointHash, StatePointEq> map_;
    std::vector<StatePoint> states_;
};

/** Structural parameter vector with an optional per-coordinate box. */
struct ThetaVector {
    std::vector<double> values;
    std::vector<double> lower;  // empty = unbounded
    std::vector<double> upper;

    ThetaVector() = default;
    explicit ThetaVector(std::vector<double> v) : values(std::move(v)) {}
    ThetaVector(std::vector<double> v, std::vector<double> lo, std::vector<double> hi)
        : values(std::move(v)), lower(std::move(lo)), upper(std::move(hi)) {}

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    bool has_bounds() const { return !lower.empty(); }

    /** Check finiteness and box membership; throws invalid_argument. */
    void validate() const;

    /** Copy with values clamped into the box (identity when unbounded). */
    ThetaVector clamped(const std::vector<double>& v) const;
};

/**
Parameterized reward family r(s, a; theta). Concrete families are registered
by name so reward models round-trip through JSON configs.
*/
class RewardModel {
public:
    virtual ~RewardModel() = default;
    virtual double eval(const StatePoint& s, int action,
                        const std::vector<double>& theta) const = 0;
    virtual int param_count() const = 0;
    virtual std::string kind() const = 0;
    virtual nlohmann::json params() const = 0;
};

using RewardModelPtr = std::shared_ptr<const RewardModel>;

/** Instantiate a registered reward family from {kind, params}. */
RewardModelPtr make_reward_model(const std::string& kind, const nlohmann::json& params);
RewardModelPtr reward_model_from_json(const nlohmann::json& j);
nlohmann::json reward_model_to_json(const RewardModel& model);

/**
Finite entropy-regularized MDP: state points, n_a actions, a parameterized
reward family, per-action row-stochastic transition matrices and a discount.
Continuous state spaces enter as a finite grid or sample of points.
*/
struct MdpSpec {
    std::vector<StatePoint> states;
    std::vector<std::string> actions;  // ordered action labels
    double gamma = 0.0;
    // transition[a] is |S| x |S| row-stochastic, sparse for product-grid envs
    std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> transition;
    RewardModelPtr reward_model;
    // declared bound on |r|; evaluation beyond it is an error
    double r_max = std::numeric_limits<double>::infinity();
    StateIndex index;

    int n_states() const { return static_cast<int>(states.size()); }
    int n_actions() const { return static_cast<int>(actions.size()); }

    /** Rebuild the state index after filling `states`. */
    void reindex() { index = StateIndex(states); }

    /**
    Check the structural invariants: rows sum to 1 within 1e-9 with no
    negative entries, gamma in [0,1), n_a >= 2, at least one state.
    Throws invalid_argument on the first violation.
    */
    void validate() const;

    /** r(s, a; theta) with the declared R_max check. */
    double reward(int s, int a, const ThetaVector& theta) const;

    nlohmann::json to_json() const;
    static MdpSpec from_json(const nlohmann::json& j);
};

/** Tabular Q: |S| x n_a table plus the state-point index of its rows. */
struct QFunction {
    Eigen::MatrixXd table;
    StateIndex index;

    QFunction() = default;
    QFunction(Eigen::MatrixXd t, StateIndex idx)
        : table(std::move(t)), index(std::move(idx)) {}

    int n_states() const { return static_cast<int>(table.rows()); }
    int n_actions() const { return static_cast<int>(table.cols()); }
    double at(const StatePoint& s, int a) const { return table(index.at(s), a); }
    Eigen::RowVectorXd row_of(const StatePoint& s) const { return table.row(index.at(s)); }

    /** All-zero Q shaped to an MDP. */
    static QFunction zeros(const MdpSpec& mdp);
};

/**
log(sum_i exp(v_i)) evaluated with a max shift, so it is exact for a single
element and never overflows. 1-Lipschitz in the sup norm.
Throws invalid_argument on empty input.
*/
double log_sum_exp(const std::vector<double>& v);
double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v);

/**
One application of the soft Bellman operator:
  Q'(s,a) = r(s,a;theta) + gamma * sum_{s'} P[s][a][s'] * log_sum_exp(Q(s',.)).
A gamma-contraction in sup norm. Throws invalid_argument on shape mismatch.
*/
QFunction soft_bellman_apply(const QFunction& q, const MdpSpec& mdp, const ThetaVector& theta);

struct SoftQSolution {
    QFunction q;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/**
Fixed point of the soft Bellman operator by successive application, stopping
when the sup-norm step falls below tol. Throws ConvergenceError with the last
residual when max_iter is exhausted first.
*/
SoftQSolution soft_q_solve(const MdpSpec& mdp, const ThetaVector& theta,
                           double tol = 1e-10, std::size_t max_iter = 10000,
                           const QFunction* warm_start = nullptr);

/**
Gibbs choice probabilities exp(Q(s,a)) / sum_a' exp(Q(s,a')) via stabilized
softmax; entries in (0,1), rows sum to 1.
*/
std::vector<double> choice_prob(const QFunction& q, int s);

/** Softmax of an arbitrary row vector (same stabilization). */
std::vector<double> softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& v);

/** Soft state value log sum_a exp(Q(s,a)). */
double soft_value(const QFunction& q, int s);

}  // namespace samq
