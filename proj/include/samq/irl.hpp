#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include "samq/dataset.hpp"
#include "samq/mdp.hpp"

namespace samq {

/**
Product-grid state binner. Each dimension keeps its distinct observed values
as exact levels while there are at most max_bins_per_dim of them (tabular, no
approximation — the default for grid-world data), and falls back to quantile
intervals otherwise. Unseen points bin to the nearest level / enclosing
interval, so estimated Q-functions extend off the observed support.
*/
class StateBinner {
public:
    StateBinner(const std::vector<StatePoint>& points, int max_bins_per_dim);

    /** Bin of a point (row-major over per-dimension levels). */
    int bin(const StatePoint& s) const;

    int n_bins() const { return n_bins_; }
    int dims() const { return static_cast<int>(levels_.size()); }

private:
    int level_of(std::size_t dim, double x) const;

    // exact mode: levels_[d] holds the distinct values; quantile mode:
    // cuts_[d] holds interior cut points and levels_[d] is empty
    std::vector<std::vector<double>> levels_;
    std::vector<std::vector<double>> cuts_;
    std::vector<int> level_counts_;
    int n_bins_ = 0;
};

/** Per-bin Laplace-smoothed choice probabilities. */
struct PolicyEstimate {
    Eigen::MatrixXd probs;  // n_bins x n_a; rows sum to 1
    std::shared_ptr<const StateBinner> binner;
    double smoothing = 0.0;
    int n_actions = 0;

    double prob(const StatePoint& s, int a) const { return probs(binner->bin(s), a); }
};

/**
Estimate the agent policy by per-bin action frequencies with Laplace
smoothing: (count(bin, a) + smoothing) / (count(bin) + smoothing * n_a).
Bins never visited by a source state get the uniform row (smoothing > 0) or
an invalid_argument (smoothing 0 leaves them undefined).
Throws invalid_argument on an empty dataset.
*/
PolicyEstimate estimate_policy(const Dataset& dataset, int bins, double smoothing);

/** Fitted anchor-action value table over bins. */
struct ValueEstimate {
    Eigen::VectorXd values;  // per bin
    std::shared_ptr<const StateBinner> binner;
    std::size_t iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history;  // sup-norm step per sweep
};

/**
Anchor-action fitted value iteration (the PQR identification step): the fixed
point of v(b) = gamma * E_hat[v(bin(s')) | bin(s)=b, a=anchor] - log
pi_hat(b, anchor), averaging next-bin values over the anchor transitions of
each bin. Contraction with modulus gamma. Throws CoverageError naming the
first occupied bin without anchor-action transitions.
*/
ValueEstimate estimate_value_anchor(const Dataset& dataset, const PolicyEstimate& policy,
                                    double gamma, int anchor, double tol,
                                    std::size_t max_iter = 10000);

struct QEstimateOptions {
    int bins = 1 << 16;      // max levels per dimension; large = exact tabular
    double smoothing = 0.5;  // Laplace constant keeping log pi finite
    int anchor = 0;          // action whose reward is normalized to zero
    double tol = 1e-10;
    std::size_t max_iter = 10000;
};

/** Estimated agent Q-function on the dataset's state support. */
struct QEstimate {
    QFunction q;             // rows = dataset support states
    std::shared_ptr<const StateBinner> binner;
    Eigen::MatrixXd bin_q;   // n_bins x n_a, for evaluating unseen states
    int anchor_action = 0;
    double fit_residual = 0.0;

    /** Q row of any binnable point (support states hit their own row). */
    Eigen::RowVectorXd row(const StatePoint& s) const { return bin_q.row(binner->bin(s)); }
};

/**
Step 1 of the SAmQ pipeline: Q_hat(s,a) = v_hat(bin(s)) + log pi_hat(bin(s),a)
on every dataset state. By construction the softmax of Q_hat reproduces
pi_hat exactly. Throws invalid_argument when the dataset metadata disagrees
with gamma; propagates CoverageError from the anchor iteration.
*/
QEstimate estimate_q(const Dataset& dataset, double gamma, const QEstimateOptions& opts = {});

/** CSV export/import: header s_0..s_{d-1},q_0..q_{n_a-1}, round-trip exact. */
void save_q_csv(const QFunction& q, const std::string& path);
QFunction load_q_csv(const std::string& path);

}  // namespace samq
