#include "samq/irl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace samq {

namespace {

std::string format_double(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok) {
    double x = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw std::invalid_argument("q csv: malformed number '" + tok + "'");
    return x;
}

}  // namespace

StateBinner::StateBinner(const std::vector<StatePoint>& points, int max_bins_per_dim) {
    if (points.empty())
        throw std::invalid_argument("StateBinner: needs at least one point");
    if (max_bins_per_dim < 1)
        throw std::invalid_argument("StateBinner: max_bins_per_dim must be positive");
    const std::size_t d = points.front().size();
    if (d == 0)
        throw std::invalid_argument("StateBinner: zero-dimensional points");
    for (const auto& p : points)
        if (p.size() != d)
            throw std::invalid_argument("StateBinner: points have mixed dimensions");

    levels_.resize(d);
    cuts_.resize(d);
    level_counts_.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> vals;
        vals.reserve(points.size());
        for (const auto& p : points) vals.push_back(p[j]);
        std::sort(vals.begin(), vals.end());
        auto distinct = vals;
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (static_cast<int>(distinct.size()) <= max_bins_per_dim) {
            levels_[j] = std::move(distinct);
            level_counts_[j] = static_cast<int>(levels_[j].size());
        } else {
            // Too many distinct values: fall back to quantile intervals.
            for (int c = 1; c < max_bins_per_dim; ++c) {
                const double q = static_cast<double>(c) / static_cast<double>(max_bins_per_dim);
                const auto pos = static_cast<std::size_t>(
                    std::min<double>(q * static_cast<double>(vals.size()),
                                     static_cast<double>(vals.size() - 1)));
                cuts_[j].push_back(vals[pos]);
            }
            cuts_[j].erase(std::unique(cuts_[j].begin(), cuts_[j].end()), cuts_[j].end());
            level_counts_[j] = static_cast<int>(cuts_[j].size()) + 1;
        }
    }
    n_bins_ = 1;
    for (std::size_t j = 0; j < d; ++j) n_bins_ *= level_counts_[j];
}

int StateBinner::level_of(std::size_t dim, double x) const {
    if (!levels_[dim].empty()) {
        const auto& lv = levels_[dim];
        auto it = std::lower_bound(lv.begin(), lv.end(), x);
        if (it == lv.end()) return static_cast<int>(lv.size()) - 1;
        if (it == lv.begin()) return 0;
        // Unseen value between levels snaps to the nearer one, lower on ties.
        const double above = *it;
        const double below = *(it - 1);
        if (above - x < x - below) return static_cast<int>(it - lv.begin());
        return static_cast<int>(it - lv.begin()) - 1;
    }
    const auto& cuts = cuts_[dim];
    return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

int StateBinner::bin(const StatePoint& s) const {
    if (s.size() != levels_.size())
        throw std::invalid_argument("StateBinner: point dimension mismatch");
    int idx = 0;
    for (std::size_t j = 0; j < s.size(); ++j)
        idx = idx * level_counts_[j] + level_of(j, s[j]);
    return idx;
}

PolicyEstimate estimate_policy(const Dataset& dataset, int bins, double smoothing) {
    dataset.validate();
    if (smoothing < 0.0)
        throw std::invalid_argument("estimate_policy: smoothing must be nonnegative");

    std::vector<StatePoint> points;
    points.reserve(2 * dataset.size());
    for (const auto& t : dataset.transitions) {
        points.push_back(t.s);
        points.push_back(t.s_next);
    }
    auto binner = std::make_shared<const StateBinner>(points, bins);

    const int n_a = dataset.meta.n_actions;
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(binner->n_bins(), n_a);
    for (const auto& t : dataset.transitions) counts(binner->bin(t.s), t.a) += 1.0;

    PolicyEstimate est;
    est.binner = binner;
    est.smoothing = smoothing;
    est.n_actions = n_a;
    est.probs = Eigen::MatrixXd(counts.rows(), n_a);
    for (Eigen::Index b = 0; b < counts.rows(); ++b) {
        const double total = counts.row(b).sum();
        if (total == 0.0 && smoothing == 0.0)
            throw std::invalid_argument(
                "estimate_policy: a bin with no source visits needs smoothing > 0");
        for (int a = 0; a < n_a; ++a)
            est.probs(b, a) =
                (counts(b, a) + smoothing) / (total + smoothing * static_cast<double>(n_a));
    }
    return est;
}

ValueEstimate estimate_value_anchor(const Dataset& dataset, const PolicyEstimate& policy,
                                    double gamma, int anchor, double tol,
                                    std::size_t max_iter) {
    dataset.validate();
    if (anchor < 0 || anchor >= policy.n_actions)
        throw std::invalid_argument("estimate_value_anchor: anchor action out of range");
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("estimate_value_anchor: gamma must lie in [0,1)");
    if (tol <= 0.0)
        throw std::invalid_argument("estimate_value_anchor: tol must be positive");

    const auto& binner = *policy.binner;
    const int n_bins = binner.n_bins();

    // A bin matters when any source or successor state lands in it.
    std::vector<char> occupied(static_cast<std::size_t>(n_bins), 0);
    for (const auto& t : dataset.transitions) {
        occupied[static_cast<std::size_t>(binner.bin(t.s))] = 1;
        occupied[static_cast<std::size_t>(binner.bin(t.s_next))] = 1;
    }

    // Empirical successor-bin weights conditional on the anchor action.
    std::vector<std::vector<std::pair<int, double>>> succ(static_cast<std::size_t>(n_bins));
    std::vector<double> anchor_count(static_cast<std::size_t>(n_bins), 0.0);
    for (const auto& t : dataset.transitions) {
        if (t.a != anchor) continue;
        const int b = binner.bin(t.s);
        const int b_next = binner.bin(t.s_next);
        anchor_count[static_cast<std::size_t>(b)] += 1.0;
        auto& row = succ[static_cast<std::size_t>(b)];
        bool merged = false;
        for (auto& entry : row)
            if (entry.first == b_next) {
                entry.second += 1.0;
                merged = true;
                break;
            }
        if (!merged) row.emplace_back(b_next, 1.0);
    }
    for (int b = 0; b < n_bins; ++b) {
        if (!occupied[static_cast<std::size_t>(b)]) continue;
        const double total = anchor_count[static_cast<std::size_t>(b)];
        if (total == 0.0)
            throw CoverageError("estimate_value_anchor: occupied bin " + std::to_string(b) +
                                    " has no anchor-action transitions",
                                b, anchor);
        for (auto& entry : succ[static_cast<std::size_t>(b)]) entry.second /= total;
    }

    // v(b) = gamma * E_hat[v(bin(s')) | b, anchor] - log pi_hat(b, anchor):
    // an affine gamma-contraction on the occupied bins.
    Eigen::VectorXd log_pi = Eigen::VectorXd::Zero(n_bins);
    for (int b = 0; b < n_bins; ++b)
        if (occupied[static_cast<std::size_t>(b)])
            log_pi(b) = std::log(policy.probs(b, anchor));

    ValueEstimate est;
    est.binner = policy.binner;
    est.values = Eigen::VectorXd::Zero(n_bins);
    Eigen::VectorXd next = Eigen::VectorXd::Zero(n_bins);
    double residual = std::numeric_limits<double>::infinity();
    std::size_t iter = 0;
    for (; iter < max_iter && residual > tol; ++iter) {
        residual = 0.0;
        for (int b = 0; b < n_bins; ++b) {
            if (!occupied[static_cast<std::size_t>(b)]) continue;
            double expect = 0.0;
            for (const auto& [b_next, w] : succ[static_cast<std::size_t>(b)])
                expect += w * est.values(b_next);
            next(b) = gamma * expect - log_pi(b);
            residual = std::max(residual, std::abs(next(b) - est.values(b)));
        }
        est.values.swap(next);
        est.residual_history.push_back(residual);
    }
    if (residual > tol)
        throw ConvergenceError("estimate_value_anchor: no fixed point within budget", residual,
                               iter);
    est.iterations = iter;
    est.residual = residual;
    return est;
}

QEstimate estimate_q(const Dataset& dataset, double gamma, const QEstimateOptions& opts) {
    dataset.validate();
    if (std::abs(gamma - dataset.meta.gamma) > 1e-12)
        throw std::invalid_argument("estimate_q: gamma disagrees with the dataset metadata");

    const auto policy = estimate_policy(dataset, opts.bins, opts.smoothing);
    const auto value =
        estimate_value_anchor(dataset, policy, gamma, opts.anchor, opts.tol, opts.max_iter);

    const int n_a = dataset.meta.n_actions;
    const auto& binner = *policy.binner;

    QEstimate est;
    est.binner = policy.binner;
    est.anchor_action = opts.anchor;
    est.fit_residual = value.residual;

    // Q(s,a) = v(bin(s)) + log pi(a | bin(s)); the softmax of these rows
    // reproduces pi exactly.
    est.bin_q = Eigen::MatrixXd(binner.n_bins(), n_a);
    for (int b = 0; b < binner.n_bins(); ++b)
        for (int a = 0; a < n_a; ++a)
            est.bin_q(b, a) = value.values(b) + std::log(policy.probs(b, a));

    est.q.index = dataset.support();
    est.q.table = Eigen::MatrixXd(est.q.index.size(), n_a);
    for (int i = 0; i < est.q.index.size(); ++i)
        est.q.table.row(i) = est.bin_q.row(binner.bin(est.q.index.state(i)));
    return est;
}

void save_q_csv(const QFunction& q, const std::string& path) {
    if (q.index.size() == 0 || q.index.size() != q.n_states())
        throw std::invalid_argument("save_q_csv: Q table and state index disagree");
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("save_q_csv: cannot open " + path);
    const std::size_t d = q.index.state(0).size();
    const int n_a = q.n_actions();
    for (std::size_t j = 0; j < d; ++j) out << "s_" << j << ",";
    for (int a = 0; a < n_a; ++a) out << "q_" << a << (a + 1 < n_a ? "," : "");
    out << "\n";
    for (int i = 0; i < q.index.size(); ++i) {
        const auto& s = q.index.state(i);
        for (std::size_t j = 0; j < d; ++j) out << format_double(s[j]) << ",";
        for (int a = 0; a < n_a; ++a)
            out << format_double(q.table(i, a)) << (a + 1 < n_a ? "," : "");
        out << "\n";
    }
    out.close();
    if (!out)
        throw std::runtime_error("save_q_csv: write failed for " + path);
}

QFunction load_q_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("load_q_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("load_q_csv: empty file " + path);
    std::vector<std::string> header;
    {
        std::string tok;
        std::istringstream is(line);
        while (std::getline(is, tok, ',')) header.push_back(tok);
    }
    std::size_t d = 0;
    while (d < header.size() && header[d].rfind("s_", 0) == 0) ++d;
    if (d == 0 || d == header.size())
        throw std::invalid_argument("load_q_csv: malformed header in " + path);
    const std::size_t n_a = header.size() - d;

    QFunction q;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> toks;
        std::string tok;
        std::istringstream is(line);
        while (std::getline(is, tok, ',')) toks.push_back(tok);
        if (toks.size() != header.size())
            throw std::invalid_argument("load_q_csv: row width mismatch in " + path);
        StatePoint s(d);
        for (std::size_t j = 0; j < d; ++j) s[j] = parse_double(toks[j]);
        q.index.add(s);
        std::vector<double> qs(n_a);
        for (std::size_t a = 0; a < n_a; ++a) qs[a] = parse_double(toks[d + a]);
        rows.push_back(std::move(qs));
    }
    if (rows.empty())
        throw std::invalid_argument("load_q_csv: no data rows in " + path);
    if (static_cast<std::size_t>(q.index.size()) != rows.size())
        throw std::invalid_argument("load_q_csv: duplicate state rows in " + path);
    q.table = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()),
                              static_cast<Eigen::Index>(n_a));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t a = 0; a < n_a; ++a)
            q.table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = rows[i][a];
    return q;
}

}  // namespace samq
