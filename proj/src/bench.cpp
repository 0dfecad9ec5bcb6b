#include "samq/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "samq/aggregation.hpp"
#include "samq/rng.hpp"

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
        throw std::invalid_argument("benchmark csv: malformed number '" + tok + "'");
    return x;
}

double mean_of(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double sum = 0.0;
    for (double x : v) sum += (x - mean) * (x - mean);
    return std::sqrt(sum / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double squared_error(const std::vector<double>& a, const std::vector<double>& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return d2;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/** Per-(method, n_s) accumulation across replications. */
struct CellRuns {
    std::vector<double> mses;
    std::vector<double> runtimes;
    std::string note;
};

nlohmann::json optim_to_json(const OptimOptions& o) {
    return {{"tol_x", o.tol_x}, {"tol_f", o.tol_f}, {"max_iter", o.max_iter},
            {"init_step", o.init_step}};
}

OptimOptions optim_from_json(const nlohmann::json& j) {
    OptimOptions o;
    o.tol_x = j.value("tol_x", o.tol_x);
    o.tol_f = j.value("tol_f", o.tol_f);
    o.max_iter = j.value("max_iter", o.max_iter);
    o.init_step = j.value("init_step", o.init_step);
    return o;
}

nlohmann::json estimation_to_json(const NfmleOptions& e) {
    return {{"optimizer",
             e.optimizer == OuterOptimizer::NelderMead ? "nelder-mead" : "gradient-ascent"},
            {"outer", optim_to_json(e.outer)},
            {"inner_tol", e.inner_tol},
            {"inner_max_iter", e.inner_max_iter},
            {"min_cell_count", e.min_cell_count}};
}

NfmleOptions estimation_from_json(const nlohmann::json& j) {
    NfmleOptions e;
    const std::string name = j.value("optimizer", std::string("nelder-mead"));
    if (name == "nelder-mead")
        e.optimizer = OuterOptimizer::NelderMead;
    else if (name == "gradient-ascent")
        e.optimizer = OuterOptimizer::GradientAscent;
    else
        throw std::invalid_argument("ExperimentConfig: unknown optimizer '" + name + "'");
    if (j.contains("outer")) e.outer = optim_from_json(j.at("outer"));
    e.inner_tol = j.value("inner_tol", e.inner_tol);
    e.inner_max_iter = j.value("inner_max_iter", e.inner_max_iter);
    e.min_cell_count = j.value("min_cell_count", e.min_cell_count);
    return e;
}

nlohmann::json irl_to_json(const QEstimateOptions& q) {
    return {{"bins", q.bins}, {"smoothing", q.smoothing}, {"anchor", q.anchor},
            {"tol", q.tol}, {"max_iter", q.max_iter}};
}

QEstimateOptions irl_from_json(const nlohmann::json& j) {
    QEstimateOptions q;
    q.bins = j.value("bins", q.bins);
    q.smoothing = j.value("smoothing", q.smoothing);
    q.anchor = j.value("anchor", q.anchor);
    q.tol = j.value("tol", q.tol);
    q.max_iter = j.value("max_iter", q.max_iter);
    return q;
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::SAmQ: return "SAmQ";
        case Method::NfMle: return "NF-MLE";
        case Method::NfMleSa: return "NF-MLE-SA";
    }
    throw std::invalid_argument("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
    if (name == "SAmQ" || name == "samq") return Method::SAmQ;
    if (name == "NF-MLE" || name == "nf-mle") return Method::NfMle;
    if (name == "NF-MLE-SA" || name == "nf-mle-sa") return Method::NfMleSa;
    throw std::invalid_argument("method_from_name: unknown method '" + name + "'");
}

void ExperimentConfig::validate() const {
    env.validate();
    if (n == 0)
        throw std::invalid_argument("ExperimentConfig: n must be positive");
    if (replications < 1)
        throw std::invalid_argument("ExperimentConfig: replications must be at least 1");
    if (methods.empty())
        throw std::invalid_argument("ExperimentConfig: methods must be non-empty");
    if (n_s_list.empty())
        throw std::invalid_argument("ExperimentConfig: n_s_list must be non-empty");
    std::size_t grid = static_cast<std::size_t>(env.mileage_grid_size);
    for (int d = 0; d < env.dummy_dims; ++d) grid *= static_cast<std::size_t>(env.dummy_grid_size);
    for (int n_s : n_s_list)
        if (n_s < 1 || static_cast<std::size_t>(n_s) > grid)
            throw std::invalid_argument("ExperimentConfig: n_s_list entries must lie in [1, grid]");
    if (theta_init.size() != 2)
        throw std::invalid_argument("ExperimentConfig: theta_init must have two entries");
    if (cluster_restarts < 1)
        throw std::invalid_argument("ExperimentConfig: cluster_restarts must be at least 1");
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json method_names = nlohmann::json::array();
    for (Method m : methods) method_names.push_back(method_name(m));
    return {{"env", env.to_json()},
            {"n", n},
            {"n_s_list", n_s_list},
            {"methods", method_names},
            {"replications", replications},
            {"seed", seed},
            {"theta_init", theta_init},
            {"estimation", estimation_to_json(estimation)},
            {"irl", irl_to_json(irl)},
            {"cluster_restarts", cluster_restarts}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("env")) c.env = BusEnvConfig::from_json(j.at("env"));
    c.n = j.value("n", c.n);
    if (j.contains("n_s_list")) c.n_s_list = j.at("n_s_list").get<std::vector<int>>();
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& name : j.at("methods"))
            c.methods.push_back(method_from_name(name.get<std::string>()));
    }
    c.replications = j.value("replications", c.replications);
    c.seed = j.value("seed", c.seed);
    if (j.contains("theta_init")) c.theta_init = j.at("theta_init").get<std::vector<double>>();
    if (j.contains("estimation")) c.estimation = estimation_from_json(j.at("estimation"));
    if (j.contains("irl")) c.irl = irl_from_json(j.at("irl"));
    c.cluster_restarts = j.value("cluster_restarts", c.cluster_restarts);
    c.validate();
    return c;
}

const BenchmarkRow* BenchmarkTable::find(Method m, int n_s) const {
    for (const auto& row : rows)
        if (row.method == m && row.n_s == n_s) return &row;
    return nullptr;
}

BenchmarkTable run_experiment(const ExperimentConfig& config) {
    config.validate();
    const MdpSpec mdp = make_bus_env(config.env);
    const ThetaVector theta_init(config.theta_init);
    const auto& theta_star = config.env.theta_true.values;
    const auto wants = [&config](Method m) {
        return std::find(config.methods.begin(), config.methods.end(), m) !=
               config.methods.end();
    };

    std::map<std::pair<Method, int>, CellRuns> cells;
    const auto record_failure = [&cells](Method m, int n_s, int rep, const std::string& what) {
        cells[{m, n_s}].note += "rep " + std::to_string(rep) + ": " + what + "; ";
    };

    SimulateOptions sim_opts;
    sim_opts.env_config = config.env.to_json();

    for (int rep = 0; rep < config.replications; ++rep) {
        const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(rep));
        const Dataset dataset =
            simulate(mdp, config.env.theta_true, config.n, rep_seed, sim_opts);
        const std::vector<StatePoint> support = dataset.support().states();

        if (wants(Method::SAmQ)) {
            bool have_q = false;
            QEstimate q_est;
            try {
                q_est = estimate_q(dataset, config.env.gamma, config.irl);
                have_q = true;
            } catch (const std::exception& e) {
                for (int n_s : config.n_s_list)
                    record_failure(Method::SAmQ, n_s, rep, e.what());
            }
            if (have_q) {
                for (int n_s : config.n_s_list) {
                    try {
                        auto agg = std::make_shared<Aggregation>(cluster_states(
                            q_est.q, support, n_s,
                            derive_seed(rep_seed, 1000 + static_cast<std::uint64_t>(n_s)),
                            config.cluster_restarts));
                        const auto t0 = std::chrono::steady_clock::now();
                        const auto report = nfmle_estimate(dataset, agg, *mdp.reward_model,
                                                           theta_init, config.estimation);
                        auto& cell = cells[{Method::SAmQ, n_s}];
                        cell.runtimes.push_back(seconds_since(t0));
                        cell.mses.push_back(squared_error(report.theta_hat.values, theta_star));
                    } catch (const std::exception& e) {
                        record_failure(Method::SAmQ, n_s, rep, e.what());
                    }
                }
            }
        }

        if (wants(Method::NfMleSa)) {
            for (int n_s : config.n_s_list) {
                try {
                    auto agg = std::make_shared<Aggregation>(ad_hoc_aggregation(support, n_s));
                    const auto t0 = std::chrono::steady_clock::now();
                    const auto report = nfmle_estimate(dataset, agg, *mdp.reward_model,
                                                       theta_init, config.estimation);
                    auto& cell = cells[{Method::NfMleSa, n_s}];
                    cell.runtimes.push_back(seconds_since(t0));
                    cell.mses.push_back(squared_error(report.theta_hat.values, theta_star));
                } catch (const std::exception& e) {
                    record_failure(Method::NfMleSa, n_s, rep, e.what());
                }
            }
        }

        if (wants(Method::NfMle)) {
            // One exact solve per seed; its row spans the n_s grid.
            try {
                const auto t0 = std::chrono::steady_clock::now();
                const auto report = exact_nfmle(dataset, mdp, theta_init, config.estimation);
                const double runtime = seconds_since(t0);
                const double mse = squared_error(report.theta_hat.values, theta_star);
                for (int n_s : config.n_s_list) {
                    auto& cell = cells[{Method::NfMle, n_s}];
                    cell.runtimes.push_back(runtime);
                    cell.mses.push_back(mse);
                }
            } catch (const std::exception& e) {
                for (int n_s : config.n_s_list)
                    record_failure(Method::NfMle, n_s, rep, e.what());
            }
        }
    }

    BenchmarkTable table;
    for (Method m : config.methods) {
        for (int n_s : config.n_s_list) {
            const auto& cell = cells[{m, n_s}];
            if (cell.mses.empty())
                throw std::runtime_error("run_experiment: every replication failed for " +
                                         method_name(m) + " at n_s=" + std::to_string(n_s) +
                                         " (" + cell.note + ")");
            BenchmarkRow row;
            row.method = m;
            row.n_s = n_s;
            row.mse_mean = mean_of(cell.mses);
            row.mse_std = std_of(cell.mses, row.mse_mean);
            row.mse_median = median_of(cell.mses);
            row.runtime_s = median_of(cell.runtimes);
            row.n = config.n;
            row.replications = static_cast<int>(cell.mses.size());
            row.note = cell.note;
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

nlohmann::json DummyDemoConfig::to_json() const {
    return {{"env", env.to_json()}, {"n", n},   {"n_s", n_s},
            {"seed", seed},         {"irl", irl_to_json(irl)},
            {"cluster_restarts", cluster_restarts}};
}

DummyDemoConfig DummyDemoConfig::from_json(const nlohmann::json& j) {
    DummyDemoConfig c;
    if (j.contains("env")) c.env = BusEnvConfig::from_json(j.at("env"));
    c.n = j.value("n", c.n);
    c.n_s = j.value("n_s", c.n_s);
    c.seed = j.value("seed", c.seed);
    if (j.contains("irl")) c.irl = irl_from_json(j.at("irl"));
    c.cluster_restarts = j.value("cluster_restarts", c.cluster_restarts);
    return c;
}

void DummyDemoResult::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("DummyDemoResult: cannot open " + path);
    out << "true_coord,dummy_coord,samq_cluster,ad_hoc_cluster\n";
    for (const auto& row : states)
        out << format_double(row.true_coord) << "," << format_double(row.dummy_coord) << ","
            << row.samq_cluster << "," << row.ad_hoc_cluster << "\n";
    if (!out)
        throw std::runtime_error("DummyDemoResult: write failed for " + path);
}

namespace {

/** Fraction of equal-true-coordinate state pairs sharing a cluster. */
double column_purity(const std::vector<DummyDemoResult::StateRow>& states,
                     bool use_samq) {
    std::size_t pairs = 0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < states.size(); ++i)
        for (std::size_t j = i + 1; j < states.size(); ++j) {
            if (states[i].true_coord != states[j].true_coord) continue;
            ++pairs;
            const int ci = use_samq ? states[i].samq_cluster : states[i].ad_hoc_cluster;
            const int cj = use_samq ? states[j].samq_cluster : states[j].ad_hoc_cluster;
            if (ci == cj) ++same;
        }
    return pairs == 0 ? 1.0 : static_cast<double>(same) / static_cast<double>(pairs);
}

}  // namespace

DummyDemoResult run_dummy_state_demo(const DummyDemoConfig& config) {
    config.env.validate();
    if (config.env.dummy_dims < 1)
        throw std::invalid_argument("run_dummy_state_demo: env needs dummy_dims >= 1");
    if (config.n == 0 || config.n_s < 1)
        throw std::invalid_argument("run_dummy_state_demo: need n >= 1 and n_s >= 1");

    const MdpSpec mdp = make_bus_env(config.env);
    SimulateOptions sim_opts;
    sim_opts.env_config = config.env.to_json();
    const Dataset dataset =
        simulate(mdp, config.env.theta_true, config.n, config.seed, sim_opts);
    const QEstimate q_est = estimate_q(dataset, config.env.gamma, config.irl);
    const std::vector<StatePoint> support = dataset.support().states();

    const Aggregation samq_agg = cluster_states(q_est.q, support, config.n_s,
                                                derive_seed(config.seed, 1),
                                                config.cluster_restarts);
    const Aggregation ad_hoc_agg = ad_hoc_aggregation(support, config.n_s);

    DummyDemoResult result;
    result.states.reserve(support.size());
    for (const auto& s : support)
        result.states.push_back({s[0], s[1], samq_agg.project_index(s),
                                 ad_hoc_agg.project_index(s)});
    result.samq_purity = column_purity(result.states, true);
    result.ad_hoc_purity = column_purity(result.states, false);
    return result;
}

void export_table(const BenchmarkTable& table, TableFormat format, const std::string& path) {
    if (table.rows.empty())
        throw std::invalid_argument("export_table: empty table");
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("export_table: cannot open " + path);
    if (format == TableFormat::Csv) {
        out << "method,n_s,mse_mean,mse_std,runtime_s,n,replications\n";
        for (const auto& row : table.rows)
            out << method_name(row.method) << "," << row.n_s << ","
                << format_double(row.mse_mean) << "," << format_double(row.mse_std) << ","
                << format_double(row.runtime_s) << "," << row.n << "," << row.replications
                << "\n";
    } else {
        out << "| method | n_s | mse_mean | mse_std | runtime_s | n | replications |\n";
        out << "|---|---|---|---|---|---|---|\n";
        char buf[64];
        for (const auto& row : table.rows) {
            out << "| " << method_name(row.method) << " | " << row.n_s << " | ";
            std::snprintf(buf, sizeof(buf), "%.6g", row.mse_mean);
            out << buf << " | ";
            std::snprintf(buf, sizeof(buf), "%.6g", row.mse_std);
            out << buf << " | ";
            std::snprintf(buf, sizeof(buf), "%.6g", row.runtime_s);
            out << buf << " | " << row.n << " | " << row.replications << " |\n";
        }
    }
    if (!out)
        throw std::runtime_error("export_table: write failed for " + path);
}

BenchmarkTable import_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("import_table_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "method,n_s,mse_mean,mse_std,runtime_s,n,replications")
        throw std::invalid_argument("import_table_csv: unexpected header in " + path);
    BenchmarkTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> toks;
        std::string tok;
        std::istringstream is(line);
        while (std::getline(is, tok, ',')) toks.push_back(tok);
        if (toks.size() != 7)
            throw std::invalid_argument("import_table_csv: row width mismatch in " + path);
        BenchmarkRow row;
        row.method = method_from_name(toks[0]);
        row.n_s = static_cast<int>(parse_double(toks[1]));
        row.mse_mean = parse_double(toks[2]);
        row.mse_std = parse_double(toks[3]);
        row.runtime_s = parse_double(toks[4]);
        row.n = static_cast<std::size_t>(parse_double(toks[5]));
        row.replications = static_cast<int>(parse_double(toks[6]));
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace samq
