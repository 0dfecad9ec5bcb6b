// samq: command-line front end for the SAmQ estimation library.
//
// Subcommands: simulate, estimate, aggregate, diagnose, benchmark, dummy-demo.
// Worker threads are controlled by the SAMQ_WORKERS environment variable.
// Any hard error exits nonzero with a message on stderr.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "samq/bench.hpp"
#include "samq/diagnostics.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
    if (!out)
        throw std::runtime_error("write failed for " + path);
}

/** Rebuild the reward family the dataset was generated under. */
samq::RewardModelPtr reward_from_meta(const samq::DatasetMeta& meta,
                                      const std::string& reward_file) {
    if (!reward_file.empty())
        return samq::reward_model_from_json(read_json(reward_file));
    const auto& env = meta.env_config;
    if (env.is_object() && env.value("env", std::string()) == "bus")
        return samq::make_bus_env(samq::BusEnvConfig::from_json(env)).reward_model;
    if (env.is_object() && env.contains("reward_model"))
        return samq::reward_model_from_json(env.at("reward_model"));
    throw std::invalid_argument(
        "dataset sidecar carries no recognizable environment; pass --reward-model");
}

bool has_bus_env(const samq::DatasetMeta& meta) {
    return meta.env_config.is_object() &&
           meta.env_config.value("env", std::string()) == "bus";
}

samq::QEstimateOptions irl_options(std::size_t bins, double smoothing, int anchor) {
    samq::QEstimateOptions opts;
    opts.bins = bins;
    opts.smoothing = smoothing;
    opts.anchor = anchor;
    return opts;
}

int cmd_simulate(const std::string& config_path, std::size_t n, std::uint64_t seed,
                 bool chained, const std::string& out) {
    samq::BusEnvConfig env;
    if (!config_path.empty()) env = samq::BusEnvConfig::from_json(read_json(config_path));
    const samq::MdpSpec mdp = samq::make_bus_env(env);
    samq::SimulateOptions opts;
    opts.chained = chained;
    opts.env_config = env.to_json();
    const samq::Dataset dataset = samq::simulate(mdp, env.theta_true, n, seed, opts);
    samq::save_dataset(dataset, out);
    std::cout << "wrote " << dataset.size() << " transitions over "
              << dataset.support().size() << " support states to " << out << "\n";
    return 0;
}

int cmd_estimate(const std::string& data_path, const std::string& agg_path, double gamma,
                 const std::vector<double>& theta_init, const std::string& out,
                 const std::string& reward_file, double min_cell_count,
                 const std::string& optimizer, int max_iter) {
    const samq::Dataset dataset = samq::load_dataset(data_path);
    if (gamma >= 0.0 && std::abs(gamma - dataset.meta.gamma) > 1e-12)
        throw std::invalid_argument("--gamma disagrees with the dataset sidecar");
    auto aggregation =
        std::make_shared<samq::Aggregation>(samq::load_aggregation(agg_path));
    const samq::RewardModelPtr reward = reward_from_meta(dataset.meta, reward_file);

    samq::NfmleOptions opts;
    opts.min_cell_count = min_cell_count;
    opts.outer.max_iter = max_iter;
    if (optimizer == "nelder-mead")
        opts.optimizer = samq::OuterOptimizer::NelderMead;
    else if (optimizer == "gradient-ascent")
        opts.optimizer = samq::OuterOptimizer::GradientAscent;
    else
        throw std::invalid_argument("unknown --optimizer '" + optimizer + "'");

    const samq::EstimationReport report = samq::nfmle_estimate(
        dataset, aggregation, *reward, samq::ThetaVector(theta_init), opts);
    write_json(report.to_json(), out);
    std::cout << "theta_hat =";
    for (double v : report.theta_hat.values) std::cout << " " << v;
    std::cout << "\nlog_likelihood = " << report.log_likelihood << "\n";
    if (!report.warning.empty()) std::cout << "warning: " << report.warning << "\n";
    return 0;
}

int cmd_aggregate(const std::string& data_path, const std::string& q_path, int n_s,
                  const std::string& out, std::uint64_t seed, int restarts, bool ad_hoc,
                  std::size_t bins, double smoothing, int anchor) {
    const samq::Dataset dataset = samq::load_dataset(data_path);
    const std::vector<samq::StatePoint> support = dataset.support().states();

    samq::Aggregation aggregation;
    if (ad_hoc) {
        aggregation = samq::ad_hoc_aggregation(support, n_s);
        std::cout << "ad-hoc aggregation: " << aggregation.n_s << " cells\n";
    } else {
        samq::QFunction q;
        if (!q_path.empty()) {
            q = samq::load_q_csv(q_path);
        } else {
            q = samq::estimate_q(dataset, dataset.meta.gamma,
                                 irl_options(bins, smoothing, anchor))
                    .q;
        }
        aggregation = samq::cluster_states(q, support, n_s, seed, restarts);
        std::cout << "clustered " << support.size() << " states into " << aggregation.n_s
                  << " cells; eps_dis_hat = "
                  << samq::aggregation_q_error(q, aggregation) << "\n";
    }
    std::cout << "empirical coverage = " << samq::empirical_coverage(dataset, aggregation)
              << "\n";
    samq::save_aggregation(aggregation, out);
    return 0;
}

int cmd_diagnose(const std::string& data_path, const std::string& agg_path,
                 const std::string& q_path, const std::string& out,
                 std::vector<double> theta_hat, double delta, double resolution,
                 std::size_t bins, double smoothing, int anchor) {
    const samq::Dataset dataset = samq::load_dataset(data_path);
    const samq::Aggregation aggregation = samq::load_aggregation(agg_path);
    const double gamma = dataset.meta.gamma;

    samq::QFunction q_hat;
    if (!q_path.empty())
        q_hat = samq::load_q_csv(q_path);
    else
        q_hat = samq::estimate_q(dataset, gamma, irl_options(bins, smoothing, anchor)).q;

    samq::BoundReport report;
    report.gamma = gamma;
    report.n_s = aggregation.n_s;
    report.n_a = dataset.meta.n_actions;
    report.eps_dis_hat = samq::aggregation_q_error(q_hat, aggregation);
    report.c_uni = samq::empirical_coverage(dataset, aggregation);

    if (!has_bus_env(dataset.meta))
        throw std::invalid_argument(
            "diagnose needs the generating environment in the dataset sidecar");
    const samq::BusEnvConfig env = samq::BusEnvConfig::from_json(dataset.meta.env_config);
    const samq::MdpSpec mdp = samq::make_bus_env(env);
    const samq::ThetaVector& theta_star = env.theta_true;
    report.n_param = static_cast<int>(theta_star.size());

    const samq::QFunction q_true = samq::soft_q_solve(mdp, theta_star, 1e-12, 100000).q;
    report.eps_q = samq::q_error(q_true, aggregation);

    // Realized reward bound: the model may not declare a finite R_max.
    double r_max = mdp.r_max;
    if (!std::isfinite(r_max)) {
        r_max = 0.0;
        for (int s = 0; s < mdp.n_states(); ++s)
            for (int a = 0; a < mdp.n_actions(); ++a)
                r_max = std::max(r_max, std::abs(mdp.reward(s, a, theta_star)));
    }
    report.r_max = r_max;

    const samq::ThetaVector theta_at(theta_hat.empty() ? theta_star.values : theta_hat);
    auto shared_agg = std::make_shared<const samq::Aggregation>(aggregation);
    report.c_h =
        samq::estimate_concavity(dataset, shared_agg, *mdp.reward_model, theta_at, gamma);
    if (!theta_hat.empty()) {
        double gap = 0.0;
        for (std::size_t i = 0; i < theta_hat.size(); ++i) {
            const double d = theta_hat[i] - theta_star.values[i];
            gap += d * d;
        }
        report.theta_gap = gap;
    }
    report.thm1_bound = 4.0 * report.eps_q / (report.c_h * (1.0 - gamma));

    // Population checks need the aggregation to cover every model state;
    // a support-built aggregation usually does not, so failures are reported
    // rather than fatal.
    try {
        const samq::PopulationModel population(mdp, aggregation, theta_star);
        const samq::ThetaVector theta_tilde = population.maximize_aggregated_likelihood();
        const double c_h_pop = population.concavity_on_segment(theta_tilde);
        report.inequalities.push_back(
            samq::theorem1_check(mdp, theta_star, aggregation, c_h_pop));
        for (auto& record :
             samq::lemma_likelihood_bound_check(mdp, theta_star, aggregation, c_h_pop))
            report.inequalities.push_back(std::move(record));
    } catch (const std::exception& e) {
        std::cout << "population checks skipped: " << e.what() << "\n";
    }

    // C_Q constant: realized IRL error on the support.
    double c_q = 0.0;
    for (int i = 0; i < q_hat.index.size(); ++i) {
        const auto& s = q_hat.index.state(i);
        if (!q_true.index.contains(s)) continue;
        for (int a = 0; a < dataset.meta.n_actions; ++a)
            c_q = std::max(c_q, std::abs(q_hat.table(i, a) -
                                         q_true.table(q_true.index.at(s), a)));
    }

    samq::Theorem2Inputs inputs;
    inputs.c_h = report.c_h;
    inputs.c_uni = report.c_uni;
    inputs.r_max = report.r_max;
    inputs.gamma = gamma;
    inputs.n_s = report.n_s;
    inputs.n_a = report.n_a;
    inputs.c_q = c_q;
    const auto exact_c3 = samq::exact_clustering_constant(q_hat, aggregation);
    inputs.c_clustering = exact_c3.value_or(0.0);
    if (!exact_c3)
        std::cout << "clustering constant set to 0 (support too large for exact search)\n";

    double theta_card = 1e6;
    if (theta_star.has_bounds())
        theta_card = samq::theta_cardinality_proxy(theta_star, resolution);
    else
        std::cout << "theta has no declared bounds; |Theta| proxy defaults to 1e6\n";

    try {
        const samq::Theorem2Bound bound =
            samq::theorem2_bound(inputs, dataset.size(), delta, theta_card);
        report.thm2_bias = bound.bias;
        report.thm2_variance = bound.variance;
    } catch (const samq::BoundUndefinedError& e) {
        report.thm2_bias = std::numeric_limits<double>::quiet_NaN();
        report.thm2_variance = std::numeric_limits<double>::quiet_NaN();
        std::cout << "theorem-2 bound undefined here: " << e.what() << "\n";
    }

    std::cout << report.table();
    write_json(report.to_json(), out);
    return 0;
}

int cmd_benchmark(const std::string& config_path, const std::string& out_dir) {
    const samq::ExperimentConfig config =
        samq::ExperimentConfig::from_json(read_json(config_path));
    const samq::BenchmarkTable table = samq::run_experiment(config);
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir);
    samq::export_table(table, samq::TableFormat::Csv, (base / "table.csv").string());
    samq::export_table(table, samq::TableFormat::Markdown, (base / "table.md").string());
    std::ifstream md(base / "table.md");
    std::cout << md.rdbuf();
    for (const auto& row : table.rows)
        if (!row.note.empty())
            std::cout << samq::method_name(row.method) << " n_s=" << row.n_s << ": "
                      << row.note << "\n";
    return 0;
}

int cmd_dummy_demo(const std::string& config_path, const std::string& out) {
    samq::DummyDemoConfig config;
    if (!config_path.empty()) {
        config = samq::DummyDemoConfig::from_json(read_json(config_path));
    } else {
        config.env.mileage_grid_size = 20;
        config.env.dummy_dims = 1;
    }
    const samq::DummyDemoResult result = samq::run_dummy_state_demo(config);
    result.save_csv(out);
    std::cout << "samq purity = " << result.samq_purity
              << ", ad-hoc purity = " << result.ad_hoc_purity << " over "
              << result.states.size() << " states\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAmQ: structural reward estimation via state aggregation"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "draw a behavior dataset from a bus environment");
    std::string sim_config, sim_out;
    std::size_t sim_n = 10000;
    std::uint64_t sim_seed = 1;
    bool sim_chained = false;
    sim->add_option("--config", sim_config, "environment JSON (default: stock bus env)");
    sim->add_option("--n", sim_n, "number of transitions");
    sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_flag("--chained", sim_chained, "one trajectory instead of independent restarts");
    sim->add_option("--out", sim_out, "output dataset CSV")->required();

    auto* est = app.add_subcommand("estimate", "aggregated NF-MLE on a dataset");
    std::string est_data, est_agg, est_out, est_reward, est_optimizer = "nelder-mead";
    double est_gamma = -1.0, est_min_cell = 1.0;
    std::vector<double> est_theta_init = {0.1, 1.0};
    int est_max_iter = 1000;
    est->add_option("--data", est_data, "dataset CSV")->required();
    est->add_option("--aggregation", est_agg, "aggregation JSON")->required();
    est->add_option("--gamma", est_gamma, "discount factor (cross-checked with the sidecar)");
    est->add_option("--theta-init", est_theta_init, "initial theta")->delimiter(',');
    est->add_option("--out", est_out, "report JSON")->required();
    est->add_option("--reward-model", est_reward, "reward model JSON (default: from sidecar)");
    est->add_option("--min-cell-count", est_min_cell, "coverage threshold per cell");
    est->add_option("--optimizer", est_optimizer, "nelder-mead or gradient-ascent");
    est->add_option("--max-iter", est_max_iter, "outer iteration budget");

    auto* agg = app.add_subcommand("aggregate", "cluster dataset states by Q similarity");
    std::string agg_data, agg_q, agg_out;
    int agg_n_s = 10, agg_restarts = 10, agg_anchor = 0;
    std::uint64_t agg_seed = 1;
    bool agg_ad_hoc = false;
    std::size_t agg_bins = 1 << 16;
    double agg_smoothing = 0.5;
    agg->add_option("--data", agg_data, "dataset CSV")->required();
    agg->add_option("--q", agg_q, "Q estimate CSV (default: run the IRL step here)");
    agg->add_option("--n-s", agg_n_s, "number of aggregated states")->required();
    agg->add_option("--out", agg_out, "aggregation JSON")->required();
    agg->add_option("--seed", agg_seed, "clustering seed");
    agg->add_option("--restarts", agg_restarts, "K-means restarts");
    agg->add_flag("--ad-hoc", agg_ad_hoc, "per-dimension quantile grid instead of K-means");
    agg->add_option("--bins", agg_bins, "IRL bins per dimension cap");
    agg->add_option("--smoothing", agg_smoothing, "IRL Laplace smoothing");
    agg->add_option("--anchor", agg_anchor, "IRL anchor action");

    auto* dia = app.add_subcommand("diagnose", "evaluate the error bounds on a dataset");
    std::string dia_data, dia_agg, dia_q, dia_out;
    std::vector<double> dia_theta_hat;
    double dia_delta = 0.05, dia_resolution = 0.01;
    int dia_anchor = 0;
    std::size_t dia_bins = 1 << 16;
    double dia_smoothing = 0.5;
    dia->add_option("--data", dia_data, "dataset CSV")->required();
    dia->add_option("--aggregation", dia_agg, "aggregation JSON")->required();
    dia->add_option("--q", dia_q, "Q estimate CSV (default: run the IRL step here)");
    dia->add_option("--out", dia_out, "bound report JSON")->required();
    dia->add_option("--theta-hat", dia_theta_hat, "estimate to diagnose at")->delimiter(',');
    dia->add_option("--delta", dia_delta, "confidence level");
    dia->add_option("--resolution", dia_resolution, "|Theta| proxy resolution");
    dia->add_option("--bins", dia_bins, "IRL bins per dimension cap");
    dia->add_option("--smoothing", dia_smoothing, "IRL Laplace smoothing");
    dia->add_option("--anchor", dia_anchor, "IRL anchor action");

    auto* ben = app.add_subcommand("benchmark", "run the full method-by-n_s sweep");
    std::string ben_config, ben_out;
    ben->add_option("--config", ben_config, "experiment JSON")->required();
    ben->add_option("--out", ben_out, "output directory")->required();

    auto* dum = app.add_subcommand("dummy-demo", "cluster-purity demo on a dummy dimension");
    std::string dum_config, dum_out;
    dum->add_option("--config", dum_config, "demo JSON (default: 20-point grid, one dummy)");
    dum->add_option("--out", dum_out, "per-state cluster CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(sim))
            return cmd_simulate(sim_config, sim_n, sim_seed, sim_chained, sim_out);
        if (app.got_subcommand(est))
            return cmd_estimate(est_data, est_agg, est_gamma, est_theta_init, est_out,
                                est_reward, est_min_cell, est_optimizer, est_max_iter);
        if (app.got_subcommand(agg))
            return cmd_aggregate(agg_data, agg_q, agg_n_s, agg_out, agg_seed, agg_restarts,
                                 agg_ad_hoc, agg_bins, agg_smoothing, agg_anchor);
        if (app.got_subcommand(dia))
            return cmd_diagnose(dia_data, dia_agg, dia_q, dia_out, dia_theta_hat, dia_delta,
                                dia_resolution, dia_bins, dia_smoothing, dia_anchor);
        if (app.got_subcommand(ben)) return cmd_benchmark(ben_config, ben_out);
        if (app.got_subcommand(dum)) return cmd_dummy_demo(dum_config, dum_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
