#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "samq/env_bus.hpp"
#include "samq/irl.hpp"
#include "samq/nfmle.hpp"

namespace samq {

enum class Method { SAmQ, NfMle, NfMleSa };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/** Full sweep description: environment, sample size, methods, n_s grid, seeds. */
struct ExperimentConfig {
    BusEnvConfig env;
    std::size_t n = 10000;
    std::vector<int> n_s_list = {5, 10, 50, 100, 200};
    std::vector<Method> methods = {Method::SAmQ, Method::NfMle, Method::NfMleSa};
    int replications = 10;
    std::uint64_t seed = 1;
    std::vector<double> theta_init = {0.1, 1.0};
    NfmleOptions estimation;
    QEstimateOptions irl;
    int cluster_restarts = 10;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/** One (method, n_s) cell of the results table. */
struct BenchmarkRow {
    Method method = Method::SAmQ;
    int n_s = 0;
    double mse_mean = 0.0;
    double mse_std = 0.0;
    double mse_median = 0.0;
    double runtime_s = 0.0;
    std::size_t n = 0;
    int replications = 0;
    std::string note;  // failure annotations, empty when all runs succeeded
};

struct BenchmarkTable {
    std::vector<BenchmarkRow> rows;

    const BenchmarkRow* find(Method m, int n_s) const;
};

/**
Run the full protocol: per replication seed, simulate a dataset at theta*;
SAmQ runs estimate-Q -> cluster -> NF-MLE per n_s; NF-MLE-SA runs the ad-hoc
aggregation per n_s; NF-MLE solves the exact model once per seed and its row
is replicated across the n_s grid to match the table layout. Per-run failures
are recorded as row annotations; a cell whose runs all failed is an error.
Deterministic given the config seed.
*/
BenchmarkTable run_experiment(const ExperimentConfig& config);

struct DummyDemoConfig {
    BusEnvConfig env;      // needs dummy_dims >= 1
    std::size_t n = 50000;
    int n_s = 10;
    std::uint64_t seed = 1;
    QEstimateOptions irl;
    int cluster_restarts = 10;

    nlohmann::json to_json() const;
    static DummyDemoConfig from_json(const nlohmann::json& j);
};

struct DummyDemoResult {
    // per support state: (true coordinate, dummy coordinate, cluster ids)
    struct StateRow {
        double true_coord;
        double dummy_coord;
        int samq_cluster;
        int ad_hoc_cluster;
    };
    std::vector<StateRow> states;
    // fraction of equal-true-coordinate state pairs sharing a cluster
    double samq_purity = 0.0;
    double ad_hoc_purity = 0.0;

    /** CSV with header true_coord,dummy_coord,samq_cluster,ad_hoc_cluster. */
    void save_csv(const std::string& path) const;
};

/**
The dummy-state experiment: cluster a 1-d true state plus one
payoff-irrelevant dimension with both aggregation schemes and score how purely
clusters follow the true coordinate.
*/
DummyDemoResult run_dummy_state_demo(const DummyDemoConfig& config);

enum class TableFormat { Csv, Markdown };

/**
Write the table: CSV columns method,n_s,mse_mean,mse_std,runtime_s,n,
replications (full precision, lossless round-trip), or a Markdown table at 6
significant digits. Throws invalid_argument on an empty table.
*/
void export_table(const BenchmarkTable& table, TableFormat format, const std::string& path);

/** Parse back a CSV written by export_table (round-trip checks, reports). */
BenchmarkTable import_table_csv(const std::string& path);

}  // namespace samq
