#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "samq/mdp.hpp"

namespace samq {

/** One observed decision: state, chosen action, successor state. */
struct Transition {
    StatePoint s;
    int a = 0;
    StatePoint s_next;
};

/** Generation metadata persisted as the dataset's JSON sidecar. */
struct DatasetMeta {
    double gamma = 0.0;
    int n_actions = 0;
    std::string env_digest;       // hash of the generating config
    nlohmann::json env_config;    // the full config, so rewards can be rebuilt
    std::uint64_t seed = 0;
    std::size_t n = 0;

    nlohmann::json to_json() const;
    static DatasetMeta from_json(const nlohmann::json& j);
};

/** Observed transitions {(s_i, a_i, s_i')} plus generation metadata. */
struct Dataset {
    std::vector<Transition> transitions;
    DatasetMeta meta;

    std::size_t size() const { return transitions.size(); }
    int state_dim() const {
        return transitions.empty() ? 0 : static_cast<int>(transitions.front().s.size());
    }

    /** N >= 1, action indices < n_a, uniform state dimensions. */
    void validate() const;

    /**
    Distinct states appearing anywhere in the data (as s_i or s_i'), indexed in
    first-appearance order. This is the support on which estimated Q-functions
    and aggregations are defined.
    */
    StateIndex support() const;
};

/** Stable digest of a JSON config (FNV-1a over the canonical dump). */
std::string config_digest(const nlohmann::json& config);

/**
Write the dataset as CSV with header s_0..s_{d-1},a,snext_0..snext_{d-1} and
the metadata as a sidecar JSON next to it (foo.csv -> foo.meta.json). Doubles
are printed in shortest round-trip form, so load(save(d)) is bit-identical.
*/
void save_dataset(const Dataset& dataset, const std::string& csv_path);

/** Load a dataset written by save_dataset; validates dimension consistency. */
Dataset load_dataset(const std::string& csv_path);

/** Sidecar path for a dataset CSV path (foo.csv -> foo.meta.json). */
std::string dataset_meta_path(const std::string& csv_path);

}  // namespace samq
