#include "samq/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace samq {

namespace {

/** Shortest decimal form that parses back to the identical double. */
std::string format_double(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok) {
    double x = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw std::invalid_argument("dataset: malformed number '" + tok + "'");
    return x;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream is(line);
    while (std::getline(is, tok, ',')) out.push_back(tok);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

nlohmann::json DatasetMeta::to_json() const {
    return nlohmann::json{{"gamma", gamma},
                          {"n_a", n_actions},
                          {"env_digest", env_digest},
                          {"env_config", env_config},
                          {"seed", seed},
                          {"N", n}};
}

DatasetMeta DatasetMeta::from_json(const nlohmann::json& j) {
    DatasetMeta m;
    m.gamma = j.at("gamma").get<double>();
    m.n_actions = j.at("n_a").get<int>();
    m.env_digest = j.value("env_digest", std::string());
    m.env_config = j.value("env_config", nlohmann::json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.n = j.at("N").get<std::size_t>();
    return m;
}

void Dataset::validate() const {
    if (transitions.empty())
        throw std::invalid_argument("Dataset: needs at least one transition");
    if (meta.n_actions < 2)
        throw std::invalid_argument("Dataset: meta.n_a must be at least 2");
    const std::size_t d = transitions.front().s.size();
    for (const auto& t : transitions) {
        if (t.a < 0 || t.a >= meta.n_actions)
            throw std::invalid_argument("Dataset: action index out of range");
        if (t.s.size() != d || t.s_next.size() != d)
            throw std::invalid_argument("Dataset: state dimensions are not uniform");
    }
    if (meta.n != transitions.size())
        throw std::invalid_argument("Dataset: meta.N disagrees with the transition count");
}

StateIndex Dataset::support() const {
    StateIndex idx;
    for (const auto& t : transitions) {
        idx.add(t.s);
        idx.add(t.s_next);
    }
    return idx;
}

std::string config_digest(const nlohmann::json& config) {
    const std::string dump = config.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string dataset_meta_path(const std::string& csv_path) {
    const std::string suffix = ".csv";
    if (csv_path.size() > suffix.size() &&
        csv_path.compare(csv_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return csv_path.substr(0, csv_path.size() - suffix.size()) + ".meta.json";
    return csv_path + ".meta.json";
}

void save_dataset(const Dataset& dataset, const std::string& csv_path) {
    dataset.validate();
    std::ofstream out(csv_path);
    if (!out)
        throw std::runtime_error("save_dataset: cannot open " + csv_path);
    const int d = dataset.state_dim();
    for (int j = 0; j < d; ++j) out << "s_" << j << ",";
    out << "a";
    for (int j = 0; j < d; ++j) out << ",snext_" << j;
    out << "\n";
    for (const auto& t : dataset.transitions) {
        for (int j = 0; j < d; ++j) out << format_double(t.s[static_cast<std::size_t>(j)]) << ",";
        out << t.a;
        for (int j = 0; j < d; ++j) out << "," << format_double(t.s_next[static_cast<std::size_t>(j)]);
        out << "\n";
    }
    out.close();
    if (!out)
        throw std::runtime_error("save_dataset: write failed for " + csv_path);

    std::ofstream meta(dataset_meta_path(csv_path));
    if (!meta)
        throw std::runtime_error("save_dataset: cannot open " + dataset_meta_path(csv_path));
    meta << dataset.meta.to_json().dump(2) << "\n";
}

Dataset load_dataset(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in)
        throw std::runtime_error("load_dataset: cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("load_dataset: empty file " + csv_path);
    const auto header = split_csv_line(line);
    // header is s_0..s_{d-1},a,snext_0..snext_{d-1}
    if (header.size() < 3 || header.size() % 2 == 0)
        throw std::invalid_argument("load_dataset: malformed header in " + csv_path);
    const std::size_t d = (header.size() - 1) / 2;
    if (header[d] != "a")
        throw std::invalid_argument("load_dataset: expected action column 'a' in " + csv_path);

    Dataset dataset;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto toks = split_csv_line(line);
        if (toks.size() != header.size())
            throw std::invalid_argument("load_dataset: row width mismatch in " + csv_path);
        Transition t;
        t.s.resize(d);
        t.s_next.resize(d);
        for (std::size_t j = 0; j < d; ++j) t.s[j] = parse_double(toks[j]);
        t.a = static_cast<int>(parse_double(toks[d]));
        for (std::size_t j = 0; j < d; ++j) t.s_next[j] = parse_double(toks[d + 1 + j]);
        dataset.transitions.push_back(std::move(t));
    }

    std::ifstream meta_in(dataset_meta_path(csv_path));
    if (!meta_in)
        throw std::runtime_error("load_dataset: missing sidecar " + dataset_meta_path(csv_path));
    nlohmann::json j;
    meta_in >> j;
    dataset.meta = DatasetMeta::from_json(j);
    dataset.validate();
    return dataset;
}

}  // namespace samq
