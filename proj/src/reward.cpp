#include "samq/mdp.hpp"

#include <cmath>

namespace samq {

namespace {

/**
Bus engine replacement rewards: continuing costs theta_1 per unit of mileage,
replacing costs a flat theta_2. The mileage lives in one designated state
coordinate; any further coordinates are payoff-irrelevant (dummy) dimensions.
*/
class BusLinearReward : public RewardModel {
public:
    explicit BusLinearReward(int mileage_coord) : mileage_coord_(mileage_coord) {
        if (mileage_coord < 0)
            throw std::invalid_argument("bus_linear: mileage coordinate must be non-negative");
    }

    double eval(const StatePoint& s, int action,
                const std::vector<double>& theta) const override {
        if (theta.size() != 2)
            throw std::invalid_argument("bus_linear: expects a 2-parameter theta");
        if (static_cast<std::size_t>(mileage_coord_) >= s.size())
            throw std::invalid_argument("bus_linear: state has no mileage coordinate");
        switch (action) {
            case 0: return -theta[0] * s[static_cast<std::size_t>(mileage_coord_)];
            case 1: return -theta[1];
            default:
                throw std::invalid_argument("bus_linear: action index out of range");
        }
    }

    int param_count() const override { return 2; }
    std::string kind() const override { return "bus_linear"; }
    nlohmann::json params() const override {
        return nlohmann::json{{"mileage_coord", mileage_coord_}};
    }

private:
    int mileage_coord_;
};

/**
Linear-in-parameters reward r(s,a;theta) = sum_k theta_k * phi_k(s,a) with
affine features phi_k(s,a) = c[k][a][0] + sum_j c[k][a][1+j] * s_j. General
enough for the small tabular test environments and the diagnostics sweeps.
*/
class FeatureLinearReward : public RewardModel {
public:
    explicit FeatureLinearReward(std::vector<std::vector<std::vector<double>>> coeffs)
        : coeffs_(std::move(coeffs)) {
        if (coeffs_.empty())
            throw std::invalid_argument("feature_linear: empty coefficient array");
        const std::size_t n_a = coeffs_.front().size();
        for (const auto& per_action : coeffs_) {
            if (per_action.size() != n_a || n_a == 0)
                throw std::invalid_argument("feature_linear: ragged coefficient array");
        }
    }

    double eval(const StatePoint& s, int action,
                const std::vector<double>& theta) const override {
        if (theta.size() != coeffs_.size())
            throw std::invalid_argument("feature_linear: theta dimension mismatch");
        if (action < 0 || static_cast<std::size_t>(action) >= coeffs_.front().size())
            throw std::invalid_argument("feature_linear: action index out of range");
        double r = 0.0;
        for (std::size_t k = 0; k < coeffs_.size(); ++k) {
            const auto& c = coeffs_[k][static_cast<std::size_t>(action)];
            if (c.size() != s.size() + 1)
                throw std::invalid_argument("feature_linear: feature dimension mismatch");
            double phi = c[0];
            for (std::size_t j = 0; j < s.size(); ++j) phi += c[j + 1] * s[j];
            r += theta[k] * phi;
        }
        return r;
    }

    int param_count() const override { return static_cast<int>(coeffs_.size()); }
    std::string kind() const override { return "feature_linear"; }
    nlohmann::json params() const override {
        return nlohmann::json{{"coeffs", coeffs_}};
    }

private:
    // coeffs_[param][action][0..d] — intercept then per-coordinate slopes
    std::vector<std::vector<std::vector<double>>> coeffs_;
};

}  // namespace

RewardModelPtr make_reward_model(const std::string& kind, const nlohmann::json& params) {
    if (kind == "bus_linear") {
        int coord = params.value("mileage_coord", 0);
        return std::make_shared<BusLinearReward>(coord);
    }
    if (kind == "feature_linear") {
        auto coeffs = params.at("coeffs").get<std::vector<std::vector<std::vector<double>>>>();
        return std::make_shared<FeatureLinearReward>(std::move(coeffs));
    }
    throw std::invalid_argument("make_reward_model: unknown reward kind '" + kind + "'");
}

RewardModelPtr reward_model_from_json(const nlohmann::json& j) {
    return make_reward_model(j.at("kind").get<std::string>(),
                             j.value("params", nlohmann::json::object()));
}

nlohmann::json reward_model_to_json(const RewardModel& model) {
    return nlohmann::json{{"kind", model.kind()}, {"params", model.params()}};
}

}  // namespace samq
