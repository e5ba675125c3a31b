#include "canoe/grpo_core.hpp"

#include <algorithm>
#include <cmath>

#include "canoe/errors.hpp"
#include "canoe/util.hpp"

namespace canoe::grpo {

void GrpoConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ConfigError("epsilon must lie in (0,1), got " + format_double(epsilon));
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw ConfigError("beta must be finite and >= 0, got " + format_double(beta));
    }
    if (group_size < 2) {
        throw ConfigError("group_size must be >= 2, got " + std::to_string(group_size));
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be finite and > 0, got " +
                          format_double(learning_rate));
    }
    if (!(std_floor > 0.0) || !std::isfinite(std_floor)) {
        throw ConfigError("std_floor must be finite and > 0, got " + format_double(std_floor));
    }
}

namespace {

double population_std(const std::vector<double>& xs, double mean) {
    double acc = 0.0;
    for (const double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

void require_finite(const std::vector<double>& xs, const char* what) {
    for (const double x : xs) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(what) + " contains a non-finite value");
        }
    }
}

}  // namespace

void GroupBatch::validate(double std_floor) const {
    const std::size_t n = rewards.size();
    if (n < 2) throw ConfigError("group batch needs at least 2 rollouts");
    if (logp_new.size() != n || logp_old.size() != n || logp_ref.size() != n) {
        throw ConfigError("group batch lists have mismatched lengths");
    }
    require_finite(rewards, "rewards");
    require_finite(logp_new, "logp_new");
    require_finite(logp_old, "logp_old");
    require_finite(logp_ref, "logp_ref");
    if (!advantages.empty()) {
        if (advantages.size() != n) throw ConfigError("advantages length mismatch");
        require_finite(advantages, "advantages");
        double mean = 0.0;
        for (const double a : advantages) mean += a;
        mean /= static_cast<double>(n);
        if (std::abs(mean) > 1e-9) {
            throw NumericError("advantages mean " + format_double(mean) + " exceeds 1e-9");
        }
        double r_mean = 0.0;
        for (const double r : rewards) r_mean += r;
        r_mean /= static_cast<double>(n);
        const double r_std = population_std(rewards, r_mean);
        if (r_std >= std_floor) {
            const double a_std = population_std(advantages, 0.0);
            if (std::abs(a_std - 1.0) > 1e-9) {
                throw NumericError("advantages pop-std " + format_double(a_std) +
                                   " deviates from 1 beyond 1e-9");
            }
        }
    }
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor) {
    if (rewards.size() < 2) {
        throw ConfigError("group_advantages: need at least 2 rewards, got " +
                          std::to_string(rewards.size()));
    }
    if (!(std_floor > 0.0)) throw ConfigError("std_floor must be > 0");
    require_finite(rewards, "rewards");

    const auto [min_it, max_it] = std::minmax_element(rewards.begin(), rewards.end());
    if (*min_it == *max_it) {
        return std::vector<double>(rewards.size(), 0.0);
    }
    double mean = 0.0;
    for (const double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    const double denom = std::max(population_std(rewards, mean), std_floor);

    std::vector<double> out;
    out.reserve(rewards.size());
    for (const double r : rewards) out.push_back((r - mean) / denom);
    return out;
}

void fill_advantages(GroupBatch& batch, double std_floor) {
    batch.advantages = group_advantages(batch.rewards, std_floor);
}

double importance_ratio(double logp_new, double logp_old) {
    if (!std::isfinite(logp_new) || !std::isfinite(logp_old)) {
        throw NumericError("importance_ratio: inputs must be finite");
    }
    const double w = std::exp(logp_new - logp_old);
    if (!std::isfinite(w) || w <= 0.0) {
        throw NumericError("importance_ratio overflow/underflow: exp(" +
                           format_double(logp_new - logp_old) + ")");
    }
    return w;
}

double clipped_term(double w, double A, double epsilon) {
    if (!(w > 0.0)) throw NumericError("clipped_term: w must be positive");
    const double clipped_w = std::clamp(w, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(w * A, clipped_w * A);
}

bool unclipped_branch_active(double w, double A, double epsilon) {
    const double clipped_w = std::clamp(w, 1.0 - epsilon, 1.0 + epsilon);
    return w * A <= clipped_w * A;
}

double kl_penalty(double logp_new, double logp_ref) {
    if (!std::isfinite(logp_new) || !std::isfinite(logp_ref)) {
        throw NumericError("kl_penalty: inputs must be finite");
    }
    const double d = logp_ref - logp_new;
    const double r = std::exp(d);
    if (!std::isfinite(r)) {
        throw NumericError("kl_penalty overflow: exp(" + format_double(d) + ")");
    }
    // Mathematically >= 0 (convexity of exp); clamp float rounding dust.
    return std::max(r - d - 1.0, 0.0);
}

ObjectiveStats objective_stats(const GroupBatch& batch, const GrpoConfig& cfg) {
    cfg.validate();
    batch.validate(cfg.std_floor);
    const std::vector<double> advantages =
        batch.advantages.empty() ? group_advantages(batch.rewards, cfg.std_floor)
                                 : batch.advantages;

    const double inv_g = 1.0 / static_cast<double>(batch.size());
    ObjectiveStats stats;
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double w = importance_ratio(batch.logp_new[i], batch.logp_old[i]);
        stats.surrogate += inv_g * clipped_term(w, advantages[i], cfg.epsilon);
        stats.mean_kl += inv_g * kl_penalty(batch.logp_new[i], batch.logp_ref[i]);
        if (!unclipped_branch_active(w, advantages[i], cfg.epsilon)) ++clipped;
    }
    stats.clip_fraction = inv_g * static_cast<double>(clipped);
    stats.objective = stats.surrogate - cfg.beta * stats.mean_kl;
    return stats;
}

double objective(const GroupBatch& batch, const GrpoConfig& cfg) {
    return objective_stats(batch, cfg).objective;
}

}  // namespace canoe::grpo
