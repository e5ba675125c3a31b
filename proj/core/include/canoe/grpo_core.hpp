#pragma once

#include <cstddef>
#include <vector>

namespace canoe::grpo {

struct GrpoConfig {
    double epsilon = 0.2;   // clip range
    double beta = 0.04;     // KL penalty weight
    int group_size = 7;     // G
    double learning_rate = 1e-6;  // LLM-scale default; toy training overrides
    double std_floor = 1e-8;

    // epsilon in (0,1); beta >= 0; G >= 2; learning_rate > 0; std_floor > 0.
    void validate() const;
};

struct GroupBatch {
    std::vector<double> rewards;
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::vector<double> advantages;  // filled by fill_advantages

    std::size_t size() const { return rewards.size(); }
    // Equal lengths >= 2, all entries finite. Advantages, when filled, must
    // have mean 0 and (for groups whose reward pop-std >= std_floor) unit
    // pop-std, both within 1e-9.
    void validate(double std_floor) const;
};

// A_i = (r_i - mean) / max(pop_std, std_floor); all-equal rewards yield all
// zeros. Fewer than two rewards -> degenerate-group error.
std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor);

void fill_advantages(GroupBatch& batch, double std_floor);

// exp(logp_new - logp_old); strictly positive, NumericError on overflow or
// underflow to zero.
double importance_ratio(double logp_new, double logp_old);

// min(w * A, clip(w, 1-eps, 1+eps) * A).
double clipped_term(double w, double A, double epsilon);

// True when the unclipped branch w*A attains the min (ties included): the
// sub-gradient of clipped_term w.r.t. logp_new is A*w there and 0 elsewhere.
bool unclipped_branch_active(double w, double A, double epsilon);

// Per-sample non-negative KL estimate:
// exp(logp_ref - logp_new) - (logp_ref - logp_new) - 1.
double kl_penalty(double logp_new, double logp_ref);

// (1/G) sum_i clipped_term(w_i, A_i, eps) - beta * (1/G) sum_i kl_i.
// Uses batch.advantages when filled, else derives them from rewards.
double objective(const GroupBatch& batch, const GrpoConfig& cfg);

struct ObjectiveStats {
    double objective = 0;
    double surrogate = 0;      // (1/G) sum of clipped terms
    double mean_kl = 0;        // (1/G) sum of kl penalties
    double clip_fraction = 0;  // share of samples where clipping binds
};

ObjectiveStats objective_stats(const GroupBatch& batch, const GrpoConfig& cfg);

}  // namespace canoe::grpo
