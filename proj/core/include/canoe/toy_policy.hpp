#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "canoe/grpo_core.hpp"
#include "canoe/prompts.hpp"
#include "canoe/reward_types.hpp"

namespace canoe::grpo {

// Tabular softmax policy over a finite set of candidate responses per state:
// pi(a|s) = softmax(logits[s])[a].
class ToyPolicy {
public:
    ToyPolicy(int states, int actions);  // zero logits (uniform policy)
    static ToyPolicy random(int states, int actions, std::uint64_t seed, double scale = 1.0);

    int state_count() const { return static_cast<int>(logits.size()); }
    int action_count() const { return logits.empty() ? 0 : static_cast<int>(logits[0].size()); }

    std::vector<double> log_probs(int state) const;  // stable log-softmax
    std::vector<double> probs(int state) const;
    double logp(int state, int action) const;
    int sample(int state, std::mt19937_64& rng) const;

    std::vector<std::vector<double>> logits;
};

// A state is one synthetic QA item together with its finite candidate
// responses; rewards are precomputed once through the real parse + reward
// pipeline so the toy loop optimizes exactly the production reward.
struct ToyState {
    std::string question;
    std::string gold;
    std::string context;
    std::vector<std::string> responses;
    std::vector<reward::RewardBreakdown> rewards;
};

struct ToyEnv {
    std::vector<ToyState> states;
    int action_count() const {
        return states.empty() ? 0 : static_cast<int>(states[0].responses.size());
    }
};

// One state / four candidate responses with rewards 3 (well-formed and
// grounded), 1 (format only), 0 (no tags), 1 (grounded long answer but a
// broken short tag). Rewards are computed through parse_response and the
// reward engine against a deterministic mock backend.
ToyEnv default_bandit_env(const PromptLibrary& prompts);

struct ToyGroup {
    int state = 0;
    std::vector<int> actions;  // length G, indices into the state's responses
    GroupBatch batch;
};

// Objective of a batch of groups: mean over groups of the per-group GRPO
// objective, with logp_new recomputed from `policy` and logp_old / logp_ref /
// rewards taken from the groups.
double batch_objective(const ToyPolicy& policy, const std::vector<ToyGroup>& groups,
                       const GrpoConfig& cfg);

// Analytic gradient of batch_objective with respect to every logit.
std::vector<std::vector<double>> analytic_gradient(const ToyPolicy& policy,
                                                   const std::vector<ToyGroup>& groups,
                                                   const GrpoConfig& cfg);

// Central finite difference of batch_objective w.r.t. logits[state][action].
double fd_gradient(const ToyPolicy& policy, const std::vector<ToyGroup>& groups,
                   const GrpoConfig& cfg, int state, int action, double h = 1e-5);

// max over logits of |analytic - fd| / max(1, |analytic|, |fd|).
double max_gradient_rel_error(const ToyPolicy& policy, const std::vector<ToyGroup>& groups,
                              const GrpoConfig& cfg, double h = 1e-5);

// One ascent step: recomputes logp_new under `policy`, fills advantages,
// applies learning_rate * analytic gradient. Returns the sampled-batch stats
// before the update. Non-finite gradients raise NumericError.
ObjectiveStats toy_policy_step(ToyPolicy& policy, std::vector<ToyGroup>& groups,
                               const GrpoConfig& cfg, double learning_rate);

struct ToyTrainConfig {
    int steps = 500;
    int groups_per_step = 4;
    int inner_epochs = 2;  // > 1 so the clip path is exercised off-policy
    int gradcheck_every = 10;
    double gradcheck_tol = 1e-5;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
    // The desk-scale env needs a lighter KL anchor than the LLM-scale default:
    // at beta = 0.04 the pull toward the uniform reference caps the best
    // action's probability near 0.988 regardless of step count.
    GrpoConfig grpo{.beta = 0.02};
};

struct ToyStepRow {
    int step = 0;
    // Exact expectations under the post-step policy (closed form on the env).
    double mean_reward = 0;
    double mean_r_acc = 0;
    double mean_r_proxy = 0;
    double mean_r_format = 0;
    // Exact categorical KL(pi || pi_ref) averaged over states.
    double mean_kl = 0;
    // From the sampled batch of the step's last inner epoch.
    double clip_fraction = 0;
    double objective = 0;
};

struct ToyTrainResult {
    ToyPolicy policy{1, 2};  // placeholder; train_toy replaces it
    std::vector<ToyStepRow> rows;
    std::string csv() const;
};

// Full training loop: sample groups on-policy, run inner_epochs ascent steps
// per batch, verify the analytic gradient against finite differences every
// gradcheck_every steps (on the freshly sampled, on-policy batch), and record
// one stats row per step. A failed gradient check aborts with the step number.
ToyTrainResult train_toy(const ToyEnv& env, const ToyTrainConfig& cfg);

// Exact expectations under `policy`: E[r_final], E[r_acc], E[r_proxy],
// E[r_format] with states weighted uniformly.
struct ExactRewardStats {
    double mean_reward = 0;
    double mean_r_acc = 0;
    double mean_r_proxy = 0;
    double mean_r_format = 0;
};
ExactRewardStats exact_reward_stats(const ToyPolicy& policy, const ToyEnv& env);

// Exact mean over states of the categorical KL(pi(.|s) || ref(.|s)).
double exact_mean_kl(const ToyPolicy& policy, const ToyPolicy& reference);

}  // namespace canoe::grpo
