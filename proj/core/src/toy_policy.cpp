#include "canoe/toy_policy.hpp"

#include <algorithm>
#include <cmath>

#include "canoe/errors.hpp"
#include "canoe/mock_client.hpp"
#include "canoe/reward_engine.hpp"
#include "canoe/rollout.hpp"
#include "canoe/util.hpp"

namespace canoe::grpo {

ToyPolicy::ToyPolicy(int states, int actions) {
    if (states < 1 || actions < 2) {
        throw ConfigError("toy policy needs >= 1 state and >= 2 actions");
    }
    logits.assign(states, std::vector<double>(actions, 0.0));
}

ToyPolicy ToyPolicy::random(int states, int actions, std::uint64_t seed, double scale) {
    ToyPolicy p(states, actions);
    std::mt19937_64 rng(seed);
    for (auto& row : p.logits) {
        for (auto& l : row) l = (uniform01(rng) * 2.0 - 1.0) * scale;
    }
    return p;
}

std::vector<double> ToyPolicy::log_probs(int state) const {
    const auto& row = logits.at(state);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (const double l : row) z += std::exp(l - m);
    const double lse = m + std::log(z);
    std::vector<double> out;
    out.reserve(row.size());
    for (const double l : row) out.push_back(l - lse);
    return out;
}

std::vector<double> ToyPolicy::probs(int state) const {
    auto lp = log_probs(state);
    for (double& v : lp) v = std::exp(v);
    return lp;
}

double ToyPolicy::logp(int state, int action) const { return log_probs(state).at(action); }

int ToyPolicy::sample(int state, std::mt19937_64& rng) const {
    const auto pi = probs(state);
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t a = 0; a < pi.size(); ++a) {
        acc += pi[a];
        if (u < acc) return static_cast<int>(a);
    }
    return static_cast<int>(pi.size()) - 1;
}

ToyEnv default_bandit_env(const PromptLibrary& prompts) {
    ToyState state;
    state.question = "What is France's capital?";
    state.gold = "Paris";
    state.context = "France's capital is Paris. The republic lies in western Europe.";
    state.responses = {
        // Grounded and well-formed: all three rewards.
        "<think> The context states the capital directly. </think> "
        "<long_answer> France's capital is Paris. </long_answer> "
        "<short_answer> Paris </short_answer>",
        // Well-formed but wrong and ungrounded: format reward only.
        "<think> I will guess. </think> "
        "<long_answer> The answer is clear from the context. </long_answer> "
        "<short_answer> Lyon </short_answer>",
        // No tags at all: nothing.
        "Paris.",
        // Grounded long answer but the short tag never closes: proxy only.
        "<think> The capital is given. </think> "
        "<long_answer> France's capital is Paris. </long_answer> "
        "<short_answer> Paris",
    };

    llm::MockConfig mock_config;
    mock_config.flaw_rate = 0.0;  // reward computation must be deterministic
    llm::FaithfulMockClient mock(mock_config);
    for (const std::string& response : state.responses) {
        const auto parsed = rollout::parse_response(response);
        const int acc = reward::accuracy_reward(parsed, state.gold);
        const int fmt = reward::format_reward(parsed);
        const int proxy =
            reward::proxy_reward(mock, parsed, state.question, state.gold, prompts);
        state.rewards.push_back(reward::composite(acc, proxy, fmt));
    }

    ToyEnv env;
    env.states.push_back(std::move(state));
    return env;
}

namespace {

GroupBatch with_fresh_logps(const ToyPolicy& policy, const ToyGroup& group) {
    GroupBatch batch = group.batch;
    const auto lp = policy.log_probs(group.state);
    for (std::size_t i = 0; i < group.actions.size(); ++i) {
        batch.logp_new[i] = lp.at(group.actions[i]);
    }
    return batch;
}

void check_groups(const std::vector<ToyGroup>& groups, const ToyPolicy& policy) {
    if (groups.empty()) throw ConfigError("toy batch needs at least one group");
    for (const ToyGroup& g : groups) {
        if (g.state < 0 || g.state >= policy.state_count()) {
            throw ConfigError("toy group references unknown state");
        }
        const std::size_t n = g.actions.size();
        if (n < 2 || g.batch.rewards.size() != n || g.batch.logp_new.size() != n ||
            g.batch.logp_old.size() != n || g.batch.logp_ref.size() != n) {
            throw ConfigError("toy group lists have mismatched lengths");
        }
        for (const int a : g.actions) {
            if (a < 0 || a >= policy.action_count()) {
                throw ConfigError("toy group references unknown action");
            }
        }
    }
}

}  // namespace

double batch_objective(const ToyPolicy& policy, const std::vector<ToyGroup>& groups,
                       const GrpoConfig& cfg) {
    check_groups(groups, policy);
    double acc = 0.0;
    for (const ToyGroup& g : groups) {
        GroupBatch batch = with_fresh_logps(policy, g);
        fill_advantages(batch, cfg.std_floor);
        acc += objective(batch, cfg);
    }
    return acc / static_cast<double>(groups.size());
}

std::vector<std::vector<double>> analytic_gradient(const ToyPolicy& policy,
                                                   const std::vector<ToyGroup>& groups,
                                                   const GrpoConfig& cfg) {
    check_groups(groups, policy);
    cfg.validate();
    std::vector<std::vector<double>> grad(policy.state_count(),
                                          std::vector<double>(policy.action_count(), 0.0));
    const double inv_groups = 1.0 / static_cast<double>(groups.size());

    for (const ToyGroup& g : groups) {
        const auto lp = policy.log_probs(g.state);
        std::vector<double> pi(lp.size());
        for (std::size_t b = 0; b < lp.size(); ++b) pi[b] = std::exp(lp[b]);

        const auto advantages = group_advantages(g.batch.rewards, cfg.std_floor);
        const double inv_g = 1.0 / static_cast<double>(g.actions.size());

        for (std::size_t i = 0; i < g.actions.size(); ++i) {
            const int a = g.actions[i];
            const double logp_new = lp[a];
            const double w = importance_ratio(logp_new, g.batch.logp_old[i]);
            const double kl_ratio = std::exp(g.batch.logp_ref[i] - logp_new);
            if (!std::isfinite(kl_ratio)) {
                throw NumericError("analytic_gradient: KL ratio overflow");
            }
            double coeff = cfg.beta * (kl_ratio - 1.0);
            if (unclipped_branch_active(w, advantages[i], cfg.epsilon)) {
                coeff += advantages[i] * w;
            }
            coeff *= inv_g * inv_groups;

            for (std::size_t b = 0; b < pi.size(); ++b) {
                const double indicator = (static_cast<int>(b) == a) ? 1.0 : 0.0;
                grad[g.state][b] += coeff * (indicator - pi[b]);
            }
        }
    }
    for (const auto& row : grad) {
        for (const double v : row) {
            if (!std::isfinite(v)) throw NumericError("analytic_gradient: non-finite entry");
        }
    }
    return grad;
}

double fd_gradient(const ToyPolicy& policy, const std::vector<ToyGroup>& groups,
                   const GrpoConfig& cfg, int state, int action, double h) {
    ToyPolicy perturbed = policy;
    perturbed.logits.at(state).at(action) += h;
    const double plus = batch_objective(perturbed, groups, cfg);
    perturbed.logits.at(state).at(action) -= 2.0 * h;
    const double minus = batch_objective(perturbed, groups, cfg);
    return (plus - minus) / (2.0 * h);
}

double max_gradient_rel_error(const ToyPolicy& policy, const std::vector<ToyGroup>& groups,
                              const GrpoConfig& cfg, double h) {
    const auto grad = analytic_gradient(policy, groups, cfg);
    double worst = 0.0;
    for (int s = 0; s < policy.state_count(); ++s) {
        for (int a = 0; a < policy.action_count(); ++a) {
            const double fd = fd_gradient(policy, groups, cfg, s, a, h);
            const double denom = std::max({1.0, std::abs(grad[s][a]), std::abs(fd)});
            worst = std::max(worst, std::abs(grad[s][a] - fd) / denom);
        }
    }
    return worst;
}

ObjectiveStats toy_policy_step(ToyPolicy& policy, std::vector<ToyGroup>& groups,
                               const GrpoConfig& cfg, double learning_rate) {
    cfg.validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be finite and > 0");
    }
    check_groups(groups, policy);

    ObjectiveStats total;
    for (ToyGroup& g : groups) {
        g.batch = with_fresh_logps(policy, g);
        fill_advantages(g.batch, cfg.std_floor);
        const ObjectiveStats s = objective_stats(g.batch, cfg);
        total.objective += s.objective;
        total.surrogate += s.surrogate;
        total.mean_kl += s.mean_kl;
        total.clip_fraction += s.clip_fraction;
    }
    const double inv = 1.0 / static_cast<double>(groups.size());
    total.objective *= inv;
    total.surrogate *= inv;
    total.mean_kl *= inv;
    total.clip_fraction *= inv;

    const auto grad = analytic_gradient(policy, groups, cfg);
    for (int s = 0; s < policy.state_count(); ++s) {
        for (int a = 0; a < policy.action_count(); ++a) {
            policy.logits[s][a] += learning_rate * grad[s][a];
        }
    }
    return total;
}

ExactRewardStats exact_reward_stats(const ToyPolicy& policy, const ToyEnv& env) {
    if (env.states.empty()) throw ConfigError("toy env has no states");
    ExactRewardStats out;
    for (std::size_t s = 0; s < env.states.size(); ++s) {
        const auto pi = policy.probs(static_cast<int>(s));
        const ToyState& st = env.states[s];
        for (std::size_t a = 0; a < st.responses.size(); ++a) {
            const reward::RewardBreakdown& r = st.rewards[a];
            out.mean_reward += pi[a] * r.r_final;
            out.mean_r_acc += pi[a] * r.r_acc;
            out.mean_r_proxy += pi[a] * r.r_proxy;
            out.mean_r_format += pi[a] * r.r_format;
        }
    }
    const double inv = 1.0 / static_cast<double>(env.states.size());
    out.mean_reward *= inv;
    out.mean_r_acc *= inv;
    out.mean_r_proxy *= inv;
    out.mean_r_format *= inv;
    return out;
}

double exact_mean_kl(const ToyPolicy& policy, const ToyPolicy& reference) {
    if (policy.state_count() != reference.state_count() ||
        policy.action_count() != reference.action_count()) {
        throw ConfigError("policy/reference shape mismatch");
    }
    double acc = 0.0;
    for (int s = 0; s < policy.state_count(); ++s) {
        const auto lp = policy.log_probs(s);
        const auto lp_ref = reference.log_probs(s);
        for (std::size_t a = 0; a < lp.size(); ++a) {
            acc += std::exp(lp[a]) * (lp[a] - lp_ref[a]);
        }
    }
    return acc / static_cast<double>(policy.state_count());
}

std::string ToyTrainResult::csv() const {
    std::string out =
        "step,mean_reward,mean_r_acc,mean_r_proxy,mean_r_format,clip_fraction,mean_kl,objective\n";
    for (const ToyStepRow& r : rows) {
        out += std::to_string(r.step);
        for (const double v : {r.mean_reward, r.mean_r_acc, r.mean_r_proxy, r.mean_r_format,
                               r.clip_fraction, r.mean_kl, r.objective}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

ToyTrainResult train_toy(const ToyEnv& env, const ToyTrainConfig& cfg) {
    if (env.states.empty()) throw ConfigError("toy env has no states");
    if (env.action_count() < 2) throw ConfigError("toy env needs >= 2 actions per state");
    for (const ToyState& st : env.states) {
        if (st.responses.size() != env.states[0].responses.size() ||
            st.rewards.size() != st.responses.size()) {
            throw ConfigError("toy env states must share one action count, with rewards");
        }
    }
    if (cfg.steps < 1 || cfg.groups_per_step < 1 || cfg.inner_epochs < 1) {
        throw ConfigError("toy training needs steps, groups_per_step, inner_epochs >= 1");
    }
    cfg.grpo.validate();

    const int S = static_cast<int>(env.states.size());
    const int A = env.action_count();
    const int G = cfg.grpo.group_size;

    ToyTrainResult result;
    result.policy = ToyPolicy(S, A);
    const ToyPolicy reference = result.policy;  // frozen uniform reference
    std::mt19937_64 rng(derive_seed(cfg.seed, "toy-train"));

    std::uint64_t group_counter = 0;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<ToyGroup> groups;
        groups.reserve(cfg.groups_per_step);
        for (int g = 0; g < cfg.groups_per_step; ++g) {
            ToyGroup group;
            group.state = static_cast<int>(group_counter++ % static_cast<std::uint64_t>(S));
            const auto lp = result.policy.log_probs(group.state);
            const auto lp_ref = reference.log_probs(group.state);
            const ToyState& st = env.states[group.state];
            for (int i = 0; i < G; ++i) {
                const int a = result.policy.sample(group.state, rng);
                group.actions.push_back(a);
                group.batch.rewards.push_back(static_cast<double>(st.rewards[a].r_final));
                group.batch.logp_old.push_back(lp[a]);
                group.batch.logp_new.push_back(lp[a]);
                group.batch.logp_ref.push_back(lp_ref[a]);
            }
            groups.push_back(std::move(group));
        }

        ObjectiveStats last_stats;
        for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
            if (epoch == 0 && cfg.gradcheck_every > 0 && step % cfg.gradcheck_every == 0) {
                // Fresh on-policy batch: w = 1 for every sample, far from the
                // clip boundary, so finite differences are valid everywhere.
                const double rel = max_gradient_rel_error(result.policy, groups, cfg.grpo);
                if (rel > cfg.gradcheck_tol) {
                    throw NumericError("gradient check failed at step " + std::to_string(step) +
                                       ": relative error " + format_double(rel));
                }
            }
            last_stats = toy_policy_step(result.policy, groups, cfg.grpo, cfg.learning_rate);
        }

        const ExactRewardStats exact = exact_reward_stats(result.policy, env);
        ToyStepRow row;
        row.step = step;
        row.mean_reward = exact.mean_reward;
        row.mean_r_acc = exact.mean_r_acc;
        row.mean_r_proxy = exact.mean_r_proxy;
        row.mean_r_format = exact.mean_r_format;
        row.mean_kl = exact_mean_kl(result.policy, reference);
        row.clip_fraction = last_stats.clip_fraction;
        row.objective = last_stats.objective;
        result.rows.push_back(row);
    }
    return result;
}

}  // namespace canoe::grpo
