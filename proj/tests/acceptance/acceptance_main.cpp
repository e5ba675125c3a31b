// Acceptance suite for the canoe toolkit. Each criterion is exercised
// end-to-end against independently computed references and prints exactly one
// [PASS] / [FAIL] line; the process exits non-zero when any criterion fails.
//
//   C1 synthesis recipe       - mixed dataset: exact counts, grounding, speed
//   C2 advantage normalization- group advantages are exactly standardized
//   C3 gradient check         - analytic GRPO gradient matches finite diffs
//   C4 toy convergence        - 500-step toy run learns the rewarded action
//   C5 kl penalty             - k3 estimator nonnegative; beta steers KL
//   C6 reward fuzz            - reward path total and tag grammar under fuzz
//   C7 metric references      - EM / accuracy / MC keyword vs brute force
//   C8 overconfidence selection- per-dataset top-k matches a sort oracle
//   C9 deterministic reruns   - two full CLI runs are byte-identical

#include <sys/wait.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canoe/eval_harness.hpp"
#include "canoe/grpo_core.hpp"
#include "canoe/kg_store.hpp"
#include "canoe/mock_client.hpp"
#include "canoe/model_client.hpp"
#include "canoe/prompts.hpp"
#include "canoe/reward_engine.hpp"
#include "canoe/rollout.hpp"
#include "canoe/synthesizer.hpp"
#include "canoe/toy_policy.hpp"
#include "canoe/util.hpp"

#include "../test_support.hpp"

namespace {

using canoe::bounded_uint;
using canoe::read_file;
using canoe::write_file;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string fmt(const char* pattern, ...) {
    va_list args;
    va_start(args, pattern);
    char buf[512];
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return buf;
}

struct Result {
    bool ok = true;
    std::string note;                   // shown on PASS
    std::vector<std::string> problems;  // shown on FAIL (first few)

    void fail(std::string message) {
        ok = false;
        if (problems.size() < 4) problems.push_back(std::move(message));
    }
    void require(bool condition, std::string message) {
        if (!condition) fail(std::move(message));
    }
};

const canoe::PromptLibrary& prompts() {
    static canoe::PromptLibrary lib = canoe::PromptLibrary::load_default();
    return lib;
}

// --- C1: synthesis recipe ---------------------------------------------------

void c1_synthesis_recipe(Result& r) {
    const auto t0 = Clock::now();
    const canoe::kg::TripleStore store =
        canoe::kg::TripleStore::from_text(canoe::testing::fixture_tsv(80, 12, 7));
    canoe::llm::FaithfulMockClient gen(canoe::llm::MockConfig{21, 4, 0.25});
    canoe::kg::StoreCfSource cf(store);

    canoe::synth::MixRecipe recipe;
    recipe.straightforward = 200;
    recipe.reasoning = 200;
    recipe.inconsistent = 100;
    recipe.counterfactual = 500;
    canoe::synth::SynthConfig config;
    config.seed = 11;

    std::vector<canoe::synth::QASample> dataset;
    try {
        dataset = canoe::synth::mix_dataset(store, gen, cf, prompts(), recipe, config);
    } catch (const std::exception& e) {
        r.fail(std::string("mix_dataset threw: ") + e.what());
        return;
    }
    const double secs = seconds_since(t0);

    r.require(dataset.size() == 1000, fmt("dataset size %zu != 1000", dataset.size()));
    std::map<canoe::synth::TaskType, std::size_t> counts;
    for (const auto& s : dataset) ++counts[s.task];
    r.require(counts[canoe::synth::TaskType::straightforward] == 200,
              fmt("straightforward count %zu != 200",
                  counts[canoe::synth::TaskType::straightforward]));
    r.require(counts[canoe::synth::TaskType::reasoning_required] == 200,
              fmt("reasoning count %zu != 200", counts[canoe::synth::TaskType::reasoning_required]));
    r.require(counts[canoe::synth::TaskType::inconsistent] == 100,
              fmt("inconsistent count %zu != 100", counts[canoe::synth::TaskType::inconsistent]));
    r.require(counts[canoe::synth::TaskType::counterfactual] == 500,
              fmt("counterfactual count %zu != 500", counts[canoe::synth::TaskType::counterfactual]));
    const double cf_share =
        static_cast<double>(counts[canoe::synth::TaskType::counterfactual]) /
        static_cast<double>(dataset.empty() ? 1 : dataset.size());
    r.require(cf_share == 0.5, fmt("counterfactual share %.4f != 0.5", cf_share));

    std::size_t checked = 0;
    std::size_t grounded = 0;
    for (const auto& s : dataset) {
        if (s.task == canoe::synth::TaskType::inconsistent) continue;
        ++checked;
        if (s.context.find(s.answer) != std::string::npos) {
            ++grounded;
        } else {
            r.fail("answer not found verbatim in context for sample " + s.id);
        }
    }
    r.require(grounded == checked, fmt("grounded %zu of %zu non-inconsistent samples", grounded, checked));
    r.require(secs < 60.0, fmt("synthesis took %.1fs (limit 60s)", secs));
    r.note = fmt("1000 samples (200/200/100/500), cf share 0.500, grounded %zu/%zu, %.1fs",
                 grounded, checked, secs);
}

// --- C2: advantage normalization -------------------------------------------

void c2_advantage_normalization(Result& r) {
    std::mt19937_64 rng(1002);
    double worst_mean = 0.0;
    double worst_std = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t g = 2 + bounded_uint(rng, 15);  // G in [2,16]
        std::vector<double> rewards(g);
        for (double& x : rewards) x = 4.0 * u01(rng) - 1.0;
        const std::vector<double> a = canoe::grpo::group_advantages(rewards, 1e-8);
        double mean = 0.0;
        for (double v : a) mean += v;
        mean /= static_cast<double>(g);
        double var = 0.0;
        for (double v : a) var += (v - mean) * (v - mean);
        const double pop_std = std::sqrt(var / static_cast<double>(g));
        worst_mean = std::max(worst_mean, std::fabs(mean));
        worst_std = std::max(worst_std, std::fabs(pop_std - 1.0));
        if (std::fabs(mean) > 1e-9 || std::fabs(pop_std - 1.0) > 1e-9) {
            r.fail(fmt("group %d (G=%zu): |mean|=%.3e, |std-1|=%.3e", t, g, std::fabs(mean),
                       std::fabs(pop_std - 1.0)));
            if (r.problems.size() >= 4) return;
        }
    }
    for (const std::size_t g : {std::size_t{2}, std::size_t{7}, std::size_t{16}}) {
        for (const double value : {0.0, 1.5, 3.0}) {
            const std::vector<double> rewards(g, value);
            const std::vector<double> a = canoe::grpo::group_advantages(rewards, 1e-8);
            for (double v : a) {
                r.require(v == 0.0, fmt("zero-variance group (G=%zu, r=%.1f) advantage %.3e != 0",
                                        g, value, v));
            }
        }
    }
    r.note = fmt("10000 groups: worst |mean|=%.1e, worst |std-1|=%.1e; constant groups -> zeros",
                 worst_mean, worst_std);
}

// --- C3: gradient check -----------------------------------------------------

void c3_gradient_check(Result& r) {
    const canoe::grpo::ToyEnv env = canoe::grpo::default_bandit_env(prompts());
    std::mt19937_64 rng(1003);
    double worst = 0.0;
    int ratio_excursions = 0;  // importance ratios outside the clip band

    for (int t = 0; t < 20; ++t) {
        const canoe::grpo::ToyPolicy policy =
            canoe::grpo::ToyPolicy::random(1, 4, 5000 + static_cast<std::uint64_t>(t), 1.5);
        const canoe::grpo::ToyPolicy behavior =
            canoe::grpo::ToyPolicy::random(1, 4, 6000 + static_cast<std::uint64_t>(t), 1.0);
        const canoe::grpo::ToyPolicy reference =
            canoe::grpo::ToyPolicy::random(1, 4, 7000 + static_cast<std::uint64_t>(t), 1.0);
        canoe::grpo::GrpoConfig cfg;
        cfg.epsilon = 0.2;
        cfg.beta = (t % 2 == 0) ? 0.04 : 0.5;  // KL term always active

        const int group = 4 + static_cast<int>(bounded_uint(rng, 5));  // G in [4,8]
        std::vector<canoe::grpo::ToyGroup> groups;
        for (int k = 0; k < 3; ++k) {
            canoe::grpo::ToyGroup g;
            g.state = 0;
            for (int i = 0; i < group; ++i) {
                const int a = behavior.sample(0, rng);
                g.actions.push_back(a);
                g.batch.rewards.push_back(
                    static_cast<double>(env.states[0].rewards[static_cast<std::size_t>(a)].r_final));
                g.batch.logp_old.push_back(behavior.logp(0, a));
                g.batch.logp_new.push_back(behavior.logp(0, a));
                g.batch.logp_ref.push_back(reference.logp(0, a));
                const double w = std::exp(policy.logp(0, a) - behavior.logp(0, a));
                if (w < 1.0 - cfg.epsilon || w > 1.0 + cfg.epsilon) ++ratio_excursions;
            }
            groups.push_back(std::move(g));
        }

        double rel = 0.0;
        try {
            rel = canoe::grpo::max_gradient_rel_error(policy, groups, cfg, 1e-5);
        } catch (const std::exception& e) {
            r.fail(fmt("config %d threw: %s", t, e.what()));
            continue;
        }
        worst = std::max(worst, rel);
        r.require(rel < 1e-5, fmt("config %d: gradient rel error %.3e >= 1e-5", t, rel));
    }
    r.require(ratio_excursions > 0, "no importance ratio ever left the clip band");
    r.note = fmt("20 off-policy configs: worst rel error %.1e, %d clip-band excursions", worst,
                 ratio_excursions);
}

// --- C4: toy convergence ----------------------------------------------------

void c4_toy_convergence(Result& r) {
    const canoe::grpo::ToyEnv env = canoe::grpo::default_bandit_env(prompts());
    canoe::grpo::ToyTrainConfig cfg;  // 500 steps, lr 0.1, gradcheck every 10
    cfg.seed = 0;

    const auto t0 = Clock::now();
    canoe::grpo::ToyTrainResult result;
    try {
        result = canoe::grpo::train_toy(env, cfg);
    } catch (const std::exception& e) {
        r.fail(std::string("train_toy threw: ") + e.what());
        return;
    }
    const double secs = seconds_since(t0);

    r.require(result.rows.size() == 500, fmt("row count %zu != 500", result.rows.size()));
    if (result.rows.empty()) return;
    const canoe::grpo::ToyStepRow& last = result.rows.back();
    r.require(last.mean_reward >= 2.7, fmt("final mean reward %.3f < 2.7", last.mean_reward));
    const double p_good = result.policy.probs(0)[0];
    r.require(p_good >= 0.99, fmt("P(rewarded action) %.4f < 0.99", p_good));
    r.require(secs < 30.0, fmt("training took %.1fs (limit 30s)", secs));

    double max_fmt_reward = 0.0;
    double max_acc = 0.0;
    for (const auto& row : result.rows) {
        max_fmt_reward = std::max(max_fmt_reward, row.mean_r_format);
        max_acc = std::max(max_acc, row.mean_r_acc);
    }
    int fmt_step = -1;
    int acc_step = -1;
    for (const auto& row : result.rows) {
        if (fmt_step < 0 && row.mean_r_format >= 0.95 * max_fmt_reward) fmt_step = row.step;
        if (acc_step < 0 && row.mean_r_acc >= 0.95 * max_acc) acc_step = row.step;
    }
    r.require(fmt_step > 0 && acc_step > 0, "95% crossing step not found");
    r.require(fmt_step < acc_step,
              fmt("format reached 95%% of max at step %d, accuracy at step %d (want format first)",
                  fmt_step, acc_step));
    r.note = fmt("mean reward %.3f, P(good)=%.4f, format@95%%=step %d < accuracy@95%%=step %d, %.1fs",
                 last.mean_reward, p_good, fmt_step, acc_step, secs);
}

// --- C5: kl penalty ---------------------------------------------------------

void c5_kl_penalty(Result& r) {
    std::mt19937_64 rng(1005);
    double min_k = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 1000000; ++t) {
        const double logp_new = -30.0 * u01(rng);
        const double logp_ref = -30.0 * u01(rng);
        const double k = canoe::grpo::kl_penalty(logp_new, logp_ref);
        if (!(k >= 0.0)) {
            r.fail(fmt("k3 negative: %.3e at logp_new=%.6f logp_ref=%.6f", k, logp_new, logp_ref));
            break;
        }
        min_k = std::min(min_k, k);
    }

    const canoe::grpo::ToyEnv env = canoe::grpo::default_bandit_env(prompts());
    canoe::grpo::ToyTrainConfig strong;
    strong.seed = 17;
    strong.grpo.beta = 10.0;
    canoe::grpo::ToyTrainConfig off;
    off.seed = 17;
    off.grpo.beta = 0.0;
    double kl_strong = -1.0;
    double kl_off = -1.0;
    try {
        kl_strong = canoe::grpo::train_toy(env, strong).rows.back().mean_kl;
        kl_off = canoe::grpo::train_toy(env, off).rows.back().mean_kl;
    } catch (const std::exception& e) {
        r.fail(std::string("train_toy threw: ") + e.what());
        return;
    }
    r.require(kl_strong <= 0.05, fmt("beta=10 run: final mean KL %.4f > 0.05", kl_strong));
    r.require(kl_off > 0.5, fmt("beta=0 run: final mean KL %.4f <= 0.5", kl_off));
    r.note = fmt("1e6 k3 samples >= 0 (min %.1e); final KL: beta=10 -> %.4f, beta=0 -> %.3f",
                 min_k, kl_strong, kl_off);
}

// --- C6: reward fuzz --------------------------------------------------------

void c6_reward_fuzz(Result& r) {
    canoe::llm::FaithfulMockClient proxy_client(canoe::llm::MockConfig{33, 4, 0.25});
    const std::string question = "What is the capital of France?";
    const std::string gold = "Paris";

    const std::vector<std::string> pieces = {
        "<think>", "</think>", "<long_answer>", "</long_answer>", "<short_answer>",
        "</short_answer>", " ", "\n", "\t", "Paris", "France's capital is Paris.",
        "The answer is clear from the context.", "unknown", "x", "<", ">", "</", "answer",
        "<think", "think>", "<short_answer> Paris </short_answer>",
    };
    std::mt19937_64 rng(1006);
    std::size_t histogram[4] = {0, 0, 0, 0};
    for (int t = 0; t < 100000; ++t) {
        std::string s;
        const std::size_t n = bounded_uint(rng, 13);
        for (std::size_t i = 0; i < n; ++i) s += pieces[bounded_uint(rng, pieces.size())];
        try {
            const canoe::rollout::ParsedResponse parsed = canoe::rollout::parse_response(s);
            const int acc = canoe::reward::accuracy_reward(parsed, gold);
            const int fm = canoe::reward::format_reward(parsed);
            const int proxy =
                canoe::reward::proxy_reward(proxy_client, parsed, question, gold, prompts());
            const canoe::reward::RewardBreakdown breakdown =
                canoe::reward::composite(acc, proxy, fm);
            if (breakdown.r_final < 0 || breakdown.r_final > 3 ||
                breakdown.r_final != acc + proxy + fm) {
                r.fail(fmt("fuzz case %d: r_final %d out of range or not the component sum", t,
                           breakdown.r_final));
            } else {
                ++histogram[breakdown.r_final];
            }
        } catch (const std::exception& e) {
            r.fail(fmt("fuzz case %d threw: %s", t, e.what()));
        }
        if (!r.ok && r.problems.size() >= 4) return;
    }

    // Generator-valid strings round-trip through the parser.
    const std::vector<std::string> words = {"alpha", "beta",  "gamma",   "delta",
                                            "Paris", "is",    "the",     "capital",
                                            "of",    "stone", "granite", "quartz"};
    const std::vector<std::string> gaps = {"", " ", "\n", "  ", "\n\n", " \n "};
    auto sentence = [&](std::size_t min_words, std::size_t max_words) {
        const std::size_t n = min_words + bounded_uint(rng, max_words - min_words + 1);
        std::string out;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0) out += " ";
            out += words[bounded_uint(rng, words.size())];
        }
        return out;
    };
    auto gap = [&]() { return gaps[bounded_uint(rng, gaps.size())]; };
    std::size_t round_trips = 0;
    for (int t = 0; t < 2000; ++t) {
        const std::string think = sentence(1, 8);
        const std::string long_answer = sentence(1, 12);
        const std::string short_answer = sentence(1, 3);
        const std::string s = gap() + "<think>" + gap() + think + gap() + "</think>" + gap() +
                              "<long_answer>" + gap() + long_answer + gap() + "</long_answer>" +
                              gap() + "<short_answer>" + gap() + short_answer + gap() +
                              "</short_answer>" + gap();
        const canoe::rollout::ParsedResponse parsed = canoe::rollout::parse_response(s);
        const bool ok = parsed.format_ok && parsed.think == think &&
                        parsed.long_answer == long_answer && parsed.short_answer == short_answer;
        if (!ok) {
            r.fail(fmt("round trip %d failed (format_ok=%d)", t, parsed.format_ok ? 1 : 0));
            if (r.problems.size() >= 4) return;
            continue;
        }
        // Re-render canonically and parse again: segments must survive.
        const std::string canon = "<think> " + think + " </think>\n<long_answer> " + long_answer +
                                  " </long_answer>\n<short_answer> " + short_answer +
                                  " </short_answer>";
        const canoe::rollout::ParsedResponse again = canoe::rollout::parse_response(canon);
        if (again.format_ok && again.think == think && again.long_answer == long_answer &&
            again.short_answer == short_answer) {
            ++round_trips;
        } else {
            r.fail(fmt("canonical re-render %d did not round-trip", t));
            if (r.problems.size() >= 4) return;
        }
    }

    // Every single-tag mutation of a valid response must zero the format reward.
    const std::string base =
        "<think> chain of thought </think>\n<long_answer> The capital is Paris. </long_answer>\n"
        "<short_answer> Paris </short_answer>";
    r.require(canoe::reward::format_reward(canoe::rollout::parse_response(base)) == 1,
              "mutation base string is not itself well-formed");
    const std::vector<std::string> tags = {"<think>",        "</think>",       "<long_answer>",
                                           "</long_answer>", "<short_answer>", "</short_answer>"};
    std::size_t mutations = 0;
    for (const std::string& tag : tags) {
        const std::size_t at = base.find(tag);
        if (at == std::string::npos) {
            r.fail("tag " + tag + " missing from mutation base");
            continue;
        }
        std::string removed = base;
        removed.erase(at, tag.size());
        std::string doubled = base;
        doubled.insert(at + tag.size(), tag);
        for (const std::string* mutant : {&removed, &doubled}) {
            const int fm = canoe::reward::format_reward(canoe::rollout::parse_response(*mutant));
            if (fm == 0) {
                ++mutations;
            } else {
                r.fail("mutation of " + tag + " still earned the format reward");
            }
        }
    }
    r.require(mutations == 12, fmt("only %zu of 12 tag mutations were rejected", mutations));
    r.note = fmt("1e5 fuzz rewards in range (r_final 0/1/2/3: %zu/%zu/%zu/%zu), "
                 "%zu round trips, 12/12 mutations rejected",
                 histogram[0], histogram[1], histogram[2], histogram[3], round_trips);
}

// --- C7: metric references --------------------------------------------------

// Brute-force normalizer for fixture material (punctuation only at token
// edges): lowercase, strip non-alphanumeric token edges, drop articles.
std::string ref_normalize(const std::string& text) {
    std::string out;
    std::size_t i = 0;
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) {
            std::size_t a = i;
            std::size_t b = j;
            const auto alnum = [&](std::size_t k) {
                return std::isalnum(static_cast<unsigned char>(text[k])) != 0;
            };
            while (a < b && !alnum(a)) ++a;
            while (b > a && !alnum(b - 1)) --b;
            std::string token;
            for (std::size_t k = a; k < b; ++k) {
                token += static_cast<char>(std::tolower(static_cast<unsigned char>(text[k])));
            }
            if (!token.empty() && token != "a" && token != "an" && token != "the") {
                if (!out.empty()) out += " ";
                out += token;
            }
        }
        i = j;
    }
    return out;
}

int ref_em(const std::string& response, const std::vector<std::string>& golds) {
    const std::string want = ref_normalize(response);
    for (const auto& gold : golds) {
        if (ref_normalize(gold) == want) return 1;
    }
    return 0;
}

int ref_acc(const std::string& response, const std::vector<std::string>& golds) {
    const std::string hay = ref_normalize(response);
    for (const auto& gold : golds) {
        if (hay.find(ref_normalize(gold)) != std::string::npos) return 1;
    }
    return 0;
}

int ref_keyword(const std::string& response, char correct_letter, const std::string& correct_text) {
    std::size_t i = 0;
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (i < response.size()) {
        while (i < response.size() && is_space(response[i])) ++i;
        std::size_t j = i;
        while (j < response.size() && !is_space(response[j])) ++j;
        if (j > i) {
            std::size_t a = i;
            std::size_t b = j;
            const auto alnum = [&](std::size_t k) {
                return std::isalnum(static_cast<unsigned char>(response[k])) != 0;
            };
            while (a < b && !alnum(a)) ++a;
            while (b > a && !alnum(b - 1)) --b;
            if (b - a == 1) {
                const char c =
                    static_cast<char>(std::toupper(static_cast<unsigned char>(response[a])));
                if (c >= 'A' && c <= 'F') return c == correct_letter ? 1 : 0;
            }
        }
        i = j;
    }
    const std::string needle = ref_normalize(correct_text);
    if (needle.empty()) return 0;
    return ref_normalize(response).find(needle) != std::string::npos ? 1 : 0;
}

void c7_metric_references(Result& r) {
    std::mt19937_64 rng(1007);
    const std::vector<std::string> pool = {"paris", "london", "berlin", "madrid", "lima",
                                           "kyoto", "cairo",  "delhi",  "oslo",   "quito"};
    auto mixed_case = [&](const std::string& word) {
        std::string out = word;
        for (char& c : out) {
            if (bounded_uint(rng, 2) == 0) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        return out;
    };

    std::size_t agree = 0;
    // 120 short-answer cases for EM and containment accuracy.
    for (int t = 0; t < 120; ++t) {
        std::vector<std::string> golds = {pool[bounded_uint(rng, pool.size())]};
        if (bounded_uint(rng, 2) == 0) {
            std::string second = pool[bounded_uint(rng, pool.size())];
            if (second != golds[0]) golds.push_back(second);
        }
        std::string response;
        switch (t % 4) {
            case 0: response = "The " + mixed_case(golds[0]) + "."; break;
            case 1: response = "i think it is " + mixed_case(golds[0]) + "."; break;
            case 2: {
                std::string other = pool[bounded_uint(rng, pool.size())];
                while (std::find(golds.begin(), golds.end(), other) != golds.end()) {
                    other = pool[bounded_uint(rng, pool.size())];
                }
                response = "definitely " + mixed_case(other) + "!";
                break;
            }
            default: response = mixed_case(golds.back()) + "!"; break;
        }
        const int em = canoe::eval::em_metric(response, golds);
        const int acc = canoe::eval::acc_contains(response, golds);
        const int em_want = ref_em(response, golds);
        const int acc_want = ref_acc(response, golds);
        if (em == em_want && acc == acc_want) {
            ++agree;
        } else {
            r.fail(fmt("short case %d: em %d/%d acc %d/%d for \"%s\"", t, em, em_want, acc,
                       acc_want, response.c_str()));
            if (r.problems.size() >= 4) return;
        }
    }

    // 80 multiple-choice cases for the keyword metric.
    const std::vector<std::string> colors = {"crimson", "emerald", "cobalt", "amber",
                                             "ivory",   "violet"};
    for (int t = 0; t < 80; ++t) {
        const char letter = static_cast<char>('A' + bounded_uint(rng, 4));
        const std::string text = colors[bounded_uint(rng, colors.size())];
        std::string response;
        switch (t % 5) {
            case 0: response = fmt("(%c).", static_cast<char>(std::tolower(letter))); break;
            case 1: response = fmt("Answer: %c", letter); break;
            case 2: response = fmt("I would go with option %c here.", letter); break;
            case 3: response = "this color is " + text + " surely"; break;
            default: {
                const char wrong = letter == 'A' ? 'B' : 'A';
                response = fmt("%c. no wait, %c", wrong, letter);
                break;
            }
        }
        const int got = canoe::eval::keyword_match_mc(response, std::string(1, letter), text);
        const int want = ref_keyword(response, letter, text);
        if (got == want) {
            ++agree;
        } else {
            r.fail(fmt("mc case %d: keyword %d != ref %d for \"%s\"", t, got, want,
                       response.c_str()));
            if (r.problems.size() >= 4) return;
        }
    }
    r.require(agree == 200, fmt("only %zu/200 fixture cases agreed with the references", agree));

    // EM implies containment accuracy on arbitrary strings.
    const std::vector<std::string> bits = {"paris",   "the",  "a",    "London!", "berlin,",
                                           "answer:", "it's", "42",   "(x)",     "...",
                                           "LIMA",    "an",   "kyoto"};
    std::size_t implications = 0;
    for (int t = 0; t < 10000; ++t) {
        std::string response;
        const std::size_t n = 1 + bounded_uint(rng, 5);
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0) response += " ";
            response += bits[bounded_uint(rng, bits.size())];
        }
        std::vector<std::string> golds = {pool[bounded_uint(rng, pool.size())]};
        if (bounded_uint(rng, 2) == 0) golds.push_back("the " + pool[bounded_uint(rng, pool.size())]);
        const int em = canoe::eval::em_metric(response, golds);
        const int acc = canoe::eval::acc_contains(response, golds);
        if (em == 1) {
            ++implications;
            if (acc != 1) {
                r.fail("EM matched but containment accuracy did not for \"" + response + "\"");
                if (r.problems.size() >= 4) return;
            }
        }
    }
    r.note = fmt("200/200 fixture agreements, %zu EM hits in 1e4 fuzz all implied accuracy",
                 implications);
}

// --- C8: overconfidence selection -------------------------------------------

void c8_overconfidence_selection(Result& r) {
    std::mt19937_64 rng(1008);
    std::vector<canoe::eval::EvalRecord> records;
    std::map<std::string, std::vector<std::pair<double, std::string>>> qualifying;

    for (int d = 0; d < 11; ++d) {
        const std::string dataset = fmt("d%02d", d);
        for (int s = 0; s < 12; ++s) {
            canoe::eval::EvalRecord rec;
            rec.dataset = dataset;
            rec.sample_id = fmt("s%02d", s);
            rec.family = canoe::eval::TaskFamily::longform_qa;
            const double ppl = 1.0 + 9.0 * u01(rng);
            rec.metrics["faith"] = 0.0;
            rec.metrics["perplexity"] = ppl;
            qualifying[dataset].emplace_back(ppl, rec.sample_id);
            records.push_back(std::move(rec));
        }
        for (int s = 0; s < 3; ++s) {  // faithful records must never be picked
            canoe::eval::EvalRecord rec;
            rec.dataset = dataset;
            rec.sample_id = fmt("f%02d", s);
            rec.family = canoe::eval::TaskFamily::longform_qa;
            rec.metrics["faith"] = 1.0;
            rec.metrics["perplexity"] = 40.0 + u01(rng);
            records.push_back(std::move(rec));
        }
        {  // unfaithful but without a perplexity value: not eligible
            canoe::eval::EvalRecord rec;
            rec.dataset = dataset;
            rec.sample_id = "x00";
            rec.family = canoe::eval::TaskFamily::longform_qa;
            rec.metrics["faith"] = 0.0;
            records.push_back(std::move(rec));
        }
        {  // unscored noise record
            canoe::eval::EvalRecord rec;
            rec.dataset = dataset;
            rec.sample_id = "u00";
            rec.family = canoe::eval::TaskFamily::short_qa;
            records.push_back(std::move(rec));
        }
    }

    canoe::eval::OverconfidenceReport report;
    try {
        report = canoe::eval::overconfidence_report(records, 10);
    } catch (const std::exception& e) {
        r.fail(std::string("overconfidence_report threw: ") + e.what());
        return;
    }

    std::vector<std::pair<std::string, std::pair<double, std::string>>> expected;
    double expected_mean = 0.0;
    for (auto& [dataset, pool] : qualifying) {
        std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < 10 && i < pool.size(); ++i) {
            expected.emplace_back(dataset, pool[i]);
            expected_mean += pool[i].first;
        }
    }
    expected_mean /= static_cast<double>(expected.size());

    r.require(report.selected.size() == 110,
              fmt("selected %zu records, want 110", report.selected.size()));
    r.require(report.shortfalls.empty(),
              fmt("%zu datasets reported a shortfall, want none", report.shortfalls.size()));
    const std::size_t limit = std::min(report.selected.size(), expected.size());
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& got = report.selected[i];
        const auto& want = expected[i];
        if (got.dataset != want.first || got.sample_id != want.second.second ||
            got.perplexity != want.second.first) {
            r.fail(fmt("selection %zu: got %s/%s ppl %.6f, oracle %s/%s ppl %.6f", i,
                       got.dataset.c_str(), got.sample_id.c_str(), got.perplexity,
                       want.first.c_str(), want.second.second.c_str(), want.second.first));
            if (r.problems.size() >= 4) return;
        }
    }
    r.require(std::fabs(report.mean_perplexity - expected_mean) < 1e-12,
              fmt("mean perplexity %.9f != oracle %.9f", report.mean_perplexity, expected_mean));
    r.note = fmt("110 selections across 11 datasets match the sort oracle; mean ppl %.3f",
                 report.mean_perplexity);
}

// --- C9: deterministic reruns -----------------------------------------------

int run_cli(const std::filesystem::path& workdir, const std::string& args) {
    const std::string command =
        "cd " + workdir.string() + " && " + CANOE_CLI_PATH + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(command.c_str());
    if (rc == -1) return -1;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void c9_deterministic_reruns(Result& r) {
    const std::string config_text = R"({
  "seeds": {"synthesis": 7, "training": 11, "evaluation": 13},
  "client": {"backend": "mock-faithful", "mock_seed": 5, "vocab": 4, "flaw_rate": 0.25},
  "recipe": {"straightforward": 20, "reasoning": 15, "inconsistent": 10, "counterfactual": 25},
  "rollout": {"group_size": 5, "limit": 5, "max_tokens": 256},
  "toy": {"steps": 120, "gradcheck_every": 25},
  "eval": {"per_dataset_k": 3}
}
)";
    const std::string triples = canoe::testing::fixture_tsv(24, 6, 2);
    const std::string tasks =
        R"({"id":"t1","context":"Chile's capital is Santiago.","question":"What is Chile's capital?","golds":["Santiago"],"task_family":"short_qa"})"
        "\n"
        R"({"id":"t2","context":"Chile's capital is Santiago.","question":"What is Chile's capital?","golds":["B"],"options":[{"letter":"A","text":"Lima"},{"letter":"B","text":"Santiago"}],"task_family":"multiple_choice"})"
        "\n"
        R"({"id":"t3","context":"Peru's capital is Lima. Lima's founder is Pizarro.","question":"What is Peru's capital's founder?","golds":["Pizarro"],"task_family":"longform_qa"})"
        "\n";

    canoe::testing::TempDir first("acceptance-run-a");
    canoe::testing::TempDir second("acceptance-run-b");
    const std::vector<std::string> verbs = {"ingest", "synthesize", "rollout", "score",
                                            "train-toy", "eval",     "report"};
    for (const auto* dir : {&first, &second}) {
        std::filesystem::create_directories(dir->path() / "data");
        write_file(dir->file("data/triples.tsv"), triples);
        write_file(dir->file("data/eval_tasks.jsonl"), tasks);
        write_file(dir->file("canoe.json"), config_text);
        for (const std::string& verb : verbs) {
            const int rc = run_cli(dir->path(), "-c canoe.json " + verb);
            if (rc != 0) {
                r.fail(fmt("verb '%s' exited with %d in %s", verb.c_str(), rc,
                           dir->path().filename().string().c_str()));
                return;
            }
        }
    }

    const std::vector<std::string> artifacts = {
        "out/dataset.jsonl", "out/rollouts.jsonl",     "out/rewards.jsonl",
        "out/toy_stats.csv", "out/toy_policy.json",    "out/eval_records.jsonl",
        "out/report.csv",    "out/manifest.json",
    };
    std::size_t identical = 0;
    for (const std::string& relative : artifacts) {
        std::string a;
        std::string b;
        try {
            a = read_file(first.file(relative));
            b = read_file(second.file(relative));
        } catch (const std::exception& e) {
            r.fail(fmt("artifact %s unreadable: %s", relative.c_str(), e.what()));
            continue;
        }
        if (a.empty()) {
            r.fail("artifact " + relative + " is empty");
        } else if (a == b) {
            ++identical;
        } else {
            r.fail("artifact " + relative + " differs between the two runs");
        }
    }
    r.require(identical == artifacts.size(),
              fmt("%zu of %zu artifacts byte-identical", identical, artifacts.size()));
    r.note = fmt("two independent pipeline runs, %zu artifacts byte-identical", identical);
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* label;
        void (*fn)(Result&);
    };
    const Entry entries[] = {
        {1, "synthesis recipe", c1_synthesis_recipe},
        {2, "advantage normalization", c2_advantage_normalization},
        {3, "gradient check", c3_gradient_check},
        {4, "toy convergence", c4_toy_convergence},
        {5, "kl penalty", c5_kl_penalty},
        {6, "reward fuzz", c6_reward_fuzz},
        {7, "metric references", c7_metric_references},
        {8, "overconfidence selection", c8_overconfidence_selection},
        {9, "deterministic reruns", c9_deterministic_reruns},
    };

    int failed = 0;
    for (const Entry& entry : entries) {
        Result result;
        try {
            entry.fn(result);
        } catch (const std::exception& e) {
            result.fail(std::string("unhandled exception: ") + e.what());
        }
        if (result.ok) {
            std::printf("[PASS] C%d %s%s%s\n", entry.id, entry.label,
                        result.note.empty() ? "" : " - ", result.note.c_str());
        } else {
            ++failed;
            std::string detail;
            for (const std::string& p : result.problems) {
                if (!detail.empty()) detail += "; ";
                detail += p;
            }
            std::printf("[FAIL] C%d %s: %s\n", entry.id, entry.label, detail.c_str());
        }
        std::fflush(stdout);
    }
    if (failed == 0) {
        std::printf("acceptance: 9/9 criteria passed\n");
    } else {
        std::printf("acceptance: %d of 9 criteria FAILED\n", failed);
    }
    return failed == 0 ? 0 : 1;
}
