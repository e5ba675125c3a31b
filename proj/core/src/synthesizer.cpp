#include "canoe/synthesizer.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "canoe/rollout.hpp"
#include "canoe/text_norm.hpp"
#include "canoe/util.hpp"

namespace canoe::synth {

const char* to_string(TaskType task) {
    switch (task) {
        case TaskType::straightforward: return "straightforward";
        case TaskType::reasoning_required: return "reasoning_required";
        case TaskType::inconsistent: return "inconsistent";
        case TaskType::counterfactual: return "counterfactual";
    }
    throw ConfigError("unknown task type value");
}

TaskType task_type_from_string(const std::string& name) {
    if (name == "straightforward") return TaskType::straightforward;
    if (name == "reasoning_required") return TaskType::reasoning_required;
    if (name == "inconsistent") return TaskType::inconsistent;
    if (name == "counterfactual") return TaskType::counterfactual;
    throw ParseError("unknown task type name '" + name + "'");
}

namespace {

std::string triple_text(const kg::Triple& t) {
    return "(" + t.head.label + ", " + t.relation.description + ", " + t.tail.label + ")";
}

std::string chain_text(const std::vector<kg::Triple>& hops) {
    std::string out = "[";
    for (std::size_t i = 0; i < hops.size(); ++i) {
        if (i > 0) out += ", ";
        out += triple_text(hops[i]);
    }
    out += "]";
    return out;
}

std::string provenance_entry(const kg::Triple& t, bool counterfactual = false) {
    std::string out = counterfactual ? "cf:" : "";
    out += t.head.id + "|" + t.relation.id + "|" + t.tail.id;
    return out;
}

std::string generate_text(llm::GenerationClient& gen, const std::string& prompt,
                          const SynthConfig& config, std::uint64_t seed) {
    llm::GenerationRequest req;
    req.user_message = prompt;
    req.temperature = config.temperature;
    req.max_tokens = config.max_tokens;
    req.seed = seed;
    return trim(gen.generate(req).text);
}

bool clean_text(const std::string& text) {
    return !text.empty() && rollout::tag_collision_free(text);
}

// Runs the generation+validation attempt loop shared by all builders.
template <typename Attempt>
QASample with_retries(const SynthConfig& config, std::uint64_t seed, const char* what,
                      Attempt&& attempt) {
    std::string last_reason = "no attempt made";
    for (int i = 0; i < std::max(1, config.max_retries); ++i) {
        const std::uint64_t attempt_seed = derive_seed(seed, "attempt", i);
        auto [sample, reason] = attempt(attempt_seed);
        if (reason.empty()) return sample;
        last_reason = reason;
    }
    throw SynthesisError(std::string(what) + " rejected after " +
                         std::to_string(std::max(1, config.max_retries)) +
                         " attempts: " + last_reason);
}

}  // namespace

QASample build_straightforward(const kg::Triple& triple, llm::GenerationClient& gen,
                               const PromptLibrary& prompts, const SynthConfig& config,
                               std::uint64_t seed) {
    const std::map<std::string, std::string> values = {
        {"(h,r,t)", triple_text(triple)},
        {"h", triple.head.label},
        {"r", triple.relation.description},
        {"t", triple.tail.label},
    };
    const std::string q_prompt = render_prompt(prompts.text("prompt_s_q"), values);
    const std::string c_prompt = render_prompt(prompts.text("prompt_s_c"), values);

    return with_retries(config, seed, "straightforward sample", [&](std::uint64_t s) {
        QASample out;
        out.task = TaskType::straightforward;
        out.question = generate_text(gen, q_prompt, config, derive_seed(s, "q"));
        out.context = generate_text(gen, c_prompt, config, derive_seed(s, "c"));
        out.answer = triple.tail.label;
        out.provenance = {provenance_entry(triple)};

        std::string reason;
        if (!clean_text(out.question)) {
            reason = "question empty or contains a reserved tag";
        } else if (!clean_text(out.context)) {
            reason = "context empty or contains a reserved tag";
        } else if (!contains(out.context, out.answer)) {
            reason = "answer label missing from context";
        }
        return std::make_pair(out, reason);
    });
}

QASample build_reasoning(const kg::Path& path, llm::GenerationClient& gen,
                         const PromptLibrary& prompts, const SynthConfig& config,
                         std::uint64_t seed) {
    const std::size_t n = path.hops.size();
    const std::map<std::string, std::string> values = {
        {"[...]", chain_text(path.hops)},
        {"h", path.hops.front().head.label},
        {"r", path.hops.back().relation.description},
        {"t", path.answer.label},
        {"150*n", std::to_string(150 * n)},
    };
    const std::string q_prompt = render_prompt(prompts.text("prompt_r_q"), values);
    const std::string c_prompt = render_prompt(prompts.text("prompt_r_c"), values);

    return with_retries(config, seed, "reasoning sample", [&](std::uint64_t s) {
        QASample out;
        out.task = TaskType::reasoning_required;
        out.question = generate_text(gen, q_prompt, config, derive_seed(s, "q"));
        out.context = generate_text(gen, c_prompt, config, derive_seed(s, "c"));
        out.answer = path.answer.label;
        for (const kg::Triple& hop : path.hops) {
            out.provenance.push_back(provenance_entry(hop));
        }

        std::string reason;
        if (!clean_text(out.question)) {
            reason = "question empty or contains a reserved tag";
        } else if (!clean_text(out.context)) {
            reason = "context empty or contains a reserved tag";
        } else if (!contains(out.question, path.hops.front().head.label)) {
            reason = "question does not mention the head entity";
        } else if (!contains(out.context, out.answer)) {
            reason = "answer label missing from context";
        } else {
            for (std::size_t i = 0; i + 1 < path.hops.size(); ++i) {
                if (contains(out.question, path.hops[i].tail.label)) {
                    reason = "bridge entity '" + path.hops[i].tail.label +
                             "' leaked into the question";
                    break;
                }
            }
        }
        return std::make_pair(out, reason);
    });
}

QASample build_inconsistent(const QASample& anchor, const std::vector<QASample>& distractors,
                            std::uint64_t seed) {
    if (anchor.task != TaskType::reasoning_required) {
        throw ConfigError("inconsistent anchor must be a reasoning sample");
    }
    if (distractors.size() > 2) {
        throw ConfigError("inconsistent contexts merge at most three samples");
    }
    for (const QASample& d : distractors) {
        if (match_equal(d.answer, anchor.answer, MatchPolicy{})) {
            throw SynthesisError("distractor shares the anchor's answer '" + anchor.answer + "'");
        }
        if (contains(d.context, anchor.answer)) {
            throw SynthesisError("distractor context mentions the anchor's answer '" +
                                 anchor.answer + "'");
        }
    }

    std::vector<std::string> segments;
    segments.push_back(anchor.context);
    for (const QASample& d : distractors) segments.push_back(d.context);
    std::mt19937_64 rng(derive_seed(seed, "inconsistent-order"));
    deterministic_shuffle(segments, rng);

    QASample out;
    out.task = TaskType::inconsistent;
    out.question = anchor.question;
    out.answer = anchor.answer;
    std::string context;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i > 0) context += "\n\n";
        context += segments[i];
    }
    out.context = std::move(context);
    out.provenance = anchor.provenance;
    for (const QASample& d : distractors) {
        out.provenance.insert(out.provenance.end(), d.provenance.begin(), d.provenance.end());
    }
    return out;
}

namespace {

// `excluded` holds every entity id the replacement must avoid: the original
// tail, plus (for paths) all other entities on the path so the substituted
// path keeps its no-repeat invariant.
kg::Entity propose_counterfactual(const kg::Triple& final_hop, kg::CounterfactualSource& source,
                                  const SynthConfig& config, std::uint64_t seed,
                                  const std::set<std::string>& excluded) {
    for (int i = 0; i < std::max(1, config.cf_max_queries); ++i) {
        const std::string label = trim(source.propose(final_hop, derive_seed(seed, "cf", i)));
        if (label.empty()) continue;
        kg::Entity cf;
        MatchPolicy id_policy;
        id_policy.strip_punct_edges = false;
        id_policy.article_strip = false;
        cf.id = normalize(label, id_policy);
        cf.label = label;
        if (!excluded.count(cf.id)) return cf;
    }
    throw SynthesisError("no usable counterfactual replacement for '" + final_hop.tail.label +
                         "'");
}

std::string validate_counterfactual(const QASample& sample, const std::string& cf_label,
                                    const std::string& original_label) {
    if (!clean_text(sample.question)) return "question empty or contains a reserved tag";
    if (!clean_text(sample.context)) return "context empty or contains a reserved tag";
    if (!contains(sample.context, cf_label)) return "counterfactual label missing from context";
    if (match_equal(sample.answer, original_label, MatchPolicy{})) {
        return "answer still equals the factual tail";
    }
    return "";
}

}  // namespace

QASample build_counterfactual(const kg::Triple& base, llm::GenerationClient& gen,
                              kg::CounterfactualSource& cf_source, const PromptLibrary& prompts,
                              const SynthConfig& config, std::uint64_t seed) {
    const kg::Entity cf =
        propose_counterfactual(base, cf_source, config, seed, {base.tail.id, base.head.id});
    const kg::Triple substituted = kg::substitute_counterfactual(base, cf);

    const std::map<std::string, std::string> values = {
        {"(h,r,t)", triple_text(substituted)},
        {"h", substituted.head.label},
        {"r", substituted.relation.description},
        {"t", substituted.tail.label},
    };
    const std::string q_prompt = render_prompt(prompts.text("prompt_s_q"), values);
    const std::string c_prompt = render_prompt(prompts.text("prompt_s_c"), values);

    return with_retries(config, seed, "counterfactual sample", [&](std::uint64_t s) {
        QASample out;
        out.task = TaskType::counterfactual;
        out.question = generate_text(gen, q_prompt, config, derive_seed(s, "q"));
        out.context = generate_text(gen, c_prompt, config, derive_seed(s, "c"));
        out.answer = cf.label;
        out.provenance = {provenance_entry(substituted, /*counterfactual=*/true)};
        return std::make_pair(out, validate_counterfactual(out, cf.label, base.tail.label));
    });
}

QASample build_counterfactual(const kg::Path& base, llm::GenerationClient& gen,
                              kg::CounterfactualSource& cf_source, const PromptLibrary& prompts,
                              const SynthConfig& config, std::uint64_t seed) {
    std::set<std::string> on_path;
    for (const kg::Triple& hop : base.hops) {
        on_path.insert(hop.head.id);
        on_path.insert(hop.tail.id);
    }
    const kg::Entity cf =
        propose_counterfactual(base.hops.back(), cf_source, config, seed, on_path);
    const kg::Path substituted = kg::substitute_counterfactual(base, cf);

    const std::size_t n = substituted.hops.size();
    const std::map<std::string, std::string> values = {
        {"[...]", chain_text(substituted.hops)},
        {"h", substituted.hops.front().head.label},
        {"r", substituted.hops.back().relation.description},
        {"t", substituted.answer.label},
        {"150*n", std::to_string(150 * n)},
    };
    const std::string q_prompt = render_prompt(prompts.text("prompt_r_q"), values);
    const std::string c_prompt = render_prompt(prompts.text("prompt_r_c"), values);

    return with_retries(config, seed, "counterfactual sample", [&](std::uint64_t s) {
        QASample out;
        out.task = TaskType::counterfactual;
        out.question = generate_text(gen, q_prompt, config, derive_seed(s, "q"));
        out.context = generate_text(gen, c_prompt, config, derive_seed(s, "c"));
        out.answer = cf.label;
        for (std::size_t i = 0; i + 1 < substituted.hops.size(); ++i) {
            out.provenance.push_back(provenance_entry(substituted.hops[i]));
        }
        out.provenance.push_back(provenance_entry(substituted.hops.back(), true));

        std::string reason = validate_counterfactual(out, cf.label, base.answer.label);
        if (reason.empty()) {
            for (std::size_t i = 0; i + 1 < substituted.hops.size(); ++i) {
                if (contains(out.question, substituted.hops[i].tail.label)) {
                    reason = "bridge entity leaked into the question";
                    break;
                }
            }
        }
        return std::make_pair(out, reason);
    });
}

namespace {

// Sequential consumer over a pre-shuffled source pool.
template <typename T>
class Pool {
public:
    Pool(std::vector<T> items, const char* task_name)
        : items_(std::move(items)), task_name_(task_name) {}

    const T& next() {
        if (cursor_ >= items_.size()) {
            throw CapacityError(std::string("not enough source material for task type '") +
                                task_name_ + "'");
        }
        return items_[cursor_++];
    }

    void rename(const char* task_name) { task_name_ = task_name; }

private:
    std::vector<T> items_;
    std::size_t cursor_ = 0;
    const char* task_name_;
};

}  // namespace

std::vector<QASample> mix_dataset(const kg::TripleStore& store, llm::GenerationClient& gen,
                                  kg::CounterfactualSource& cf_source,
                                  const PromptLibrary& prompts, const MixRecipe& recipe,
                                  const SynthConfig& config) {
    const std::size_t cf_from_paths = recipe.counterfactual / 2;
    const std::size_t cf_from_triples = recipe.counterfactual - cf_from_paths;

    Pool<kg::Triple> triples(
        store.sample_triples(store.triple_count(), derive_seed(config.seed, "pool-triples")),
        "straightforward");

    // Paths for reasoning, inconsistent anchors, and path-based counterfactuals,
    // interleaved across hop counts 2/3/4 with headroom for rejected samples.
    const std::size_t path_need = recipe.reasoning + recipe.inconsistent + cf_from_paths;
    const std::size_t per_hop_budget = path_need + path_need / 2 + 16;
    std::vector<std::vector<kg::Path>> by_hop;
    for (std::size_t n = 2; n <= 4; ++n) {
        by_hop.push_back(
            store.extract_paths(n, per_hop_budget, derive_seed(config.seed, "pool-paths", n)));
    }
    std::vector<kg::Path> interleaved;
    for (std::size_t i = 0;; ++i) {
        bool any = false;
        for (const auto& bucket : by_hop) {
            if (i < bucket.size()) {
                interleaved.push_back(bucket[i]);
                any = true;
            }
        }
        if (!any) break;
    }
    Pool<kg::Path> paths(std::move(interleaved), "reasoning_required");

    std::vector<QASample> dataset;
    dataset.reserve(recipe.total());

    auto build_many = [&](std::size_t count, const char* stage, auto&& builder) {
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint64_t sample_seed = derive_seed(config.seed, stage, i);
            for (;;) {  // source pool advances until one item builds
                try {
                    dataset.push_back(builder(sample_seed));
                    break;
                } catch (const SynthesisError&) {
                    continue;
                }
            }
        }
    };

    build_many(recipe.straightforward, "sf", [&](std::uint64_t s) {
        return build_straightforward(triples.next(), gen, prompts, config, s);
    });

    std::vector<QASample> reasoning_pool;
    paths.rename("reasoning_required");
    build_many(recipe.reasoning, "rr", [&](std::uint64_t s) {
        QASample sample = build_reasoning(paths.next(), gen, prompts, config, s);
        reasoning_pool.push_back(sample);
        return sample;
    });

    // Inconsistent anchors are freshly built reasoning samples, distinct from
    // the reasoning pool above; distractor contexts come from already built
    // samples.
    paths.rename("inconsistent");
    std::mt19937_64 distractor_rng(derive_seed(config.seed, "distractors"));
    build_many(recipe.inconsistent, "ic", [&](std::uint64_t s) {
        const QASample anchor = build_reasoning(paths.next(), gen, prompts, config, s);
        const std::size_t want = std::min<std::size_t>(
            1 + bounded_uint(distractor_rng, static_cast<std::uint64_t>(
                                                 std::max(1, config.max_distractors))),
            dataset.size());
        for (int attempt = 0; attempt < 32; ++attempt) {
            std::vector<QASample> picked;
            for (std::size_t d = 0; d < want; ++d) {
                picked.push_back(dataset[bounded_uint(distractor_rng, dataset.size())]);
            }
            try {
                return build_inconsistent(anchor, picked, derive_seed(s, "order"));
            } catch (const SynthesisError&) {
                continue;
            }
        }
        throw CapacityError("could not find compatible distractor contexts for task type "
                            "'inconsistent'");
    });

    triples.rename("counterfactual");
    build_many(cf_from_triples, "cf-t", [&](std::uint64_t s) {
        return build_counterfactual(triples.next(), gen, cf_source, prompts, config, s);
    });
    paths.rename("counterfactual");
    build_many(cf_from_paths, "cf-p", [&](std::uint64_t s) {
        return build_counterfactual(paths.next(), gen, cf_source, prompts, config, s);
    });

    std::mt19937_64 shuffle_rng(derive_seed(config.seed, "mix-shuffle"));
    deterministic_shuffle(dataset, shuffle_rng);

    char id_buf[16];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        std::snprintf(id_buf, sizeof(id_buf), "%06zu", i);
        dataset[i].id = config.id_prefix + "-" + id_buf;
    }
    return dataset;
}

std::string dataset_to_jsonl(const std::vector<QASample>& samples) {
    std::string out;
    for (const QASample& s : samples) {
        nlohmann::ordered_json j;
        j["id"] = s.id;
        j["task"] = to_string(s.task);
        j["context"] = s.context;
        j["question"] = s.question;
        j["answer"] = s.answer;
        j["provenance"] = s.provenance;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<QASample> dataset_from_jsonl(const std::string& text) {
    std::vector<QASample> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            QASample s;
            s.id = j.at("id").get<std::string>();
            s.task = task_type_from_string(j.at("task").get<std::string>());
            s.context = j.at("context").get<std::string>();
            s.question = j.at("question").get<std::string>();
            s.answer = j.at("answer").get<std::string>();
            if (j.contains("provenance")) {
                s.provenance = j.at("provenance").get<std::vector<std::string>>();
            }
            if (s.context.empty() || s.question.empty() || s.answer.empty()) {
                throw ParseError("sample fields must be non-empty", line_no);
            }
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad dataset record: ") + e.what(), line_no);
        }
    }
    return out;
}

std::map<std::string, TaskStats> dataset_stats(const std::vector<QASample>& samples) {
    std::map<std::string, TaskStats> stats;
    for (const QASample& s : samples) {
        TaskStats& t = stats[to_string(s.task)];
        t.count += 1;
        t.avg_len += static_cast<double>(word_count(s.context) + word_count(s.question));
        TaskStats& all = stats["all"];
        all.count += 1;
        all.avg_len += static_cast<double>(word_count(s.context) + word_count(s.question));
    }
    for (auto& [name, t] : stats) {
        if (t.count > 0) t.avg_len /= static_cast<double>(t.count);
    }
    return stats;
}

}  // namespace canoe::synth
