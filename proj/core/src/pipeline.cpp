#include "canoe/pipeline.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>

#include <json.hpp>

#include "canoe/errors.hpp"
#include "canoe/kg_store.hpp"
#include "canoe/mock_client.hpp"
#include "canoe/prompts.hpp"
#include "canoe/reward_engine.hpp"
#include "canoe/rollout.hpp"
#include "canoe/util.hpp"

namespace canoe::pipeline {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

BackendKind backend_from_string(const std::string& name) {
    if (name == "mock-faithful") return BackendKind::mock_faithful;
    if (name == "mock-echo") return BackendKind::mock_echo;
    if (name == "http") return BackendKind::http;
    throw ConfigError("unknown backend: " + name + " (expected mock-faithful|mock-echo|http)");
}

const char* to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::mock_faithful: return "mock-faithful";
        case BackendKind::mock_echo: return "mock-echo";
        case BackendKind::http: return "http";
    }
    throw Error("unhandled backend kind");
}

namespace {

const ordered_json* maybe_section(const ordered_json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) return nullptr;
    if (!it->is_object()) throw ConfigError(std::string("config section must be an object: ") + key);
    return &*it;
}

template <typename T>
void read_into(const ordered_json& j, const char* key, T& target) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        target = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key ") + key + ": " + e.what());
    }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    RunConfig cfg;
    cfg.config_digest = sha256_hex(text);

    const ordered_json* seeds = maybe_section(j, "seeds");
    if (!seeds || !seeds->contains("synthesis") || !seeds->contains("training") ||
        !seeds->contains("evaluation")) {
        throw ConfigError(
            "config must state seeds.synthesis, seeds.training and seeds.evaluation explicitly");
    }
    read_into(*seeds, "synthesis", cfg.seeds.synthesis);
    read_into(*seeds, "training", cfg.seeds.training);
    read_into(*seeds, "evaluation", cfg.seeds.evaluation);

    if (const auto* p = maybe_section(j, "paths")) {
        read_into(*p, "triples", cfg.paths.triples);
        read_into(*p, "dataset", cfg.paths.dataset);
        read_into(*p, "rollout_log", cfg.paths.rollout_log);
        read_into(*p, "reward_log", cfg.paths.reward_log);
        read_into(*p, "toy_stats", cfg.paths.toy_stats);
        read_into(*p, "toy_policy", cfg.paths.toy_policy);
        read_into(*p, "eval_tasks", cfg.paths.eval_tasks);
        read_into(*p, "eval_records", cfg.paths.eval_records);
        read_into(*p, "report_csv", cfg.paths.report_csv);
        read_into(*p, "manifest", cfg.paths.manifest);
    }
    if (const auto* c = maybe_section(j, "client")) {
        std::string backend = to_string(cfg.client.backend);
        read_into(*c, "backend", backend);
        cfg.client.backend = backend_from_string(backend);
        read_into(*c, "base_url", cfg.client.base_url);
        read_into(*c, "model", cfg.client.model);
        read_into(*c, "concurrency", cfg.client.concurrency);
        read_into(*c, "mock_seed", cfg.client.mock_seed);
        read_into(*c, "vocab", cfg.client.vocab);
        read_into(*c, "flaw_rate", cfg.client.flaw_rate);
    }
    if (const auto* r = maybe_section(j, "recipe")) {
        read_into(*r, "straightforward", cfg.recipe.straightforward);
        read_into(*r, "reasoning", cfg.recipe.reasoning);
        read_into(*r, "inconsistent", cfg.recipe.inconsistent);
        read_into(*r, "counterfactual", cfg.recipe.counterfactual);
    }
    if (const auto* s = maybe_section(j, "synthesis")) {
        read_into(*s, "temperature", cfg.synthesis.temperature);
        read_into(*s, "max_tokens", cfg.synthesis.max_tokens);
        read_into(*s, "max_retries", cfg.synthesis.max_retries);
        read_into(*s, "cf_max_queries", cfg.synthesis.cf_max_queries);
        read_into(*s, "max_distractors", cfg.synthesis.max_distractors);
        read_into(*s, "id_prefix", cfg.synthesis.id_prefix);
    }
    if (const auto* g = maybe_section(j, "grpo")) {
        read_into(*g, "epsilon", cfg.grpo.epsilon);
        read_into(*g, "beta", cfg.grpo.beta);
        read_into(*g, "group_size", cfg.grpo.group_size);
        read_into(*g, "learning_rate", cfg.grpo.learning_rate);
        read_into(*g, "std_floor", cfg.grpo.std_floor);
    }
    if (const auto* r = maybe_section(j, "rollout")) {
        read_into(*r, "group_size", cfg.rollout.group_size);
        read_into(*r, "temperature", cfg.rollout.temperature);
        read_into(*r, "max_tokens", cfg.rollout.max_tokens);
        read_into(*r, "limit", cfg.rollout.limit);
    }
    if (const auto* t = maybe_section(j, "toy")) {
        read_into(*t, "steps", cfg.toy.steps);
        read_into(*t, "groups_per_step", cfg.toy.groups_per_step);
        read_into(*t, "inner_epochs", cfg.toy.inner_epochs);
        read_into(*t, "gradcheck_every", cfg.toy.gradcheck_every);
        read_into(*t, "gradcheck_tol", cfg.toy.gradcheck_tol);
        read_into(*t, "learning_rate", cfg.toy.learning_rate);
    }
    if (const auto* e = maybe_section(j, "eval")) {
        std::string style = "dual";
        read_into(*e, "style", style);
        if (style == "dual") {
            cfg.eval.style = eval::PromptStyle::dual;
        } else if (style == "plain") {
            cfg.eval.style = eval::PromptStyle::plain;
        } else {
            throw ConfigError("eval.style must be dual or plain");
        }
        read_into(*e, "temperature", cfg.eval.temperature);
        read_into(*e, "max_tokens", cfg.eval.max_tokens);
        read_into(*e, "dataset_name", cfg.eval.dataset_name);
        read_into(*e, "checker", cfg.eval.checker);
        read_into(*e, "judge", cfg.eval.judge);
        read_into(*e, "per_dataset_k", cfg.eval.per_dataset_k);
        if (cfg.eval.checker != "client" && cfg.eval.checker != "substring" &&
            cfg.eval.checker != "none") {
            throw ConfigError("eval.checker must be client, substring or none");
        }
    }

    cfg.synthesis.seed = cfg.seeds.synthesis;
    cfg.toy.seed = cfg.seeds.training;
    cfg.toy.grpo = cfg.grpo;
    cfg.grpo.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    return from_json_text(read_file(path));
}

std::shared_ptr<llm::GenerationClient> make_client(const ClientConfig& config) {
    switch (config.backend) {
        case BackendKind::mock_faithful:
            return std::make_shared<llm::FaithfulMockClient>(
                llm::MockConfig{config.mock_seed, config.vocab, config.flaw_rate});
        case BackendKind::mock_echo:
            return std::make_shared<llm::EchoMockClient>(
                llm::MockConfig{config.mock_seed, config.vocab, config.flaw_rate});
        case BackendKind::http: {
            llm::HttpClientConfig http;
            http.base_url = config.base_url;
            http.model = config.model;
            http.max_inflight = config.concurrency;
            return llm::make_http_client(http);
        }
    }
    throw Error("unhandled backend kind");
}

// ---------------------------------------------------------------------------
// Artifacts and manifest

namespace {

void write_artifact(const std::string& path, std::string_view content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    write_file(path, content);
}

// The manifest pins everything needed to reproduce an artifact: config bytes
// digest, seeds, prompt digests, the backend identity, and the sha256 of every
// produced file. Re-running a verb with the same config rewrites identical
// bytes.
void update_manifest(const RunConfig& cfg, const PromptLibrary& prompts,
                     const std::string& client_identity,
                     const std::vector<std::string>& artifact_paths) {
    std::map<std::string, std::string> artifacts;
    if (std::filesystem::exists(cfg.paths.manifest)) {
        try {
            const ordered_json old = ordered_json::parse(read_file(cfg.paths.manifest));
            if (old.contains("artifacts")) {
                for (const auto& [path, digest] : old.at("artifacts").items()) {
                    artifacts[path] = digest.get<std::string>();
                }
            }
        } catch (const std::exception&) {
            // Unreadable manifest: rebuild from scratch.
        }
    }
    for (const auto& path : artifact_paths) artifacts[path] = sha256_hex(read_file(path));

    ordered_json m;
    m["config_digest"] = cfg.config_digest;
    m["seeds"] = {{"synthesis", cfg.seeds.synthesis},
                  {"training", cfg.seeds.training},
                  {"evaluation", cfg.seeds.evaluation}};
    m["recipe"] = {{"straightforward", cfg.recipe.straightforward},
                   {"reasoning", cfg.recipe.reasoning},
                   {"inconsistent", cfg.recipe.inconsistent},
                   {"counterfactual", cfg.recipe.counterfactual}};
    m["client_identity"] = client_identity;
    ordered_json digests = ordered_json::object();
    for (const auto& [name, digest] : prompts.digests()) digests[name] = digest;
    m["prompt_digests"] = std::move(digests);
    ordered_json arts = ordered_json::object();
    for (const auto& [path, digest] : artifacts) arts[path] = digest;
    m["artifacts"] = std::move(arts);
    write_artifact(cfg.paths.manifest, m.dump(2) + "\n");
}

void require_input(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " not found: " + path);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

void cmd_ingest(const RunConfig& config, std::ostream& out) {
    require_input(config.paths.triples, "triples file");
    kg::IngestStats stats;
    const kg::TripleStore store = kg::TripleStore::load_tsv(config.paths.triples, &stats);
    out << store.summary_json() << "\n";
    out << "ingest: " << stats.lines_read << " lines, " << stats.triples_added << " triples, "
        << stats.duplicates_skipped << " duplicates skipped, " << stats.self_loops_skipped
        << " self-loops skipped\n";
}

void cmd_synthesize(const RunConfig& config, std::ostream& out) {
    require_input(config.paths.triples, "triples file");
    const kg::TripleStore store = kg::TripleStore::load_tsv(config.paths.triples);
    const PromptLibrary prompts = PromptLibrary::load_default();
    const auto client = make_client(config.client);
    kg::StoreCfSource cf_source(store);

    const auto samples =
        synth::mix_dataset(store, *client, cf_source, prompts, config.recipe, config.synthesis);
    write_artifact(config.paths.dataset, synth::dataset_to_jsonl(samples));
    update_manifest(config, prompts, client->identity(), {config.paths.dataset});

    for (const auto& [task, stats] : synth::dataset_stats(samples)) {
        out << "synthesize: " << task << " count=" << stats.count
            << " avg_tokens=" << format_double(stats.avg_len) << "\n";
    }
    out << "synthesize: wrote " << samples.size() << " samples to " << config.paths.dataset
        << "\n";
}

void cmd_rollout(const RunConfig& config, std::ostream& out) {
    require_input(config.paths.dataset, "dataset file");
    const auto samples = synth::dataset_from_jsonl(read_file(config.paths.dataset));
    if (samples.empty()) throw Error("dataset is empty: " + config.paths.dataset);
    const PromptLibrary prompts = PromptLibrary::load_default();
    const auto client = make_client(config.client);

    rollout::RolloutConfig rc;
    rc.group_size = config.rollout.group_size;
    rc.temperature = config.rollout.temperature;
    rc.max_tokens = config.rollout.max_tokens;
    rc.seed = config.seeds.training;

    const std::size_t limit = config.rollout.limit == 0
                                  ? samples.size()
                                  : std::min(config.rollout.limit, samples.size());
    std::string log;
    std::size_t complete = 0;
    std::size_t format_ok = 0;
    std::size_t responses = 0;
    for (std::size_t i = 0; i < limit; ++i) {
        const auto group = rollout::rollout_group(*client, samples[i], rc, prompts);
        log += rollout::rollout_log_lines(group);
        if (group.complete) ++complete;
        for (const auto& r : group.responses) {
            ++responses;
            if (r.format_ok) ++format_ok;
        }
    }
    write_artifact(config.paths.rollout_log, log);
    update_manifest(config, prompts, client->identity(), {config.paths.rollout_log});

    out << "rollout: " << limit << " groups (" << complete << " complete), " << responses
        << " responses, format_ok "
        << format_double(responses == 0 ? 0.0
                                        : static_cast<double>(format_ok) /
                                              static_cast<double>(responses))
        << "\n";
}

namespace {

struct LoggedGroup {
    rollout::RolloutGroup group;
    std::size_t lines = 0;
};

std::vector<LoggedGroup> read_rollout_log(const std::string& text) {
    std::vector<LoggedGroup> groups;
    std::size_t line_no = 0;
    for (const auto& raw_line : split(text, '\n')) {
        ++line_no;
        if (trim(raw_line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(raw_line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("rollout log line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string sample_id = j.at("sample_id").get<std::string>();
        if (groups.empty() || groups.back().group.sample_id != sample_id) {
            groups.emplace_back();
            groups.back().group.sample_id = sample_id;
            groups.back().group.scoring_available = true;
        }
        LoggedGroup& lg = groups.back();
        lg.group.responses.push_back(rollout::parse_response(j.at("raw").get<std::string>()));
        const auto logp = [&](const char* key) {
            if (j.at(key).is_null()) {
                lg.group.scoring_available = false;
                return 0.0;
            }
            return j.at(key).get<double>();
        };
        lg.group.logp_new.push_back(logp("logp_new"));
        lg.group.logp_old.push_back(logp("logp_old"));
        lg.group.logp_ref.push_back(logp("logp_ref"));
        ++lg.lines;
    }
    return groups;
}

}  // namespace

void cmd_score(const RunConfig& config, std::ostream& out) {
    require_input(config.paths.dataset, "dataset file");
    require_input(config.paths.rollout_log, "rollout log");
    const auto samples = synth::dataset_from_jsonl(read_file(config.paths.dataset));
    std::map<std::string, const synth::QASample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;

    const PromptLibrary prompts = PromptLibrary::load_default();
    const auto client = make_client(config.client);

    auto groups = read_rollout_log(read_file(config.paths.rollout_log));
    std::string log;
    std::array<std::size_t, 4> histogram{};
    std::vector<std::string> unscored;
    for (auto& lg : groups) {
        const auto it = by_id.find(lg.group.sample_id);
        if (it == by_id.end()) {
            throw Error("rollout log references unknown sample id: " + lg.group.sample_id);
        }
        lg.group.complete = lg.lines == static_cast<std::size_t>(config.rollout.group_size);
        if (!lg.group.complete) {
            unscored.push_back(lg.group.sample_id);
            continue;
        }
        reward::score_group(*client, lg.group, it->second->question, it->second->answer, prompts);
        log += reward::reward_log_lines(lg.group);
        for (const auto& r : lg.group.rewards) {
            histogram[static_cast<std::size_t>(r.r_final)] += 1;
        }
    }
    write_artifact(config.paths.reward_log, log);
    update_manifest(config, prompts, client->identity(), {config.paths.reward_log});

    out << "score: r_final histogram 0:" << histogram[0] << " 1:" << histogram[1]
        << " 2:" << histogram[2] << " 3:" << histogram[3] << "\n";
    out << "score: unscored groups " << unscored.size();
    for (const auto& id : unscored) out << " " << id;
    out << "\n";
}

void cmd_train_toy(const RunConfig& config, std::ostream& out) {
    const PromptLibrary prompts = PromptLibrary::load_default();
    const grpo::ToyEnv env = grpo::default_bandit_env(prompts);
    grpo::ToyTrainConfig tcfg = config.toy;
    tcfg.seed = config.seeds.training;
    tcfg.grpo = config.grpo;
    tcfg.grpo.learning_rate = config.toy.learning_rate;

    const grpo::ToyTrainResult result = grpo::train_toy(env, tcfg);
    write_artifact(config.paths.toy_stats, result.csv());

    ordered_json policy_json;
    policy_json["states"] = result.policy.state_count();
    policy_json["actions"] = result.policy.action_count();
    policy_json["logits"] = result.policy.logits;
    ordered_json probs = ordered_json::array();
    for (int s = 0; s < result.policy.state_count(); ++s) {
        probs.push_back(result.policy.probs(s));
    }
    policy_json["probs"] = std::move(probs);
    const grpo::ExactRewardStats final_stats = grpo::exact_reward_stats(result.policy, env);
    policy_json["final"] = {{"mean_reward", final_stats.mean_reward},
                           {"mean_r_acc", final_stats.mean_r_acc},
                           {"mean_r_proxy", final_stats.mean_r_proxy},
                           {"mean_r_format", final_stats.mean_r_format}};
    write_artifact(config.paths.toy_policy, policy_json.dump(2) + "\n");
    update_manifest(config, prompts, make_client(config.client)->identity(),
                    {config.paths.toy_stats, config.paths.toy_policy});

    const int gradchecks =
        tcfg.gradcheck_every > 0 ? (tcfg.steps + tcfg.gradcheck_every - 1) / tcfg.gradcheck_every
                                 : 0;
    out << "train-toy: " << tcfg.steps << " steps, final mean reward "
        << format_double(final_stats.mean_reward) << ", gradient checks passed " << gradchecks
        << "\n";
}

void cmd_eval(const RunConfig& config, std::ostream& out) {
    require_input(config.paths.eval_tasks, "eval task file");
    const auto tasks = eval::tasks_from_jsonl(read_file(config.paths.eval_tasks));
    const PromptLibrary prompts = PromptLibrary::load_default();
    const auto client = make_client(config.client);

    eval::EvalConfig ec;
    ec.style = config.eval.style;
    ec.temperature = config.eval.temperature;
    ec.max_tokens = config.eval.max_tokens;
    ec.seed = config.seeds.evaluation;

    std::unique_ptr<eval::FactChecker> checker;
    if (config.eval.checker == "substring") {
        checker = std::make_unique<eval::SubstringFactChecker>();
    } else if (config.eval.checker == "client") {
        checker = std::make_unique<eval::ClientFactChecker>(*client);
    }
    llm::GenerationClient* judge = config.eval.judge ? client.get() : nullptr;

    const auto records = eval::run_evaluation(*client, tasks, config.eval.dataset_name, prompts,
                                              ec, checker.get(), judge);
    write_artifact(config.paths.eval_records, eval::records_to_jsonl(records));
    update_manifest(config, prompts, client->identity(), {config.paths.eval_records});

    std::size_t unscored = 0;
    for (const auto& rec : records) {
        if (rec.metrics.empty()) {
            ++unscored;
            out << "eval: unscored sample " << rec.sample_id << "\n";
        }
    }
    out << "eval: " << records.size() << " records (" << unscored << " unscored) -> "
        << config.paths.eval_records << "\n";
}

void cmd_report(const RunConfig& config, std::ostream& out) {
    require_input(config.paths.eval_records, "eval record file");
    const auto records = eval::records_from_jsonl(read_file(config.paths.eval_records));
    const eval::AggregateReport agg = eval::aggregate(records);  // throws on no scored records

    const eval::OverconfidenceReport over =
        eval::overconfidence_report(records, config.eval.per_dataset_k);
    std::string csv = agg.csv();
    csv += "\noverconfidence_dataset,sample_id,perplexity\n";
    for (const auto& e : over.selected) {
        csv += e.dataset + "," + e.sample_id + "," + format_double(e.perplexity) + "\n";
    }
    write_artifact(config.paths.report_csv, csv);

    const PromptLibrary prompts = PromptLibrary::load_default();
    update_manifest(config, prompts, make_client(config.client)->identity(),
                    {config.paths.report_csv});

    out << agg.table();
    out << "overconfidence: selected " << over.selected.size() << " of "
        << over.per_dataset_k << " per dataset, mean perplexity "
        << format_double(over.mean_perplexity) << "\n";
    for (const auto& [dataset, missing] : over.shortfalls) {
        out << "overconfidence: " << dataset << " short by " << missing << " records\n";
    }
    std::size_t unscored = 0;
    for (const auto& rec : records) {
        if (rec.metrics.empty()) {
            ++unscored;
            out << "report: unscored sample " << rec.sample_id << "\n";
        }
    }
    out << "report: " << records.size() << " records (" << unscored << " unscored) -> "
        << config.paths.report_csv << "\n";
}

int run_command(const std::string& verb, const RunConfig& config, std::ostream& out,
                std::ostream& err) {
    try {
        if (verb == "ingest") {
            cmd_ingest(config, out);
        } else if (verb == "synthesize") {
            cmd_synthesize(config, out);
        } else if (verb == "rollout") {
            cmd_rollout(config, out);
        } else if (verb == "score") {
            cmd_score(config, out);
        } else if (verb == "train-toy") {
            cmd_train_toy(config, out);
        } else if (verb == "eval") {
            cmd_eval(config, out);
        } else if (verb == "report") {
            cmd_report(config, out);
        } else {
            err << "error: unknown verb: " << verb << "\n";
            return 2;
        }
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace canoe::pipeline
