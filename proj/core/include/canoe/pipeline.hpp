#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "canoe/eval_harness.hpp"
#include "canoe/grpo_core.hpp"
#include "canoe/model_client.hpp"
#include "canoe/synthesizer.hpp"
#include "canoe/toy_policy.hpp"

namespace canoe::pipeline {

enum class BackendKind {
    mock_faithful,  // template-aware deterministic mock (default)
    mock_echo,      // hash-echo mock
    http,           // OpenAI-compatible endpoint
};

BackendKind backend_from_string(const std::string& name);
const char* to_string(BackendKind kind);

struct PathsConfig {
    std::string triples = "data/triples.tsv";
    std::string dataset = "out/dataset.jsonl";
    std::string rollout_log = "out/rollouts.jsonl";
    std::string reward_log = "out/rewards.jsonl";
    std::string toy_stats = "out/toy_stats.csv";
    std::string toy_policy = "out/toy_policy.json";
    std::string eval_tasks = "data/eval_tasks.jsonl";
    std::string eval_records = "out/eval_records.jsonl";
    std::string report_csv = "out/report.csv";
    std::string manifest = "out/manifest.json";
};

struct ClientConfig {
    BackendKind backend = BackendKind::mock_faithful;
    std::string base_url;  // http only; empty -> $CANOE_BASE_URL
    std::string model = "canoe-dev";
    int concurrency = 8;
    // Mock backends:
    std::uint64_t mock_seed = 0;
    int vocab = 4;
    double flaw_rate = 0.25;
};

// Every stage derives its randomness from one of these; the config file must
// state all three explicitly so reruns are reproducible by construction.
struct Seeds {
    std::uint64_t synthesis = 0;
    std::uint64_t training = 0;
    std::uint64_t evaluation = 0;
};

struct RolloutSection {
    int group_size = 7;
    double temperature = 0.9;
    int max_tokens = 1024;
    std::size_t limit = 8;  // samples rolled out per run; 0 = whole dataset
};

struct EvalSection {
    eval::PromptStyle style = eval::PromptStyle::dual;
    double temperature = 0.7;
    int max_tokens = 1024;
    std::string dataset_name = "fixture";
    std::string checker = "client";  // client | substring | none
    bool judge = true;
    std::size_t per_dataset_k = 10;  // overconfidence selection size
};

struct RunConfig {
    PathsConfig paths;
    ClientConfig client;
    Seeds seeds;
    synth::MixRecipe recipe;
    synth::SynthConfig synthesis;  // seed overridden by seeds.synthesis
    grpo::GrpoConfig grpo;
    RolloutSection rollout;
    grpo::ToyTrainConfig toy;  // seed overridden by seeds.training
    EvalSection eval;

    std::string config_digest;  // sha256 of the config file bytes

    // Strict on seeds: the "seeds" object with all three entries is required.
    // Everything else falls back to the defaults above. ConfigError on
    // malformed values.
    static RunConfig from_json_text(const std::string& text);
    static RunConfig load(const std::string& path);
};

std::shared_ptr<llm::GenerationClient> make_client(const ClientConfig& config);

// Exit status 0 on success. Failures print "error: ..." to err and return 1.
// Verbs: ingest | synthesize | rollout | score | train-toy | eval | report.
int run_command(const std::string& verb, const RunConfig& config, std::ostream& out,
                std::ostream& err);

// Individual stages; these throw on failure (run_command maps to exit codes).
void cmd_ingest(const RunConfig& config, std::ostream& out);
void cmd_synthesize(const RunConfig& config, std::ostream& out);
void cmd_rollout(const RunConfig& config, std::ostream& out);
void cmd_score(const RunConfig& config, std::ostream& out);
void cmd_train_toy(const RunConfig& config, std::ostream& out);
void cmd_eval(const RunConfig& config, std::ostream& out);
void cmd_report(const RunConfig& config, std::ostream& out);

}  // namespace canoe::pipeline
