#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canoe/model_client.hpp"
#include "canoe/prompts.hpp"
#include "canoe/text_norm.hpp"

namespace canoe::eval {

// Task families the harness knows how to prompt and score.
// Metric names used in EvalRecord::metrics:
//   "em"          exact match (short_qa)
//   "acc"         gold-containment accuracy (short_qa)
//   "keyword_acc" option-letter keyword match (multiple_choice, closed_book)
//   "faith"       1 when every response statement is grounded (long-form)
//   "quality"     judge rating in [1,5] (long-form)
//   "perplexity"  exp(-mean token logprob) of the raw response (>= 1)
enum class TaskFamily {
    short_qa,
    multiple_choice,
    closed_book,
    summarization,
    simplification,
    longform_qa,
};

const char* to_string(TaskFamily family);
TaskFamily task_family_from_string(const std::string& name);

struct EvalOption {
    std::string letter;  // "A".."F"
    std::string text;
};

// One line of a task file. For multiple_choice/closed_book, golds[0] holds the
// correct option letter and options must contain that letter.
struct EvalTask {
    std::string id;
    std::string context;   // may be empty for closed_book
    std::string question;  // may be empty for summarization/simplification
    std::vector<std::string> golds;
    std::vector<EvalOption> options;
    TaskFamily family = TaskFamily::short_qa;
};

// Task file JSONL: {id, context, question, golds[], options?[{letter,text}],
// task_family}.
std::vector<EvalTask> tasks_from_jsonl(const std::string& text);
std::string tasks_to_jsonl(const std::vector<EvalTask>& tasks);

struct EvalRecord {
    std::string dataset;
    std::string sample_id;
    std::string question;
    std::string context;
    std::vector<std::string> golds;
    std::optional<std::string> response_short;
    std::optional<std::string> response_long;
    TaskFamily family = TaskFamily::short_qa;
    std::map<std::string, double> metrics;  // absent key = unscored
};

// Record files are JSONL: {dataset, sample_id, question, context, golds[],
// response_short, response_long, task_family, metrics{}} with null for absent
// responses; key order fixed so equal record sets serialize to equal bytes.
std::string records_to_jsonl(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_jsonl(const std::string& text);

// --- Metric primitives -----------------------------------------------------

// 1 iff the normalized response equals any normalized gold.
int em_metric(const std::string& response, const std::vector<std::string>& golds,
              const MatchPolicy& policy = {});

// 1 iff any normalized gold occurs as a substring of the normalized response.
int acc_contains(const std::string& response, const std::vector<std::string>& golds,
                 const MatchPolicy& policy = {});

// 1 iff the first standalone option letter (single token A-F after stripping
// edge punctuation) equals the correct letter; with no letter anywhere in the
// response, falls back to checking that the correct option text occurs in the
// response (normalized containment).
int keyword_match_mc(const std::string& response, const std::string& correct_option_letter,
                     const std::string& correct_option_text);

// --- FaithScore ------------------------------------------------------------

struct FaithVerdict {
    bool grounded = true;
    std::optional<std::string> failing_statement;  // set when grounded = false
};

class FactChecker {
public:
    virtual ~FactChecker() = default;
    // True when the statement can be inferred from the context.
    virtual bool supported(const std::string& context, const std::string& statement) = 0;
};

// Deterministic checker: a statement is grounded iff its normalized text
// occurs in the normalized context.
class SubstringFactChecker : public FactChecker {
public:
    explicit SubstringFactChecker(MatchPolicy policy = {}) : policy_(policy) {}
    bool supported(const std::string& context, const std::string& statement) override;

private:
    MatchPolicy policy_;
};

// Asks a generation backend for a YES/NO verdict; unparsable verdicts raise
// Error so the caller records the sample as unscored.
class ClientFactChecker : public FactChecker {
public:
    explicit ClientFactChecker(llm::GenerationClient& client) : client_(&client) {}
    bool supported(const std::string& context, const std::string& statement) override;

private:
    llm::GenerationClient* client_;
};

struct SentenceSplitConfig {
    // Split at [.!?]+ followed by whitespace; when true, require the next
    // non-space character to be an uppercase letter.
    bool require_uppercase = true;
};

std::vector<std::string> split_sentences(const std::string& text,
                                         const SentenceSplitConfig& config = {});

// Grounds every statement of the response against the context; the first
// unsupported statement fails the verdict. Checker exceptions propagate.
FaithVerdict faith_score(FactChecker& checker, const std::string& context,
                         const std::string& response,
                         const SentenceSplitConfig& split = {});

// --- Quality score ---------------------------------------------------------

enum class QualityKind { summarization, simplification, longform_qa };

// Renders the task-specific judge prompt, queries the judge twice and averages
// the two parsed `[[k]]` ratings (k in 1..5; first match wins). A query whose
// rating stays unparsable after 2 retries yields nullopt (unscored).
std::optional<double> quality_score(llm::GenerationClient& judge, QualityKind kind,
                                    const std::string& task_input, const std::string& response,
                                    const PromptLibrary& prompts);

// --- Overconfidence --------------------------------------------------------

struct OverconfidenceEntry {
    std::string dataset;
    std::string sample_id;
    double perplexity = 0;
};

struct OverconfidenceReport {
    std::vector<OverconfidenceEntry> selected;  // per dataset: perplexity desc
    // dataset -> how many short of k the unfaithful pool fell
    std::map<std::string, std::size_t> shortfalls;
    double mean_perplexity = 0;  // over selected entries
    std::size_t per_dataset_k = 0;
};

// A record qualifies when metrics contains faith = 0 and a perplexity value.
// Per dataset the top-k by perplexity (ties broken by sample_id) are chosen.
OverconfidenceReport overconfidence_report(const std::vector<EvalRecord>& records,
                                           std::size_t per_dataset_k);

// --- Aggregation -----------------------------------------------------------

struct DatasetReportRow {
    std::string dataset;
    TaskFamily family = TaskFamily::short_qa;
    std::size_t records = 0;
    std::map<std::string, double> metric_means;
    std::map<std::string, std::size_t> metric_counts;  // scored records per metric
};

struct AggregateReport {
    std::vector<DatasetReportRow> rows;  // sorted by dataset name
    // Macro averages over datasets per the task-to-metric mapping:
    // short_qa -> em/acc, multiple_choice & closed_book -> keyword_acc,
    // long-form families -> faith.
    double avg_em = 0;
    double avg_acc = 0;

    std::string csv() const;
    std::string table() const;
};

// Throws Error when no record carries any scored metric.
AggregateReport aggregate(const std::vector<EvalRecord>& records);

// --- Evaluation driver -----------------------------------------------------

enum class PromptStyle {
    dual,   // conversation system prompt + <context>-wrapped user message
    plain,  // verbatim test-time templates, no system prompt
};

struct EvalConfig {
    PromptStyle style = PromptStyle::dual;
    double temperature = 0.7;
    int max_tokens = 1024;
    std::uint64_t seed = 0;
    MatchPolicy policy{};
    SentenceSplitConfig split{};
};

// Prompts the policy once per task, extracts short/long responses (tagged
// responses are parsed; otherwise the raw text is used), computes the
// family-appropriate metrics, and records perplexity when the backend can
// score. checker/judge may be null: the respective metrics stay unscored.
// Transport failures of checker or judge leave the sample unscored on that
// metric; policy transport failures propagate.
std::vector<EvalRecord> run_evaluation(llm::GenerationClient& policy,
                                       const std::vector<EvalTask>& tasks,
                                       const std::string& dataset_name,
                                       const PromptLibrary& prompts, const EvalConfig& config,
                                       FactChecker* checker = nullptr,
                                       llm::GenerationClient* judge = nullptr);

}  // namespace canoe::eval
