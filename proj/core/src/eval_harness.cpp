#include "canoe/eval_harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "canoe/errors.hpp"
#include "canoe/rollout.hpp"
#include "canoe/util.hpp"

namespace canoe::eval {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Task families and task files

const char* to_string(TaskFamily family) {
    switch (family) {
        case TaskFamily::short_qa: return "short_qa";
        case TaskFamily::multiple_choice: return "multiple_choice";
        case TaskFamily::closed_book: return "closed_book";
        case TaskFamily::summarization: return "summarization";
        case TaskFamily::simplification: return "simplification";
        case TaskFamily::longform_qa: return "longform_qa";
    }
    throw Error("unhandled task family");
}

TaskFamily task_family_from_string(const std::string& name) {
    if (name == "short_qa") return TaskFamily::short_qa;
    if (name == "multiple_choice") return TaskFamily::multiple_choice;
    if (name == "closed_book") return TaskFamily::closed_book;
    if (name == "summarization") return TaskFamily::summarization;
    if (name == "simplification") return TaskFamily::simplification;
    if (name == "longform_qa") return TaskFamily::longform_qa;
    throw ConfigError("unknown task family: " + name);
}

namespace {

void validate_task(const EvalTask& task, std::size_t line_no) {
    const auto fail = [line_no](const std::string& msg) {
        throw ParseError("task line " + std::to_string(line_no) + ": " + msg);
    };
    if (task.id.empty()) fail("id must be non-empty");
    if (task.family == TaskFamily::multiple_choice || task.family == TaskFamily::closed_book) {
        if (task.golds.size() != 1 || task.golds[0].size() != 1) {
            fail("golds must hold exactly the correct option letter");
        }
        if (task.options.empty()) fail("options must be non-empty");
        const bool known = std::any_of(task.options.begin(), task.options.end(),
                                       [&](const EvalOption& o) { return o.letter == task.golds[0]; });
        if (!known) fail("gold letter missing from options");
    }
}

}  // namespace

std::vector<EvalTask> tasks_from_jsonl(const std::string& text) {
    std::vector<EvalTask> out;
    std::size_t line_no = 0;
    for (const auto& raw_line : split(text, '\n')) {
        ++line_no;
        std::string line = raw_line;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("task line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            EvalTask task;
            task.id = j.at("id").get<std::string>();
            task.context = j.value("context", std::string{});
            task.question = j.value("question", std::string{});
            if (j.contains("golds")) {
                for (const auto& g : j.at("golds")) task.golds.push_back(g.get<std::string>());
            }
            if (j.contains("options")) {
                for (const auto& o : j.at("options")) {
                    task.options.push_back(
                        {o.at("letter").get<std::string>(), o.at("text").get<std::string>()});
                }
            }
            task.family = task_family_from_string(j.at("task_family").get<std::string>());
            validate_task(task, line_no);
            out.push_back(std::move(task));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("task line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string tasks_to_jsonl(const std::vector<EvalTask>& tasks) {
    std::string out;
    for (const auto& task : tasks) {
        ordered_json j;
        j["id"] = task.id;
        j["context"] = task.context;
        j["question"] = task.question;
        j["golds"] = task.golds;
        if (!task.options.empty()) {
            ordered_json opts = ordered_json::array();
            for (const auto& o : task.options) {
                opts.push_back(ordered_json{{"letter", o.letter}, {"text", o.text}});
            }
            j["options"] = std::move(opts);
        }
        j["task_family"] = to_string(task.family);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string records_to_jsonl(const std::vector<EvalRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        ordered_json j;
        j["dataset"] = rec.dataset;
        j["sample_id"] = rec.sample_id;
        j["question"] = rec.question;
        j["context"] = rec.context;
        j["golds"] = rec.golds;
        j["response_short"] = rec.response_short ? ordered_json(*rec.response_short)
                                                 : ordered_json(nullptr);
        j["response_long"] =
            rec.response_long ? ordered_json(*rec.response_long) : ordered_json(nullptr);
        j["task_family"] = to_string(rec.family);
        ordered_json metrics = ordered_json::object();
        for (const auto& [name, value] : rec.metrics) metrics[name] = value;
        j["metrics"] = std::move(metrics);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<EvalRecord> records_from_jsonl(const std::string& text) {
    std::vector<EvalRecord> out;
    std::size_t line_no = 0;
    for (const auto& raw_line : split(text, '\n')) {
        ++line_no;
        std::string line = raw_line;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        try {
            const ordered_json j = ordered_json::parse(line);
            EvalRecord rec;
            rec.dataset = j.at("dataset").get<std::string>();
            rec.sample_id = j.at("sample_id").get<std::string>();
            rec.question = j.value("question", std::string{});
            rec.context = j.value("context", std::string{});
            if (j.contains("golds")) {
                for (const auto& g : j.at("golds")) rec.golds.push_back(g.get<std::string>());
            }
            if (j.contains("response_short") && !j.at("response_short").is_null()) {
                rec.response_short = j.at("response_short").get<std::string>();
            }
            if (j.contains("response_long") && !j.at("response_long").is_null()) {
                rec.response_long = j.at("response_long").get<std::string>();
            }
            rec.family = task_family_from_string(j.at("task_family").get<std::string>());
            if (j.contains("metrics")) {
                for (const auto& [name, value] : j.at("metrics").items()) {
                    rec.metrics[name] = value.get<double>();
                }
            }
            out.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("record line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metric primitives

int em_metric(const std::string& response, const std::vector<std::string>& golds,
              const MatchPolicy& policy) {
    for (const auto& gold : golds) {
        if (match_equal(response, gold, policy)) return 1;
    }
    return 0;
}

int acc_contains(const std::string& response, const std::vector<std::string>& golds,
                 const MatchPolicy& policy) {
    const std::string hay = normalize(response, policy);
    for (const auto& gold : golds) {
        const std::string needle = normalize(gold, policy);
        if (!needle.empty() && hay.find(needle) != std::string::npos) return 1;
    }
    return 0;
}

namespace {

bool is_option_letter(char c) {
    const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return u >= 'A' && u <= 'F';
}

// First whitespace-delimited token that is a single option letter after
// stripping non-alphanumeric edges, e.g. "(B)" or "A.".
std::optional<char> first_standalone_letter(const std::string& text) {
    std::size_t i = 0;
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) {
            std::size_t a = i;
            std::size_t b = j;
            const auto is_word = [&](std::size_t k) {
                return std::isalnum(static_cast<unsigned char>(text[k])) != 0;
            };
            while (a < b && !is_word(a)) ++a;
            while (b > a && !is_word(b - 1)) --b;
            if (b - a == 1 && is_option_letter(text[a])) {
                return static_cast<char>(std::toupper(static_cast<unsigned char>(text[a])));
            }
        }
        i = j;
    }
    return std::nullopt;
}

}  // namespace

int keyword_match_mc(const std::string& response, const std::string& correct_option_letter,
                     const std::string& correct_option_text) {
    if (correct_option_letter.size() != 1 || !is_option_letter(correct_option_letter[0])) {
        throw ConfigError("correct option letter must be a single letter A-F");
    }
    const char want =
        static_cast<char>(std::toupper(static_cast<unsigned char>(correct_option_letter[0])));
    if (const auto got = first_standalone_letter(response)) return *got == want ? 1 : 0;
    const MatchPolicy policy;
    const std::string needle = normalize(correct_option_text, policy);
    if (needle.empty()) return 0;
    return normalize(response, policy).find(needle) != std::string::npos ? 1 : 0;
}

// ---------------------------------------------------------------------------
// FaithScore

bool SubstringFactChecker::supported(const std::string& context, const std::string& statement) {
    const std::string needle = normalize(statement, policy_);
    if (needle.empty()) return true;  // nothing asserted
    return normalize(context, policy_).find(needle) != std::string::npos;
}

bool ClientFactChecker::supported(const std::string& context, const std::string& statement) {
    llm::GenerationRequest req;
    req.user_message = "Passage: " + context + "\n\nStatement: " + statement +
                       "\n\nDoes the passage factually support the statement? Answer YES or NO.";
    req.temperature = 0.0;
    req.max_tokens = 8;
    req.seed = fnv1a64(statement, fnv1a64(context, 0x666163746bULL));
    const std::string verdict = normalize(client_->generate(req).text, MatchPolicy{});
    if (verdict.starts_with("yes")) return true;
    if (verdict.starts_with("no")) return false;
    throw Error("fact checker verdict unparsable: " + verdict.substr(0, 64));
}

std::vector<std::string> split_sentences(const std::string& text,
                                         const SentenceSplitConfig& config) {
    std::vector<std::string> out;
    const auto push = [&out](const std::string& piece) {
        const std::string t = trim(piece);
        if (!t.empty()) out.push_back(t);
    };
    std::size_t start = 0;
    std::size_t i = 0;
    const auto is_end = [](char c) { return c == '.' || c == '!' || c == '?'; };
    while (i < text.size()) {
        if (!is_end(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && is_end(text[j])) ++j;
        // Boundary requires trailing whitespace and (optionally) an uppercase
        // opener for the next sentence.
        std::size_t k = j;
        while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
        const bool has_gap = k > j;
        const bool has_next = k < text.size();
        const bool opener_ok =
            !config.require_uppercase ||
            (has_next && std::isupper(static_cast<unsigned char>(text[k])) != 0);
        if (has_gap && has_next && opener_ok) {
            push(text.substr(start, j - start));
            start = k;
            i = k;
        } else {
            i = j;
        }
    }
    push(text.substr(start));
    return out;
}

FaithVerdict faith_score(FactChecker& checker, const std::string& context,
                         const std::string& response, const SentenceSplitConfig& split) {
    FaithVerdict verdict;
    for (const auto& statement : split_sentences(response, split)) {
        if (!checker.supported(context, statement)) {
            verdict.grounded = false;
            verdict.failing_statement = statement;
            return verdict;
        }
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// Quality score

namespace {

const char* quality_prompt_name(QualityKind kind) {
    switch (kind) {
        case QualityKind::summarization: return "prompt_scoring_sum";
        case QualityKind::simplification: return "prompt_scoring_sim";
        case QualityKind::longform_qa: return "prompt_scoring_lfqa";
    }
    throw Error("unhandled quality kind");
}

// First "[[k]]" with k in 1..5.
std::optional<double> parse_rating(const std::string& text) {
    std::size_t pos = 0;
    while ((pos = text.find("[[", pos)) != std::string::npos) {
        std::size_t i = pos + 2;
        std::size_t digits = 0;
        int value = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            value = value * 10 + (text[i] - '0');
            ++i;
            ++digits;
        }
        if (digits >= 1 && i + 1 < text.size() && text[i] == ']' && text[i + 1] == ']' &&
            value >= 1 && value <= 5) {
            return static_cast<double>(value);
        }
        pos += 2;
    }
    return std::nullopt;
}

}  // namespace

std::optional<double> quality_score(llm::GenerationClient& judge, QualityKind kind,
                                    const std::string& task_input, const std::string& response,
                                    const PromptLibrary& prompts) {
    const std::string user =
        render_prompt(prompts.text(quality_prompt_name(kind)), {}, {task_input, response});
    const std::uint64_t base = fnv1a64(user, 0x7175616c0ULL);
    double sum = 0.0;
    for (int query = 0; query < 2; ++query) {
        std::optional<double> rating;
        for (int attempt = 0; attempt < 3 && !rating; ++attempt) {  // 1 try + 2 retries
            llm::GenerationRequest req;
            req.user_message = user;
            req.temperature = 0.7;
            req.max_tokens = 256;
            req.seed = derive_seed(base, "quality", static_cast<std::uint64_t>(query * 16 + attempt));
            rating = parse_rating(judge.generate(req).text);
        }
        if (!rating) return std::nullopt;
        sum += *rating;
    }
    return sum / 2.0;
}

// ---------------------------------------------------------------------------
// Overconfidence

OverconfidenceReport overconfidence_report(const std::vector<EvalRecord>& records,
                                           std::size_t per_dataset_k) {
    if (per_dataset_k == 0) throw ConfigError("per-dataset k must be >= 1");
    OverconfidenceReport report;
    report.per_dataset_k = per_dataset_k;

    std::map<std::string, std::vector<const EvalRecord*>> pools;
    std::set<std::string> faith_scored_datasets;
    for (const auto& rec : records) {
        const auto faith = rec.metrics.find("faith");
        if (faith == rec.metrics.end()) continue;
        faith_scored_datasets.insert(rec.dataset);
        if (faith->second != 0.0) continue;
        if (!rec.metrics.count("perplexity")) continue;
        pools[rec.dataset].push_back(&rec);
    }

    double total = 0.0;
    for (auto& [dataset, pool] : pools) {
        std::sort(pool.begin(), pool.end(), [](const EvalRecord* a, const EvalRecord* b) {
            const double pa = a->metrics.at("perplexity");
            const double pb = b->metrics.at("perplexity");
            if (pa != pb) return pa > pb;
            return a->sample_id < b->sample_id;
        });
        const std::size_t take = std::min(per_dataset_k, pool.size());
        for (std::size_t i = 0; i < take; ++i) {
            const double ppl = pool[i]->metrics.at("perplexity");
            report.selected.push_back({dataset, pool[i]->sample_id, ppl});
            total += ppl;
        }
        if (take < per_dataset_k) report.shortfalls[dataset] = per_dataset_k - take;
    }
    for (const auto& dataset : faith_scored_datasets) {
        if (!pools.count(dataset)) report.shortfalls[dataset] = per_dataset_k;
    }
    if (!report.selected.empty()) {
        report.mean_perplexity = total / static_cast<double>(report.selected.size());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

// Metric that stands in for exact-match accuracy in the cross-dataset average.
const char* primary_em_metric(TaskFamily family) {
    switch (family) {
        case TaskFamily::short_qa: return "em";
        case TaskFamily::multiple_choice:
        case TaskFamily::closed_book: return "keyword_acc";
        case TaskFamily::summarization:
        case TaskFamily::simplification:
        case TaskFamily::longform_qa: return "faith";
    }
    throw Error("unhandled task family");
}

const char* primary_acc_metric(TaskFamily family) {
    return family == TaskFamily::short_qa ? "acc" : primary_em_metric(family);
}

}  // namespace

AggregateReport aggregate(const std::vector<EvalRecord>& records) {
    std::map<std::string, DatasetReportRow> by_dataset;
    std::map<std::string, std::map<std::string, double>> sums;
    bool any_scored = false;
    for (const auto& rec : records) {
        auto [it, fresh] = by_dataset.try_emplace(rec.dataset);
        DatasetReportRow& row = it->second;
        if (fresh) {
            row.dataset = rec.dataset;
            row.family = rec.family;
        }
        ++row.records;
        for (const auto& [name, value] : rec.metrics) {
            sums[rec.dataset][name] += value;
            ++row.metric_counts[name];
            any_scored = true;
        }
    }
    if (!any_scored) throw Error("no scored records to aggregate");

    AggregateReport report;
    for (auto& [dataset, row] : by_dataset) {
        for (const auto& [name, count] : row.metric_counts) {
            row.metric_means[name] = sums[dataset][name] / static_cast<double>(count);
        }
        report.rows.push_back(std::move(row));
    }

    double em_sum = 0.0;
    double acc_sum = 0.0;
    std::size_t em_n = 0;
    std::size_t acc_n = 0;
    for (const auto& row : report.rows) {
        const std::string em_name = primary_em_metric(row.family);
        const std::string acc_name = primary_acc_metric(row.family);
        if (row.metric_means.count(em_name)) {
            em_sum += row.metric_means.at(em_name);
            ++em_n;
        }
        if (row.metric_means.count(acc_name)) {
            acc_sum += row.metric_means.at(acc_name);
            ++acc_n;
        }
    }
    if (em_n > 0) report.avg_em = em_sum / static_cast<double>(em_n);
    if (acc_n > 0) report.avg_acc = acc_sum / static_cast<double>(acc_n);
    return report;
}

std::string AggregateReport::csv() const {
    std::string out = "dataset,task_family,records,metric,mean,scored\n";
    for (const auto& row : rows) {
        for (const auto& [name, mean] : row.metric_means) {
            out += row.dataset;
            out += ',';
            out += to_string(row.family);
            out += ',';
            out += std::to_string(row.records);
            out += ',';
            out += name;
            out += ',';
            out += format_double(mean);
            out += ',';
            out += std::to_string(row.metric_counts.at(name));
            out += '\n';
        }
    }
    out += "ALL,,,avg_em," + format_double(avg_em) + ",\n";
    out += "ALL,,,avg_acc," + format_double(avg_acc) + ",\n";
    return out;
}

std::string AggregateReport::table() const {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-20s %-16s %6s  %-12s %8s %7s\n", "dataset", "family",
                  "n", "metric", "mean", "scored");
    out += buf;
    out += std::string(74, '-');
    out += '\n';
    for (const auto& row : rows) {
        for (const auto& [name, mean] : row.metric_means) {
            std::snprintf(buf, sizeof(buf), "%-20s %-16s %6zu  %-12s %8.4f %7zu\n",
                          row.dataset.c_str(), to_string(row.family), row.records, name.c_str(),
                          mean, row.metric_counts.at(name));
            out += buf;
        }
    }
    out += std::string(74, '-');
    out += '\n';
    std::snprintf(buf, sizeof(buf), "macro Avg EM  : %.4f\n", avg_em);
    out += buf;
    std::snprintf(buf, sizeof(buf), "macro Avg Acc : %.4f\n", avg_acc);
    out += buf;
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation driver

namespace {

std::string options_block(const std::vector<EvalOption>& options) {
    std::string out;
    for (const auto& o : options) {
        if (!out.empty()) out += '\n';
        out += o.letter + ". " + o.text;
    }
    return out;
}

struct BuiltPrompt {
    std::string system;
    std::string user;
};

std::string plain_user_message(const EvalTask& task, const PromptLibrary& prompts) {
    switch (task.family) {
        case TaskFamily::short_qa:
            return render_prompt(prompts.text("prompt_sfqa"), {}, {task.context, task.question});
        case TaskFamily::multiple_choice:
            return render_prompt(prompts.text("prompt_mcqa"), {},
                                 {task.context, task.question, options_block(task.options)});
        case TaskFamily::closed_book:
            return render_prompt(prompts.text("prompt_faitheval_fact"), {},
                                 {task.question, options_block(task.options)});
        case TaskFamily::summarization:
            return render_prompt(prompts.text("prompt_sum"), {}, {task.context});
        case TaskFamily::simplification:
            return render_prompt(prompts.text("prompt_sim"), {}, {task.context});
        case TaskFamily::longform_qa:
            return render_prompt(prompts.text("prompt_lfqa"), {}, {task.context, task.question});
    }
    throw Error("unhandled task family");
}

// The dual style reuses the tagged conversation format for context-grounded
// QA families; the remaining families keep their task templates.
BuiltPrompt build_prompt(const EvalTask& task, const PromptLibrary& prompts, PromptStyle style) {
    if (style == PromptStyle::plain) return {"", plain_user_message(task, prompts)};
    switch (task.family) {
        case TaskFamily::short_qa:
        case TaskFamily::longform_qa:
            return {rollout::render_system_prompt(prompts),
                    rollout::render_user_message(task.context, task.question)};
        case TaskFamily::multiple_choice: {
            const std::string instruction = task.question + "\n\nOptions:\n" +
                                            options_block(task.options) +
                                            "\n\nAnswer with the option letter.";
            return {rollout::render_system_prompt(prompts),
                    rollout::render_user_message(task.context, instruction)};
        }
        case TaskFamily::closed_book:
        case TaskFamily::summarization:
        case TaskFamily::simplification:
            return {"", plain_user_message(task, prompts)};
    }
    throw Error("unhandled task family");
}

const EvalOption& correct_option(const EvalTask& task) {
    for (const auto& o : task.options) {
        if (o.letter == task.golds.at(0)) return o;
    }
    throw ConfigError("task " + task.id + ": gold letter missing from options");
}

}  // namespace

std::vector<EvalRecord> run_evaluation(llm::GenerationClient& policy,
                                       const std::vector<EvalTask>& tasks,
                                       const std::string& dataset_name,
                                       const PromptLibrary& prompts, const EvalConfig& config,
                                       FactChecker* checker, llm::GenerationClient* judge) {
    std::vector<EvalRecord> records;
    records.reserve(tasks.size());
    for (const auto& task : tasks) {
        const BuiltPrompt prompt = build_prompt(task, prompts, config.style);

        llm::GenerationRequest req;
        req.system_prompt = prompt.system;
        req.user_message = prompt.user;
        req.temperature = config.temperature;
        req.max_tokens = config.max_tokens;
        req.seed = derive_seed(config.seed, task.id);
        const std::string raw = policy.generate(req).text;

        EvalRecord rec;
        rec.dataset = dataset_name;
        rec.sample_id = task.id;
        rec.question = task.question;
        rec.context = task.context;
        rec.golds = task.golds;
        rec.family = task.family;

        const rollout::ParsedResponse parsed = rollout::parse_response(raw);
        const std::string fallback = trim(raw);
        rec.response_short = parsed.short_answer ? trim(*parsed.short_answer) : fallback;
        rec.response_long = parsed.long_answer ? trim(*parsed.long_answer) : fallback;

        switch (task.family) {
            case TaskFamily::short_qa:
                rec.metrics["em"] =
                    static_cast<double>(em_metric(*rec.response_short, task.golds, config.policy));
                rec.metrics["acc"] = static_cast<double>(
                    acc_contains(*rec.response_short, task.golds, config.policy));
                break;
            case TaskFamily::multiple_choice:
            case TaskFamily::closed_book: {
                const EvalOption& gold = correct_option(task);
                rec.metrics["keyword_acc"] = static_cast<double>(
                    keyword_match_mc(*rec.response_short, gold.letter, gold.text));
                break;
            }
            case TaskFamily::summarization:
            case TaskFamily::simplification:
            case TaskFamily::longform_qa: {
                if (checker && !task.context.empty()) {
                    try {
                        const FaithVerdict verdict =
                            faith_score(*checker, task.context, *rec.response_long, config.split);
                        rec.metrics["faith"] = verdict.grounded ? 1.0 : 0.0;
                    } catch (const Error&) {
                        // checker unavailable or unparsable: leave unscored
                    }
                }
                if (judge) {
                    const QualityKind kind = task.family == TaskFamily::summarization
                                                 ? QualityKind::summarization
                                             : task.family == TaskFamily::simplification
                                                 ? QualityKind::simplification
                                                 : QualityKind::longform_qa;
                    const std::string& input = task.family == TaskFamily::longform_qa
                                                   ? task.question
                                                   : task.context;
                    try {
                        if (const auto q =
                                quality_score(*judge, kind, input, *rec.response_long, prompts)) {
                            rec.metrics["quality"] = *q;
                        }
                    } catch (const Error&) {
                        // judge unavailable: leave unscored
                    }
                }
                break;
            }
        }

        if (policy.supports_scoring() && !raw.empty()) {
            try {
                const std::string prefix =
                    prompt.system.empty() ? prompt.user : prompt.system + "\n\n" + prompt.user;
                rec.metrics["perplexity"] = llm::perplexity(policy.score(prefix, raw));
            } catch (const Error&) {
                // scoring unavailable for this sequence: leave unscored
            }
        }

        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace canoe::eval
