#include "canoe/prompts.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "canoe/errors.hpp"
#include "canoe/resource_paths.hpp"
#include "canoe/util.hpp"

namespace canoe {

namespace {

const std::vector<std::string> kNames = {
    "sys_prompt",
    "prompt_s_q",
    "prompt_s_c",
    "prompt_r_q",
    "prompt_r_c",
    "prompt_cf_entity",
    "prompt_scoring_sum",
    "prompt_scoring_sim",
    "prompt_scoring_lfqa",
    "prompt_sfqa",
    "prompt_mcqa",
    "prompt_sum",
    "prompt_sim",
    "prompt_lfqa",
    "prompt_faitheval_fact",
};

std::map<std::string, std::string> parse_digest_file(const std::string& path) {
    std::map<std::string, std::string> pins;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos) {
            throw ResourceError("malformed digest line in " + path + ": " + line);
        }
        std::string hex = line.substr(0, space);
        std::string file = trim(line.substr(space + 1));
        if (!file.empty() && file.front() == '*') file.erase(0, 1);
        if (hex.size() != 64 || file.empty()) {
            throw ResourceError("malformed digest line in " + path + ": " + line);
        }
        pins[file] = hex;
    }
    return pins;
}

bool usable_dir(const std::string& dir) {
    std::error_code ec;
    return !dir.empty() &&
           std::filesystem::is_regular_file(std::filesystem::path(dir) / "DIGESTS.sha256", ec);
}

}  // namespace

const std::vector<std::string>& PromptLibrary::names() { return kNames; }

PromptLibrary PromptLibrary::load_default() {
    if (const char* env = std::getenv("CANOE_RESOURCE_DIR")) {
        return load_from(env);
    }
    for (const char* dir : {CANOE_PROMPT_SOURCE_DIR, CANOE_PROMPT_INSTALL_DIR}) {
        if (usable_dir(dir)) return load_from(dir);
    }
    throw ResourceError(
        "no prompt resource directory found; set CANOE_RESOURCE_DIR to the "
        "directory containing the prompt files and DIGESTS.sha256");
}

PromptLibrary PromptLibrary::load_from(const std::string& dir) {
    if (!usable_dir(dir)) {
        throw ResourceError("prompt resource directory unusable (missing DIGESTS.sha256): " + dir);
    }
    const auto base = std::filesystem::path(dir);
    const auto pins = parse_digest_file((base / "DIGESTS.sha256").string());

    PromptLibrary lib;
    lib.dir_ = dir;
    for (const auto& name : kNames) {
        const std::string file = name + ".txt";
        const auto pin = pins.find(file);
        if (pin == pins.end()) {
            throw ResourceError("no pinned digest for prompt file " + file);
        }
        std::string body;
        try {
            body = read_file((base / file).string());
        } catch (const Error& e) {
            throw ResourceError("cannot read prompt file " + file + ": " + e.what());
        }
        const std::string actual = sha256_hex(body);
        if (actual != pin->second) {
            throw ResourceError("digest mismatch for prompt file " + file + ": expected " +
                                pin->second + ", got " + actual);
        }
        lib.texts_[name] = std::move(body);
        lib.digests_[name] = actual;
    }
    return lib;
}

const std::string& PromptLibrary::text(const std::string& name) const {
    const auto it = texts_.find(name);
    if (it == texts_.end()) throw ResourceError("unknown prompt template: " + name);
    return it->second;
}

const std::string& PromptLibrary::digest(const std::string& name) const {
    const auto it = digests_.find(name);
    if (it == digests_.end()) throw ResourceError("unknown prompt template: " + name);
    return it->second;
}

std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& named,
                          const std::vector<std::string>& positional) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t positional_used = 0;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const char c = tmpl[i];
        if (c != '{') {
            out.push_back(c);
            ++i;
            continue;
        }
        const auto close = tmpl.find('}', i + 1);
        if (close == std::string::npos) {
            out.append(tmpl, i, std::string::npos);
            break;
        }
        const std::string key = tmpl.substr(i + 1, close - i - 1);
        const bool is_positional = trim(key).empty();
        if (is_positional) {
            if (positional_used >= positional.size()) {
                throw ConfigError("prompt template needs more positional values than supplied (" +
                                  std::to_string(positional.size()) + " given)");
            }
            out += positional[positional_used++];
            i = close + 1;
        } else if (const auto it = named.find(key); it != named.end()) {
            out += it->second;
            i = close + 1;
        } else {
            // Unknown marker: emit verbatim so literal braces survive.
            out.append(tmpl, i, close - i + 1);
            i = close + 1;
        }
    }
    return out;
}

}  // namespace canoe
