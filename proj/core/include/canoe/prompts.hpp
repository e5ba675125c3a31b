#pragma once

#include <map>
#include <string>
#include <vector>

namespace canoe {

// Prompt templates loaded from the pinned resource files shipped with the
// library. Every file is verified against DIGESTS.sha256 at load time so a
// silently edited template cannot change behaviour unnoticed.
class PromptLibrary {
public:
    // Resolution order for the resource directory: $CANOE_RESOURCE_DIR, then
    // the source tree, then the install tree. Throws ResourceError when no
    // directory is usable or any file fails its digest check.
    static PromptLibrary load_default();
    static PromptLibrary load_from(const std::string& dir);

    // Names of all templates (file stems, e.g. "sys_prompt").
    static const std::vector<std::string>& names();

    const std::string& text(const std::string& name) const;
    const std::string& digest(const std::string& name) const;
    const std::string& directory() const { return dir_; }
    const std::map<std::string, std::string>& digests() const { return digests_; }

private:
    std::string dir_;
    std::map<std::string, std::string> texts_;
    std::map<std::string, std::string> digests_;
};

// Replaces {key} markers with values from `named`; markers whose key is empty
// or whitespace-only consume the next entry of `positional`. Markers that
// match neither are emitted verbatim. Throws ConfigError when the template
// needs more positional values than were supplied.
std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& named,
                          const std::vector<std::string>& positional = {});

}  // namespace canoe
