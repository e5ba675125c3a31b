#pragma once

#include <string>
#include <vector>

namespace canoe::synth {

enum class TaskType {
    straightforward,
    reasoning_required,
    inconsistent,
    counterfactual,
};

const char* to_string(TaskType task);
TaskType task_type_from_string(const std::string& name);

struct QASample {
    std::string id;
    std::string context;   // c
    std::string question;  // q
    std::string answer;    // a
    TaskType task = TaskType::straightforward;
    // Source triple/path descriptors ("head|relation|tail" per hop).
    std::vector<std::string> provenance;
};

}  // namespace canoe::synth
