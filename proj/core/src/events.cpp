#include "tppkit/events.hpp"

#include "tppkit/tensor.hpp"

namespace tppkit {

std::string task_name(Task t) { return t == Task::kMultiClass ? "multi-class" : "multi-label"; }

Task task_from_name(const std::string& name) {
    if (name == "multi-class") return Task::kMultiClass;
    if (name == "multi-label") return Task::kMultiLabel;
    throw value_error("unknown task: " + name + " (expected multi-class or multi-label)");
}

void EventSequence::validate(Task task, const std::string& where) const {
    if (!(window_hi >= window_lo))
        throw value_error(where + ".window: upper bound below lower bound");
    if (num_marks < 1) throw value_error(where + ".num_marks: must be >= 1");
    double prev = window_lo;
    bool first = true;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::string ev = where + ".events[" + std::to_string(i) + "]";
        const Event& e = events[i];
        if (first ? e.time < prev : e.time <= prev)
            throw value_error(ev + ".time: times must be strictly increasing within the window");
        first = false;
        prev = e.time;
        if (e.time > window_hi) throw value_error(ev + ".time: beyond the window upper bound");
        if (e.labels.empty()) throw value_error(ev + ".labels: event carries no label");
        if (task == Task::kMultiClass && e.labels.size() != 1)
            throw value_error(ev + ".labels: multi-class events carry exactly one label");
        int last = -1;
        for (int m : e.labels) {
            if (m < 0 || m >= num_marks)
                throw value_error(ev + ".labels: label " + std::to_string(m) +
                                  " outside [0, " + std::to_string(num_marks) + ")");
            if (m <= last)
                throw value_error(ev + ".labels: labels must be sorted ascending without repeats");
            last = m;
        }
    }
}

}  // namespace tppkit
