#pragma once

#include <string>
#include <vector>

namespace tppkit {

enum class Task { kMultiClass, kMultiLabel };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

struct Event {
    double time = 0.0;
    std::vector<int> labels;  // sorted ascending, unique, each in [0, num_marks)
};

/// Timestamped mark-set events inside an observation window.
struct EventSequence {
    std::vector<Event> events;
    double window_lo = 0.0;
    double window_hi = 0.0;
    int num_marks = 0;

    std::size_t size() const { return events.size(); }
    double length() const { return window_hi - window_lo; }

    /// Throws value_error naming the offending field if any invariant is
    /// broken: w- <= t1 < ... < tN <= w+, labels valid and sorted, at least
    /// one label per event (exactly one when task is multi-class).
    void validate(Task task, const std::string& where = "sequence") const;
};

}  // namespace tppkit
