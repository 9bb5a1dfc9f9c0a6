#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tppkit/events.hpp"

namespace tppkit::io {

/// Canonical on-disk dataset (.tpp.json): num_marks, task, and sequences of
/// {window, events:[{time, labels}]}.
struct DatasetFile {
    int num_marks = 0;
    Task task = Task::kMultiClass;
    std::vector<EventSequence> sequences;

    void validate(const std::string& where = "dataset") const;
    std::size_t total_events() const;
};

DatasetFile load_dataset(const std::string& path);
void save_dataset(const DatasetFile& file, const std::string& path);

/// Parse from a JSON string (exposed for focused tests).
DatasetFile parse_dataset(const std::string& json_text, const std::string& where);
std::string serialize_dataset(const DatasetFile& file);

struct SplitSpec {
    int fold = 0;           // in [0, 5)
    std::uint64_t seed = 0;
    static constexpr double kTrainFraction = 0.8;
    static constexpr double kValFraction = 0.1;
};

struct Splits {
    DatasetFile train, val, test;
};

/// Deterministic shuffle by (seed, fold), then an 80/10/10 partition by
/// sequence.
Splits make_splits(const DatasetFile& file, const SplitSpec& spec);

/// Keeps the first max_len events of each sequence; when events were
/// dropped, the window upper bound shrinks to the last kept event time.
DatasetFile truncate(const DatasetFile& file, std::size_t max_len);

struct DatasetStats {
    double beta_hat = 0;                         // mean (w+ - w-)/N over sequences
    std::vector<std::size_t> per_mark_counts;
    std::map<std::size_t, std::size_t> length_histogram;  // sequence length -> count
};

DatasetStats compute_stats(const DatasetFile& file);

}  // namespace tppkit::io
