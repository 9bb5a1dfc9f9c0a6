#include "tppkit/dataio.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tppkit/encoders.hpp"
#include "tppkit/rng.hpp"
#include "tppkit/tensor.hpp"

namespace tppkit::io {

using nlohmann::json;

void DatasetFile::validate(const std::string& where) const {
    if (num_marks < 1) throw value_error(where + ".num_marks: must be >= 1");
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        if (sequences[i].num_marks != num_marks)
            throw value_error(where + ".sequences[" + std::to_string(i) +
                              "]: num_marks disagrees with the file header");
        sequences[i].validate(task, where + ".sequences[" + std::to_string(i) + "]");
    }
}

std::size_t DatasetFile::total_events() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.events.size();
    return n;
}

namespace {

double require_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw value_error(path + ": expected a number");
    return j.get<double>();
}

const json& require_field(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw value_error(path + ": missing field '" + key + "'");
    return *it;
}

}  // namespace

DatasetFile parse_dataset(const std::string& json_text, const std::string& where) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw value_error(where + ": malformed JSON");
    if (!j.is_object()) throw value_error(where + ": expected a JSON object");
    DatasetFile file;
    const json& marks = require_field(j, "num_marks", where);
    if (!marks.is_number_integer() || marks.get<int>() < 1)
        throw value_error(where + ".num_marks: expected a positive integer");
    file.num_marks = marks.get<int>();
    file.task = task_from_name(require_field(j, "task", where).get<std::string>());
    const json& seqs = require_field(j, "sequences", where);
    if (!seqs.is_array()) throw value_error(where + ".sequences: expected an array");
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        std::string sp = where + ".sequences[" + std::to_string(i) + "]";
        const json& js = seqs[i];
        EventSequence seq;
        seq.num_marks = file.num_marks;
        const json& win = require_field(js, "window", sp);
        if (!win.is_array() || win.size() != 2)
            throw value_error(sp + ".window: expected [lo, hi]");
        seq.window_lo = require_number(win[0], sp + ".window[0]");
        seq.window_hi = require_number(win[1], sp + ".window[1]");
        const json& events = require_field(js, "events", sp);
        if (!events.is_array()) throw value_error(sp + ".events: expected an array");
        for (std::size_t k = 0; k < events.size(); ++k) {
            std::string ep = sp + ".events[" + std::to_string(k) + "]";
            const json& je = events[k];
            Event ev;
            ev.time = require_number(require_field(je, "time", ep), ep + ".time");
            const json& labels = require_field(je, "labels", ep);
            if (!labels.is_array()) throw value_error(ep + ".labels: expected an array");
            for (const json& l : labels) {
                if (!l.is_number_integer()) throw value_error(ep + ".labels: expected integers");
                ev.labels.push_back(l.get<int>());
            }
            seq.events.push_back(std::move(ev));
        }
        file.sequences.push_back(std::move(seq));
    }
    file.validate(where);
    return file;
}

std::string serialize_dataset(const DatasetFile& file) {
    json j;
    j["num_marks"] = file.num_marks;
    j["task"] = task_name(file.task);
    json seqs = json::array();
    for (const auto& s : file.sequences) {
        json js;
        js["window"] = {s.window_lo, s.window_hi};
        json events = json::array();
        for (const auto& e : s.events) {
            json je;
            je["time"] = e.time;
            je["labels"] = e.labels;
            events.push_back(std::move(je));
        }
        js["events"] = std::move(events);
        seqs.push_back(std::move(js));
    }
    j["sequences"] = std::move(seqs);
    return j.dump(2) + "\n";
}

DatasetFile load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw value_error("cannot open dataset file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), path);
}

void save_dataset(const DatasetFile& file, const std::string& path) {
    file.validate("dataset");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw value_error("cannot write dataset file: " + path);
    out << serialize_dataset(file);
}

Splits make_splits(const DatasetFile& file, const SplitSpec& spec) {
    if (spec.fold < 0 || spec.fold >= 5) throw value_error("make_splits: fold must be in [0, 5)");
    std::size_t n = file.sequences.size();
    if (n < 10) throw value_error("make_splits: need at least 10 sequences");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(spec.fold)));
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.index(i + 1)]);
    auto n_train = static_cast<std::size_t>(SplitSpec::kTrainFraction * static_cast<double>(n));
    auto n_val = static_cast<std::size_t>(SplitSpec::kValFraction * static_cast<double>(n));
    Splits out;
    for (DatasetFile* f : {&out.train, &out.val, &out.test}) {
        f->num_marks = file.num_marks;
        f->task = file.task;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const EventSequence& s = file.sequences[order[i]];
        if (i < n_train) out.train.sequences.push_back(s);
        else if (i < n_train + n_val) out.val.sequences.push_back(s);
        else out.test.sequences.push_back(s);
    }
    return out;
}

DatasetFile truncate(const DatasetFile& file, std::size_t max_len) {
    if (max_len < 1) throw value_error("truncate: max_len must be >= 1");
    DatasetFile out;
    out.num_marks = file.num_marks;
    out.task = file.task;
    out.sequences.reserve(file.sequences.size());
    for (const EventSequence& s : file.sequences) {
        EventSequence t = s;
        if (t.events.size() > max_len) {
            t.events.resize(max_len);
            t.window_hi = t.events.back().time;
        }
        out.sequences.push_back(std::move(t));
    }
    return out;
}

DatasetStats compute_stats(const DatasetFile& file) {
    DatasetStats stats;
    stats.beta_hat = enc::estimate_beta(file.sequences);
    stats.per_mark_counts.assign(static_cast<std::size_t>(file.num_marks), 0);
    for (const auto& s : file.sequences) {
        stats.length_histogram[s.events.size()] += 1;
        for (const auto& e : s.events)
            for (int m : e.labels) stats.per_mark_counts[static_cast<std::size_t>(m)] += 1;
    }
    return stats;
}

}  // namespace tppkit::io
