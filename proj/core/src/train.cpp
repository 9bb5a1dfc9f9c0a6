#include "tppkit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace tppkit::harness {

using nlohmann::json;
using namespace tppkit::ad;

void TrainConfig::validate() const {
    model.validate();
    if (batch_size == 0) throw value_error("batch_size must be >= 1");
    if (!(peak_lr > 0)) throw value_error("peak_lr must be positive");
    if (warmup_epochs == 0) throw value_error("warmup_epochs must be >= 1");
    if (max_epochs == 0) throw value_error("max_epochs must be >= 1");
    if (mc_train == 0 || mc_eval == 0) throw value_error("mc sample counts must be >= 1");
}

TrainConfig config_from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw value_error("config: malformed JSON");
    TrainConfig cfg;
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    get("encoder", cfg.model.encoder);
    get("decoder", cfg.model.decoder);
    get("hidden", cfg.model.hidden);
    get("layers", cfg.model.layers);
    get("heads", cfg.model.heads);
    get("lnm_components", cfg.model.lnm_components);
    get("pooling", cfg.model.pooling);
    if (j.contains("task")) cfg.model.task = task_from_name(j.at("task").get<std::string>());
    get("batch_size", cfg.batch_size);
    get("peak_lr", cfg.peak_lr);
    get("warmup_epochs", cfg.warmup_epochs);
    get("patience", cfg.patience);
    get("max_epochs", cfg.max_epochs);
    get("mc_train", cfg.mc_train);
    get("mc_eval", cfg.mc_eval);
    get("seed", cfg.seed);
    get("log_timing", cfg.log_timing);
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw value_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string config_to_json(const TrainConfig& cfg) {
    json j;
    j["encoder"] = cfg.model.encoder;
    j["decoder"] = cfg.model.decoder;
    j["hidden"] = cfg.model.hidden;
    j["layers"] = cfg.model.layers;
    j["heads"] = cfg.model.heads;
    j["lnm_components"] = cfg.model.lnm_components;
    j["pooling"] = cfg.model.pooling;
    j["task"] = task_name(cfg.model.task);
    j["batch_size"] = cfg.batch_size;
    j["peak_lr"] = cfg.peak_lr;
    j["warmup_epochs"] = cfg.warmup_epochs;
    j["patience"] = cfg.patience;
    j["max_epochs"] = cfg.max_epochs;
    j["mc_train"] = cfg.mc_train;
    j["mc_eval"] = cfg.mc_eval;
    j["seed"] = cfg.seed;
    j["log_timing"] = cfg.log_timing;
    return j.dump(2) + "\n";
}

namespace {

json tensor_to_json(const Tensor& t) {
    json j;
    j["shape"] = t.shape();
    j["data"] = t.data();
    return j;
}

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json j;
    j["config"] = json::parse(config_to_json(ckpt.config));
    j["num_marks"] = ckpt.num_marks;
    j["beta_hat"] = ckpt.beta_hat;
    j["epoch"] = ckpt.epoch;
    j["best_val_nll_per_time"] = ckpt.best_val_nll_per_time;
    json params;
    for (const auto& [name, tensor] : ckpt.params) params[name] = tensor_to_json(tensor);
    j["params"] = std::move(params);
    json buffers;
    for (const auto& [name, tensor] : ckpt.buffers) buffers[name] = tensor_to_json(tensor);
    j["buffers"] = std::move(buffers);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw value_error("cannot write checkpoint: " + path);
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw value_error("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw value_error("checkpoint: malformed JSON: " + path);
    Checkpoint ckpt;
    ckpt.config = config_from_json(j.at("config").dump());
    ckpt.num_marks = j.at("num_marks").get<int>();
    ckpt.beta_hat = j.at("beta_hat").get<double>();
    ckpt.epoch = j.at("epoch").get<std::size_t>();
    ckpt.best_val_nll_per_time = j.at("best_val_nll_per_time").get<double>();
    for (const auto& [name, tj] : j.at("params").items())
        ckpt.params.emplace(name, tensor_from_json(tj));
    for (const auto& [name, tj] : j.at("buffers").items())
        ckpt.buffers.emplace(name, tensor_from_json(tj));
    return ckpt;
}

std::unique_ptr<model::TppModel> restore_model(const Checkpoint& ckpt) {
    auto m = std::make_unique<model::TppModel>(ckpt.config.model, ckpt.num_marks, ckpt.beta_hat,
                                               ckpt.config.seed);
    m->params().load_values(ckpt.params);
    m->load_buffers(ckpt.buffers);
    return m;
}

std::string runlog_to_jsonl(const std::vector<RunLogEntry>& log, bool with_timing) {
    std::string out;
    for (const auto& e : log) {
        json j;
        j["epoch"] = e.epoch;
        j["train_nll_per_time"] = e.train_nll_per_time;
        j["val_nll_per_time"] = e.val_nll_per_time;
        j["lr"] = e.lr;
        if (with_timing) j["wall_ms"] = e.wall_ms;
        out += j.dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr) {
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (const auto& [name, grad] : grads) {
        if (!grad.all_finite()) throw numeric_error("adam_step: NaN gradient for " + name);
        NodePtr p = params.get(name);
        auto it = state.moments.find(name);
        if (it == state.moments.end())
            it = state.moments
                     .emplace(name, std::make_pair(Tensor::zeros(grad.shape()),
                                                   Tensor::zeros(grad.shape())))
                     .first;
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (std::size_t i = 0; i < grad.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

double noam_lr(std::size_t step, std::size_t warmup_steps, double peak) {
    if (step == 0) throw value_error("noam_lr: step starts at 1");
    double s = static_cast<double>(step);
    double w = static_cast<double>(warmup_steps);
    return peak * std::min(s / w, std::sqrt(w / s));
}

// ---------------------------------------------------------------------------

namespace {

struct SeqEval {
    double loglik = 0;
    double length = 0;
};

double dataset_nll_per_time(model::TppModel& m, const io::DatasetFile& data,
                            std::size_t mc_samples, std::uint64_t mc_seed) {
    std::vector<double> lls, lengths;
    for (std::size_t i = 0; i < data.sequences.size(); ++i) {
        Rng stream(Rng::derive(mc_seed, i));
        auto terms = m.sequence_terms(data.sequences[i], mc_samples, &stream);
        auto ll = data.task == Task::kMultiClass
                      ? lik::loglik_multiclass(terms, data.sequences[i])
                      : lik::loglik_multilabel(terms, data.sequences[i]);
        lls.push_back(ll.value());
        lengths.push_back(data.sequences[i].length());
    }
    return lik::nll_per_time(lls, lengths);
}

constexpr std::uint64_t kValStreamSalt = 0x9d2c5680aull;
constexpr std::uint64_t kTrainStreamSalt = 0x5deece66dull;

}  // namespace

TrainResult train(const TrainConfig& cfg, const io::DatasetFile& train_data,
                  const io::DatasetFile& val_data) {
    cfg.validate();
    train_data.validate("train");
    val_data.validate("val");
    if (train_data.num_marks != val_data.num_marks)
        throw value_error("train: train/val disagree on the number of marks");
    if (train_data.sequences.empty() || val_data.sequences.empty())
        throw value_error("train: empty split");

    double beta_hat = enc::estimate_beta(train_data.sequences);
    model::TppModel m(cfg.model, train_data.num_marks, beta_hat, cfg.seed);

    std::size_t n = train_data.sequences.size();
    std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::size_t warmup_steps = cfg.warmup_epochs * batches_per_epoch;

    AdamState adam;
    TrainResult result;
    Checkpoint best;
    best.config = cfg;
    best.num_marks = train_data.num_marks;
    best.beta_hat = beta_hat;
    best.best_val_nll_per_time = std::numeric_limits<double>::infinity();

    std::size_t step = 0;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(Rng::derive(cfg.seed, 0xe0000000ull + epoch));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.index(i + 1)]);

        double lr = 0;
        std::vector<double> train_lls, train_lengths;
        bool epoch_failed = false;
        std::string failure;
        m.set_train_mode(true);
        for (std::size_t b = 0; b < batches_per_epoch && !epoch_failed; ++b) {
            std::size_t lo = b * cfg.batch_size;
            std::size_t hi = std::min(n, lo + cfg.batch_size);
            std::map<std::string, Tensor> acc;
            double inv = 1.0 / static_cast<double>(hi - lo);
            for (std::size_t k = lo; k < hi && !epoch_failed; ++k) {
                const EventSequence& seq = train_data.sequences[order[k]];
                try {
                    Rng stream(Rng::derive(cfg.seed ^ kTrainStreamSalt,
                                           epoch * 1000003ull + order[k]));
                    auto terms = m.sequence_terms(seq, cfg.mc_train, &stream);
                    auto ll = cfg.model.task == Task::kMultiClass
                                  ? lik::loglik_multiclass(terms, seq)
                                  : lik::loglik_multilabel(terms, seq);
                    train_lls.push_back(ll.value());
                    train_lengths.push_back(seq.length());
                    auto loss = mul_const(negate(ll.node), inv);
                    auto grads = backward(loss, m.params());
                    for (auto& [name, g] : grads) {
                        auto it = acc.find(name);
                        if (it == acc.end()) {
                            acc.emplace(name, g);
                        } else {
                            for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
                        }
                    }
                    m.commit_norm_stats();
                } catch (const numeric_error& e) {
                    epoch_failed = true;
                    failure = e.what();
                }
            }
            if (epoch_failed) break;
            step += 1;
            lr = noam_lr(step, warmup_steps, cfg.peak_lr);
            try {
                adam_step(m.params(), acc, adam, lr);
            } catch (const numeric_error& e) {
                epoch_failed = true;
                failure = e.what();
            }
        }
        if (epoch_failed) {
            result.diverged = true;
            if (!std::isfinite(best.best_val_nll_per_time)) {
                throw numeric_error("training diverged before any epoch completed: " + failure);
            }
            break;
        }

        m.set_train_mode(false);
        double val_nll;
        try {
            val_nll = dataset_nll_per_time(m, val_data, cfg.mc_eval, cfg.seed ^ kValStreamSalt);
        } catch (const numeric_error&) {
            result.diverged = true;
            break;
        }

        RunLogEntry entry;
        entry.epoch = epoch;
        entry.train_nll_per_time = lik::nll_per_time(train_lls, train_lengths);
        entry.val_nll_per_time = val_nll;
        entry.lr = lr;
        entry.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        result.log.push_back(entry);

        if (val_nll < best.best_val_nll_per_time) {
            best.best_val_nll_per_time = val_nll;
            best.epoch = epoch;
            best.params = m.params().values();
            best.buffers = m.buffer_values();
            since_best = 0;
        } else {
            since_best += 1;
            if (since_best >= cfg.patience) break;
        }
    }
    if (!std::isfinite(best.best_val_nll_per_time))
        throw numeric_error("training produced no finite validation NLL");
    result.checkpoint = std::move(best);
    return result;
}

lik::MetricsReport evaluate(const Checkpoint& ckpt, const io::DatasetFile& data) {
    auto m = restore_model(ckpt);
    model::EvalOptions opts;
    opts.mc_samples = ckpt.config.mc_eval;
    opts.mc_seed = ckpt.config.seed ^ kValStreamSalt;
    return model::evaluate_dataset(*m, data, opts);
}

std::string metrics_to_json(const lik::MetricsReport& report) {
    json j;
    j["nll_per_time"] = report.nll_per_time;
    j["weighted_f1"] = report.weighted_f1 ? json(*report.weighted_f1) : json(nullptr);
    j["weighted_roc_auc"] =
        report.weighted_roc_auc ? json(*report.weighted_roc_auc) : json(nullptr);
    j["num_sequences"] = report.num_sequences;
    j["num_events"] = report.num_events;
    return j.dump(2) + "\n";
}

lik::ProbeReport probe_run(const TrainConfig& cfg, const io::DatasetFile& train_data,
                           const io::DatasetFile& val_data, const io::DatasetFile& test_data,
                           double margin) {
    if (cfg.model.decoder == "cp")
        throw value_error("probe: configure a decode-time-dependent decoder to compare against");
    TrainConfig cp_cfg = cfg;
    cp_cfg.model.decoder = "cp";
    auto cp_result = train(cp_cfg, train_data, val_data);
    auto full_result = train(cfg, train_data, val_data);
    auto cp_metrics = evaluate(cp_result.checkpoint, test_data);
    auto full_metrics = evaluate(full_result.checkpoint, test_data);
    double cp_label = test_data.task == Task::kMultiClass ? cp_metrics.weighted_f1.value()
                                                          : cp_metrics.weighted_roc_auc.value();
    double full_label = test_data.task == Task::kMultiClass
                            ? full_metrics.weighted_f1.value()
                            : full_metrics.weighted_roc_auc.value();
    return lik::make_probe_report(cp_metrics.nll_per_time, full_metrics.nll_per_time, cp_label,
                                  full_label, margin);
}

std::string probe_to_json(const lik::ProbeReport& report) {
    json j;
    j["cp_nll_per_time"] = report.cp_nll_per_time;
    j["model_nll_per_time"] = report.model_nll_per_time;
    j["cp_label_metric"] = report.cp_label_metric;
    j["model_label_metric"] = report.model_label_metric;
    j["margin"] = report.margin;
    j["verdict"] = report.verdict;
    return j.dump(2) + "\n";
}

}  // namespace tppkit::harness
