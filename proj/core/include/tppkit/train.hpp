#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tppkit/model.hpp"

namespace tppkit::harness {

using ad::Tensor;

struct TrainConfig {
    model::ModelConfig model;
    std::size_t batch_size = 64;
    double peak_lr = 0.01;
    std::size_t warmup_epochs = 10;
    std::size_t patience = 100;
    std::size_t max_epochs = 500;
    std::size_t mc_train = 50;
    std::size_t mc_eval = 1000;
    std::uint64_t seed = 0;
    bool log_timing = true;  // wall time in the run log; off for bit-identical logs

    void validate() const;
};

TrainConfig config_from_json(const std::string& json_text);
TrainConfig load_config(const std::string& path);
std::string config_to_json(const TrainConfig& cfg);

struct Checkpoint {
    TrainConfig config;
    int num_marks = 0;
    double beta_hat = 1.0;
    std::size_t epoch = 0;
    double best_val_nll_per_time = 0;
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> buffers;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Model rebuilt from a checkpoint; evaluation metrics reproduce exactly.
std::unique_ptr<model::TppModel> restore_model(const Checkpoint& ckpt);

struct RunLogEntry {
    std::size_t epoch = 0;
    double train_nll_per_time = 0;
    double val_nll_per_time = 0;
    double lr = 0;
    double wall_ms = 0;
};

std::string runlog_to_jsonl(const std::vector<RunLogEntry>& log, bool with_timing);

// ---------------------------------------------------------------------------
// optimization

struct AdamState {
    std::map<std::string, std::pair<Tensor, Tensor>> moments;  // (m, v) per parameter
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

/// One Adam update with bias correction. Missing gradients leave their
/// parameters untouched. Throws numeric_error on a NaN gradient.
void adam_step(ad::ParamStore& params, const std::map<std::string, Tensor>& grads,
               AdamState& state, double lr);

/// peak * min(step/warmup, sqrt(warmup/step)); maximum is exactly `peak`
/// at step == warmup_steps.
double noam_lr(std::size_t step, std::size_t warmup_steps, double peak);

// ---------------------------------------------------------------------------
// training and evaluation

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<RunLogEntry> log;
    bool diverged = false;
};

/// Deterministic MLE training with Noam warmup and early stopping on
/// validation NLL/time. Identical (config, seed, data) produce bit-identical
/// results.
TrainResult train(const TrainConfig& cfg, const io::DatasetFile& train_data,
                  const io::DatasetFile& val_data);

lik::MetricsReport evaluate(const Checkpoint& ckpt, const io::DatasetFile& data);

std::string metrics_to_json(const lik::MetricsReport& report);

/// Dataset-validity probe: trains a conditional-Poisson baseline and the
/// configured model on the same split, compares held-out metrics.
lik::ProbeReport probe_run(const TrainConfig& cfg, const io::DatasetFile& train_data,
                           const io::DatasetFile& val_data, const io::DatasetFile& test_data,
                           double margin);

std::string probe_to_json(const lik::ProbeReport& report);

}  // namespace tppkit::harness
