#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tppkit/dataio.hpp"
#include "tppkit/decoders.hpp"
#include "tppkit/encoders.hpp"
#include "tppkit/hawkes.hpp"
#include "tppkit/likelihood.hpp"
#include "tppkit/metrics.hpp"

namespace tppkit::model {

using ad::NodePtr;
using ad::Tensor;

struct ModelConfig {
    std::string encoder = "gru";   // gru | sa
    std::string decoder = "cp";    // cp | rmtpp | lnm | mlp-mc | mlp-cm | attn-mc | attn-cm
    std::size_t hidden = 8;        // embedding dim = d_model = hidden size
    std::size_t layers = 1;        // encoder layers
    std::size_t heads = 1;
    std::size_t lnm_components = 8;
    std::string pooling = "mean";
    Task task = Task::kMultiClass;

    void validate() const;
};

/// Encoder + decoder + base-intensity mixture over one parameter store.
class TppModel {
  public:
    TppModel(const ModelConfig& cfg, int num_marks, double beta_hat, std::uint64_t seed);

    /// Likelihood terms for one sequence. MC compensators draw their
    /// jitters from `mc_rng` (pass null for unjittered midpoints).
    lik::SequenceTerms sequence_terms(const EventSequence& seq, std::size_t mc_samples,
                                      Rng* mc_rng);

    /// Per-mark intensity at an arbitrary query time (no compensator work).
    std::vector<double> intensity_at(const EventSequence& seq, double t);

    /// Attention coefficients of the last sequence_terms() call: encoder
    /// trace for SA, per-event decoder traces for attention decoders.
    struct AttentionDump {
        std::string source;                        // "encoder" | "decoder" | ""
        std::vector<Tensor> encoder_layers;        // (N x N) per layer*head
        std::vector<std::vector<Tensor>> decoder;  // per event, (heads x keys)
    };
    AttentionDump attention_dump() const { return attention_; }

    void set_train_mode(bool train);
    void commit_norm_stats();

    ad::ParamStore& params() { return params_; }
    const ModelConfig& config() const { return cfg_; }
    int num_marks() const { return num_marks_; }
    double beta_hat() const { return beta_hat_; }
    bool has_attention() const;

    std::map<std::string, Tensor> buffer_values();
    void load_buffers(const std::map<std::string, Tensor>& bufs);

  private:
    friend struct SequenceGraph;
    std::vector<NodePtr> encode_events(const EventSequence& seq, std::vector<double>& times);
    dec::DecoderOutput decode_interval(const dec::DecodeContext& ctx, std::size_t hist, double t,
                                       double t_prev, const dec::McIntegrator& integ,
                                       bool need_big_lambda);

    ModelConfig cfg_;
    int num_marks_ = 0;
    double beta_hat_ = 1.0;
    ad::ParamStore params_;
    enc::LabelEmbedding embedding_;
    enc::TemporalEncodingConfig tcfg_;
    std::unique_ptr<enc::Encoder> encoder_;
    std::unique_ptr<dec::Decoder> decoder_;
    dec::BaseIntensity base_;
    bool use_base_ = false;
    bool train_mode_ = false;
    AttentionDump attention_;
};

struct EvalOptions {
    std::size_t mc_samples = 1000;
    std::uint64_t mc_seed = 7;
};

/// NLL/time plus the task's label metric over a dataset, in eval mode.
lik::MetricsReport evaluate_dataset(TppModel& model, const io::DatasetFile& data,
                                    const EvalOptions& opts);

/// A model interface over exact Hawkes intensities (the oracle), producing
/// the same SequenceTerms the likelihood consumes.
lik::SequenceTerms hawkes_oracle_terms(const hawkes::HawkesParams& params,
                                       const EventSequence& seq);

}  // namespace tppkit::model
