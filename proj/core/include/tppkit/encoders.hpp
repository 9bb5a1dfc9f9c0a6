#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tppkit/events.hpp"
#include "tppkit/graph.hpp"

namespace tppkit::enc {

using ad::NodePtr;
using ad::ParamStore;
using ad::Tensor;

enum class Pooling { kMean, kMax };

Pooling pooling_from_name(const std::string& name);
std::string pooling_name(Pooling p);

/// Shared label-embedding step: pooled rows of an M x D table.
class LabelEmbedding {
  public:
    LabelEmbedding() = default;
    LabelEmbedding(ParamStore& ps, const std::string& prefix, std::size_t num_marks,
                   std::size_t dim, Pooling pooling);

    /// Pooled embedding of a non-empty set of mark ids.
    NodePtr embed(const std::vector<int>& marks) const;

    std::size_t dim() const { return dim_; }
    std::size_t num_marks() const { return num_marks_; }
    Pooling pooling() const { return pooling_; }
    const NodePtr& table() const { return table_; }

  private:
    NodePtr table_;  // (M, D)
    std::size_t num_marks_ = 0, dim_ = 0;
    Pooling pooling_ = Pooling::kMean;
};

/// Continuous generalization of the sinusoidal positional encoding:
/// pairs [sin(a_k t), cos(a_k t)] with a_k = 10000^(-2k/d_model) / beta_hat.
struct TemporalEncodingConfig {
    std::size_t d_model = 0;  // even
    double beta_hat = 1.0;    // > 0

    void validate() const;
};

std::vector<double> temporal_embedding(const TemporalEncodingConfig& cfg, double t);

/// Mean over sequences of (w+ - w-)/N; the timescale estimate for the
/// temporal encoding.
double estimate_beta(const std::vector<EventSequence>& train);

/// x_i = v_i * sqrt(d_model) + Temporal(t_i). Requires embedding dim ==
/// d_model.
NodePtr temporal_encode(const LabelEmbedding& emb, const TemporalEncodingConfig& cfg,
                        const Event& event);

// ---------------------------------------------------------------------------
// attention

enum class AttnActivation { kSoftmax, kSigmoid };

struct AttentionResult {
    std::vector<NodePtr> outputs;       // one vector(d_v) per query
    std::vector<NodePtr> coefficients;  // one vector(num_keys) per query; masked entries are 0
};

/// Scaled dot-product attention. `visible[q][k]` gates key k for query q;
/// with softmax the hidden keys are excluded from normalization, with
/// sigmoid their coefficients are zeroed.
AttentionResult attention(const std::vector<NodePtr>& queries, const NodePtr& keys,
                          const NodePtr& values, AttnActivation activation,
                          const std::vector<std::vector<std::uint8_t>>& visible);

/// Per-vector layer normalisation with learnable gain/offset (the standard,
/// current-activation form used outside cumulative decoders).
class LayerNorm {
  public:
    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& prefix, std::size_t dim);

    NodePtr forward(const NodePtr& x) const;

  private:
    NodePtr gain_, offset_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// encoders

/// Per-event history representations. Both encoders are causal: Z_i depends
/// only on events at times <= t_i (strictly before, plus the event itself).
class Encoder {
  public:
    virtual ~Encoder() = default;
    virtual std::vector<NodePtr> encode(const std::vector<NodePtr>& xs,
                                        const std::vector<double>& times) = 0;
    virtual std::size_t out_dim() const = 0;
    /// Attention coefficients of the last encode() call, one (N x N) matrix
    /// per layer*head, when the encoder has any.
    virtual std::vector<Tensor> attention_trace() const { return {}; }
};

/// Gated recurrent unit over the event encodings, h_0 = 0.
class GruEncoder final : public Encoder {
  public:
    GruEncoder(ParamStore& ps, const std::string& prefix, std::size_t in_dim,
               std::size_t hidden);

    std::vector<NodePtr> encode(const std::vector<NodePtr>& xs,
                                const std::vector<double>& times) override;
    /// One update h -> h' for input x.
    NodePtr step(const NodePtr& x, const NodePtr& h) const;
    std::size_t out_dim() const override { return hidden_; }

  private:
    NodePtr w1_, w2_, w3_, w4_, w5_, w6_;
    NodePtr b1_, b2_, b3_, b4_, b5_, b6_;
    std::size_t in_ = 0, hidden_ = 0;
};

/// Pre-LN self-attention stack. Events attend to themselves and to events
/// strictly before them in time.
class SaEncoder final : public Encoder {
  public:
    SaEncoder(ParamStore& ps, const std::string& prefix, std::size_t d_model, std::size_t heads,
              std::size_t layers);

    std::vector<NodePtr> encode(const std::vector<NodePtr>& xs,
                                const std::vector<double>& times) override;
    std::size_t out_dim() const override { return d_model_; }
    std::vector<Tensor> attention_trace() const override { return trace_; }

  private:
    struct Layer {
        LayerNorm ln1, ln2;
        std::vector<NodePtr> wq, wk, wv;  // per head, (d_model, d_k)
        NodePtr wo;                       // (H*d_k, d_model)
        NodePtr ff_w1, ff_b1, ff_w2, ff_b2;
    };
    std::vector<Layer> layers_;
    std::vector<Tensor> trace_;
    std::size_t d_model_ = 0, heads_ = 0, d_k_ = 0;
};

}  // namespace tppkit::enc
