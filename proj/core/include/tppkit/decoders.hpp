#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tppkit/encoders.hpp"
#include "tppkit/graph.hpp"
#include "tppkit/monotonic.hpp"

namespace tppkit::dec {

using ad::NodePtr;
using ad::ParamStore;
using ad::Tensor;

enum class DecoderKind { kCp, kRmtpp, kLnm, kMlpMc, kMlpCm, kAttnMc, kAttnCm };

DecoderKind decoder_from_name(const std::string& name);
std::string decoder_name(DecoderKind k);
bool is_cumulative(DecoderKind k);

/// Per-mark intensity and cumulative intensity at one query time.
struct DecoderOutput {
    NodePtr lambda;      // (M), >= 0
    NodePtr big_lambda;  // (M), integral over (t_prev, t], 0 at t == t_prev
    std::vector<Tensor> attention;  // coefficient snapshots, attention decoders only
};

/// Event history as the decoder sees it: encoder outputs plus times.
struct DecodeContext {
    const std::vector<NodePtr>* z = nullptr;
    const std::vector<double>* times = nullptr;
};

struct DecoderConfig {
    std::size_t num_marks = 0;
    std::size_t hidden = 8;
    std::size_t d_model = 8;
    std::size_t heads = 1;
    std::size_t lnm_components = 8;
    double beta_hat = 1.0;
    Task task = Task::kMultiClass;
};

/// Deterministic stratified-midpoint Monte-Carlo integrator.
struct McIntegrator {
    std::size_t samples = 50;
    bool jitter = true;
    Rng* rng = nullptr;  // stream for the jitters; may be null when !jitter

    /// Sample points for one interval; draws exactly `samples` jitters from
    /// the stream when jittering, so parallel intervals stay reproducible.
    std::vector<double> points(double t_prev, double t) const;
};

/// Lambda ~= (dt/N) * sum_j lambda(u_j) at stratified midpoints. `fn` maps a
/// batch of sample times to a (N, M) intensity matrix node.
NodePtr mc_integrate(const std::function<NodePtr(const std::vector<double>&)>& fn, double t_prev,
                     double t, std::size_t num_marks, const McIntegrator& integ);

class Decoder {
  public:
    virtual ~Decoder() = default;

    /// Evaluate at query time t. `hist` = number of events strictly before
    /// t; t_prev is the previous event time (w- before the first event).
    /// With need_big_lambda false the compensator work is skipped and
    /// big_lambda comes back as zeros (intensity-only queries).
    virtual DecoderOutput eval(const DecodeContext& ctx, std::size_t hist, double t,
                               double t_prev, const McIntegrator& integ,
                               bool need_big_lambda) = 0;

    virtual bool wants_base_intensity() const { return true; }
    /// Cumulative decoders buffer EMA layer-norm stats during training.
    virtual void set_norm_mode(mono::NormMode) {}
    virtual void commit_norm_stats() {}
    virtual std::vector<std::pair<std::string, Tensor*>> norm_buffers() { return {}; }
};

std::unique_ptr<Decoder> make_decoder(DecoderKind kind, ParamStore& ps, const std::string& prefix,
                                      const DecoderConfig& cfg);

/// Learnable Poisson term mixed with the decoder output:
/// lambda_total = a1 * mu + a2 * lambda, (a1, a2) = softmax(a). Initialized
/// with a = (3, 0), i.e. a mostly-Poisson start.
class BaseIntensity {
  public:
    BaseIntensity() = default;
    BaseIntensity(ParamStore& ps, const std::string& prefix, std::size_t num_marks);

    DecoderOutput mix(const DecoderOutput& inner, double t, double t_prev) const;

    NodePtr mu() const;       // (M), positive via softplus
    NodePtr weights() const;  // (2), softmax of the logits

  private:
    NodePtr raw_mu_;
    NodePtr mix_logits_;
    std::size_t num_marks_ = 0;
};

// ---------------------------------------------------------------------------
// individual decoders (exposed for focused tests)

/// Conditional Poisson: constant intensity between events.
class CpDecoder final : public Decoder {
  public:
    CpDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg);
    DecoderOutput eval(const DecodeContext& ctx, std::size_t hist, double t, double t_prev,
                       const McIntegrator& integ, bool need_big_lambda) override;
    bool wants_base_intensity() const override { return false; }

  private:
    NodePtr w1_, b1_, w2_, b2_, raw_s_;
    DecoderConfig cfg_;
};

/// Exponential-linear decoder: lambda = exp(c + w * dt).
class RmtppDecoder final : public Decoder {
  public:
    RmtppDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg);
    DecoderOutput eval(const DecodeContext& ctx, std::size_t hist, double t, double t_prev,
                       const McIntegrator& integ, bool need_big_lambda) override;

  private:
    NodePtr w_, b_, decay_;
    DecoderConfig cfg_;
};

/// Log-normal mixture of the inter-event time with separate mark
/// probabilities.
class LnmDecoder final : public Decoder {
  public:
    LnmDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg);

    struct Parts {
        NodePtr density;    // scalar p-bar(dt)
        NodePtr survival;   // scalar S(dt) in (0, 1]
        NodePtr mark_probs; // (M) rho
    };
    /// Density, survival and mark probabilities at dt = t - t_prev > 0.
    Parts decode_parts(const NodePtr& z, double dt) const;

    DecoderOutput eval(const DecodeContext& ctx, std::size_t hist, double t, double t_prev,
                       const McIntegrator& integ, bool need_big_lambda) override;

  private:
    NodePtr heads(const NodePtr& z, const NodePtr& w, const NodePtr& b) const;
    NodePtr ww_, wb_, sw_, sb_, mw_, mb_, rw_, rb_;
    DecoderConfig cfg_;
};

/// lambda = scaled-softplus(MLP([Temporal(t), z])); Lambda by Monte Carlo.
class MlpMcDecoder final : public Decoder {
  public:
    MlpMcDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg);
    DecoderOutput eval(const DecodeContext& ctx, std::size_t hist, double t, double t_prev,
                       const McIntegrator& integ, bool need_big_lambda) override;
    /// Intensity at a batch of query times (rows of the result).
    NodePtr intensity_batch(const NodePtr& z, const std::vector<double>& ts) const;

  private:
    NodePtr w1q_, w1z_, b1_, w2_, b2_, raw_s_;
    enc::TemporalEncodingConfig tcfg_;
    DecoderConfig cfg_;
};

/// G(tau) = MonotonicMLP([ParametricTemporal(tau), z]); Lambda(t) = G(t) -
/// G(t_prev); lambda = time-tangent of G.
class MlpCmDecoder final : public Decoder {
  public:
    MlpCmDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg);
    DecoderOutput eval(const DecodeContext& ctx, std::size_t hist, double t, double t_prev,
                       const McIntegrator& integ, bool need_big_lambda) override;
    /// G at tau; seeds a time tangent when `tangent` is set.
    NodePtr cumulative(const NodePtr& z, double tau, bool tangent) const;

  private:
    mono::MonotonicMlp temporal_;
    mono::MonotonicMlp net_;
    DecoderConfig cfg_;
};

/// Attention decoder over the encoder representations; MC and cumulative
/// variants. Queries attend to events strictly before the query time, with
/// a learnable beginning-of-sequence key/value when the history is empty.
class AttnDecoder final : public Decoder {
  public:
    AttnDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg,
                bool cumulative);
    DecoderOutput eval(const DecodeContext& ctx, std::size_t hist, double t, double t_prev,
                       const McIntegrator& integ, bool need_big_lambda) override;
    void set_norm_mode(mono::NormMode m) override { norm_mode_ = m; }
    void commit_norm_stats() override;
    std::vector<std::pair<std::string, Tensor*>> norm_buffers() override;

  private:
    struct KeysValues {
        NodePtr keys, values;  // (num_keys, d_k) matrices
    };
    KeysValues project_history(const DecodeContext& ctx, std::size_t hist);
    NodePtr intensity_query(const KeysValues& kv, double tau, bool tangent);

    bool cumulative_ = false;
    DecoderConfig cfg_;
    enc::TemporalEncodingConfig tcfg_;
    // shared projections
    NodePtr wk_, wv_, bos_k_, bos_v_;
    // monotone query path (cumulative variant)
    mono::MonotonicMlp temporal_;
    mono::PositiveLinear q_proj_, o_proj_, ff1_p_, ff2_p_, head_p_;
    mono::GumbelActivation key_act_, value_act_, ff_act_p_;
    mono::GumbelSoftplus final_act_;
    mono::EmaLayerNorm ln1_ema_, ln2_ema_;
    // plain query path (MC variant)
    NodePtr wq_, wo_, ff_w1_, ff_b1_, ff_w2_, ff_b2_, head_w_, head_b_, raw_s_;
    enc::LayerNorm ln1_, ln2_;
    mono::NormMode norm_mode_ = mono::NormMode::kEval;
    std::vector<Tensor> last_attention_;
};

/// sum(lambda[m] * onehot(m)): scalar selection without an index primitive.
NodePtr select_mark(const NodePtr& vec, int mark);

}  // namespace tppkit::dec
