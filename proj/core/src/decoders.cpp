#include "tppkit/decoders.hpp"

#include <cmath>

namespace tppkit::dec {

using namespace tppkit::ad;
using enc::AttnActivation;
using mono::FinalActivation;
using mono::NormMode;

namespace {

constexpr double kRawScaleForUnitS = 0.54132485461292354;  // softplus^-1(1 - 1e-6)
constexpr double kRawMuForTenth = -2.2521684610440907;     // softplus^-1(0.1)

NodePtr zeros_vec(std::size_t n) { return constant(Tensor::zeros({n})); }

NodePtr scaled_softplus(const NodePtr& x, const NodePtr& raw_s) {
    auto s = add_const(softplus(raw_s), 1e-6);
    if (x->value.rank() == 2) s = broadcast_rows(s, x->value.rows());
    return parametric_softplus(x, s);
}

// min(x, hi) with straight-through gradient; keeps exp() arguments sane.
NodePtr clamp_max(const NodePtr& x, double hi) { return negate(clamp_min(negate(x), -hi)); }

NodePtr affine(const NodePtr& z, const NodePtr& w, const NodePtr& b) {
    return add(matmul(z, w), b);
}

}  // namespace

DecoderKind decoder_from_name(const std::string& name) {
    if (name == "cp") return DecoderKind::kCp;
    if (name == "rmtpp") return DecoderKind::kRmtpp;
    if (name == "lnm") return DecoderKind::kLnm;
    if (name == "mlp-mc") return DecoderKind::kMlpMc;
    if (name == "mlp-cm") return DecoderKind::kMlpCm;
    if (name == "attn-mc") return DecoderKind::kAttnMc;
    if (name == "attn-cm") return DecoderKind::kAttnCm;
    throw value_error("unknown decoder: " + name);
}

std::string decoder_name(DecoderKind k) {
    switch (k) {
        case DecoderKind::kCp: return "cp";
        case DecoderKind::kRmtpp: return "rmtpp";
        case DecoderKind::kLnm: return "lnm";
        case DecoderKind::kMlpMc: return "mlp-mc";
        case DecoderKind::kMlpCm: return "mlp-cm";
        case DecoderKind::kAttnMc: return "attn-mc";
        case DecoderKind::kAttnCm: return "attn-cm";
    }
    return "?";
}

bool is_cumulative(DecoderKind k) {
    return k == DecoderKind::kMlpCm || k == DecoderKind::kAttnCm;
}

// ---------------------------------------------------------------------------
// Monte-Carlo integration

std::vector<double> McIntegrator::points(double t_prev, double t) const {
    std::vector<double> out(samples);
    double dt = t - t_prev;
    for (std::size_t j = 0; j < samples; ++j) {
        double eta = jitter ? (rng ? rng->uniform01() - 0.5
                                   : throw value_error("McIntegrator: jitter needs a stream"))
                            : 0.0;
        out[j] = t_prev + dt * (static_cast<double>(j) + 0.5 + eta) / static_cast<double>(samples);
    }
    return out;
}

NodePtr mc_integrate(const std::function<NodePtr(const std::vector<double>&)>& fn, double t_prev,
                     double t, std::size_t num_marks, const McIntegrator& integ) {
    if (!(t > t_prev)) throw value_error("mc_integrate: need t > t_prev");
    if (integ.samples < 1) throw value_error("mc_integrate: need at least one sample");
    auto pts = integ.points(t_prev, t);
    NodePtr batch = fn(pts);
    if (batch->value.rank() != 2 || batch->value.rows() != integ.samples ||
        batch->value.cols() != num_marks)
        throw shape_error("mc_integrate: intensity batch must be (samples, marks)");
    return mul_const(sum(batch, 0), (t - t_prev) / static_cast<double>(integ.samples));
}

// ---------------------------------------------------------------------------
// base intensity

BaseIntensity::BaseIntensity(ParamStore& ps, const std::string& prefix, std::size_t num_marks)
    : num_marks_(num_marks) {
    raw_mu_ = ps.add(prefix + ".raw_mu", Tensor::full({num_marks}, kRawMuForTenth));
    mix_logits_ = ps.add(prefix + ".mix", Tensor::vector({3.0, 0.0}));
}

NodePtr BaseIntensity::mu() const { return softplus(raw_mu_); }

NodePtr BaseIntensity::weights() const { return softmax(mix_logits_); }

DecoderOutput BaseIntensity::mix(const DecoderOutput& inner, double t, double t_prev) const {
    auto alpha = weights();
    auto a1 = broadcast_scalar(select_mark(alpha, 0), {num_marks_});
    auto a2 = broadcast_scalar(select_mark(alpha, 1), {num_marks_});
    auto poisson = mul(a1, mu());
    DecoderOutput out;
    out.lambda = add(poisson, mul(a2, inner.lambda));
    out.big_lambda = add(mul_const(poisson, t - t_prev), mul(a2, inner.big_lambda));
    out.attention = inner.attention;
    return out;
}

NodePtr select_mark(const NodePtr& vec, int mark) {
    Tensor onehot(vec->value.shape());
    onehot[static_cast<std::size_t>(mark)] = 1.0;
    return sum(mul(vec, constant(std::move(onehot))));
}

// ---------------------------------------------------------------------------
// CP

CpDecoder::CpDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg)
    : cfg_(cfg) {
    w1_ = ps.add_glorot(prefix + ".W1", cfg.hidden, cfg.hidden);
    b1_ = ps.add(prefix + ".b1", Tensor::zeros({cfg.hidden}));
    w2_ = ps.add_glorot(prefix + ".W2", cfg.hidden, cfg.num_marks);
    b2_ = ps.add(prefix + ".b2", Tensor::zeros({cfg.num_marks}));
    raw_s_ = ps.add(prefix + ".raw_s", Tensor::full({cfg.num_marks}, kRawScaleForUnitS));
}

DecoderOutput CpDecoder::eval(const DecodeContext& ctx, std::size_t hist, double t, double t_prev,
                              const McIntegrator&, bool) {
    NodePtr z = hist > 0 ? (*ctx.z)[hist - 1] : zeros_vec(cfg_.hidden);
    auto h = tanh(affine(z, w1_, b1_));
    auto lam = scaled_softplus(affine(h, w2_, b2_), raw_s_);
    DecoderOutput out;
    out.lambda = lam;
    out.big_lambda = mul_const(lam, t - t_prev);
    return out;
}

// ---------------------------------------------------------------------------
// RMTPP

RmtppDecoder::RmtppDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg)
    : cfg_(cfg) {
    w_ = ps.add_glorot(prefix + ".W", cfg.hidden, cfg.num_marks);
    b_ = ps.add(prefix + ".b", Tensor::zeros({cfg.num_marks}));
    decay_ = ps.add(prefix + ".w2", Tensor::scalar(-0.1));
}

DecoderOutput RmtppDecoder::eval(const DecodeContext& ctx, std::size_t hist, double t,
                                 double t_prev, const McIntegrator&, bool) {
    NodePtr z = hist > 0 ? (*ctx.z)[hist - 1] : zeros_vec(cfg_.hidden);
    double dt = t - t_prev;
    if (dt < 0) throw value_error("rmtpp: query before the previous event");
    auto c = affine(z, w_, b_);
    auto wdt = broadcast_scalar(mul(decay_, constant(dt)), {cfg_.num_marks});
    auto e1 = clamp_max(add(c, wdt), 30.0);
    auto e0 = clamp_max(c, 30.0);
    DecoderOutput out;
    out.lambda = exp(e1);
    double w_val = decay_->value.item();
    if (std::abs(w_val) < 1e-12) {
        // w -> 0 limit: Lambda = exp(c) * dt
        out.big_lambda = mul_const(exp(e0), dt);
    } else {
        // 1/w as w / w^2 (w may be negative, power() wants positive bases)
        auto inv_w = mul(decay_, pow(mul(decay_, decay_), -1.0));
        out.big_lambda =
            mul(sub(out.lambda, exp(e0)), broadcast_scalar(inv_w, {cfg_.num_marks}));
    }
    return out;
}

// ---------------------------------------------------------------------------
// LNM

LnmDecoder::LnmDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg)
    : cfg_(cfg) {
    std::size_t k = cfg.lnm_components;
    ww_ = ps.add_glorot(prefix + ".Ww", cfg.hidden, k);
    wb_ = ps.add(prefix + ".wb", Tensor::zeros({k}));
    sw_ = ps.add_glorot(prefix + ".Ws", cfg.hidden, k);
    sb_ = ps.add(prefix + ".sb", Tensor::zeros({k}));
    mw_ = ps.add_glorot(prefix + ".Wm", cfg.hidden, k);
    mb_ = ps.add(prefix + ".mb", Tensor::zeros({k}));
    rw_ = ps.add_glorot(prefix + ".Wr", cfg.hidden, cfg.num_marks);
    rb_ = ps.add(prefix + ".rb", Tensor::zeros({cfg.num_marks}));
}

NodePtr LnmDecoder::heads(const NodePtr& z, const NodePtr& w, const NodePtr& b) const {
    return affine(z, w, b);
}

LnmDecoder::Parts LnmDecoder::decode_parts(const NodePtr& z, double dt) const {
    if (!(dt > 0)) throw value_error("lnm: inter-event time must be positive");
    std::size_t k = cfg_.lnm_components;
    auto weights = softmax(heads(z, ww_, wb_));
    auto sigma = exp(clamp_max(clamp_min(heads(z, sw_, sb_), -30.0), 30.0));
    auto mu = heads(z, mw_, mb_);
    auto rho_pre = heads(z, rw_, rb_);
    auto rho = cfg_.task == Task::kMultiClass ? softmax(rho_pre) : sigmoid(rho_pre);

    auto log_dt = constant(Tensor::full({k}, std::log(dt)));
    auto diff = sub(log_dt, mu);
    auto inv_sigma = pow(sigma, -1.0);
    auto standardized = mul(diff, inv_sigma);
    // component densities: exp(-x^2/2) / (dt * sigma * sqrt(2 pi))
    auto expo = exp(mul_const(mul(standardized, standardized), -0.5));
    double norm = 1.0 / (dt * std::sqrt(2.0 * 3.14159265358979323846));
    auto comp = mul_const(mul(inv_sigma, expo), norm);
    Parts parts;
    parts.density = sum(mul(weights, comp));
    // survival: sum_k w_k * 0.5 * erfc(x_k / sqrt(2))
    auto tail = mul_const(erfc(mul_const(standardized, 1.0 / std::sqrt(2.0))), 0.5);
    parts.survival = clamp_min(sum(mul(weights, tail)), 1e-300);
    parts.mark_probs = rho;
    return parts;
}

DecoderOutput LnmDecoder::eval(const DecodeContext& ctx, std::size_t hist, double t,
                               double t_prev, const McIntegrator&, bool) {
    NodePtr z = hist > 0 ? (*ctx.z)[hist - 1] : zeros_vec(cfg_.hidden);
    std::size_t m = cfg_.num_marks;
    DecoderOutput out;
    if (t == t_prev) {
        out.lambda = zeros_vec(m);
        out.big_lambda = zeros_vec(m);
        return out;
    }
    Parts parts = decode_parts(z, t - t_prev);
    auto hazard = mul(parts.density, pow(parts.survival, -1.0));
    out.lambda = mul(parts.mark_probs, broadcast_scalar(hazard, {m}));
    auto total = negate(log(parts.survival));  // sum of the compensator over marks
    if (cfg_.task == Task::kMultiClass) {
        out.big_lambda = mul(parts.mark_probs, broadcast_scalar(total, {m}));
    } else {
        out.big_lambda =
            mul_const(broadcast_scalar(total, {m}), 1.0 / static_cast<double>(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// MLP-MC

MlpMcDecoder::MlpMcDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg)
    : cfg_(cfg) {
    tcfg_ = enc::TemporalEncodingConfig{cfg.d_model, cfg.beta_hat};
    w1q_ = ps.add_glorot(prefix + ".W1q", cfg.d_model, cfg.hidden);
    w1z_ = ps.add_glorot(prefix + ".W1z", cfg.hidden, cfg.hidden);
    b1_ = ps.add(prefix + ".b1", Tensor::zeros({cfg.hidden}));
    w2_ = ps.add_glorot(prefix + ".W2", cfg.hidden, cfg.num_marks);
    b2_ = ps.add(prefix + ".b2", Tensor::zeros({cfg.num_marks}));
    raw_s_ = ps.add(prefix + ".raw_s", Tensor::full({cfg.num_marks}, kRawScaleForUnitS));
}

NodePtr MlpMcDecoder::intensity_batch(const NodePtr& z, const std::vector<double>& ts) const {
    std::size_t n = ts.size();
    Tensor queries({n, cfg_.d_model});
    for (std::size_t i = 0; i < n; ++i) {
        auto emb = enc::temporal_embedding(tcfg_, ts[i]);
        for (std::size_t j = 0; j < cfg_.d_model; ++j) queries.at(i, j) = emb[j];
    }
    auto zpart = affine(z, w1z_, b1_);
    auto h = tanh(add(matmul(constant(std::move(queries)), w1q_), broadcast_rows(zpart, n)));
    auto o = add(matmul(h, w2_), broadcast_rows(b2_, n));
    return scaled_softplus(o, raw_s_);
}

DecoderOutput MlpMcDecoder::eval(const DecodeContext& ctx, std::size_t hist, double t,
                                 double t_prev, const McIntegrator& integ,
                                 bool need_big_lambda) {
    NodePtr z = hist > 0 ? (*ctx.z)[hist - 1] : zeros_vec(cfg_.hidden);
    auto tq = constant_vector(enc::temporal_embedding(tcfg_, t));
    auto h = tanh(add(add(matmul(tq, w1q_), matmul(z, w1z_)), b1_));
    DecoderOutput out;
    out.lambda = scaled_softplus(affine(h, w2_, b2_), raw_s_);
    out.big_lambda =
        !need_big_lambda || t == t_prev
            ? zeros_vec(cfg_.num_marks)
            : mc_integrate([&](const std::vector<double>& pts) {
                  return intensity_batch(z, pts);
              }, t_prev, t, cfg_.num_marks, integ);
    return out;
}

// ---------------------------------------------------------------------------
// MLP-CM

MlpCmDecoder::MlpCmDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg)
    : temporal_(ps, prefix + ".pt", {1, cfg.hidden, cfg.d_model}, FinalActivation::kGumbel),
      net_(ps, prefix + ".g", {cfg.d_model + cfg.hidden, cfg.hidden, cfg.num_marks},
           FinalActivation::kGumbelSoftplus),
      cfg_(cfg) {}

NodePtr MlpCmDecoder::cumulative(const NodePtr& z, double tau, bool tangent) const {
    auto tn = constant(Tensor::vector({tau}));
    if (tangent) seed_time_tangent(tn);
    auto pt = temporal_.forward(mul_const(tn, 1.0 / cfg_.beta_hat));
    return net_.forward(concat({pt, z}));
}

DecoderOutput MlpCmDecoder::eval(const DecodeContext& ctx, std::size_t hist, double t,
                                 double t_prev, const McIntegrator&, bool need_big_lambda) {
    NodePtr z = hist > 0 ? (*ctx.z)[hist - 1] : zeros_vec(cfg_.hidden);
    auto g_t = cumulative(z, t, true);
    DecoderOutput out;
    out.big_lambda = need_big_lambda ? sub(g_t, cumulative(z, t_prev, false))
                                     : zeros_vec(cfg_.num_marks);
    out.lambda = g_t->tangent;
    for (std::size_t i = 0; i < out.lambda->value.size(); ++i)
        if (out.lambda->value[i] < -1e-12)
            throw numeric_error("mlp-cm: negative intensity tangent");
    return out;
}

// ---------------------------------------------------------------------------
// attention decoders

AttnDecoder::AttnDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg,
                         bool cumulative)
    : cumulative_(cumulative), cfg_(cfg) {
    tcfg_ = enc::TemporalEncodingConfig{cfg.d_model, cfg.beta_hat};
    if (cfg.heads == 0 || cfg.d_model % cfg.heads != 0)
        throw value_error("AttnDecoder: head count must divide d_model");
    std::size_t d_k = cfg.d_model / cfg.heads;
    // shared history projections: stacked per head as (hid, H*d_k)
    wk_ = ps.add_glorot(prefix + ".Wk", cfg.hidden, cfg.heads * d_k);
    wv_ = ps.add_glorot(prefix + ".Wv", cfg.hidden, cfg.heads * d_k);
    bos_k_ = ps.add_glorot_vec(prefix + ".bos_k", cfg.heads * d_k, cfg.hidden, d_k);
    bos_v_ = ps.add_glorot_vec(prefix + ".bos_v", cfg.heads * d_k, cfg.hidden, d_k);
    if (cumulative_) {
        temporal_ = mono::MonotonicMlp(ps, prefix + ".pt", {1, cfg.hidden, cfg.d_model},
                                       FinalActivation::kGumbel);
        q_proj_ = mono::PositiveLinear(ps, prefix + ".Wq", cfg.d_model, cfg.heads * d_k);
        o_proj_ = mono::PositiveLinear(ps, prefix + ".Wo", cfg.heads * d_k, cfg.d_model);
        ff1_p_ = mono::PositiveLinear(ps, prefix + ".ff1", cfg.d_model, cfg.d_model);
        ff2_p_ = mono::PositiveLinear(ps, prefix + ".ff2", cfg.d_model, cfg.d_model);
        head_p_ = mono::PositiveLinear(ps, prefix + ".head", cfg.d_model, cfg.num_marks);
        key_act_ = mono::GumbelActivation(ps, prefix + ".key_act", cfg.heads * d_k);
        value_act_ = mono::GumbelActivation(ps, prefix + ".value_act", cfg.heads * d_k);
        ff_act_p_ = mono::GumbelActivation(ps, prefix + ".ff_act", cfg.d_model);
        final_act_ = mono::GumbelSoftplus(ps, prefix + ".final", cfg.num_marks);
        ln1_ema_ = mono::EmaLayerNorm(ps, prefix + ".ln1", cfg.d_model);
        ln2_ema_ = mono::EmaLayerNorm(ps, prefix + ".ln2", cfg.d_model);
    } else {
        wq_ = ps.add_glorot(prefix + ".Wq", cfg.d_model, cfg.heads * d_k);
        wo_ = ps.add_glorot(prefix + ".Wo", cfg.heads * d_k, cfg.d_model);
        ff_w1_ = ps.add_glorot(prefix + ".ff.W1", cfg.d_model, cfg.d_model);
        ff_b1_ = ps.add(prefix + ".ff.b1", Tensor::zeros({cfg.d_model}));
        ff_w2_ = ps.add_glorot(prefix + ".ff.W2", cfg.d_model, cfg.d_model);
        ff_b2_ = ps.add(prefix + ".ff.b2", Tensor::zeros({cfg.d_model}));
        head_w_ = ps.add_glorot(prefix + ".head.W", cfg.d_model, cfg.num_marks);
        head_b_ = ps.add(prefix + ".head.b", Tensor::zeros({cfg.num_marks}));
        raw_s_ = ps.add(prefix + ".raw_s", Tensor::full({cfg.num_marks}, kRawScaleForUnitS));
        ln1_ = enc::LayerNorm(ps, prefix + ".ln1", cfg.d_model);
        ln2_ = enc::LayerNorm(ps, prefix + ".ln2", cfg.d_model);
    }
}

AttnDecoder::KeysValues AttnDecoder::project_history(const DecodeContext& ctx,
                                                     std::size_t hist) {
    KeysValues kv;
    if (hist == 0) {
        kv.keys = concat({cumulative_ ? key_act_.forward(bos_k_) : bos_k_}, ConcatMode::kRows);
        kv.values =
            concat({cumulative_ ? value_act_.forward(bos_v_) : bos_v_}, ConcatMode::kRows);
        return kv;
    }
    std::vector<NodePtr> rows;
    rows.reserve(hist);
    for (std::size_t j = 0; j < hist; ++j) rows.push_back((*ctx.z)[j]);
    auto zmat = concat(rows, ConcatMode::kRows);
    kv.keys = matmul(zmat, wk_);
    kv.values = matmul(zmat, wv_);
    if (cumulative_) {
        kv.keys = key_act_.forward(kv.keys);
        kv.values = value_act_.forward(kv.values);
    }
    return kv;
}

NodePtr AttnDecoder::intensity_query(const KeysValues& kv, double tau, bool tangent) {
    std::size_t heads = cfg_.heads;
    std::size_t d_k = cfg_.d_model / heads;
    std::size_t nkeys = kv.keys->value.rows();
    NodePtr q, q_pre;
    if (cumulative_) {
        auto tn = constant(Tensor::vector({tau}));
        if (tangent) seed_time_tangent(tn);
        q_pre = temporal_.forward(mul_const(tn, 1.0 / cfg_.beta_hat));
        q = ln1_ema_.forward(q_pre, norm_mode_);
    } else {
        q_pre = constant_vector(enc::temporal_embedding(tcfg_, tau));
        q = ln1_.forward(q_pre);
    }
    auto qh_all = cumulative_ ? q_proj_.forward(q) : matmul(q, wq_);
    double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    std::vector<NodePtr> head_outs;
    Tensor coeffs({heads, nkeys});
    for (std::size_t h = 0; h < heads; ++h) {
        // per-head slice of the stacked projections via a constant selector
        Tensor sel({heads * d_k, d_k});
        for (std::size_t i = 0; i < d_k; ++i) sel.at(h * d_k + i, i) = 1.0;
        auto pick = constant(std::move(sel));
        auto qh = matmul(qh_all, pick);
        auto kh = matmul(kv.keys, pick);
        auto vh = matmul(kv.values, pick);
        auto logits = mul_const(matmul(kh, qh), scale);
        auto alpha = cumulative_ ? sigmoid(logits) : softmax(logits);
        for (std::size_t j = 0; j < nkeys; ++j) coeffs.at(h, j) = alpha->value[j];
        head_outs.push_back(matmul(alpha, vh));
    }
    last_attention_.push_back(std::move(coeffs));
    auto merged = cumulative_ ? o_proj_.forward(concat(head_outs)) : matmul(concat(head_outs), wo_);
    auto r1 = add(merged, q_pre);
    NodePtr z2 = cumulative_ ? ln2_ema_.forward(r1, norm_mode_) : ln2_.forward(r1);
    NodePtr ff = cumulative_
                     ? ff2_p_.forward(ff_act_p_.forward(ff1_p_.forward(z2)))
                     : add(matmul(tanh(add(matmul(z2, ff_w1_), ff_b1_)), ff_w2_), ff_b2_);
    auto o2 = add(ff, r1);
    if (cumulative_) return final_act_.forward(head_p_.forward(o2));
    return scaled_softplus(add(matmul(o2, head_w_), head_b_), raw_s_);
}

DecoderOutput AttnDecoder::eval(const DecodeContext& ctx, std::size_t hist, double t,
                                double t_prev, const McIntegrator& integ,
                                bool need_big_lambda) {
    last_attention_.clear();
    KeysValues kv = project_history(ctx, hist);
    DecoderOutput out;
    if (cumulative_) {
        auto g_t = intensity_query(kv, t, true);
        out.big_lambda = need_big_lambda ? sub(g_t, intensity_query(kv, t_prev, false))
                                         : zeros_vec(cfg_.num_marks);
        out.lambda = g_t->tangent;
        for (std::size_t i = 0; i < out.lambda->value.size(); ++i)
            if (out.lambda->value[i] < -1e-12)
                throw numeric_error("attn-cm: negative intensity tangent");
    } else {
        out.lambda = intensity_query(kv, t, false);
        if (!need_big_lambda || t == t_prev) {
            out.big_lambda = zeros_vec(cfg_.num_marks);
        } else {
            out.big_lambda = mc_integrate(
                [&](const std::vector<double>& pts) {
                    std::vector<NodePtr> rows;
                    rows.reserve(pts.size());
                    for (double u : pts) {
                        auto lam = intensity_query(kv, u, false);
                        rows.push_back(lam);
                    }
                    // row-stack (samples, M); per-mark columns preserved
                    return concat(rows, ConcatMode::kRows);
                },
                t_prev, t, cfg_.num_marks, integ);
        }
    }
    out.attention = last_attention_;
    return out;
}

void AttnDecoder::commit_norm_stats() {
    if (!cumulative_) return;
    ln1_ema_.commit();
    ln2_ema_.commit();
}

std::vector<std::pair<std::string, Tensor*>> AttnDecoder::norm_buffers() {
    if (!cumulative_) return {};
    return {{"ln1.mean", &ln1_ema_.running_mean()},
            {"ln1.std", &ln1_ema_.running_std()},
            {"ln2.mean", &ln2_ema_.running_mean()},
            {"ln2.std", &ln2_ema_.running_std()}};
}

// ---------------------------------------------------------------------------

std::unique_ptr<Decoder> make_decoder(DecoderKind kind, ParamStore& ps, const std::string& prefix,
                                      const DecoderConfig& cfg) {
    switch (kind) {
        case DecoderKind::kCp: return std::make_unique<CpDecoder>(ps, prefix, cfg);
        case DecoderKind::kRmtpp: return std::make_unique<RmtppDecoder>(ps, prefix, cfg);
        case DecoderKind::kLnm: return std::make_unique<LnmDecoder>(ps, prefix, cfg);
        case DecoderKind::kMlpMc: return std::make_unique<MlpMcDecoder>(ps, prefix, cfg);
        case DecoderKind::kMlpCm: return std::make_unique<MlpCmDecoder>(ps, prefix, cfg);
        case DecoderKind::kAttnMc:
            return std::make_unique<AttnDecoder>(ps, prefix, cfg, false);
        case DecoderKind::kAttnCm: return std::make_unique<AttnDecoder>(ps, prefix, cfg, true);
    }
    throw value_error("unknown decoder kind");
}

}  // namespace tppkit::dec
