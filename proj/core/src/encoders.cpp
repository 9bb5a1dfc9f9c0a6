#include "tppkit/encoders.hpp"

#include <cmath>

namespace tppkit::enc {

using namespace tppkit::ad;

Pooling pooling_from_name(const std::string& name) {
    if (name == "mean") return Pooling::kMean;
    if (name == "max") return Pooling::kMax;
    throw value_error("unknown pooling: " + name);
}

std::string pooling_name(Pooling p) { return p == Pooling::kMean ? "mean" : "max"; }

LabelEmbedding::LabelEmbedding(ParamStore& ps, const std::string& prefix, std::size_t num_marks,
                               std::size_t dim, Pooling pooling)
    : num_marks_(num_marks), dim_(dim), pooling_(pooling) {
    if (num_marks < 1) throw value_error("LabelEmbedding: need at least one mark");
    table_ = ps.add_glorot(prefix + ".table", num_marks, dim);
}

NodePtr LabelEmbedding::embed(const std::vector<int>& marks) const {
    if (marks.empty()) throw value_error("embed: empty mark set");
    for (int m : marks)
        if (m < 0 || static_cast<std::size_t>(m) >= num_marks_)
            throw value_error("embed: mark id out of range");
    if (pooling_ == Pooling::kMean || marks.size() == 1) {
        Tensor sel({num_marks_});
        double w = 1.0 / static_cast<double>(marks.size());
        for (int m : marks) sel[m] = w;
        return matmul(constant(std::move(sel)), table_);
    }
    // max pooling: select the per-coordinate argmax row among the marked
    // rows at construction time; gradient flows to the selected entries.
    Tensor sel({num_marks_, dim_});
    const Tensor& tb = table_->value;
    for (std::size_t d = 0; d < dim_; ++d) {
        int best = marks[0];
        for (int m : marks)
            if (tb.at(m, d) > tb.at(best, d)) best = m;
        sel.at(best, d) = 1.0;
    }
    return sum(mul(table_, constant(std::move(sel))), 0);
}

void TemporalEncodingConfig::validate() const {
    if (d_model == 0 || d_model % 2 != 0)
        throw value_error("TemporalEncodingConfig: d_model must be a positive even integer");
    if (!(beta_hat > 0) || !std::isfinite(beta_hat))
        throw value_error("TemporalEncodingConfig: beta_hat must be positive and finite");
}

std::vector<double> temporal_embedding(const TemporalEncodingConfig& cfg, double t) {
    std::vector<double> out(cfg.d_model);
    for (std::size_t k = 0; k < cfg.d_model / 2; ++k) {
        double a = std::pow(10000.0, -2.0 * static_cast<double>(k) /
                                         static_cast<double>(cfg.d_model)) /
                   cfg.beta_hat;
        out[2 * k] = std::sin(a * t);
        out[2 * k + 1] = std::cos(a * t);
    }
    return out;
}

double estimate_beta(const std::vector<EventSequence>& train) {
    if (train.empty()) throw value_error("estimate_beta: empty training set");
    double acc = 0;
    for (const EventSequence& s : train) {
        if (s.events.empty()) throw value_error("estimate_beta: sequence without events");
        acc += s.length() / static_cast<double>(s.events.size());
    }
    return acc / static_cast<double>(train.size());
}

NodePtr temporal_encode(const LabelEmbedding& emb, const TemporalEncodingConfig& cfg,
                        const Event& event) {
    if (emb.dim() != cfg.d_model)
        throw shape_error("temporal_encode: embedding dim must equal d_model");
    auto v = mul_const(emb.embed(event.labels), std::sqrt(static_cast<double>(cfg.d_model)));
    return add(v, constant_vector(temporal_embedding(cfg, event.time)));
}

// ---------------------------------------------------------------------------
// attention

AttentionResult attention(const std::vector<NodePtr>& queries, const NodePtr& keys,
                          const NodePtr& values, AttnActivation activation,
                          const std::vector<std::vector<std::uint8_t>>& visible) {
    if (keys->value.rank() != 2 || values->value.rank() != 2)
        throw shape_error("attention: keys/values must be (num_keys, dim) matrices");
    if (keys->value.rows() != values->value.rows())
        throw shape_error("attention: keys and values disagree on num_keys");
    if (visible.size() != queries.size())
        throw shape_error("attention: one visibility row per query required");
    std::size_t d_k = keys->value.cols();
    double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    AttentionResult res;
    res.outputs.reserve(queries.size());
    res.coefficients.reserve(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        if (queries[q]->value.size() != d_k)
            throw shape_error("attention: query dimension != key dimension");
        auto logits = mul_const(matmul(keys, queries[q]), scale);
        NodePtr coeff;
        if (activation == AttnActivation::kSoftmax) {
            coeff = softmax_masked(logits, visible[q]);
        } else {
            Tensor gate({keys->value.rows()});
            for (std::size_t k = 0; k < gate.size(); ++k)
                gate[k] = visible[q].empty() || visible[q][k] ? 1.0 : 0.0;
            coeff = mul(sigmoid(logits), constant(std::move(gate)));
        }
        res.coefficients.push_back(coeff);
        res.outputs.push_back(matmul(coeff, values));
    }
    return res;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, std::size_t dim) : dim_(dim) {
    gain_ = ps.add(prefix + ".gain", Tensor::full({dim}, 1.0));
    offset_ = ps.add(prefix + ".offset", Tensor::zeros({dim}));
}

NodePtr LayerNorm::forward(const NodePtr& x) const {
    if (x->value.rank() != 1 || x->value.size() != dim_)
        throw shape_error("LayerNorm: expected a vector of the configured dim");
    auto mu = mean(x);
    auto centered = sub(x, broadcast_scalar(mu, x->value.shape()));
    auto var = mean(mul(centered, centered));
    auto inv = broadcast_scalar(pow(add_const(var, 1e-5), -0.5), x->value.shape());
    return add(mul(gain_, mul(centered, inv)), offset_);
}

// ---------------------------------------------------------------------------
// GRU

GruEncoder::GruEncoder(ParamStore& ps, const std::string& prefix, std::size_t in_dim,
                       std::size_t hidden)
    : in_(in_dim), hidden_(hidden) {
    w1_ = ps.add_glorot(prefix + ".W1", in_dim, hidden);
    w2_ = ps.add_glorot(prefix + ".W2", hidden, hidden);
    w3_ = ps.add_glorot(prefix + ".W3", in_dim, hidden);
    w4_ = ps.add_glorot(prefix + ".W4", hidden, hidden);
    w5_ = ps.add_glorot(prefix + ".W5", in_dim, hidden);
    w6_ = ps.add_glorot(prefix + ".W6", hidden, hidden);
    b1_ = ps.add(prefix + ".b1", Tensor::zeros({hidden}));
    b2_ = ps.add(prefix + ".b2", Tensor::zeros({hidden}));
    b3_ = ps.add(prefix + ".b3", Tensor::zeros({hidden}));
    b4_ = ps.add(prefix + ".b4", Tensor::zeros({hidden}));
    b5_ = ps.add(prefix + ".b5", Tensor::zeros({hidden}));
    b6_ = ps.add(prefix + ".b6", Tensor::zeros({hidden}));
}

NodePtr GruEncoder::step(const NodePtr& x, const NodePtr& h) const {
    auto r = sigmoid(add(add(matmul(x, w1_), b1_), add(matmul(h, w2_), b2_)));
    auto z = sigmoid(add(add(matmul(x, w3_), b3_), add(matmul(h, w4_), b4_)));
    auto n = tanh(add(add(matmul(x, w5_), b5_), mul(r, add(matmul(h, w6_), b6_))));
    return add(mul(rsub_const(1.0, z), n), mul(z, h));
}

std::vector<NodePtr> GruEncoder::encode(const std::vector<NodePtr>& xs,
                                        const std::vector<double>& /*times*/) {
    std::vector<NodePtr> out;
    out.reserve(xs.size());
    NodePtr h = constant(Tensor::zeros({hidden_}));
    for (const auto& x : xs) {
        if (x->value.size() != in_) throw shape_error("GruEncoder: input dimension mismatch");
        h = step(x, h);
        out.push_back(h);
    }
    return out;
}

// ---------------------------------------------------------------------------
// self-attention encoder

SaEncoder::SaEncoder(ParamStore& ps, const std::string& prefix, std::size_t d_model,
                     std::size_t heads, std::size_t layers)
    : d_model_(d_model), heads_(heads) {
    if (heads == 0 || d_model % heads != 0)
        throw value_error("SaEncoder: head count must divide d_model");
    d_k_ = d_model / heads;
    for (std::size_t l = 0; l < layers; ++l) {
        Layer layer;
        std::string lp = prefix + ".layer" + std::to_string(l);
        layer.ln1 = LayerNorm(ps, lp + ".ln1", d_model);
        layer.ln2 = LayerNorm(ps, lp + ".ln2", d_model);
        for (std::size_t h = 0; h < heads; ++h) {
            std::string hp = lp + ".head" + std::to_string(h);
            layer.wq.push_back(ps.add_glorot(hp + ".Wq", d_model, d_k_));
            layer.wk.push_back(ps.add_glorot(hp + ".Wk", d_model, d_k_));
            layer.wv.push_back(ps.add_glorot(hp + ".Wv", d_model, d_k_));
        }
        layer.wo = ps.add_glorot(lp + ".Wo", heads * d_k_, d_model);
        layer.ff_w1 = ps.add_glorot(lp + ".ff.W1", d_model, d_model);
        layer.ff_b1 = ps.add(lp + ".ff.b1", Tensor::zeros({d_model}));
        layer.ff_w2 = ps.add_glorot(lp + ".ff.W2", d_model, d_model);
        layer.ff_b2 = ps.add(lp + ".ff.b2", Tensor::zeros({d_model}));
        layers_.push_back(std::move(layer));
    }
}

std::vector<NodePtr> SaEncoder::encode(const std::vector<NodePtr>& xs,
                                       const std::vector<double>& times) {
    if (xs.size() != times.size()) throw shape_error("SaEncoder: xs/times length mismatch");
    trace_.clear();
    std::size_t n = xs.size();
    // event i sees itself and events strictly before it in time
    std::vector<std::vector<std::uint8_t>> visible(n, std::vector<std::uint8_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) visible[i][j] = (j == i || times[j] < times[i]) ? 1 : 0;

    std::vector<NodePtr> cur = xs;
    for (auto& layer : layers_) {
        std::vector<NodePtr> normed(n);
        for (std::size_t i = 0; i < n; ++i) normed[i] = layer.ln1.forward(cur[i]);
        std::vector<std::vector<NodePtr>> head_outs(n);
        for (std::size_t h = 0; h < heads_; ++h) {
            std::vector<NodePtr> qs(n), ks(n), vs(n);
            for (std::size_t i = 0; i < n; ++i) {
                qs[i] = matmul(normed[i], layer.wq[h]);
                ks[i] = matmul(normed[i], layer.wk[h]);
                vs[i] = matmul(normed[i], layer.wv[h]);
            }
            auto res = attention(qs, concat(ks, ConcatMode::kRows), concat(vs, ConcatMode::kRows),
                                 AttnActivation::kSoftmax, visible);
            Tensor coeffs({n, n});
            for (std::size_t i = 0; i < n; ++i) {
                head_outs[i].push_back(res.outputs[i]);
                for (std::size_t j = 0; j < n; ++j)
                    coeffs.at(i, j) = res.coefficients[i]->value[j];
            }
            trace_.push_back(std::move(coeffs));
        }
        std::vector<NodePtr> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto merged = matmul(concat(head_outs[i]), layer.wo);
            auto r1 = add(merged, cur[i]);
            auto z = layer.ln2.forward(r1);
            auto ff = add(matmul(tanh(add(matmul(z, layer.ff_w1), layer.ff_b1)), layer.ff_w2),
                          layer.ff_b2);
            next[i] = add(ff, r1);
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace tppkit::enc
