#include "tppkit/monotonic.hpp"

#include <cmath>

namespace tppkit::mono {

using namespace tppkit::ad;

PositiveLinear::PositiveLinear(ParamStore& ps, const std::string& prefix, std::size_t in,
                               std::size_t out, double epsilon)
    : in_(in), out_(out), eps_(epsilon) {
    // raw weights start in the unclamped region
    double bound = std::max(0.1, std::sqrt(6.0 / static_cast<double>(in + out)));
    Tensor w({in, out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = ps.rng().uniform(0.05, bound);
    weights_ = ps.add(prefix + ".V", std::move(w));
    bias_ = ps.add(prefix + ".b", Tensor::zeros({out}));
}

NodePtr PositiveLinear::forward(const NodePtr& x) const {
    auto w = clamp_min(weights_, eps_);
    if (x->value.rank() == 1) {
        if (x->value.size() != in_) throw shape_error("PositiveLinear: input size mismatch");
        return add(matmul(x, w), bias_);
    }
    if (x->value.rank() == 2) {
        if (x->value.cols() != in_) throw shape_error("PositiveLinear: input cols mismatch");
        return add(matmul(x, w), broadcast_rows(bias_, x->value.rows()));
    }
    throw shape_error("PositiveLinear: input must be rank 1 or 2");
}

GumbelActivation::GumbelActivation(ParamStore& ps, const std::string& prefix, std::size_t dim)
    : dim_(dim) {
    // softplus(0.5413) + 1e-6 ~= 1, so the activation starts at the logistic
    raw_s_ = ps.add(prefix + ".raw_s", Tensor::full({dim}, 0.54132485461292354));
}

NodePtr GumbelActivation::s_node() const { return add_const(softplus(raw_s_), 1e-6); }

namespace {

// Broadcast a per-feature vector to the shape (rank 1 or 2) of x.
NodePtr match_features(const NodePtr& per_feature, const NodePtr& x) {
    if (x->value.rank() == 1) return per_feature;
    return broadcast_rows(per_feature, x->value.rows());
}

// 1 - exp(-softplus(x + log s)/s): the Gumbel in overflow-safe form.
// softplus(x + log s) = log(1 + s e^x) never overflows, and the outer
// exponent is always <= 0.
NodePtr gumbel_apply(const NodePtr& x, const NodePtr& s_vec) {
    auto s = match_features(s_vec, x);
    auto log_s = match_features(log(s_vec), x);
    auto inv_s = pow(s, -1.0);
    auto sp = softplus(add(x, log_s));
    return rsub_const(1.0, exp(negate(mul(sp, inv_s))));
}

}  // namespace

NodePtr GumbelActivation::forward(const NodePtr& x) const {
    if (x->value.rank() == 2 ? x->value.cols() != dim_ : x->value.size() != dim_)
        throw shape_error("GumbelActivation: feature dimension mismatch");
    return gumbel_apply(x, s_node());
}

std::vector<double> GumbelActivation::s_values() const {
    std::vector<double> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        double raw = raw_s_->value[i];
        out[i] = std::max(raw, 0.0) + std::log1p(std::exp(-std::abs(raw))) + 1e-6;
    }
    return out;
}

GumbelSoftplus::GumbelSoftplus(ParamStore& ps, const std::string& prefix, std::size_t dim)
    : gumbel_(ps, prefix, dim) {}

NodePtr GumbelSoftplus::forward(const NodePtr& x) const {
    if (x->value.rank() == 2 ? x->value.cols() != gumbel_.dim() : x->value.size() != gumbel_.dim())
        throw shape_error("GumbelSoftplus: feature dimension mismatch");
    auto s_vec = gumbel_.s_node();
    auto s = match_features(s_vec, x);
    auto log_s = match_features(log(s_vec), x);
    auto inv_s = pow(s, -1.0);
    auto sp = softplus(add(x, log_s));            // log(1 + s e^x), shared by both factors
    auto g = rsub_const(1.0, exp(negate(mul(sp, inv_s))));
    return mul(g, add_const(mul(sp, inv_s), 1.0));
}

EmaLayerNorm::EmaLayerNorm(ParamStore& ps, const std::string& prefix, std::size_t dim, double rate,
                           double epsilon)
    : rate_(rate), eps_(epsilon), dim_(dim) {
    gain_ = ps.add(prefix + ".gain", Tensor::full({dim}, 1.0));
    offset_ = ps.add(prefix + ".offset", Tensor::zeros({dim}));
    mean_ = Tensor::zeros({dim});
    std_ = Tensor::full({dim}, 1.0);
}

NodePtr EmaLayerNorm::forward(const NodePtr& x, NormMode mode) {
    std::size_t feat = x->value.rank() == 2 ? x->value.cols() : x->value.size();
    if (feat != dim_) throw shape_error("EmaLayerNorm: feature dimension mismatch");
    for (std::size_t i = 0; i < dim_; ++i)
        if (!(std_[i] > 0.0)) throw numeric_error("EmaLayerNorm: running std is not positive");
    if (mode == NormMode::kTrain) {
        if (x->value.rank() == 1) {
            observed_.push_back(x->value.data());
        } else {
            for (std::size_t r = 0; r < x->value.rows(); ++r) {
                std::vector<double> row(dim_);
                for (std::size_t j = 0; j < dim_; ++j) row[j] = x->value.at(r, j);
                observed_.push_back(std::move(row));
            }
        }
    }
    Tensor inv({dim_});
    for (std::size_t i = 0; i < dim_; ++i) inv[i] = 1.0 / std_[i];
    auto m = match_features(constant(mean_), x);
    auto is = match_features(constant(inv), x);
    auto g = match_features(clamp_min(gain_, eps_), x);
    auto b = match_features(offset_, x);
    return add(mul(g, mul(sub(x, m), is)), b);
}

void EmaLayerNorm::commit() {
    if (observed_.empty()) return;
    std::size_t n = observed_.size();
    for (std::size_t j = 0; j < dim_; ++j) {
        double m = 0;
        for (const auto& row : observed_) m += row[j];
        m /= static_cast<double>(n);
        double v = 0;
        for (const auto& row : observed_) v += (row[j] - m) * (row[j] - m);
        double sd = std::sqrt(v / static_cast<double>(n) + 1e-12);
        mean_[j] = (1.0 - rate_) * mean_[j] + rate_ * m;
        std_[j] = (1.0 - rate_) * std_[j] + rate_ * sd;
    }
    observed_.clear();
}

MonotonicMlp::MonotonicMlp(ParamStore& ps, const std::string& prefix,
                           std::vector<std::size_t> dims, FinalActivation final_act)
    : final_(final_act) {
    if (dims.size() < 2) throw value_error("MonotonicMlp: need at least one layer");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        layers_.emplace_back(ps, prefix + ".l" + std::to_string(l), dims[l], dims[l + 1]);
        if (l + 2 < dims.size())
            hidden_acts_.emplace_back(ps, prefix + ".act" + std::to_string(l), dims[l + 1]);
    }
    if (final_ == FinalActivation::kGumbel)
        final_gumbel_ = GumbelActivation(ps, prefix + ".final", dims.back());
    else if (final_ == FinalActivation::kGumbelSoftplus)
        final_gsp_ = GumbelSoftplus(ps, prefix + ".final", dims.back());
}

NodePtr MonotonicMlp::forward(const NodePtr& x) const {
    NodePtr h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        h = layers_[l].forward(h);
        if (l < hidden_acts_.size()) h = hidden_acts_[l].forward(h);
    }
    if (final_ == FinalActivation::kGumbel) return final_gumbel_.forward(h);
    if (final_ == FinalActivation::kGumbelSoftplus) return final_gsp_.forward(h);
    return h;
}

}  // namespace tppkit::mono
