#pragma once

#include <string>
#include <vector>

#include "tppkit/graph.hpp"

namespace tppkit::mono {

using ad::NodePtr;
using ad::ParamStore;
using ad::Tensor;

/// Linear map with weights clamped to [epsilon, inf) in the forward pass,
/// so the map is non-decreasing in every input coordinate. The clamp uses a
/// straight-through gradient: the adjoint reaches the raw weight even when
/// it sits below epsilon. Biases are unconstrained.
class PositiveLinear {
  public:
    PositiveLinear() = default;
    PositiveLinear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out,
                   double epsilon = 1e-30);

    /// x: vector(in) or matrix(n, in); returns vector(out) or matrix(n, out).
    NodePtr forward(const NodePtr& x) const;

    std::size_t in_dim() const { return in_; }
    std::size_t out_dim() const { return out_; }
    double epsilon() const { return eps_; }
    const NodePtr& raw_weights() const { return weights_; }
    const NodePtr& bias() const { return bias_; }

  private:
    NodePtr weights_;  // stored (in, out)
    NodePtr bias_;     // (out)
    std::size_t in_ = 0, out_ = 0;
    double eps_ = 1e-30;
};

/// Adaptive Gumbel activation 1 - [1 + s*exp(x)]^(-1/s), with per-dimension
/// s > 0 realized as softplus(raw) + 1e-6. Output lies in (0,1) and the
/// first derivative is positive with supremum 1/e over all (x, s).
class GumbelActivation {
  public:
    GumbelActivation() = default;
    GumbelActivation(ParamStore& ps, const std::string& prefix, std::size_t dim);

    NodePtr forward(const NodePtr& x) const;

    /// Current positive s values (from the raw parameters).
    std::vector<double> s_values() const;
    std::size_t dim() const { return dim_; }

  private:
    friend class GumbelSoftplus;
    NodePtr s_node() const;  // softplus(raw) + 1e-6

    NodePtr raw_s_;
    std::size_t dim_ = 0;
};

/// gumbel(x) * [1 + log(1 + s*exp(x))/s] with the s parameters shared
/// between both factors. Positive, non-decreasing and unbounded above.
class GumbelSoftplus {
  public:
    GumbelSoftplus() = default;
    GumbelSoftplus(ParamStore& ps, const std::string& prefix, std::size_t dim);

    NodePtr forward(const NodePtr& x) const;

    std::vector<double> s_values() const { return gumbel_.s_values(); }
    std::size_t dim() const { return gumbel_.dim(); }

  private:
    GumbelActivation gumbel_;
};

enum class NormMode { kTrain, kEval };

/// Layer normalisation with exponential-moving-average statistics. The
/// forward pass normalizes with the stored running mean/std, treated as
/// constants, so the map is affine and (with the positive-clamped gain)
/// non-decreasing. In train mode the inputs are buffered; commit() applies
/// one EMA update from the buffered batch and clears it.
class EmaLayerNorm {
  public:
    EmaLayerNorm() = default;
    EmaLayerNorm(ParamStore& ps, const std::string& prefix, std::size_t dim, double rate = 0.1,
                 double epsilon = 1e-30);

    NodePtr forward(const NodePtr& x, NormMode mode);

    /// EMA update from everything observed since the last commit.
    void commit();
    void discard_observations() { observed_.clear(); }

    const Tensor& running_mean() const { return mean_; }
    const Tensor& running_std() const { return std_; }
    Tensor& running_mean() { return mean_; }
    Tensor& running_std() { return std_; }
    double rate() const { return rate_; }
    std::size_t dim() const { return dim_; }

  private:
    NodePtr gain_;    // raw, clamped at epsilon in forward
    NodePtr offset_;
    Tensor mean_;     // running, per feature
    Tensor std_;
    std::vector<std::vector<double>> observed_;
    double rate_ = 0.1;
    double eps_ = 1e-30;
    std::size_t dim_ = 0;
};

enum class FinalActivation { kNone, kGumbel, kGumbelSoftplus };

/// Stack of PositiveLinear layers with Gumbel activations between them;
/// non-decreasing in every input coordinate.
class MonotonicMlp {
  public:
    MonotonicMlp() = default;
    MonotonicMlp(ParamStore& ps, const std::string& prefix, std::vector<std::size_t> dims,
                 FinalActivation final_act);

    NodePtr forward(const NodePtr& x) const;

    std::size_t in_dim() const { return layers_.front().in_dim(); }
    std::size_t out_dim() const { return layers_.back().out_dim(); }

  private:
    std::vector<PositiveLinear> layers_;
    std::vector<GumbelActivation> hidden_acts_;
    GumbelActivation final_gumbel_;
    GumbelSoftplus final_gsp_;
    FinalActivation final_ = FinalActivation::kNone;
};

}  // namespace tppkit::mono
