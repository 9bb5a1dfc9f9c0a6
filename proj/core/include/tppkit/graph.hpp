#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tppkit/rng.hpp"
#include "tppkit/tensor.hpp"

namespace tppkit::ad {

/// Primitive operation tags. Every differentiable computation in the
/// toolkit is a DAG of these.
enum class Prim {
    kConst,
    kParam,
    kAdd,
    kSub,
    kMul,
    kMatmul,
    kConcat,
    kSum,
    kMean,
    kExp,
    kLog,
    kSigmoid,
    kTanh,
    kSoftplus,
    kParametricSoftplus,
    kSoftmax,
    kClampMinStraightThrough,
    kPower,
    kNegate,
    kBroadcast,
    kErfc,
};

const char* prim_name(Prim p);

inline constexpr int kAxisAll = -1;

enum class BroadcastMode { kScalar, kRows, kCols };
enum class ConcatMode { kFlat, kRows };

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. `value` is the primal, `grad` the
/// adjoint (allocated lazily during backward). `tangent`, when set, is
/// another node holding d(value)/dt for the seeded time variable; it is
/// built out of recorded primitives, so backward differentiates through it.
struct Node {
    Tensor value;
    Tensor grad;
    Prim op = Prim::kConst;
    std::vector<NodePtr> parents;
    NodePtr tangent;
    bool trainable = false;
    bool requires_grad = false;
    std::uint64_t id = 0;

    // attributes used by some primitives
    double attr = 0.0;                       // clamp threshold, power exponent
    int axis = kAxisAll;                     // sum/mean
    BroadcastMode bmode = BroadcastMode::kScalar;
    ConcatMode cmode = ConcatMode::kFlat;
    std::vector<std::uint8_t> mask;          // softmax visibility; empty = all

    const Tensor& primal() const { return value; }
    const Tensor& adjoint() const { return grad; }
    bool has_tangent() const { return tangent != nullptr; }
};

NodePtr constant(Tensor v);
NodePtr constant(double v);
NodePtr constant_vector(std::vector<double> v);

/// Leaf flagged trainable; lives in a ParamStore.
NodePtr parameter(Tensor v);

/// Generic primitive application: computes the primal, registers the
/// reverse rule, and (when an input carries a tangent) builds the output
/// tangent from graph primitives. Attribute-carrying primitives (clamp,
/// power, broadcast, sum/mean axis, masked softmax) have typed wrappers
/// below; this entry point covers the attribute-free kinds.
NodePtr apply_primitive(Prim kind, const std::vector<NodePtr>& inputs);

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr concat(const std::vector<NodePtr>& xs, ConcatMode mode = ConcatMode::kFlat);
NodePtr sum(const NodePtr& x, int axis = kAxisAll);
NodePtr mean(const NodePtr& x, int axis = kAxisAll);
NodePtr exp(const NodePtr& x);
NodePtr log(const NodePtr& x);
NodePtr sigmoid(const NodePtr& x);
NodePtr tanh(const NodePtr& x);
NodePtr softplus(const NodePtr& x);
/// Elementwise s*log(1+exp(x/s)); the scaled-softplus positive activation.
NodePtr parametric_softplus(const NodePtr& x, const NodePtr& s);
NodePtr softmax(const NodePtr& x);
/// Masked softmax over a vector: entries with visible[i]==0 get exactly 0
/// and are excluded from normalization.
NodePtr softmax_masked(const NodePtr& x, std::vector<std::uint8_t> visible);
/// Forward max(x, lo); gradient passes through unchanged (straight-through).
NodePtr clamp_min(const NodePtr& x, double lo);
NodePtr pow(const NodePtr& x, double exponent);
NodePtr negate(const NodePtr& x);
NodePtr broadcast_rows(const NodePtr& x, std::size_t rows);
NodePtr broadcast_cols(const NodePtr& x, std::size_t cols);
NodePtr broadcast_scalar(const NodePtr& x, std::vector<std::size_t> shape);
NodePtr erfc(const NodePtr& x);

/// x + c, x * c etc. against an implicit same-shape constant.
NodePtr add_const(const NodePtr& x, double c);
NodePtr mul_const(const NodePtr& x, double c);
/// c - x
NodePtr rsub_const(double c, const NodePtr& x);

/// Marks scalar t as the time variable: sets its tangent to the constant 1.
/// Downstream primitives then carry tangents, and the tangent of any
/// cumulative intensity is the per-mark conditional intensity.
NodePtr seed_time_tangent(const NodePtr& t);

/// Reverse pass from a scalar root. Zeroes the adjoints of the reachable
/// subgraph, then accumulates in reverse topological (creation) order.
void backward(const NodePtr& root);

class ParamStore;

/// backward() plus gradient harvest for every trainable parameter of
/// `params` reachable from root.
std::map<std::string, Tensor> backward(const NodePtr& root, const ParamStore& params);

/// Central-difference check of backward() against f evaluated at perturbed
/// parameters. Returns the worst relative error over all parameter entries.
double finite_difference_check(const std::function<NodePtr(ParamStore&)>& f, ParamStore& params,
                               double step);

/// Named trainable parameters with deterministic iteration order and the
/// rng stream used to initialize them.
class ParamStore {
  public:
    explicit ParamStore(std::uint64_t seed);

    NodePtr add(const std::string& name, Tensor init);
    /// Uniform +-sqrt(6/(fan_in+fan_out)) init.
    NodePtr add_glorot(const std::string& name, std::size_t out, std::size_t in);
    NodePtr add_glorot_vec(const std::string& name, std::size_t n, std::size_t fan_in,
                           std::size_t fan_out);
    /// Nonnegative init for clamp-parameterized weights: uniform in
    /// [0.05, bound], so nothing starts in the clamped region.
    NodePtr add_positive(const std::string& name, std::size_t out, std::size_t in);
    NodePtr add_constant_init(const std::string& name, std::vector<std::size_t> shape, double v);

    NodePtr get(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }
    std::uint64_t seed() const { return seed_; }
    Rng& rng() { return rng_; }

    /// Total number of scalar entries over all parameters.
    std::size_t entry_count() const;

    std::map<std::string, Tensor> values() const;
    void load_values(const std::map<std::string, Tensor>& vals);

  private:
    std::uint64_t seed_;
    Rng rng_;
    std::vector<std::string> order_;
    std::map<std::string, NodePtr> params_;
};

}  // namespace tppkit::ad
