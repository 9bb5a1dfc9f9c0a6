#include "tppkit/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace tppkit::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

// Set while a tangent expression is being recorded, so the primitives it is
// built from do not themselves spawn tangents (we only track d/dt, not
// d^2/dt^2).
thread_local bool g_recording_tangent = false;

struct TangentGuard {
    bool prev;
    TangentGuard() : prev(g_recording_tangent) { g_recording_tangent = true; }
    ~TangentGuard() { g_recording_tangent = prev; }
};

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

NodePtr make_node(Prim op, Tensor value, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (!n->value.all_finite())
        throw numeric_error(std::string("non-finite value produced by ") + prim_name(op));
    return n;
}

Tensor& ensure_grad(const NodePtr& n) {
    if (n->grad.empty() || !n->grad.same_shape(n->value)) n->grad = Tensor::zeros(n->value.shape());
    return n->grad;
}

void require_same_shape(const NodePtr& a, const NodePtr& b, const char* what) {
    if (!a->value.same_shape(b->value))
        throw shape_error(std::string(what) + ": shape mismatch " +
                          Tensor::shape_str(a->value.shape()) + " vs " +
                          Tensor::shape_str(b->value.shape()));
}

NodePtr zeros_like(const NodePtr& x) { return constant(Tensor::zeros(x->value.shape())); }

NodePtr tangent_or_zero(const NodePtr& x) { return x->tangent ? x->tangent : zeros_like(x); }

bool any_tangent(const std::vector<NodePtr>& xs) {
    for (const auto& x : xs)
        if (x->tangent) return true;
    return false;
}

}  // namespace

const char* prim_name(Prim p) {
    switch (p) {
        case Prim::kConst: return "const";
        case Prim::kParam: return "param";
        case Prim::kAdd: return "add";
        case Prim::kSub: return "sub";
        case Prim::kMul: return "mul";
        case Prim::kMatmul: return "matmul";
        case Prim::kConcat: return "concat";
        case Prim::kSum: return "sum";
        case Prim::kMean: return "mean";
        case Prim::kExp: return "exp";
        case Prim::kLog: return "log";
        case Prim::kSigmoid: return "sigmoid";
        case Prim::kTanh: return "tanh";
        case Prim::kSoftplus: return "softplus";
        case Prim::kParametricSoftplus: return "parametric-softplus";
        case Prim::kSoftmax: return "softmax";
        case Prim::kClampMinStraightThrough: return "clamp-min-straight-through";
        case Prim::kPower: return "power";
        case Prim::kNegate: return "negate";
        case Prim::kBroadcast: return "broadcast";
        case Prim::kErfc: return "erfc";
    }
    return "?";
}

NodePtr constant(Tensor v) { return make_node(Prim::kConst, std::move(v), {}); }
NodePtr constant(double v) { return make_node(Prim::kConst, Tensor::scalar(v), {}); }
NodePtr constant_vector(std::vector<double> v) {
    return make_node(Prim::kConst, Tensor::vector(std::move(v)), {});
}

NodePtr parameter(Tensor v) {
    auto n = make_node(Prim::kParam, std::move(v), {});
    n->trainable = true;
    n->requires_grad = true;
    return n;
}

// ---------------------------------------------------------------------------
// elementwise binaries

namespace {

NodePtr binary_elementwise(Prim op, const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, prim_name(op));
    Tensor out(a->value.shape());
    const auto& x = a->value.data();
    const auto& y = b->value.data();
    auto& o = out.data();
    switch (op) {
        case Prim::kAdd:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
            break;
        case Prim::kSub:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
            break;
        case Prim::kMul:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
            break;
        default: throw value_error("not an elementwise binary primitive");
    }
    auto n = make_node(op, std::move(out), {a, b});
    if (!g_recording_tangent && (a->tangent || b->tangent)) {
        TangentGuard guard;
        switch (op) {
            case Prim::kAdd:
                n->tangent = a->tangent && b->tangent ? add(a->tangent, b->tangent)
                             : a->tangent            ? a->tangent
                                                     : b->tangent;
                break;
            case Prim::kSub:
                if (a->tangent && b->tangent) n->tangent = sub(a->tangent, b->tangent);
                else if (a->tangent) n->tangent = a->tangent;
                else n->tangent = negate(b->tangent);
                break;
            case Prim::kMul:
                if (a->tangent && b->tangent)
                    n->tangent = add(mul(a->tangent, b), mul(a, b->tangent));
                else if (a->tangent) n->tangent = mul(a->tangent, b);
                else n->tangent = mul(a, b->tangent);
                break;
            default: break;
        }
    }
    return n;
}

}  // namespace

NodePtr add(const NodePtr& a, const NodePtr& b) { return binary_elementwise(Prim::kAdd, a, b); }
NodePtr sub(const NodePtr& a, const NodePtr& b) { return binary_elementwise(Prim::kSub, a, b); }
NodePtr mul(const NodePtr& a, const NodePtr& b) { return binary_elementwise(Prim::kMul, a, b); }

NodePtr add_const(const NodePtr& x, double c) {
    return add(x, constant(Tensor::full(x->value.shape(), c)));
}
NodePtr mul_const(const NodePtr& x, double c) {
    return mul(x, constant(Tensor::full(x->value.shape(), c)));
}
NodePtr rsub_const(double c, const NodePtr& x) {
    return sub(constant(Tensor::full(x->value.shape(), c)), x);
}

// ---------------------------------------------------------------------------
// matmul: (m,k)x(k,n), (m,k)x(k), (k)x(k,n)

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    Tensor out;
    if (A.rank() == 2 && B.rank() == 2) {
        if (A.cols() != B.rows()) throw shape_error("matmul: inner dimensions differ");
        out = Tensor({A.rows(), B.cols()});
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t k = 0; k < A.cols(); ++k) {
                double aik = A.at(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < B.cols(); ++j) out.at(i, j) += aik * B.at(k, j);
            }
    } else if (A.rank() == 2 && B.rank() == 1) {
        if (A.cols() != B.size()) throw shape_error("matmul: matrix-vector dimensions differ");
        out = Tensor({A.rows()});
        for (std::size_t i = 0; i < A.rows(); ++i) {
            double s = 0;
            for (std::size_t k = 0; k < A.cols(); ++k) s += A.at(i, k) * B[k];
            out[i] = s;
        }
    } else if (A.rank() == 1 && B.rank() == 2) {
        if (A.size() != B.rows()) throw shape_error("matmul: vector-matrix dimensions differ");
        out = Tensor({B.cols()});
        for (std::size_t k = 0; k < B.rows(); ++k) {
            double ak = A[k];
            if (ak == 0.0) continue;
            for (std::size_t j = 0; j < B.cols(); ++j) out[j] += ak * B.at(k, j);
        }
    } else {
        throw shape_error("matmul: unsupported ranks");
    }
    auto n = make_node(Prim::kMatmul, std::move(out), {a, b});
    if (!g_recording_tangent && (a->tangent || b->tangent)) {
        TangentGuard guard;
        if (a->tangent && b->tangent)
            n->tangent = add(matmul(a->tangent, b), matmul(a, b->tangent));
        else if (a->tangent) n->tangent = matmul(a->tangent, b);
        else n->tangent = matmul(a, b->tangent);
    }
    return n;
}

// ---------------------------------------------------------------------------
// concat

NodePtr concat(const std::vector<NodePtr>& xs, ConcatMode mode) {
    if (xs.empty()) throw value_error("concat: no inputs");
    Tensor out;
    if (mode == ConcatMode::kFlat) {
        std::size_t total = 0;
        for (const auto& x : xs) {
            if (x->value.rank() > 1) throw shape_error("concat(flat): inputs must be rank <= 1");
            total += x->value.size();
        }
        out = Tensor({total});
        std::size_t off = 0;
        for (const auto& x : xs)
            for (std::size_t i = 0; i < x->value.size(); ++i) out[off++] = x->value[i];
    } else {
        std::size_t n = xs[0]->value.size();
        for (const auto& x : xs)
            if (x->value.rank() != 1 || x->value.size() != n)
                throw shape_error("concat(rows): inputs must be equal-length vectors");
        out = Tensor({xs.size(), n});
        for (std::size_t r = 0; r < xs.size(); ++r)
            for (std::size_t i = 0; i < n; ++i) out.at(r, i) = xs[r]->value[i];
    }
    auto node = make_node(Prim::kConcat, std::move(out), xs);
    node->cmode = mode;
    if (!g_recording_tangent && any_tangent(xs)) {
        TangentGuard guard;
        std::vector<NodePtr> ts;
        ts.reserve(xs.size());
        for (const auto& x : xs) ts.push_back(tangent_or_zero(x));
        node->tangent = concat(ts, mode);
    }
    return node;
}

// ---------------------------------------------------------------------------
// reductions

namespace {

Tensor reduce(const Tensor& x, int axis, bool take_mean) {
    Tensor out;
    if (axis == kAxisAll) {
        double s = 0;
        for (double v : x.data()) s += v;
        if (take_mean && x.size() > 0) s /= static_cast<double>(x.size());
        out = Tensor::scalar(s);
    } else if (axis == 0) {
        if (x.rank() != 2) throw shape_error("sum/mean axis 0 requires rank 2");
        out = Tensor({x.cols()});
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x.at(i, j);
        if (take_mean)
            for (std::size_t j = 0; j < x.cols(); ++j) out[j] /= static_cast<double>(x.rows());
    } else if (axis == 1) {
        if (x.rank() != 2) throw shape_error("sum/mean axis 1 requires rank 2");
        out = Tensor({x.rows()});
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double s = 0;
            for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(i, j);
            out[i] = take_mean ? s / static_cast<double>(x.cols()) : s;
        }
    } else {
        throw value_error("sum/mean: bad axis");
    }
    return out;
}

NodePtr reduction(Prim op, const NodePtr& x, int axis) {
    Tensor out = reduce(x->value, axis, op == Prim::kMean);
    auto n = make_node(op, std::move(out), {x});
    n->axis = axis;
    if (!g_recording_tangent && x->tangent) {
        TangentGuard guard;
        n->tangent = op == Prim::kMean ? mean(x->tangent, axis) : sum(x->tangent, axis);
    }
    return n;
}

}  // namespace

NodePtr sum(const NodePtr& x, int axis) { return reduction(Prim::kSum, x, axis); }
NodePtr mean(const NodePtr& x, int axis) { return reduction(Prim::kMean, x, axis); }

// ---------------------------------------------------------------------------
// elementwise unaries

namespace {

NodePtr unary_elementwise(Prim op, const NodePtr& x, double attr = 0.0) {
    Tensor out(x->value.shape());
    const auto& in = x->value.data();
    auto& o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        double v = in[i];
        switch (op) {
            case Prim::kExp: o[i] = std::exp(v); break;
            case Prim::kLog:
                if (v <= 0.0) throw value_error("log of non-positive value");
                o[i] = std::log(v);
                break;
            case Prim::kSigmoid: o[i] = stable_sigmoid(v); break;
            case Prim::kTanh: o[i] = std::tanh(v); break;
            case Prim::kSoftplus: o[i] = stable_softplus(v); break;
            case Prim::kClampMinStraightThrough: o[i] = std::max(v, attr); break;
            case Prim::kPower:
                if (v <= 0.0) throw value_error("power of non-positive value");
                o[i] = std::pow(v, attr);
                break;
            case Prim::kNegate: o[i] = -v; break;
            case Prim::kErfc: o[i] = std::erfc(v); break;
            default: throw value_error("not an elementwise unary primitive");
        }
    }
    auto n = make_node(op, std::move(out), {x});
    n->attr = attr;
    if (!g_recording_tangent && x->tangent) {
        TangentGuard guard;
        const NodePtr& t = x->tangent;
        switch (op) {
            case Prim::kExp: n->tangent = mul(n, t); break;
            case Prim::kLog: n->tangent = mul(t, pow(x, -1.0)); break;
            case Prim::kSigmoid: n->tangent = mul(mul(n, rsub_const(1.0, n)), t); break;
            case Prim::kTanh: n->tangent = mul(rsub_const(1.0, mul(n, n)), t); break;
            case Prim::kSoftplus: n->tangent = mul(sigmoid(x), t); break;
            case Prim::kClampMinStraightThrough: n->tangent = t; break;
            case Prim::kPower: n->tangent = mul(mul_const(pow(x, attr - 1.0), attr), t); break;
            case Prim::kNegate: n->tangent = negate(t); break;
            case Prim::kErfc: {
                // d erfc / dx = -2/sqrt(pi) * exp(-x^2)
                auto d = mul_const(exp(negate(mul(x, x))), -1.1283791670955126);
                n->tangent = mul(d, t);
                break;
            }
            default: break;
        }
    }
    return n;
}

}  // namespace

NodePtr exp(const NodePtr& x) { return unary_elementwise(Prim::kExp, x); }
NodePtr log(const NodePtr& x) { return unary_elementwise(Prim::kLog, x); }
NodePtr sigmoid(const NodePtr& x) { return unary_elementwise(Prim::kSigmoid, x); }
NodePtr tanh(const NodePtr& x) { return unary_elementwise(Prim::kTanh, x); }
NodePtr softplus(const NodePtr& x) { return unary_elementwise(Prim::kSoftplus, x); }
NodePtr clamp_min(const NodePtr& x, double lo) {
    return unary_elementwise(Prim::kClampMinStraightThrough, x, lo);
}
NodePtr pow(const NodePtr& x, double exponent) {
    return unary_elementwise(Prim::kPower, x, exponent);
}
NodePtr negate(const NodePtr& x) { return unary_elementwise(Prim::kNegate, x); }
NodePtr erfc(const NodePtr& x) { return unary_elementwise(Prim::kErfc, x); }

NodePtr parametric_softplus(const NodePtr& x, const NodePtr& s) {
    require_same_shape(x, s, "parametric-softplus");
    Tensor out(x->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double sv = s->value[i];
        if (sv <= 0.0) throw value_error("parametric-softplus: scale must be positive");
        out[i] = sv * stable_softplus(x->value[i] / sv);
    }
    auto n = make_node(Prim::kParametricSoftplus, std::move(out), {x, s});
    if (!g_recording_tangent && (x->tangent || s->tangent)) {
        TangentGuard guard;
        auto inv_s = pow(s, -1.0);
        auto z = mul(x, inv_s);
        auto sig = sigmoid(z);
        NodePtr t;
        if (x->tangent) t = mul(sig, x->tangent);
        if (s->tangent) {
            // dy/ds = y/s - (x/s) * sigmoid(x/s)
            auto dyds = sub(mul(n, inv_s), mul(z, sig));
            auto ts = mul(dyds, s->tangent);
            t = t ? add(t, ts) : ts;
        }
        n->tangent = t;
    }
    return n;
}

NodePtr softmax(const NodePtr& x) { return softmax_masked(x, {}); }

NodePtr softmax_masked(const NodePtr& x, std::vector<std::uint8_t> visible) {
    if (x->value.rank() != 1) throw shape_error("softmax requires a rank-1 input");
    std::size_t n = x->value.size();
    if (!visible.empty() && visible.size() != n)
        throw shape_error("softmax: mask length mismatch");
    bool any_visible = visible.empty();
    double mx = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
        if (!visible.empty() && !visible[i]) continue;
        any_visible = true;
        mx = std::max(mx, x->value[i]);
    }
    if (!any_visible) throw value_error("softmax: every entry is masked");
    Tensor out({n});
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!visible.empty() && !visible[i]) continue;
        out[i] = std::exp(x->value[i] - mx);
        z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
    auto node = make_node(Prim::kSoftmax, std::move(out), {x});
    node->mask = std::move(visible);
    if (!g_recording_tangent && x->tangent) {
        TangentGuard guard;
        auto yt = mul(node, x->tangent);
        auto inner = broadcast_scalar(sum(yt), node->value.shape());
        node->tangent = mul(node, sub(x->tangent, inner));
    }
    return node;
}

NodePtr broadcast_rows(const NodePtr& x, std::size_t rows) {
    if (x->value.rank() != 1) throw shape_error("broadcast rows: input must be a vector");
    std::size_t n = x->value.size();
    Tensor out({rows, n});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i) out.at(r, i) = x->value[i];
    auto node = make_node(Prim::kBroadcast, std::move(out), {x});
    node->bmode = BroadcastMode::kRows;
    if (!g_recording_tangent && x->tangent) {
        TangentGuard guard;
        node->tangent = broadcast_rows(x->tangent, rows);
    }
    return node;
}

NodePtr broadcast_cols(const NodePtr& x, std::size_t cols) {
    if (x->value.rank() != 1) throw shape_error("broadcast cols: input must be a vector");
    std::size_t m = x->value.size();
    Tensor out({m, cols});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < cols; ++j) out.at(r, j) = x->value[r];
    auto node = make_node(Prim::kBroadcast, std::move(out), {x});
    node->bmode = BroadcastMode::kCols;
    if (!g_recording_tangent && x->tangent) {
        TangentGuard guard;
        node->tangent = broadcast_cols(x->tangent, cols);
    }
    return node;
}

NodePtr broadcast_scalar(const NodePtr& x, std::vector<std::size_t> shape) {
    if (x->value.size() != 1) throw shape_error("broadcast scalar: input must be a scalar");
    Tensor out = Tensor::full(shape, x->value.item());
    auto node = make_node(Prim::kBroadcast, std::move(out), {x});
    node->bmode = BroadcastMode::kScalar;
    if (!g_recording_tangent && x->tangent) {
        TangentGuard guard;
        node->tangent = broadcast_scalar(x->tangent, std::move(shape));
    }
    return node;
}

NodePtr apply_primitive(Prim kind, const std::vector<NodePtr>& inputs) {
    auto need = [&](std::size_t n) {
        if (inputs.size() != n)
            throw value_error(std::string(prim_name(kind)) + ": wrong number of inputs");
    };
    switch (kind) {
        case Prim::kAdd: need(2); return add(inputs[0], inputs[1]);
        case Prim::kSub: need(2); return sub(inputs[0], inputs[1]);
        case Prim::kMul: need(2); return mul(inputs[0], inputs[1]);
        case Prim::kMatmul: need(2); return matmul(inputs[0], inputs[1]);
        case Prim::kConcat: return concat(inputs);
        case Prim::kSum: need(1); return sum(inputs[0]);
        case Prim::kMean: need(1); return mean(inputs[0]);
        case Prim::kExp: need(1); return exp(inputs[0]);
        case Prim::kLog: need(1); return log(inputs[0]);
        case Prim::kSigmoid: need(1); return sigmoid(inputs[0]);
        case Prim::kTanh: need(1); return tanh(inputs[0]);
        case Prim::kSoftplus: need(1); return softplus(inputs[0]);
        case Prim::kParametricSoftplus: need(2); return parametric_softplus(inputs[0], inputs[1]);
        case Prim::kSoftmax: need(1); return softmax(inputs[0]);
        case Prim::kNegate: need(1); return negate(inputs[0]);
        case Prim::kErfc: need(1); return erfc(inputs[0]);
        default: throw value_error(std::string("unknown or attribute-carrying primitive kind: ") +
                                   prim_name(kind));
    }
}

NodePtr seed_time_tangent(const NodePtr& t) {
    if (t->value.size() != 1) throw shape_error("seed_time_tangent: t must be scalar");
    if (t->tangent) throw value_error("seed_time_tangent: t already carries a tangent");
    t->tangent = constant(Tensor::full(t->value.shape(), 1.0));
    return t;
}

// ---------------------------------------------------------------------------
// backward

namespace {

void accumulate_parent(const NodePtr& p, const Tensor& contrib) {
    Tensor& g = ensure_grad(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += contrib[i];
}

void backward_step(const Node& n) {
    const Tensor& g = n.grad;
    auto wants = [](const NodePtr& p) { return p->requires_grad; };
    switch (n.op) {
        case Prim::kConst:
        case Prim::kParam: break;
        case Prim::kAdd: {
            if (wants(n.parents[0])) accumulate_parent(n.parents[0], g);
            if (wants(n.parents[1])) accumulate_parent(n.parents[1], g);
            break;
        }
        case Prim::kSub: {
            if (wants(n.parents[0])) accumulate_parent(n.parents[0], g);
            if (wants(n.parents[1])) {
                Tensor& pg = ensure_grad(n.parents[1]);
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] -= g[i];
            }
            break;
        }
        case Prim::kMul: {
            const Tensor& a = n.parents[0]->value;
            const Tensor& b = n.parents[1]->value;
            if (wants(n.parents[0])) {
                Tensor& pg = ensure_grad(n.parents[0]);
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * b[i];
            }
            if (wants(n.parents[1])) {
                Tensor& pg = ensure_grad(n.parents[1]);
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * a[i];
            }
            break;
        }
        case Prim::kMatmul: {
            const Tensor& A = n.parents[0]->value;
            const Tensor& B = n.parents[1]->value;
            if (A.rank() == 2 && B.rank() == 2) {
                if (wants(n.parents[0])) {
                    Tensor& gA = ensure_grad(n.parents[0]);
                    for (std::size_t i = 0; i < A.rows(); ++i)
                        for (std::size_t j = 0; j < A.cols(); ++j) {
                            double s = 0;
                            for (std::size_t c = 0; c < B.cols(); ++c)
                                s += g.at(i, c) * B.at(j, c);
                            gA.at(i, j) += s;
                        }
                }
                if (wants(n.parents[1])) {
                    Tensor& gB = ensure_grad(n.parents[1]);
                    for (std::size_t j = 0; j < B.rows(); ++j)
                        for (std::size_t c = 0; c < B.cols(); ++c) {
                            double s = 0;
                            for (std::size_t i = 0; i < A.rows(); ++i)
                                s += A.at(i, j) * g.at(i, c);
                            gB.at(j, c) += s;
                        }
                }
            } else if (A.rank() == 2 && B.rank() == 1) {
                if (wants(n.parents[0])) {
                    Tensor& gA = ensure_grad(n.parents[0]);
                    for (std::size_t i = 0; i < A.rows(); ++i)
                        for (std::size_t j = 0; j < A.cols(); ++j) gA.at(i, j) += g[i] * B[j];
                }
                if (wants(n.parents[1])) {
                    Tensor& gB = ensure_grad(n.parents[1]);
                    for (std::size_t i = 0; i < A.rows(); ++i)
                        for (std::size_t j = 0; j < A.cols(); ++j) gB[j] += A.at(i, j) * g[i];
                }
            } else {  // vector-matrix
                if (wants(n.parents[0])) {
                    Tensor& gA = ensure_grad(n.parents[0]);
                    for (std::size_t k = 0; k < B.rows(); ++k)
                        for (std::size_t j = 0; j < B.cols(); ++j) gA[k] += B.at(k, j) * g[j];
                }
                if (wants(n.parents[1])) {
                    Tensor& gB = ensure_grad(n.parents[1]);
                    for (std::size_t k = 0; k < B.rows(); ++k)
                        for (std::size_t j = 0; j < B.cols(); ++j) gB.at(k, j) += A[k] * g[j];
                }
            }
            break;
        }
        case Prim::kConcat: {
            if (n.cmode == ConcatMode::kFlat) {
                std::size_t off = 0;
                for (const auto& p : n.parents) {
                    std::size_t len = p->value.size();
                    if (wants(p)) {
                        Tensor& pg = ensure_grad(p);
                        for (std::size_t i = 0; i < len; ++i) pg[i] += g[off + i];
                    }
                    off += len;
                }
            } else {
                std::size_t cols = n.value.cols();
                for (std::size_t r = 0; r < n.parents.size(); ++r) {
                    const auto& p = n.parents[r];
                    if (!wants(p)) continue;
                    Tensor& pg = ensure_grad(p);
                    for (std::size_t i = 0; i < cols; ++i) pg[i] += g.at(r, i);
                }
            }
            break;
        }
        case Prim::kSum:
        case Prim::kMean: {
            const auto& p = n.parents[0];
            if (!wants(p)) break;
            Tensor& pg = ensure_grad(p);
            const Tensor& pv = p->value;
            if (n.axis == kAxisAll) {
                double scale = n.op == Prim::kMean && pv.size() > 0
                                   ? 1.0 / static_cast<double>(pv.size())
                                   : 1.0;
                double gv = g.item() * scale;
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += gv;
            } else if (n.axis == 0) {
                double scale =
                    n.op == Prim::kMean ? 1.0 / static_cast<double>(pv.rows()) : 1.0;
                for (std::size_t i = 0; i < pv.rows(); ++i)
                    for (std::size_t j = 0; j < pv.cols(); ++j) pg.at(i, j) += g[j] * scale;
            } else {
                double scale =
                    n.op == Prim::kMean ? 1.0 / static_cast<double>(pv.cols()) : 1.0;
                for (std::size_t i = 0; i < pv.rows(); ++i)
                    for (std::size_t j = 0; j < pv.cols(); ++j) pg.at(i, j) += g[i] * scale;
            }
            break;
        }
        case Prim::kExp: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * n.value[i];
            break;
        }
        case Prim::kLog: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            const Tensor& x = n.parents[0]->value;
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] / x[i];
            break;
        }
        case Prim::kSigmoid: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            for (std::size_t i = 0; i < pg.size(); ++i)
                pg[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
            break;
        }
        case Prim::kTanh: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            for (std::size_t i = 0; i < pg.size(); ++i)
                pg[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
            break;
        }
        case Prim::kSoftplus: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            const Tensor& x = n.parents[0]->value;
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * stable_sigmoid(x[i]);
            break;
        }
        case Prim::kParametricSoftplus: {
            const Tensor& x = n.parents[0]->value;
            const Tensor& s = n.parents[1]->value;
            if (wants(n.parents[0])) {
                Tensor& pg = ensure_grad(n.parents[0]);
                for (std::size_t i = 0; i < pg.size(); ++i)
                    pg[i] += g[i] * stable_sigmoid(x[i] / s[i]);
            }
            if (wants(n.parents[1])) {
                Tensor& pg = ensure_grad(n.parents[1]);
                for (std::size_t i = 0; i < pg.size(); ++i) {
                    double z = x[i] / s[i];
                    pg[i] += g[i] * (n.value[i] / s[i] - z * stable_sigmoid(z));
                }
            }
            break;
        }
        case Prim::kSoftmax: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            const Tensor& y = n.value;
            double dot = 0;
            for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (!n.mask.empty() && !n.mask[i]) continue;
                pg[i] += y[i] * (g[i] - dot);
            }
            break;
        }
        case Prim::kClampMinStraightThrough: {
            // adjoint passes through even in the clamped region
            if (wants(n.parents[0])) accumulate_parent(n.parents[0], g);
            break;
        }
        case Prim::kPower: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            const Tensor& x = n.parents[0]->value;
            for (std::size_t i = 0; i < pg.size(); ++i)
                pg[i] += g[i] * n.attr * std::pow(x[i], n.attr - 1.0);
            break;
        }
        case Prim::kNegate: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] -= g[i];
            break;
        }
        case Prim::kBroadcast: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            if (n.bmode == BroadcastMode::kScalar) {
                double s = 0;
                for (double v : g.data()) s += v;
                pg[0] += s;
            } else if (n.bmode == BroadcastMode::kRows) {
                for (std::size_t r = 0; r < n.value.rows(); ++r)
                    for (std::size_t j = 0; j < n.value.cols(); ++j) pg[j] += g.at(r, j);
            } else {
                for (std::size_t r = 0; r < n.value.rows(); ++r)
                    for (std::size_t j = 0; j < n.value.cols(); ++j) pg[r] += g.at(r, j);
            }
            break;
        }
        case Prim::kErfc: {
            if (!wants(n.parents[0])) break;
            Tensor& pg = ensure_grad(n.parents[0]);
            const Tensor& x = n.parents[0]->value;
            for (std::size_t i = 0; i < pg.size(); ++i)
                pg[i] += g[i] * (-1.1283791670955126) * std::exp(-x[i] * x[i]);
            break;
        }
    }
}

std::vector<Node*> reachable_subgraph(const NodePtr& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (!p->requires_grad) continue;
            if (seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
    return order;
}

}  // namespace

void backward(const NodePtr& root) {
    if (root->value.size() != 1) throw shape_error("backward requires a scalar root");
    auto order = reachable_subgraph(root);
    for (Node* n : order) n->grad = Tensor::zeros(n->value.shape());
    root->grad = Tensor::full(root->value.shape(), 1.0);
    for (Node* n : order) backward_step(*n);
    for (Node* n : order)
        if (n->trainable && !n->grad.all_finite())
            throw numeric_error("NaN encountered during gradient accumulation");
}

std::map<std::string, Tensor> backward(const NodePtr& root, const ParamStore& params) {
    backward(root);
    std::map<std::string, Tensor> grads;
    for (const auto& name : params.names()) {
        const NodePtr& p = params.get(name);
        if (!p->grad.empty() && p->grad.same_shape(p->value)) grads.emplace(name, p->grad);
    }
    return grads;
}

double finite_difference_check(const std::function<NodePtr(ParamStore&)>& f, ParamStore& params,
                               double step) {
    if (step <= 0) throw value_error("finite_difference_check: step must be positive");
    NodePtr root = f(params);
    auto grads = backward(root, params);
    double worst = 0;
    for (const auto& name : params.names()) {
        NodePtr p = params.get(name);
        auto it = grads.find(name);
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double saved = p->value[i];
            p->value[i] = saved + step;
            double up = f(params)->value.item();
            p->value[i] = saved - step;
            double dn = f(params)->value.item();
            p->value[i] = saved;
            double fd = (up - dn) / (2.0 * step);
            double ad = it == grads.end() ? 0.0 : it->second[i];
            double denom = std::max({std::abs(fd), std::abs(ad), 1e-4});
            worst = std::max(worst, std::abs(fd - ad) / denom);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// ParamStore

ParamStore::ParamStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

NodePtr ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw value_error("duplicate parameter name: " + name);
    auto n = parameter(std::move(init));
    params_.emplace(name, n);
    order_.push_back(name);
    return n;
}

NodePtr ParamStore::add_glorot(const std::string& name, std::size_t out, std::size_t in) {
    double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor t({out, in});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-bound, bound);
    return add(name, std::move(t));
}

NodePtr ParamStore::add_glorot_vec(const std::string& name, std::size_t n, std::size_t fan_in,
                                   std::size_t fan_out) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({n});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-bound, bound);
    return add(name, std::move(t));
}

NodePtr ParamStore::add_positive(const std::string& name, std::size_t out, std::size_t in) {
    double bound = std::max(0.1, std::sqrt(6.0 / static_cast<double>(in + out)));
    Tensor t({out, in});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(0.05, bound);
    return add(name, std::move(t));
}

NodePtr ParamStore::add_constant_init(const std::string& name, std::vector<std::size_t> shape,
                                      double v) {
    return add(name, Tensor::full(std::move(shape), v));
}

NodePtr ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw value_error("unknown parameter: " + name);
    return it->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) > 0; }

std::size_t ParamStore::entry_count() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += params_.at(name)->value.size();
    return n;
}

std::map<std::string, Tensor> ParamStore::values() const {
    std::map<std::string, Tensor> out;
    for (const auto& name : order_) out.emplace(name, params_.at(name)->value);
    return out;
}

void ParamStore::load_values(const std::map<std::string, Tensor>& vals) {
    for (const auto& [name, tensor] : vals) {
        NodePtr p = get(name);
        if (!p->value.same_shape(tensor))
            throw shape_error("load_values: shape mismatch for " + name);
        p->value = tensor;
    }
}

}  // namespace tppkit::ad
