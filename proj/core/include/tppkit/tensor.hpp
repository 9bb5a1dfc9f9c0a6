#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tppkit {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between operands.
struct shape_error : error {
    using error::error;
};

/// Domain violations, malformed inputs, schema problems.
struct value_error : error {
    using error::error;
};

/// NaN/Inf produced by a numeric computation, or divergence.
struct numeric_error : error {
    using error::error;
};

namespace ad {

/// Dense row-major tensor of 64-bit floats. Rank 0 (scalar), 1 and 2 are
/// what the models use; higher ranks are rejected at construction.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {
        check_rank();
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_rank();
        if (data_.size() != count(shape_))
            throw shape_error("tensor data length does not match shape");
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor vector(std::vector<double> data) {
        std::size_t n = data.size();
        return Tensor({n}, std::move(data));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty() && shape_.empty(); }

    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    /// Value of a rank-0 or single-element tensor.
    double item() const {
        if (data_.size() != 1) throw shape_error("item() on non-scalar tensor");
        return data_[0];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }

    static std::string shape_str(const std::vector<std::size_t>& shape) {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }

  private:
    void check_rank() const {
        if (shape_.size() > 2) throw shape_error("tensors above rank 2 are not supported");
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace ad
}  // namespace tppkit
