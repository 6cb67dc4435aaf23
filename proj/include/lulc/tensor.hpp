#pragma once

#include <numeric>
#include <vector>

#include "lulc/common.hpp"

namespace lulc::nn {

/// Dense row-major tensor of doubles. Convolutional data uses NCHW order.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0) : shape_(std::move(shape)) {
        int n = 1;
        for (int d : shape_) {
            LULC_CHECK(d > 0, "tensor dimension must be positive, got " << d);
            n *= d;
        }
        data_.assign(static_cast<size_t>(n), fill);
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }

    int numel() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    // NCHW accessors
    double& at4(int n, int c, int h, int w) {
        return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at4(int n, int c, int h, int w) const {
        return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    uint64_t content_hash() const {
        uint64_t h = fnv1a(shape_.data(), shape_.size() * sizeof(int));
        return fnv1a(data_.data(), data_.size() * sizeof(double), h);
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Integer class-code batch, shape [N,H,W]; companion to logit tensors.
struct LabelBatch {
    int n = 0, h = 0, w = 0;
    std::vector<int> codes;

    LabelBatch() = default;
    LabelBatch(int n_, int h_, int w_) : n(n_), h(h_), w(w_), codes(static_cast<size_t>(n_) * h_ * w_, 0) {}

    int& at(int i, int y, int x) { return codes[(static_cast<size_t>(i) * h + y) * w + x]; }
    int at(int i, int y, int x) const { return codes[(static_cast<size_t>(i) * h + y) * w + x]; }
    size_t numel() const { return codes.size(); }
};

}  // namespace lulc::nn
