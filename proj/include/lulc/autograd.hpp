#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lulc/tensor.hpp"

namespace lulc::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the dynamically built computation graph. Gradients flow
/// parent-ward; edges never point toward children, so graphs free themselves
/// when the loss handle goes out of scope while parameter leaves persist.
struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (!grad_alloc) {
            grad = Tensor(value.shape());
            grad_alloc = true;
        }
        return grad;
    }
    void zero_grad() {
        if (grad_alloc) grad.fill(0.0);
    }
};

/// Value handle with optional gradient tracking. Cheap to copy.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    static Var constant(Tensor value) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        return Var(std::move(n));
    }

    static Var parameter(Tensor value) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->requires_grad = true;
        return Var(std::move(n));
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& ensure_grad() { return node_->ensure_grad(); }
    bool has_grad() const { return node_->grad_alloc; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->zero_grad(); }
    const NodePtr& node() const { return node_; }

    double scalar() const {
        LULC_CHECK(node_ && node_->value.numel() == 1, "scalar() requires a 1-element tensor");
        return node_->value[0];
    }

private:
    NodePtr node_;
};

/// Run reverse-mode accumulation from a scalar root. Parameter gradients
/// accumulate; call zero_grad between steps.
void backward(const Var& root);

// ---- elementwise / reduction ops -------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var abs_val(const Var& a);
Var mean_all(const Var& a);
Var sum_vars(const std::vector<Var>& vs);

// ---- activations ------------------------------------------------------------
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh_act(const Var& a);
Var sigmoid_act(const Var& a);
/// softmax across the channel dimension of an NCHW tensor
Var softmax_channels(const Var& a);

// ---- structure ops -----------------------------------------------------------
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int dilation = 1);
Var instance_norm2d(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var upsample_nearest(const Var& x, int factor);
Var upsample_bilinear(const Var& x, int out_h, int out_w);
Var global_avg_pool(const Var& x);               // [N,C,H,W] -> [N,C,1,1]
Var broadcast_hw(const Var& x, int h, int w);    // [N,C,1,1] -> [N,C,h,w]
Var concat_channels(const std::vector<Var>& xs);

/// mean per-pixel cross-entropy of softmaxed logits against integer labels
Var cross_entropy_mean(const Var& logits, const LabelBatch& labels);

/// value copy that blocks gradient flow
Var detach(const Var& a);

}  // namespace lulc::nn
