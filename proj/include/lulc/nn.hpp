#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lulc/autograd.hpp"
#include "lulc/common.hpp"

namespace lulc::nn {

/// Owns the named parameter leaves of one network.
class ParamStore {
public:
    Var make_param(const std::string& name, Tensor init) {
        for (const auto& [n, v] : params_)
            LULC_CHECK(n != name, "duplicate parameter name: " << name);
        Var p = Var::parameter(std::move(init));
        params_.emplace_back(name, p);
        return p;
    }

    std::vector<std::pair<std::string, Var>>& items() { return params_; }
    const std::vector<std::pair<std::string, Var>>& items() const { return params_; }
    size_t size() const { return params_.size(); }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, v] : params_) n += v.value().numel();
        return n;
    }

    void zero_grads() {
        for (auto& [name, v] : params_) v.zero_grad();
    }

    void set_requires_grad(bool on) {
        for (auto& [name, v] : params_) v.set_requires_grad(on);
    }

    /// Fingerprint of all parameter values; order- and content-sensitive.
    uint64_t content_hash() const {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& [name, v] : params_) {
            h = fnv1a(name.data(), name.size(), h);
            h = fnv1a(v.value().data(), static_cast<size_t>(v.value().numel()) * sizeof(double), h);
        }
        return h;
    }

    std::vector<std::pair<std::string, Tensor>> state_dict(const std::string& prefix = "") const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.reserve(params_.size());
        for (const auto& [name, v] : params_) out.emplace_back(prefix + name, v.value());
        return out;
    }

    void load_state_dict(const std::map<std::string, Tensor>& named, const std::string& prefix = "") {
        for (auto& [name, v] : params_) {
            auto it = named.find(prefix + name);
            LULC_CHECK(it != named.end(), "checkpoint is missing parameter " << prefix + name);
            LULC_CHECK(it->second.same_shape(v.value()),
                       "checkpoint parameter " << prefix + name << " has shape "
                                               << shape_str(it->second.shape()) << ", expected "
                                               << shape_str(v.value().shape()));
            v.mutable_value() = it->second;
        }
    }

private:
    std::vector<std::pair<std::string, Var>> params_;
};

/// RAII freeze of a parameter store; used to enforce stop-gradient contracts.
class FreezeGuard {
public:
    explicit FreezeGuard(ParamStore& store) : store_(store) {
        saved_.reserve(store.size());
        for (auto& [name, v] : store.items()) {
            saved_.push_back(v.requires_grad());
            v.set_requires_grad(false);
        }
    }
    ~FreezeGuard() {
        size_t i = 0;
        for (auto& [name, v] : store_.items()) v.set_requires_grad(saved_[i++]);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    ParamStore& store_;
    std::vector<bool> saved_;
};

enum class Init { gaussian_002, he_normal, ones, zeros };

Tensor init_tensor(std::vector<int> shape, Init kind, Rng& rng);

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

struct Conv2dLayer {
    Var w, b;
    int stride = 1, pad = 0, dilation = 1;

    static Conv2dLayer create(ParamStore& ps, const std::string& name, int in_c, int out_c, int k,
                              int stride, int pad, int dilation, Init init, Rng& rng);
    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad, dilation); }
};

struct InstanceNorm2dLayer {
    Var gamma, beta;

    static InstanceNorm2dLayer create(ParamStore& ps, const std::string& name, int channels);
    Var operator()(const Var& x) const { return instance_norm2d(x, gamma, beta); }
};

// ---------------------------------------------------------------------------
// optimizers
// ---------------------------------------------------------------------------

/// Momentum SGD with polynomial step-size decay; the conventional recipe for
/// the segmentation family.
class SgdPoly {
public:
    SgdPoly(ParamStore& store, double lr, double momentum, double power, int max_iter);
    void step();
    void zero_grads() { store_.zero_grads(); }
    int iter() const { return iter_; }
    double current_lr() const;

    std::vector<std::pair<std::string, Tensor>> state_dict(const std::string& prefix) const;
    void load_state_dict(const std::map<std::string, Tensor>& named, const std::string& prefix,
                         int iter);

private:
    ParamStore& store_;
    double lr_, momentum_, power_;
    int max_iter_, iter_ = 0;
    std::vector<Tensor> velocity_;
};

/// Adam with configurable first-moment coefficient; used for all adversarial
/// networks.
class Adam {
public:
    Adam(ParamStore& store, double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8);
    void step();
    void zero_grads() { store_.zero_grads(); }
    int iter() const { return iter_; }

    std::vector<std::pair<std::string, Tensor>> state_dict(const std::string& prefix) const;
    void load_state_dict(const std::map<std::string, Tensor>& named, const std::string& prefix,
                         int iter);

private:
    ParamStore& store_;
    double lr_, beta1_, beta2_, eps_;
    int iter_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace lulc::nn
