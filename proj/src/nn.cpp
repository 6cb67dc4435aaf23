#include "lulc/nn.hpp"

namespace lulc::nn {

Tensor init_tensor(std::vector<int> shape, Init kind, Rng& rng) {
    Tensor t(std::move(shape));
    switch (kind) {
        case Init::gaussian_002:
            for (int i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, 0.02);
            break;
        case Init::he_normal: {
            // fan_in from [OC, C, KH, KW] or vector shapes
            int fan_in = 1;
            const auto& s = t.shape();
            for (size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
            const double std = std::sqrt(2.0 / std::max(1, fan_in));
            for (int i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, std);
            break;
        }
        case Init::ones:
            t.fill(1.0);
            break;
        case Init::zeros:
            break;
    }
    return t;
}

Conv2dLayer Conv2dLayer::create(ParamStore& ps, const std::string& name, int in_c, int out_c,
                                int k, int stride, int pad, int dilation, Init init, Rng& rng) {
    Conv2dLayer l;
    l.w = ps.make_param(name + ".w", init_tensor({out_c, in_c, k, k}, init, rng));
    l.b = ps.make_param(name + ".b", Tensor({out_c}));
    l.stride = stride;
    l.pad = pad;
    l.dilation = dilation;
    return l;
}

InstanceNorm2dLayer InstanceNorm2dLayer::create(ParamStore& ps, const std::string& name,
                                                int channels) {
    InstanceNorm2dLayer l;
    l.gamma = ps.make_param(name + ".gamma", Tensor({channels}, 1.0));
    l.beta = ps.make_param(name + ".beta", Tensor({channels}));
    return l;
}

// ---------------------------------------------------------------------------

SgdPoly::SgdPoly(ParamStore& store, double lr, double momentum, double power, int max_iter)
    : store_(store), lr_(lr), momentum_(momentum), power_(power), max_iter_(max_iter) {
    LULC_CHECK(max_iter >= 1, "SgdPoly: max_iter must be >= 1");
    for (auto& [name, v] : store.items()) velocity_.emplace_back(v.value().shape());
}

double SgdPoly::current_lr() const {
    const double frac = std::min(1.0, static_cast<double>(iter_) / max_iter_);
    return lr_ * std::pow(1.0 - frac, power_);
}

void SgdPoly::step() {
    const double lr = current_lr();
    size_t k = 0;
    for (auto& [name, v] : store_.items()) {
        Tensor& vel = velocity_[k++];
        if (!v.has_grad()) continue;
        const Tensor& g = v.grad();
        Tensor& val = v.mutable_value();
        for (int i = 0; i < val.numel(); ++i) {
            vel[i] = momentum_ * vel[i] + g[i];
            val[i] -= lr * vel[i];
        }
    }
    ++iter_;
}

std::vector<std::pair<std::string, Tensor>> SgdPoly::state_dict(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    size_t k = 0;
    for (const auto& [name, v] : store_.items()) out.emplace_back(prefix + name + ".vel", velocity_[k++]);
    return out;
}

void SgdPoly::load_state_dict(const std::map<std::string, Tensor>& named, const std::string& prefix,
                              int iter) {
    size_t k = 0;
    for (const auto& [name, v] : store_.items()) {
        auto it = named.find(prefix + name + ".vel");
        LULC_CHECK(it != named.end(), "optimizer state missing " << prefix + name + ".vel");
        velocity_[k++] = it->second;
    }
    iter_ = iter;
}

// ---------------------------------------------------------------------------

Adam::Adam(ParamStore& store, double lr, double beta1, double beta2, double eps)
    : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, v] : store.items()) {
        m_.emplace_back(v.value().shape());
        v_.emplace_back(v.value().shape());
    }
}

void Adam::step() {
    ++iter_;
    const double bc1 = 1.0 - std::pow(beta1_, iter_);
    const double bc2 = 1.0 - std::pow(beta2_, iter_);
    size_t k = 0;
    for (auto& [name, p] : store_.items()) {
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        ++k;
        if (!p.has_grad()) continue;
        const Tensor& g = p.grad();
        Tensor& val = p.mutable_value();
        for (int i = 0; i < val.numel(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            val[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

std::vector<std::pair<std::string, Tensor>> Adam::state_dict(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    size_t k = 0;
    for (const auto& [name, p] : store_.items()) {
        out.emplace_back(prefix + name + ".m", m_[k]);
        out.emplace_back(prefix + name + ".v", v_[k]);
        ++k;
    }
    return out;
}

void Adam::load_state_dict(const std::map<std::string, Tensor>& named, const std::string& prefix,
                           int iter) {
    size_t k = 0;
    for (const auto& [name, p] : store_.items()) {
        auto im = named.find(prefix + name + ".m");
        auto iv = named.find(prefix + name + ".v");
        LULC_CHECK(im != named.end() && iv != named.end(),
                   "optimizer state missing moments for " << prefix + name);
        m_[k] = im->second;
        v_[k] = iv->second;
        ++k;
    }
    iter_ = iter;
}

}  // namespace lulc::nn
