#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "focalforge/autograd.hpp"
#include "focalforge/rng.hpp"

namespace focalforge::nn {

/// Named parameter registry for a network. Names give the checkpoint its
/// tensor directory; the decay flag marks parameters subject to weight decay.
class ParamMap {
public:
    ag::Var add(const std::string& name, Tensor init, bool decay) {
        ag::Var v = ag::param(std::move(init));
        names_.push_back(name);
        vars_.push_back(v);
        decay_.push_back(decay);
        return v;
    }

    const std::vector<std::string>& names() const { return names_; }
    const std::vector<ag::Var>& vars() const { return vars_; }
    const std::vector<bool>& decay_flags() const { return decay_; }

    ag::Var find(const std::string& name) const {
        for (size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return vars_[i];
        return nullptr;
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& v : vars_) n += v->value.size();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<ag::Var> vars_;
    std::vector<bool> decay_;
};

struct Conv2d {
    ag::Var w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamMap& pm, const std::string& name, int in_ch, int out_ch, int k, int stride_,
           int pad_, Rng& rng, bool zero_init = false)
        : stride(stride_), pad(pad_) {
        const double std = zero_init ? 0.0 : std::sqrt(2.0 / (in_ch * k * k));
        w = pm.add(name + ".w", rng.normal_tensor({out_ch, in_ch, k, k}, std), true);
        b = pm.add(name + ".b", Tensor({out_ch}), false);
    }

    ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

struct Linear {
    ag::Var w, b;

    Linear() = default;
    Linear(ParamMap& pm, const std::string& name, int in_f, int out_f, Rng& rng,
           bool zero_init = false) {
        const double std = zero_init ? 0.0 : std::sqrt(1.0 / in_f);
        w = pm.add(name + ".w", rng.normal_tensor({out_f, in_f}, std), true);
        b = pm.add(name + ".b", Tensor({out_f}), false);
    }

    ag::Var operator()(const ag::Var& x) const { return ag::linear(x, w, b); }
};

struct LayerNorm {
    ag::Var gamma, beta;

    LayerNorm() = default;
    LayerNorm(ParamMap& pm, const std::string& name, int dim) {
        gamma = pm.add(name + ".gamma", Tensor::full({dim}, 1.0), false);
        beta = pm.add(name + ".beta", Tensor({dim}), false);
    }

    ag::Var operator()(const ag::Var& x) const { return ag::layer_norm_lastdim(x, gamma, beta); }
};

struct GroupNorm {
    ag::Var gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(ParamMap& pm, const std::string& name, int channels, int groups_)
        : groups(groups_) {
        gamma = pm.add(name + ".gamma", Tensor::full({channels}, 1.0), false);
        beta = pm.add(name + ".beta", Tensor({channels}), false);
    }

    ag::Var operator()(const ag::Var& x) const { return ag::group_norm(x, groups, gamma, beta); }
};

/// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(const ParamMap& pm, double lr, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8, double weight_decay = 1e-4)
        : params_(pm.vars()),
          decay_(pm.decay_flags()),
          lr_(lr),
          beta1_(beta1),
          beta2_(beta2),
          eps_(eps),
          wd_(weight_decay) {
        for (const auto& p : params_) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void zero_grad() {
        for (auto& p : params_) {
            p->ensure_grad();
            p->grad.fill(0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            p->ensure_grad();
            Tensor& m = m_[k];
            Tensor& v = v_[k];
            const bool decay = decay_[k];
            for (std::int64_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                double upd = mhat / (std::sqrt(vhat) + eps_);
                if (decay) upd += wd_ * p->value[i];
                p->value[i] -= lr_ * upd;
            }
        }
    }

private:
    std::vector<ag::Var> params_;
    std::vector<bool> decay_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_, wd_;
    long t_ = 0;
};

/// FNV-1a over the raw bytes of all parameters in registration order; used by
/// the backbone freeze contract.
inline std::uint64_t param_hash(const ParamMap& pm) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& v : pm.vars()) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(v->value.data());
        const size_t nb = static_cast<size_t>(v->value.size()) * sizeof(double);
        for (size_t i = 0; i < nb; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

}  // namespace focalforge::nn
