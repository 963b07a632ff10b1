#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "karmanet/rng.hpp"
#include "karmanet/tensor.hpp"

namespace karmanet {

inline constexpr double kLrelSlope = 0.1;

// Leaky rectifier, slope 0.1 on the negative side. Derivative at 0 is 1.
template <typename Real>
Real lrel(Real x) {
    return x >= Real(0) ? x : Real(kLrelSlope) * x;
}

// lrel is sign preserving, so the derivative can be read off the output.
template <typename Real>
Real lrel_deriv_from_output(Real y) {
    return y >= Real(0) ? Real(1) : Real(kLrelSlope);
}

template <typename Real>
Real sigmoid(Real x) {
    if (x >= Real(0)) {
        Real e = std::exp(-x);
        return Real(1) / (Real(1) + e);
    }
    Real e = std::exp(x);
    return e / (Real(1) + e);
}

// In-place stable softmax (max subtraction).
template <typename Real>
void softmax_inplace(Real* s, int n) {
    Real mx = s[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, s[i]);
    Real sum = 0;
    for (int i = 0; i < n; ++i) {
        s[i] = std::exp(s[i] - mx);
        sum += s[i];
    }
    for (int i = 0; i < n; ++i) s[i] /= sum;
}

template <typename Real>
std::vector<Real> softmax(std::vector<Real> s) {
    softmax_inplace(s.data(), static_cast<int>(s.size()));
    return s;
}

// One named parameter tensor with its gradient accumulator.
template <typename Real>
struct Param {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;

    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
};

// Registry over the parameters of one model. Non-owning: the model owns the
// Param members and registers them in a fixed order, which pins down
// initialization draws, Adam iteration and serialization.
template <typename Real>
class ParamStore {
public:
    void add(Param<Real>& p) {
        for (const auto* q : slots_)
            if (q->name == p.name) throw std::logic_error("duplicate parameter name: " + p.name);
        slots_.push_back(&p);
    }

    const std::vector<Param<Real>*>& slots() const { return slots_; }

    Param<Real>* find(const std::string& name) const {
        for (auto* p : slots_)
            if (p->name == name) return p;
        return nullptr;
    }

    std::int64_t total_size() const {
        std::int64_t n = 0;
        for (auto* p : slots_) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (auto* p : slots_) p->grad.fill(Real(0));
    }

    std::vector<Real> snapshot() const {
        std::vector<Real> out;
        out.reserve(static_cast<std::size_t>(total_size()));
        for (auto* p : slots_) out.insert(out.end(), p->value.a.begin(), p->value.a.end());
        return out;
    }

    void restore(const std::vector<Real>& flat) {
        std::size_t off = 0;
        for (auto* p : slots_) {
            std::copy(flat.begin() + off, flat.begin() + off + p->value.a.size(),
                      p->value.a.begin());
            off += p->value.a.size();
        }
        if (off != flat.size()) throw std::invalid_argument("snapshot size mismatch");
    }

    // Gaussian init, sigma 0.1, for every tensor whose name is not a bias;
    // biases (name contains ".b_") start at zero. Draw order = registration order.
    void init_gaussian(Rng& rng, double sigma = 0.1) {
        for (auto* p : slots_) {
            bool is_bias = p->name.find(".b_") != std::string::npos;
            for (auto& x : p->value.a)
                x = is_bias ? Real(0) : static_cast<Real>(sigma * rng.normal());
            p->grad.fill(Real(0));
        }
    }

private:
    std::vector<Param<Real>*> slots_;
};

// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
template <typename Real>
class AdamState {
public:
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(const ParamStore<Real>& params, double learning_rate = 0.001)
        : lr(learning_rate) {
        for (auto* p : params.slots()) {
            m_.emplace_back(p->value.rows, p->value.cols);
            v_.emplace_back(p->value.rows, p->value.cols);
        }
    }

    std::int64_t step_count() const { return t_; }

    // Applies one update from the accumulated gradients, then zeroes them.
    void step(ParamStore<Real>& params) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        const auto& slots = params.slots();
        for (std::size_t i = 0; i < slots.size(); ++i) {
            auto& val = slots[i]->value.a;
            auto& grd = slots[i]->grad.a;
            auto& m = m_[i].a;
            auto& v = v_[i].a;
            for (std::size_t j = 0; j < val.size(); ++j) {
                double g = static_cast<double>(grd[j]);
                m[j] = Real(beta1 * m[j] + (1.0 - beta1) * g);
                v[j] = Real(beta2 * v[j] + (1.0 - beta2) * g * g);
                double mhat = m[j] / bc1;
                double vhat = v[j] / bc2;
                val[j] -= Real(lr * mhat / (std::sqrt(vhat) + eps));
                grd[j] = Real(0);
            }
        }
    }

private:
    std::int64_t t_ = 0;
    std::vector<Tensor<Real>> m_, v_;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central-difference check of the gradients currently held in `params`
// against `loss`, which must evaluate the loss without touching gradients.
template <typename Real>
GradCheckReport grad_check(ParamStore<Real>& params,
                           const std::function<double()>& loss,
                           double eps = 1e-5) {
    GradCheckReport rep;
    for (auto* p : params.slots()) {
        for (int i = 0; i < p->value.size(); ++i) {
            Real saved = p->value[i];
            p->value[i] = saved + Real(eps);
            double lp = loss();
            p->value[i] = saved - Real(eps);
            double lm = loss();
            p->value[i] = saved;
            double numeric = (lp - lm) / (2.0 * eps);
            double analytic = static_cast<double>(p->grad[i]);
            double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            double rel = std::fabs(analytic - numeric) / denom;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = p->name;
                rep.worst_index = i;
                rep.worst_analytic = analytic;
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace karmanet
