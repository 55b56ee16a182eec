#pragma once

#include "eigenmap/autodiff.hpp"
#include "eigenmap/models.hpp"
#include "eigenmap/tensor.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace eigenmap {

enum class OptimizerKind { SgdMomentum, Lars, Adam };
enum class Schedule { Constant, Cosine };

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::SgdMomentum;
    if (s == "lars") return OptimizerKind::Lars;
    if (s == "adam") return OptimizerKind::Adam;
    throw Error("unknown optimizer '" + s + "' (expected sgd_momentum, lars or adam)");
}

inline const char* optimizer_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::SgdMomentum: return "sgd_momentum";
        case OptimizerKind::Lars: return "lars";
        case OptimizerKind::Adam: return "adam";
    }
    return "?";
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::SgdMomentum;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double lars_trust = 0.001;  // eta in the layer-wise trust ratio
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
};

/// Learning rate at `step` of `total` steps; cosine decays to exactly zero on
/// the last step.
inline double scheduled_lr(double base, Schedule s, std::size_t step, std::size_t total) {
    if (s == Schedule::Constant || total <= 1) return base;
    const double t = static_cast<double>(step) / static_cast<double>(total - 1);
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// First-order optimizer over a model's parameter list. Weight decay skips
/// normalization parameters; LARS applies its trust ratio to weight matrices
/// only (biases and normalization parameters take plain momentum steps).
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    const OptimizerConfig& config() const { return cfg_; }

    void step(std::vector<ParamRef>& params, const std::vector<Tensor>& grads, double lr) {
        if (params.size() != grads.size()) throw Error("optimizer: parameter/gradient count mismatch");
        if (slot1_.empty()) {
            for (const ParamRef& p : params) {
                slot1_.emplace_back(p.tensor->shape(), 0.0);
                slot2_.emplace_back(p.tensor->shape(), 0.0);
            }
        }
        ++t_;
        double clip = 1.0;
        if (cfg_.grad_clip > 0.0) {
            double sq = 0.0;
            for (const Tensor& g : grads)
                for (double v : g.data()) sq += v * v;
            const double nrm = std::sqrt(sq);
            if (nrm > cfg_.grad_clip) clip = cfg_.grad_clip / nrm;
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& w = *params[i].tensor;
            Tensor d = grads[i];
            if (d.shape() != w.shape()) throw ShapeError("optimizer: gradient shape mismatch for " + params[i].name);
            const double wd = params[i].is_normalization ? 0.0 : cfg_.weight_decay;
            for (std::size_t j = 0; j < d.size(); ++j) d[j] = clip * d[j] + wd * w[j];
            switch (cfg_.kind) {
                case OptimizerKind::SgdMomentum: momentum_step(w, d, slot1_[i], lr); break;
                case OptimizerKind::Lars: {
                    const bool adapt = w.rank() == 2 && w.rows() > 1 && !params[i].is_normalization;
                    if (adapt) {
                        const double wn = frobenius_norm(w), dn = frobenius_norm(d);
                        if (wn > 0.0 && dn > 0.0) {
                            const double trust = cfg_.lars_trust * wn / dn;
                            for (double& v : d.data()) v *= trust;
                        }
                    }
                    momentum_step(w, d, slot1_[i], lr);
                    break;
                }
                case OptimizerKind::Adam: adam_step(w, d, slot1_[i], slot2_[i], lr); break;
            }
        }
    }

private:
    OptimizerConfig cfg_;
    std::vector<Tensor> slot1_, slot2_;
    std::size_t t_ = 0;

    void momentum_step(Tensor& w, const Tensor& d, Tensor& v, double lr) const {
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = cfg_.momentum * v[j] + d[j];
            w[j] -= lr * v[j];
        }
    }

    void adam_step(Tensor& w, const Tensor& d, Tensor& m, Tensor& v, double lr) const {
        const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * d[j];
            v[j] = b2 * v[j] + (1.0 - b2) * d[j] * d[j];
            w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.adam_eps);
        }
    }
};

/// Gradients for each bound parameter node, in parameter order.
inline std::vector<Tensor> gather_gradients(const Gradients& g, const ModelBinding& binding) {
    std::vector<Tensor> out;
    out.reserve(binding.nodes.size());
    for (NodeId id : binding.nodes) out.push_back(g.at(id));
    return out;
}

}  // namespace eigenmap
