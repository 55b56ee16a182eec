#pragma once

// Training objective for ordered eigenfunctions.
//
// Every form reduces to a k x k matrix M estimating R = E E[k(x,x') psi(x) psi(x')^T]
// on a batch, plus a copy M_hat whose left factor is stop-gradiented:
//
//   loss = -sum_j M_jj + alpha * sum_{i<j} M_hat_ij^2
//
// M_hat has the same forward value as M, so the stop-gradient only changes
// how the penalty's gradient is routed: dimension j is pushed away from the
// earlier dimensions i < j but never pulls them toward itself.

#include "eigenmap/autodiff.hpp"
#include "eigenmap/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace eigenmap {

enum class BatchScaling { OneOverB, OneOverBSquared };

struct ObjectiveConfig {
    double alpha = 1.0;
    std::size_t k = 1;
    bool use_stop_gradient = true;
    std::optional<BatchScaling> batch_scaling;  // unset: 1/b for pairs, 1/b^2 for gram forms

    void validate() const {
        if (!(alpha > 0.0)) throw Error("objective: alpha must be positive");
        if (k < 1) throw Error("objective: k must be at least 1");
    }
};

/// Penalty weight that keeps alpha * k fixed at the large-scale setting
/// (alpha = 0.0025 at k = 8192).
inline double alpha_scaled(std::size_t k) { return 0.0025 * 8192.0 / static_cast<double>(k); }

struct LossBreakdown {
    double total = 0.0;
    double diagonal_term = 0.0;
    double penalty_term = 0.0;
    std::vector<double> per_dimension;  // M_jj
};

struct LossResult {
    LossBreakdown breakdown;
    NodeId loss;
};

namespace detail {

inline double batch_factor(BatchScaling s, std::size_t b) {
    const double bb = static_cast<double>(b);
    return s == BatchScaling::OneOverB ? 1.0 / bb : 1.0 / (bb * bb);
}

inline Tensor strict_upper_mask(std::size_t k) {
    Tensor m = Tensor::matrix(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) m(i, j) = 1.0;
    return m;
}

/// Assembles the loss from M and M_hat nodes (both k x k, already scaled).
inline LossResult assemble(NodeId m, NodeId m_hat, const ObjectiveConfig& cfg, Tape& tape) {
    const std::size_t k = cfg.k;
    NodeId diag = tape.sum(tape.mask_mul(m, Tensor::identity(k)));
    NodeId pen = tape.sum(tape.square(tape.mask_mul(m_hat, strict_upper_mask(k))));
    NodeId loss = tape.add(tape.neg(diag), tape.scale(pen, cfg.alpha));

    LossResult r;
    r.loss = loss;
    r.breakdown.diagonal_term = tape.value(diag).item();
    r.breakdown.penalty_term = tape.value(pen).item();
    r.breakdown.total = tape.value(loss).item();
    const Tensor& mv = tape.value(m);
    for (std::size_t j = 0; j < k; ++j) r.breakdown.per_dimension.push_back(mv(j, j));
    return r;
}

inline void check_features(const Tensor& f, const ObjectiveConfig& cfg, const char* op) {
    f.require_matrix(op);
    if (f.rows() != cfg.k)
        throw ShapeError(std::string(op) + ": features have " + std::to_string(f.rows()) + " rows, expected k=" +
                         std::to_string(cfg.k));
}

}  // namespace detail

/// Augmentation-pair form: M = s * X X+^T with X, X+ the k x b features of
/// the two views.
inline LossResult pair_loss(NodeId features_x, NodeId features_xplus, const ObjectiveConfig& cfg, Tape& tape) {
    cfg.validate();
    const Tensor& x = tape.value(features_x);
    const Tensor& xp = tape.value(features_xplus);
    detail::check_features(x, cfg, "pair_loss");
    detail::check_features(xp, cfg, "pair_loss");
    if (x.shape() != xp.shape())
        throw ShapeError("pair_loss: view features differ in shape, " + shape_str(x.shape()) + " vs " + shape_str(xp.shape()));
    const double s = detail::batch_factor(cfg.batch_scaling.value_or(BatchScaling::OneOverB), x.cols());
    NodeId xpt = tape.transpose(features_xplus);
    NodeId m = tape.scale(tape.matmul(features_x, xpt), s);
    NodeId left_hat = cfg.use_stop_gradient ? tape.stop_gradient(features_x) : features_x;
    NodeId m_hat = tape.scale(tape.matmul(left_hat, xpt), s);
    return detail::assemble(m, m_hat, cfg, tape);
}

/// Gram form shared by graph and analytic kernels: M = s * G K G^T for k x b
/// features G and a b x b kernel block K.
inline LossResult kernel_block_loss(NodeId features, const Tensor& block, const ObjectiveConfig& cfg, Tape& tape,
                                    const char* op = "kernel_block_loss") {
    cfg.validate();
    const Tensor& f = tape.value(features);
    detail::check_features(f, cfg, op);
    block.require_matrix(op);
    if (block.rows() != f.cols() || block.cols() != f.cols())
        throw ShapeError(std::string(op) + ": block " + shape_str(block.shape()) + " does not match batch of " +
                         std::to_string(f.cols()));
    const double s = detail::batch_factor(cfg.batch_scaling.value_or(BatchScaling::OneOverBSquared), f.cols());
    NodeId kb = tape.constant(block);
    NodeId ft = tape.transpose(features);
    NodeId right = tape.matmul(kb, ft);  // b x k
    NodeId m = tape.scale(tape.matmul(features, right), s);
    NodeId left_hat = cfg.use_stop_gradient ? tape.stop_gradient(features) : features;
    NodeId m_hat = tape.scale(tape.matmul(left_hat, right), s);
    return detail::assemble(m, m_hat, cfg, tape);
}

inline LossResult graph_loss(NodeId features, const Tensor& adj_block, const ObjectiveConfig& cfg, Tape& tape) {
    return kernel_block_loss(features, adj_block, cfg, tape, "graph_loss");
}

inline LossResult analytic_kernel_loss(NodeId features, const Tensor& gram_block, const ObjectiveConfig& cfg,
                                       Tape& tape) {
    return kernel_block_loss(features, gram_block, cfg, tape, "analytic_kernel_loss");
}

/// Closed-form gradient of pair_loss with respect to both feature matrices,
/// derived by hand with the hatted factor held constant when stop-gradient
/// is on.
struct PairGradient {
    Tensor d_x;      // k x b
    Tensor d_xplus;  // k x b
};

inline PairGradient pair_loss_closed_form_gradient(const Tensor& x, const Tensor& xp, const ObjectiveConfig& cfg) {
    cfg.validate();
    detail::check_features(x, cfg, "pair_loss_closed_form_gradient");
    if (x.shape() != xp.shape()) throw ShapeError("pair_loss_closed_form_gradient: shape mismatch");
    const std::size_t k = x.rows(), b = x.cols();
    const double s = detail::batch_factor(cfg.batch_scaling.value_or(BatchScaling::OneOverB), b);
    Tensor m = Tensor::matrix(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t n = 0; n < b; ++n) acc += x(i, n) * xp(j, n);
            m(i, j) = s * acc;
        }
    PairGradient g{Tensor::matrix(k, b), Tensor::matrix(k, b)};
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t n = 0; n < b; ++n) {
            // diagonal term, both factors live
            g.d_x(j, n) = -s * xp(j, n);
            g.d_xplus(j, n) = -s * x(j, n);
        }
    // penalty alpha * sum_{i<j} M_ij^2; M_ij = s sum_n x_in xp_jn
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const double c = 2.0 * cfg.alpha * m(i, j) * s;
            for (std::size_t n = 0; n < b; ++n) {
                g.d_xplus(j, n) += c * x(i, n);
                if (!cfg.use_stop_gradient) g.d_x(i, n) += c * xp(j, n);
            }
        }
    return g;
}

/// Averages the per-dimension diagonal values of a stream of breakdowns.
/// `rescale` converts the batch scaling in use to operator units.
inline std::vector<double> eigenvalue_estimates(const std::vector<LossBreakdown>& breakdowns, double rescale = 1.0) {
    if (breakdowns.empty()) throw Error("eigenvalue_estimates: empty stream");
    const std::size_t k = breakdowns.front().per_dimension.size();
    std::vector<double> mu(k, 0.0);
    for (const LossBreakdown& b : breakdowns) {
        if (b.per_dimension.size() != k) throw ShapeError("eigenvalue_estimates: inconsistent k in stream");
        for (std::size_t j = 0; j < k; ++j) mu[j] += b.per_dimension[j];
    }
    for (double& v : mu) v *= rescale / static_cast<double>(breakdowns.size());
    return mu;
}

}  // namespace eigenmap
