#pragma once

#include "eigenmap/autodiff.hpp"
#include "eigenmap/kernels.hpp"
#include "eigenmap/models.hpp"
#include "eigenmap/objective.hpp"
#include "eigenmap/optim.hpp"
#include "eigenmap/rng.hpp"
#include "eigenmap/tensor.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace eigenmap {

/// Raised when the loss or parameters stop being finite. Carries the last
/// finite loss so the caller can report how training got there.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, std::size_t step, double lr, std::optional<LossBreakdown> last)
        : NumericError(what), step_(step), lr_(lr), last_(std::move(last)) {}
    std::size_t step() const { return step_; }
    double lr() const { return lr_; }
    const std::optional<LossBreakdown>& last_finite() const { return last_; }

private:
    std::size_t step_;
    double lr_;
    std::optional<LossBreakdown> last_;
};

/// Epoch-wise shuffled batches over a fixed node (or point) list. Each epoch
/// is a fresh permutation; a ragged final batch is dropped.
class NodeBatchSampler {
public:
    NodeBatchSampler(std::vector<std::size_t> nodes, std::size_t batch_size, std::uint64_t seed)
        : nodes_(std::move(nodes)), b_(batch_size), rng_(make_stream(seed, "sampler")) {
        if (b_ == 0) throw Error("node_batch_sampler: batch size must be positive");
    }

    NodeBatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
        : NodeBatchSampler(iota_list(n), batch_size, seed) {}

    std::size_t batches_per_epoch() const { return nodes_.size() / b_; }

    /// All batches of the next epoch.
    std::vector<std::vector<std::size_t>> epoch() {
        std::vector<std::size_t> perm = nodes_;
        std::shuffle(perm.begin(), perm.end(), rng_);
        std::vector<std::vector<std::size_t>> out;
        for (std::size_t s = 0; s + b_ <= perm.size(); s += b_)
            out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(s), perm.begin() + static_cast<std::ptrdiff_t>(s + b_));
        return out;
    }

private:
    std::vector<std::size_t> nodes_;
    std::size_t b_;
    Rng rng_;

    static std::vector<std::size_t> iota_list(std::size_t n) {
        std::vector<std::size_t> v(n);
        std::iota(v.begin(), v.end(), std::size_t{0});
        return v;
    }
};

// ---------------------------------------------------------------------------
// Batch sources: each builds one step's loss on a tape.

class BatchSource {
public:
    virtual ~BatchSource() = default;
    virtual std::size_t batch_size() const = 0;
    virtual std::size_t steps_per_epoch() const = 0;
    virtual void begin_epoch() = 0;
    /// Loss for batch `i` of the current epoch.
    virtual LossResult step_loss(std::size_t i, EigenModel& model, const ModelBinding& binding,
                                 const ObjectiveConfig& obj, Tape& tape) = 0;
    /// Factor taking M_jj to operator eigenvalue units.
    virtual double eigenvalue_rescale(const ObjectiveConfig& obj) const = 0;
};

/// Augmentation pairs drawn with replacement; an epoch is a fixed step count.
class PairSource : public BatchSource {
public:
    PairSource(PairSampler sampler, std::size_t batch_size, std::size_t steps_per_epoch)
        : sampler_(std::move(sampler)), b_(batch_size), steps_(steps_per_epoch) {}

    std::size_t batch_size() const override { return b_; }
    std::size_t steps_per_epoch() const override { return steps_; }
    void begin_epoch() override {}
    LossResult step_loss(std::size_t, EigenModel& model, const ModelBinding& binding, const ObjectiveConfig& obj,
                         Tape& tape) override {
        PairBatch pb = sampler_.sample(b_);
        NodeId x = model.forward_train(binding, pb.views, tape);
        NodeId xp = model.forward_train(binding, pb.views_plus, tape);
        return pair_loss(x, xp, obj, tape);
    }
    double eigenvalue_rescale(const ObjectiveConfig&) const override { return 1.0; }

private:
    PairSampler sampler_;
    std::size_t b_, steps_;
};

/// A fixed point set under an analytic kernel. The full gram is cached so each
/// batch block is a gather.
class KernelPointSource : public BatchSource {
public:
    KernelPointSource(Tensor points, const AnalyticKernel& kernel, std::size_t batch_size, std::uint64_t seed,
                      double shift = 0.0)
        : points_(std::move(points)),
          gram_(shift_gram(gram_matrix(kernel, points_), shift)),
          sampler_(points_.rows(), batch_size, seed),
          b_(batch_size) {}

    std::size_t batch_size() const override { return b_; }
    std::size_t steps_per_epoch() const override { return sampler_.batches_per_epoch(); }
    void begin_epoch() override { batches_ = sampler_.epoch(); }
    LossResult step_loss(std::size_t i, EigenModel& model, const ModelBinding& binding, const ObjectiveConfig& obj,
                         Tape& tape) override {
        const auto& idx = batches_.at(i);
        NodeId f = model.forward_train(binding, gather_rows(points_, idx), tape);
        return analytic_kernel_loss(f, gather_cols(gather_rows(gram_, idx), idx), obj, tape);
    }
    double eigenvalue_rescale(const ObjectiveConfig& obj) const override {
        return obj.batch_scaling.value_or(BatchScaling::OneOverBSquared) == BatchScaling::OneOverB
                   ? 1.0 / static_cast<double>(b_)
                   : 1.0;
    }
    const Tensor& gram() const { return gram_; }

private:
    Tensor points_;
    Tensor gram_;
    NodeBatchSampler sampler_;
    std::size_t b_;
    std::vector<std::vector<std::size_t>> batches_;
};

/// Node minibatches of a graph. Isolated nodes are excluded from sampling.
/// Input is the node feature matrix when present, otherwise node ids.
class GraphSource : public BatchSource {
public:
    GraphSource(const GraphDataset& graph, std::size_t batch_size, std::uint64_t seed,
                DegreeNormalization norm = DegreeNormalization::InverseSqrt, bool use_features = true)
        : graph_(&graph),
          norm_(norm),
          use_features_(use_features && graph.has_features()),
          sampler_(connected_nodes(graph), batch_size, seed),
          b_(batch_size) {}

    std::size_t batch_size() const override { return b_; }
    std::size_t steps_per_epoch() const override { return sampler_.batches_per_epoch(); }
    void begin_epoch() override { batches_ = sampler_.epoch(); }
    LossResult step_loss(std::size_t i, EigenModel& model, const ModelBinding& binding, const ObjectiveConfig& obj,
                         Tape& tape) override {
        const auto& idx = batches_.at(i);
        ModelInput in = use_features_ ? ModelInput{gather_rows(graph_->features(), idx)} : ModelInput{idx};
        NodeId f = model.forward_train(binding, in, tape);
        return graph_loss(f, normalized_adjacency_block(*graph_, idx, norm_), obj, tape);
    }
    double eigenvalue_rescale(const ObjectiveConfig& obj) const override {
        const double n = static_cast<double>(graph_->num_nodes());
        return obj.batch_scaling.value_or(BatchScaling::OneOverBSquared) == BatchScaling::OneOverB
                   ? n / static_cast<double>(b_)
                   : n;
    }

private:
    const GraphDataset* graph_;
    DegreeNormalization norm_;
    bool use_features_;
    NodeBatchSampler sampler_;
    std::size_t b_;
    std::vector<std::vector<std::size_t>> batches_;

    static std::vector<std::size_t> connected_nodes(const GraphDataset& g) {
        std::vector<std::size_t> out;
        for (std::size_t u = 0; u < g.num_nodes(); ++u)
            if (g.degrees()[u] > 0.0) out.push_back(u);
        return out;
    }
};

// ---------------------------------------------------------------------------

struct TrainConfig {
    OptimizerConfig optimizer;
    double lr = 0.1;
    Schedule schedule = Schedule::Cosine;
    std::size_t epochs = 1;
    std::size_t checkpoint_every = 0;  // steps; 0 keeps only the final checkpoint
    std::size_t estimate_window = 50;  // trailing batches averaged for eigenvalue estimates
    std::optional<std::filesystem::path> run_dir;
};

struct LogRow {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;
};

struct RunLog {
    std::size_t k = 0;
    std::vector<LogRow> rows;
    std::vector<double> epoch_seconds;  // wall clock; never written to log.csv
    std::vector<double> eigenvalue_estimates;
    std::size_t steps = 0;

    static std::string header(std::size_t k) {
        std::string h = "step,total,diagonal_term,penalty_term";
        for (std::size_t j = 1; j <= k; ++j) h += ",mu_" + std::to_string(j);
        return h;
    }

    static std::string format_row(const LogRow& r) {
        char buf[64];
        std::string s = std::to_string(r.step);
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            s += buf;
        };
        put(r.loss.total);
        put(r.loss.diagonal_term);
        put(r.loss.penalty_term);
        for (double v : r.loss.per_dimension) put(v);
        return s;
    }

    void write_csv(std::ostream& os) const {
        os << header(k) << '\n';
        for (const LogRow& r : rows) os << format_row(r) << '\n';
    }

    std::vector<double> totals() const {
        std::vector<double> t;
        for (const LogRow& r : rows) t.push_back(r.loss.total);
        return t;
    }
};

/// Exponentially smoothed total loss sampled at the end of each window.
inline std::vector<double> smoothed_loss(const RunLog& log, std::size_t window, double beta = 0.99) {
    std::vector<double> out;
    double ema = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
        const double v = log.rows[i].loss.total;
        ema = first ? v : beta * ema + (1.0 - beta) * v;
        first = false;
        if ((i + 1) % window == 0) out.push_back(ema);
    }
    return out;
}

inline std::string checkpoint_name(std::size_t step) { return "ckpt_" + std::to_string(step); }

/// Runs the training loop. Deterministic for a fixed model seed and source
/// seed; writes log.csv and checkpoints when a run directory is configured.
inline RunLog train(EigenModel& model, BatchSource& source, const ObjectiveConfig& obj, const TrainConfig& cfg) {
    obj.validate();
    if (obj.k != model.spec().k)
        throw Error("train: objective k=" + std::to_string(obj.k) + " does not match model k=" + std::to_string(model.spec().k));
    if (obj.k > source.batch_size())
        throw Error("train: k=" + std::to_string(obj.k) + " exceeds batch size " + std::to_string(source.batch_size()));
    if (!(cfg.lr > 0.0)) throw Error("train: learning rate must be positive");

    RunLog log;
    log.k = obj.k;
    const std::size_t per_epoch = source.steps_per_epoch();
    const std::size_t total = per_epoch * cfg.epochs;
    log.steps = total;

    std::ofstream csv;
    if (cfg.run_dir) {
        std::filesystem::create_directories(*cfg.run_dir);
        csv.open(*cfg.run_dir / "log.csv", std::ios::binary);
        if (!csv) throw Error("train: cannot write " + (*cfg.run_dir / "log.csv").string());
        csv << RunLog::header(obj.k) << '\n';
    }
    if (total == 0) return log;

    Optimizer opt(cfg.optimizer);
    std::optional<LossBreakdown> last_finite;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        source.begin_epoch();
        for (std::size_t i = 0; i < per_epoch; ++i, ++step) {
            const double lr = scheduled_lr(cfg.lr, cfg.schedule, step, total);
            Tape tape;
            ModelBinding binding = model.bind(tape);
            LossResult res;
            Gradients grads;
            try {
                res = source.step_loss(i, model, binding, obj, tape);
                grads = tape.backward(res.loss);
            } catch (const NumericError& e) {
                throw TrainingDiverged("training diverged at step " + std::to_string(step) + " (lr " +
                                           std::to_string(lr) + "): " + e.what(),
                                       step, lr, last_finite);
            }
            std::vector<ParamRef> params = model.parameters();
            opt.step(params, gather_gradients(grads, binding), lr);
            for (const ParamRef& p : params)
                if (!p.tensor->all_finite())
                    throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": parameter " + p.name +
                                               " became non-finite (lr " + std::to_string(lr) + ")",
                                           step, lr, last_finite);
            last_finite = res.breakdown;
            LogRow row{step, epoch, lr, res.breakdown};
            if (csv.is_open()) csv << RunLog::format_row(row) << '\n';
            log.rows.push_back(std::move(row));
            if (cfg.run_dir && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < total)
                model.save((*cfg.run_dir / checkpoint_name(step + 1)).string());
        }
        log.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    if (cfg.run_dir) model.save((*cfg.run_dir / checkpoint_name(total)).string());

    const std::size_t w = std::min(std::max<std::size_t>(cfg.estimate_window, 1), log.rows.size());
    std::vector<LossBreakdown> tail;
    for (std::size_t i = log.rows.size() - w; i < log.rows.size(); ++i) tail.push_back(log.rows[i].loss);
    log.eigenvalue_estimates = eigenvalue_estimates(tail, source.eigenvalue_rescale(obj));
    return log;
}

}  // namespace eigenmap
