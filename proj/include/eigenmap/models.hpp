#pragma once

// Candidate eigenfunction networks: an MLP encoder, an optional MLP
// projector, and an L2 batch-normalization head that rescales every output
// dimension to unit second moment over the batch.

#include "eigenmap/autodiff.hpp"
#include "eigenmap/rng.hpp"
#include "eigenmap/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace eigenmap {

enum class Activation { Relu };

struct MlpSpec {
    std::vector<std::size_t> widths;  // output width of each linear layer
    Activation activation = Activation::Relu;
    bool residual = false;            // skip connection on equal-width hidden layers
    bool hidden_batchnorm = false;

    std::size_t out_width() const { return widths.empty() ? 0 : widths.back(); }
};

struct BatchNormLayer {
    Tensor gamma, beta;               // 1 x w
    Tensor running_mean, running_var; // 1 x w
    bool populated = false;
};

struct DenseLayer {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
    std::optional<BatchNormLayer> bn;
    bool activate = false;
    bool residual = false;
};

struct L2BatchNormState {
    Tensor running_second_moment;  // 1 x k
    double momentum = 0.9;
    double epsilon = 1e-12;
    bool populated = false;
};

/// Whether the first layer sees dense features or node ids (one-hot inputs,
/// computed as a row lookup into the first weight matrix).
enum class InputKind { Dense, NodeIds };

enum class Tap { Encoder, Head };

struct ModelSpec {
    std::size_t input_dim = 1;
    InputKind input_kind = InputKind::Dense;
    MlpSpec encoder;
    std::optional<MlpSpec> projector;
    std::size_t k = 1;
    double l2bn_momentum = 0.9;
    double l2bn_epsilon = 1e-12;
    double bn_momentum = 0.9;
    double bn_epsilon = 1e-5;
    std::uint64_t seed = 0;
};

/// A parameter tensor of the model together with its role.
struct ParamRef {
    Tensor* tensor;
    std::string name;
    bool is_normalization;  // excluded from weight decay
};

/// Tape node ids of every parameter, aligned with EigenModel::parameters().
struct ModelBinding {
    std::vector<NodeId> nodes;
};

using ModelInput = std::variant<Tensor, std::vector<std::size_t>>;

class EigenModel {
public:
    explicit EigenModel(ModelSpec spec) : spec_(std::move(spec)) {
        if (spec_.encoder.widths.empty()) throw Error("model: encoder needs at least one layer");
        if (spec_.k == 0) throw Error("model: k must be positive");
        const std::size_t out = spec_.projector ? spec_.projector->out_width() : spec_.encoder.out_width();
        if (spec_.projector && spec_.projector->widths.empty()) throw Error("model: projector needs at least one layer");
        if (out != spec_.k)
            throw Error("model: final layer width " + std::to_string(out) + " does not equal k=" + std::to_string(spec_.k));
        if (!(spec_.l2bn_momentum >= 0.0 && spec_.l2bn_momentum < 1.0)) throw Error("model: l2bn momentum must lie in [0, 1)");
        for (std::size_t w : spec_.encoder.widths)
            if (w == 0) throw Error("model: layer widths must be positive");

        Rng rng = make_stream(spec_.seed, "init");
        std::size_t in = spec_.input_dim;
        const bool enc_all_hidden = spec_.projector.has_value();
        build(encoder_, spec_.encoder, in, enc_all_hidden, rng);
        in = spec_.encoder.out_width();
        if (spec_.projector) build(projector_, *spec_.projector, in, false, rng);
        l2bn_.running_second_moment = Tensor::matrix(1, spec_.k, 1.0);
        l2bn_.momentum = spec_.l2bn_momentum;
        l2bn_.epsilon = spec_.l2bn_epsilon;
    }

    const ModelSpec& spec() const { return spec_; }
    std::size_t k() const { return spec_.k; }
    const L2BatchNormState& l2bn() const { return l2bn_; }
    L2BatchNormState& l2bn() { return l2bn_; }
    std::size_t representation_dim(Tap tap) const {
        return tap == Tap::Head ? spec_.k : spec_.encoder.out_width();
    }

    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        collect(out, encoder_, "encoder");
        collect(out, projector_, "projector");
        return out;
    }

    ModelBinding bind(Tape& tape) {
        ModelBinding b;
        for (ParamRef& p : parameters()) b.nodes.push_back(tape.parameter(*p.tensor));
        return b;
    }

    /// Training-mode forward. Returns the k x b output node; updates running
    /// statistics. `encoder_out`, when given, receives the b x h encoder node.
    NodeId forward_train(const ModelBinding& binding, const ModelInput& input, Tape& tape,
                         NodeId* encoder_out = nullptr) {
        const std::size_t b = batch_size(input);
        if (b < 2) throw Error("forward_train: batch size must be at least 2, got " + std::to_string(b));
        std::size_t cursor = 0;
        NodeId h = run_stack(encoder_, binding, cursor, &input, NodeId{}, tape, true);
        if (encoder_out) *encoder_out = h;
        if (!projector_.empty()) h = run_stack(projector_, binding, cursor, nullptr, h, tape, true);

        // L2 batch normalization
        NodeId ms = tape.mean_rows(tape.square(h));
        NodeId denom = tape.sqrt(tape.add_scalar(ms, l2bn_.epsilon));
        NodeId y = tape.div(h, denom);
        update_running(l2bn_.running_second_moment, tape.value(ms), l2bn_.momentum, l2bn_.populated);
        l2bn_.populated = true;
        return tape.transpose(y);
    }

    NodeId forward_train(const ModelInput& input, Tape& tape) { return forward_train(bind(tape), input, tape); }

    /// Eval-mode forward on running statistics: k x b, no tape.
    Tensor forward_eval(const ModelInput& input) const {
        return embed(input, Tap::Head).transposed();
    }

    /// Eval-mode representation with samples as rows (b x dim) at the chosen tap.
    Tensor embed(const ModelInput& input, Tap tap = Tap::Head) const {
        if (!l2bn_.populated) throw Error("forward_eval: running statistics not populated; train at least one step");
        Tensor h = eval_stack(encoder_, &input, Tensor{});
        if (tap == Tap::Encoder) return h;
        if (!projector_.empty()) h = eval_stack(projector_, nullptr, h);
        for (std::size_t i = 0; i < h.rows(); ++i)
            for (std::size_t j = 0; j < h.cols(); ++j)
                h(i, j) /= std::sqrt(l2bn_.running_second_moment[j] + l2bn_.epsilon);
        return h;
    }

    // -- checkpoint -----------------------------------------------------------

    void save(const std::string& path) const;
    static EigenModel load(const std::string& path);

    friend bool operator==(const EigenModel& a, const EigenModel& b);

private:
    ModelSpec spec_;
    std::vector<DenseLayer> encoder_;
    std::vector<DenseLayer> projector_;
    L2BatchNormState l2bn_;

    static std::size_t batch_size(const ModelInput& in) {
        if (auto* t = std::get_if<Tensor>(&in)) return t->rows();
        return std::get<std::vector<std::size_t>>(in).size();
    }

    void build(std::vector<DenseLayer>& layers, const MlpSpec& m, std::size_t in, bool all_hidden, Rng& rng) {
        for (std::size_t i = 0; i < m.widths.size(); ++i) {
            const std::size_t out = m.widths[i];
            const bool last = i + 1 == m.widths.size();
            DenseLayer L;
            const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
            L.weight = Tensor::matrix(in, out);
            for (double& w : L.weight.data()) w = uniform(rng, -lim, lim);
            L.bias = Tensor::matrix(1, out, 0.0);
            L.activate = !last || all_hidden;
            if (L.activate && m.hidden_batchnorm) {
                BatchNormLayer bn;
                bn.gamma = Tensor::matrix(1, out, 1.0);
                bn.beta = Tensor::matrix(1, out, 0.0);
                bn.running_mean = Tensor::matrix(1, out, 0.0);
                bn.running_var = Tensor::matrix(1, out, 1.0);
                L.bn = bn;
            }
            L.residual = m.residual && L.activate && in == out && i > 0;
            layers.push_back(std::move(L));
            in = out;
        }
    }

    static void collect(std::vector<ParamRef>& out, std::vector<DenseLayer>& layers, const std::string& prefix) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string p = prefix + "." + std::to_string(i);
            out.push_back({&layers[i].weight, p + ".weight", false});
            out.push_back({&layers[i].bias, p + ".bias", false});
            if (layers[i].bn) {
                out.push_back({&layers[i].bn->gamma, p + ".bn.gamma", true});
                out.push_back({&layers[i].bn->beta, p + ".bn.beta", true});
            }
        }
    }

    static void update_running(Tensor& running, const Tensor& batch, double momentum, bool populated) {
        for (std::size_t j = 0; j < running.size(); ++j)
            running[j] = populated ? momentum * running[j] + (1.0 - momentum) * batch[j] : batch[j];
    }

    NodeId run_stack(std::vector<DenseLayer>& layers, const ModelBinding& binding, std::size_t& cursor,
                     const ModelInput* input, NodeId h, Tape& tape, bool train) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            DenseLayer& L = layers[i];
            const NodeId W = binding.nodes.at(cursor++);
            const NodeId bias = binding.nodes.at(cursor++);
            NodeId z;
            if (i == 0 && input) {
                if (auto* t = std::get_if<Tensor>(input)) {
                    if (spec_.input_kind != InputKind::Dense || t->cols() != spec_.input_dim)
                        throw ShapeError("forward_train: input " + shape_str(t->shape()) + " does not match model input dim " +
                                         std::to_string(spec_.input_dim));
                    z = tape.matmul(tape.constant(*t), W);
                } else {
                    if (spec_.input_kind != InputKind::NodeIds) throw Error("forward_train: model expects dense input");
                    z = tape.gather_rows(W, std::get<std::vector<std::size_t>>(*input));
                }
            } else {
                z = tape.matmul(h, W);
            }
            z = tape.add(z, bias);
            if (L.bn) {
                const NodeId gamma = binding.nodes.at(cursor++);
                const NodeId beta = binding.nodes.at(cursor++);
                NodeId mu = tape.mean_rows(z);
                NodeId centered = tape.sub(z, mu);
                NodeId var = tape.mean_rows(tape.square(centered));
                NodeId normed = tape.div(centered, tape.sqrt(tape.add_scalar(var, spec_.bn_epsilon)));
                z = tape.add(tape.mul(normed, gamma), beta);
                if (train) {
                    update_running(L.bn->running_mean, tape.value(mu), spec_.bn_momentum, L.bn->populated);
                    update_running(L.bn->running_var, tape.value(var), spec_.bn_momentum, L.bn->populated);
                    L.bn->populated = true;
                }
            }
            if (L.activate) z = tape.relu(z);
            if (L.residual) z = tape.add(z, h);
            h = z;
        }
        return h;
    }

    Tensor eval_stack(const std::vector<DenseLayer>& layers, const ModelInput* input, Tensor h) const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const DenseLayer& L = layers[i];
            Tensor z;
            if (i == 0 && input) {
                if (auto* t = std::get_if<Tensor>(input)) {
                    if (spec_.input_kind != InputKind::Dense || t->cols() != spec_.input_dim)
                        throw ShapeError("forward_eval: input " + shape_str(t->shape()) + " does not match model input dim " +
                                         std::to_string(spec_.input_dim));
                    z = matmul(*t, L.weight);
                } else {
                    if (spec_.input_kind != InputKind::NodeIds) throw Error("forward_eval: model expects dense input");
                    z = gather_rows(L.weight, std::get<std::vector<std::size_t>>(*input));
                }
            } else {
                z = matmul(h, L.weight);
            }
            for (std::size_t r = 0; r < z.rows(); ++r)
                for (std::size_t c = 0; c < z.cols(); ++c) {
                    double v = z(r, c) + L.bias[c];
                    if (L.bn) {
                        const BatchNormLayer& bn = *L.bn;
                        v = (v - bn.running_mean[c]) / std::sqrt(bn.running_var[c] + spec_.bn_epsilon) * bn.gamma[c] +
                            bn.beta[c];
                    }
                    if (L.activate && v < 0.0) v = 0.0;
                    if (L.residual) v += h(r, c);
                    z(r, c) = v;
                }
            h = std::move(z);
        }
        return h;
    }
};

// ---------------------------------------------------------------------------
// Checkpoint container (see docs/checkpoint_format.md).
//
// Text, line oriented. Doubles are written as C99 hex floats so a
// save/load cycle is bit-exact.

namespace detail {

inline std::string hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double parse_hexfloat(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw Error("checkpoint: malformed number '" + s + "'");
    return v;
}

inline void write_tensor_text(std::ostream& os, const std::string& name, const Tensor& t) {
    os << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) os << hexfloat(t[i]) << (i + 1 == t.size() ? '\n' : ' ');
    if (t.size() == 0) os << '\n';
}

inline Tensor read_tensor_text(std::istream& is, const std::string& expect_name) {
    std::string tag, name;
    std::size_t r = 0, c = 0;
    if (!(is >> tag >> name >> r >> c) || tag != "tensor" || name != expect_name)
        throw Error("checkpoint: expected tensor '" + expect_name + "'");
    Tensor t = Tensor::matrix(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::string tok;
        if (!(is >> tok)) throw Error("checkpoint: truncated tensor '" + expect_name + "'");
        t[i] = parse_hexfloat(tok);
    }
    return t;
}

inline std::string widths_str(const std::vector<std::size_t>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s;
}

inline std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ','))
        if (!tok.empty()) out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    return out;
}

inline void write_mlp(std::ostream& os, const std::string& prefix, const MlpSpec& m) {
    os << prefix << ".widths " << widths_str(m.widths) << '\n';
    os << prefix << ".residual " << m.residual << '\n';
    os << prefix << ".hidden_batchnorm " << m.hidden_batchnorm << '\n';
}

inline std::string read_field(std::istream& is, const std::string& key) {
    std::string k, v;
    if (!(is >> k >> v) || k != key) throw Error("checkpoint: expected field '" + key + "'");
    return v;
}

inline MlpSpec read_mlp(std::istream& is, const std::string& prefix) {
    MlpSpec m;
    m.widths = parse_widths(read_field(is, prefix + ".widths"));
    m.residual = read_field(is, prefix + ".residual") == "1";
    m.hidden_batchnorm = read_field(is, prefix + ".hidden_batchnorm") == "1";
    return m;
}

}  // namespace detail

inline constexpr const char* kCheckpointMagic = "EIGENMAP-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

inline void EigenModel::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write checkpoint " + path);
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    os << "input_dim " << spec_.input_dim << '\n';
    os << "input_kind " << (spec_.input_kind == InputKind::Dense ? "dense" : "node_ids") << '\n';
    os << "k " << spec_.k << '\n';
    os << "seed " << spec_.seed << '\n';
    os << "l2bn_momentum " << detail::hexfloat(spec_.l2bn_momentum) << '\n';
    os << "l2bn_epsilon " << detail::hexfloat(spec_.l2bn_epsilon) << '\n';
    os << "bn_momentum " << detail::hexfloat(spec_.bn_momentum) << '\n';
    os << "bn_epsilon " << detail::hexfloat(spec_.bn_epsilon) << '\n';
    detail::write_mlp(os, "encoder", spec_.encoder);
    os << "projector " << (spec_.projector ? 1 : 0) << '\n';
    if (spec_.projector) detail::write_mlp(os, "projector", *spec_.projector);

    auto dump = [&](const std::vector<DenseLayer>& layers, const std::string& prefix) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string p = prefix + "." + std::to_string(i);
            detail::write_tensor_text(os, p + ".weight", layers[i].weight);
            detail::write_tensor_text(os, p + ".bias", layers[i].bias);
            if (layers[i].bn) {
                detail::write_tensor_text(os, p + ".bn.gamma", layers[i].bn->gamma);
                detail::write_tensor_text(os, p + ".bn.beta", layers[i].bn->beta);
                detail::write_tensor_text(os, p + ".bn.running_mean", layers[i].bn->running_mean);
                detail::write_tensor_text(os, p + ".bn.running_var", layers[i].bn->running_var);
                os << p << ".bn.populated " << layers[i].bn->populated << '\n';
            }
        }
    };
    dump(encoder_, "encoder");
    dump(projector_, "projector");
    detail::write_tensor_text(os, "l2bn.running_second_moment", l2bn_.running_second_moment);
    os << "l2bn.populated " << l2bn_.populated << '\n';
    os << "end\n";
}

inline EigenModel EigenModel::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open checkpoint " + path);
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kCheckpointMagic) throw Error(path + ": not an eigenmap checkpoint");
    if (version != kCheckpointVersion) throw Error(path + ": unsupported checkpoint version " + std::to_string(version));
    using detail::read_field;
    ModelSpec s;
    s.input_dim = std::stoull(read_field(is, "input_dim"));
    s.input_kind = read_field(is, "input_kind") == "dense" ? InputKind::Dense : InputKind::NodeIds;
    s.k = std::stoull(read_field(is, "k"));
    s.seed = std::stoull(read_field(is, "seed"));
    s.l2bn_momentum = detail::parse_hexfloat(read_field(is, "l2bn_momentum"));
    s.l2bn_epsilon = detail::parse_hexfloat(read_field(is, "l2bn_epsilon"));
    s.bn_momentum = detail::parse_hexfloat(read_field(is, "bn_momentum"));
    s.bn_epsilon = detail::parse_hexfloat(read_field(is, "bn_epsilon"));
    s.encoder = detail::read_mlp(is, "encoder");
    if (read_field(is, "projector") == "1") s.projector = detail::read_mlp(is, "projector");

    EigenModel m(s);
    auto fill = [&](std::vector<DenseLayer>& layers, const std::string& prefix) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string p = prefix + "." + std::to_string(i);
            layers[i].weight = detail::read_tensor_text(is, p + ".weight");
            layers[i].bias = detail::read_tensor_text(is, p + ".bias");
            if (layers[i].bn) {
                layers[i].bn->gamma = detail::read_tensor_text(is, p + ".bn.gamma");
                layers[i].bn->beta = detail::read_tensor_text(is, p + ".bn.beta");
                layers[i].bn->running_mean = detail::read_tensor_text(is, p + ".bn.running_mean");
                layers[i].bn->running_var = detail::read_tensor_text(is, p + ".bn.running_var");
                layers[i].bn->populated = read_field(is, p + ".bn.populated") == "1";
            }
        }
    };
    fill(m.encoder_, "encoder");
    fill(m.projector_, "projector");
    m.l2bn_.running_second_moment = detail::read_tensor_text(is, "l2bn.running_second_moment");
    m.l2bn_.populated = read_field(is, "l2bn.populated") == "1";
    std::string end;
    if (!(is >> end) || end != "end") throw Error(path + ": checkpoint missing end marker");
    return m;
}

inline bool operator==(const EigenModel& a, const EigenModel& b) {
    auto same_layers = [](const std::vector<DenseLayer>& x, const std::vector<DenseLayer>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x[i].weight == y[i].weight) || !(x[i].bias == y[i].bias)) return false;
            if (x[i].bn.has_value() != y[i].bn.has_value()) return false;
            if (x[i].bn && (!(x[i].bn->gamma == y[i].bn->gamma) || !(x[i].bn->beta == y[i].bn->beta) ||
                            !(x[i].bn->running_mean == y[i].bn->running_mean) ||
                            !(x[i].bn->running_var == y[i].bn->running_var)))
                return false;
        }
        return true;
    };
    return a.spec_.k == b.spec_.k && a.spec_.input_dim == b.spec_.input_dim && same_layers(a.encoder_, b.encoder_) &&
           same_layers(a.projector_, b.projector_) &&
           a.l2bn_.running_second_moment == b.l2bn_.running_second_moment && a.l2bn_.populated == b.l2bn_.populated;
}

}  // namespace eigenmap
