#include "purecc/net.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "purecc/errors.hpp"
#include "purecc/rng.hpp"

namespace purecc {

namespace {

constexpr std::size_t kTokenTable = 0;
constexpr std::size_t kConceptSlots = 1;

void fill_uniform(Tensor& t, double scale, Rng& rng) {
    for (double& v : t.values) v = rng.uniform(-scale, scale);
}

std::string block_name(std::size_t l, std::string_view what) {
    return "block" + std::to_string(l) + "." + std::string(what);
}

}  // namespace

void NetworkConfig::validate() const {
    if (input_dim < 1 || hidden_width < 1 || num_layers < 1 || embed_dim < 1) {
        throw ConfigError("network widths and layer count must be >= 1");
    }
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2 (null token required)");
    const int concept_id = concept_token_id();
    if (concept_id <= kNullToken || concept_id >= static_cast<int>(vocab_size)) {
        throw ConfigError("concept token must be a non-null token inside the vocabulary");
    }
}

// ---------------------------------------------------------------- Gradients

void Gradients::add(const Gradients& other) {
    if (other.tensors.size() != tensors.size()) throw ShapeError("gradient sets differ in size");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!mask[i]) continue;
        auto& dst = tensors[i].values;
        const auto& src = other.tensors[i].values;
        if (dst.size() != src.size()) throw ShapeError("gradient tensor shape mismatch");
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
}

void Gradients::scale(double factor) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!mask[i]) continue;
        for (double& v : tensors[i].values) v *= factor;
    }
}

const Tensor& Gradients::operator[](std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw IndexError("no gradient tensor named '" + std::string(name) + "'");
}

// ------------------------------------------------------------- construction

VelocityNetwork VelocityNetwork::build(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    VelocityNetwork net;
    net.cfg_ = cfg;
    net.cfg_.concept_token = cfg.concept_token_id();
    Rng rng(seed);

    const std::size_t L = cfg.num_layers;
    const std::size_t H = cfg.hidden_width;
    const std::size_t E = cfg.embed_dim;

    Tensor tokens("token_table", {cfg.vocab_size, E});
    // A lookup row has fan-in 1.
    fill_uniform(tokens, 1.0, rng);
    for (double& v : tokens.row(kNullToken)) v = 0.0;

    Tensor slots("concept_slots", {L, E});
    const auto concept_row = tokens.row(static_cast<std::size_t>(cfg.concept_token_id()));
    for (std::size_t l = 0; l < L; ++l) {
        auto dst = slots.row(l);
        std::copy(concept_row.begin(), concept_row.end(), dst.begin());
    }

    net.params_.push_back(std::move(tokens));
    net.params_.push_back(std::move(slots));

    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t in = (l == 0 ? cfg.feature_dim() : H) + E;
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        Tensor w(block_name(l, "weight"), {H, in});
        Tensor b(block_name(l, "bias"), {H});
        fill_uniform(w, s, rng);
        fill_uniform(b, s, rng);
        net.params_.push_back(std::move(w));
        net.params_.push_back(std::move(b));
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(H));
    Tensor hw("head.weight", {cfg.input_dim, H});
    Tensor hb("head.bias", {cfg.input_dim});
    fill_uniform(hw, s, rng);
    fill_uniform(hb, s, rng);
    net.params_.push_back(std::move(hw));
    net.params_.push_back(std::move(hb));

    net.mask_ = net.full_mask();
    return net;
}

VelocityNetwork VelocityNetwork::from_tensors(std::vector<Tensor> tensors) {
    auto find = [&](std::string_view name) -> const Tensor& {
        for (const auto& t : tensors) {
            if (t.name == name) return t;
        }
        throw FormatError("checkpoint is missing tensor '" + std::string(name) + "'");
    };
    const Tensor& tokens = find("token_table");
    const Tensor& slots = find("concept_slots");
    const Tensor& head = find("head.weight");
    const Tensor& meta = find("meta");
    if (tokens.shape.size() != 2 || slots.shape.size() != 2 || head.shape.size() != 2 ||
        meta.size() != 3) {
        throw FormatError("checkpoint tensors have unexpected rank");
    }

    NetworkConfig cfg;
    cfg.vocab_size = tokens.shape[0];
    cfg.embed_dim = tokens.shape[1];
    cfg.num_layers = slots.shape[0];
    cfg.input_dim = head.shape[0];
    cfg.hidden_width = head.shape[1];
    cfg.concept_token = static_cast<int>(meta.values[0]);
    cfg.pooling = meta.values[2] != 0.0 ? Pooling::mean : Pooling::sum;
    cfg.validate();

    // Shapes and ordering must match what build() would produce.
    VelocityNetwork net = build(cfg, 0);
    std::size_t rank = 0;
    if (tensors.size() > net.params_.size() + 1) {
        const Tensor& a0 = find(block_name(0, "lora_a"));
        if (a0.shape.size() != 2) throw FormatError("adapter tensor has unexpected rank");
        rank = a0.shape[0];
        net = net.attach_adapter(rank, 0);
    }
    if (tensors.size() != net.params_.size() + 1) {
        throw FormatError("checkpoint tensor count does not match its layout");
    }
    for (auto& p : net.params_) {
        const Tensor& src = find(p.name);
        if (src.shape != p.shape) {
            throw FormatError("tensor '" + p.name + "' has the wrong shape");
        }
        p.values = src.values;
    }
    net.mask_ = rank > 0 ? net.adapter_mask() : net.full_mask();
    if (meta.values[1] != 0.0) net.frozen_ = true;
    return net;
}

// ------------------------------------------------------------ conditioning

void VelocityNetwork::encode_into(const Condition& y, std::size_t layer, std::span<double> out) const {
    const Tensor& tokens = params_[kTokenTable];
    const Tensor& slots = params_[kConceptSlots];
    const int concept_id = cfg_.concept_token_id();
    const double w = cfg_.pooling == Pooling::mean ? 1.0 / static_cast<double>(y.tokens.size()) : 1.0;
    std::fill(out.begin(), out.end(), 0.0);
    for (int tok : y.tokens) {
        const auto row = tok == concept_id ? slots.row(layer) : tokens.row(static_cast<std::size_t>(tok));
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * row[k];
    }
}

Vec VelocityNetwork::encode_condition(const Condition& y, std::size_t layer) const {
    if (layer >= cfg_.num_layers) {
        throw IndexError("layer " + std::to_string(layer) + " out of range");
    }
    for (int tok : y.tokens) {
        if (tok < 0 || tok >= static_cast<int>(cfg_.vocab_size)) {
            throw IndexError("token id " + std::to_string(tok) + " outside the vocabulary");
        }
    }
    Vec out(cfg_.embed_dim);
    encode_into(y, layer, out);
    return out;
}

// ----------------------------------------------------------------- forward

struct VelocityNetwork::ForwardTrace {
    std::vector<Vec> inputs;   // block inputs [prev activation; conditioning]
    std::vector<Vec> lowrank;  // A·input per block (adapted networks only)
    std::vector<Vec> hidden;   // tanh activations per block
};

void VelocityNetwork::check_inputs(std::span<const double> x, double t, const Condition& y) const {
    if (x.size() != cfg_.input_dim) {
        throw ShapeError("input has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(cfg_.input_dim));
    }
    if (!all_finite(x) || !std::isfinite(t)) throw NumericInputError("non-finite network input");
    if (t < 0.0 || t > 1.0) throw DomainError("time must lie in [0, 1]");
    if (y.tokens.empty()) throw ShapeError("condition has no tokens");
    for (int tok : y.tokens) {
        if (tok < 0 || tok >= static_cast<int>(cfg_.vocab_size)) {
            throw IndexError("token id " + std::to_string(tok) + " outside the vocabulary");
        }
    }
}

Vec VelocityNetwork::forward_impl(std::span<const double> x, double t, const Condition& y,
                                  ForwardTrace* trace) const {
    const std::size_t L = cfg_.num_layers;
    const std::size_t H = cfg_.hidden_width;
    const std::size_t E = cfg_.embed_dim;

    Vec prev(x.begin(), x.end());
    prev.push_back(t);
    prev.push_back(std::sin(2.0 * std::numbers::pi * t));
    prev.push_back(std::cos(2.0 * std::numbers::pi * t));

    for (std::size_t l = 0; l < L; ++l) {
        Vec in(prev.size() + E);
        std::copy(prev.begin(), prev.end(), in.begin());
        encode_into(y, l, std::span<double>(in).subspan(prev.size()));

        const Tensor& w = params_[block_weight(l)];
        const Tensor& b = params_[block_bias(l)];
        Vec z(b.values);
        for (std::size_t i = 0; i < H; ++i) z[i] += dot(w.row(i), in);

        Vec low;
        if (has_adapter()) {
            const Tensor& a = params_[lora_a(l)];
            const Tensor& bb = params_[lora_b(l)];
            low.resize(adapter_rank_);
            for (std::size_t r = 0; r < adapter_rank_; ++r) low[r] = dot(a.row(r), in);
            for (std::size_t i = 0; i < H; ++i) z[i] += dot(bb.row(i), low);
        }
        for (double& v : z) v = std::tanh(v);

        if (trace) {
            trace->inputs.push_back(std::move(in));
            trace->lowrank.push_back(std::move(low));
            trace->hidden.push_back(z);
        }
        prev = std::move(z);
    }

    const Tensor& hw = params_[head_weight()];
    Vec out(params_[head_bias()].values);
    for (std::size_t i = 0; i < cfg_.input_dim; ++i) out[i] += dot(hw.row(i), prev);
    return out;
}

Vec VelocityNetwork::forward(std::span<const double> x, double t, const Condition& y) const {
    check_inputs(x, t, y);
    return forward_impl(x, t, y, nullptr);
}

// ---------------------------------------------------------------- backward

Gradients VelocityNetwork::zero_gradients() const { return zero_gradients(mask_); }

Gradients VelocityNetwork::zero_gradients(const std::vector<bool>& mask) const {
    if (mask.size() != params_.size()) throw ShapeError("mask does not match parameter count");
    Gradients g;
    g.mask = mask;
    g.tensors.reserve(params_.size());
    for (const auto& p : params_) g.tensors.emplace_back(p.name, p.shape);
    return g;
}

Gradients VelocityNetwork::backward(std::span<const double> x, double t, const Condition& y,
                                    std::span<const double> upstream) const {
    return backward(x, t, y, upstream, mask_);
}

Gradients VelocityNetwork::backward(std::span<const double> x, double t, const Condition& y,
                                    std::span<const double> upstream,
                                    const std::vector<bool>& mask) const {
    Gradients g = zero_gradients(mask);
    accumulate_gradients(x, t, y, upstream, g);
    return g;
}

void VelocityNetwork::accumulate_gradients(std::span<const double> x, double t, const Condition& y,
                                           std::span<const double> upstream, Gradients& into) const {
    const auto& mask = into.mask;
    if (mask.size() != params_.size() || into.tensors.size() != params_.size()) {
        throw ShapeError("gradient set does not mirror the network");
    }
    bool any = false;
    for (bool m : mask) any = any || m;
    if (frozen_ && any) throw FreezeViolation("backward on a frozen network with a non-empty mask");
    check_inputs(x, t, y);
    if (upstream.size() != cfg_.input_dim) throw ShapeError("upstream has wrong dimension");
    if (!any) return;

    const std::size_t L = cfg_.num_layers;
    const std::size_t H = cfg_.hidden_width;
    const std::size_t E = cfg_.embed_dim;
    const std::size_t R = adapter_rank_;

    ForwardTrace tr;
    forward_impl(x, t, y, &tr);

    // Head.
    const Tensor& hw = params_[head_weight()];
    const Vec& last = tr.hidden.back();
    if (mask[head_weight()]) {
        Tensor& gw = into.tensors[head_weight()];
        for (std::size_t i = 0; i < cfg_.input_dim; ++i) {
            for (std::size_t j = 0; j < H; ++j) gw.at(i, j) += upstream[i] * last[j];
        }
    }
    if (mask[head_bias()]) {
        Tensor& gb = into.tensors[head_bias()];
        for (std::size_t i = 0; i < cfg_.input_dim; ++i) gb.values[i] += upstream[i];
    }
    Vec grad_h(H, 0.0);
    for (std::size_t i = 0; i < cfg_.input_dim; ++i) {
        for (std::size_t j = 0; j < H; ++j) grad_h[j] += hw.at(i, j) * upstream[i];
    }

    const int concept_id = cfg_.concept_token_id();
    const double pool_w =
        cfg_.pooling == Pooling::mean ? 1.0 / static_cast<double>(y.tokens.size()) : 1.0;

    for (std::size_t l = L; l-- > 0;) {
        const Vec& in = tr.inputs[l];
        const Vec& h = tr.hidden[l];
        const std::size_t in_dim = in.size();

        Vec gz(H);
        for (std::size_t i = 0; i < H; ++i) gz[i] = grad_h[i] * (1.0 - h[i] * h[i]);

        if (mask[block_weight(l)]) {
            Tensor& gw = into.tensors[block_weight(l)];
            for (std::size_t i = 0; i < H; ++i) {
                auto row = gw.row(i);
                for (std::size_t j = 0; j < in_dim; ++j) row[j] += gz[i] * in[j];
            }
        }
        if (mask[block_bias(l)]) {
            auto& gb = into.tensors[block_bias(l)].values;
            for (std::size_t i = 0; i < H; ++i) gb[i] += gz[i];
        }

        const Tensor& w = params_[block_weight(l)];
        Vec grad_in(in_dim, 0.0);
        for (std::size_t i = 0; i < H; ++i) {
            const auto row = w.row(i);
            for (std::size_t j = 0; j < in_dim; ++j) grad_in[j] += row[j] * gz[i];
        }

        if (R > 0) {
            const Tensor& a = params_[lora_a(l)];
            const Tensor& b = params_[lora_b(l)];
            const Vec& low = tr.lowrank[l];
            if (mask[lora_b(l)]) {
                Tensor& gb = into.tensors[lora_b(l)];
                for (std::size_t i = 0; i < H; ++i) {
                    for (std::size_t r = 0; r < R; ++r) gb.at(i, r) += gz[i] * low[r];
                }
            }
            Vec grad_low(R, 0.0);
            for (std::size_t i = 0; i < H; ++i) {
                for (std::size_t r = 0; r < R; ++r) grad_low[r] += b.at(i, r) * gz[i];
            }
            if (mask[lora_a(l)]) {
                Tensor& ga = into.tensors[lora_a(l)];
                for (std::size_t r = 0; r < R; ++r) {
                    auto row = ga.row(r);
                    for (std::size_t j = 0; j < in_dim; ++j) row[j] += grad_low[r] * in[j];
                }
            }
            for (std::size_t r = 0; r < R; ++r) {
                const auto row = a.row(r);
                for (std::size_t j = 0; j < in_dim; ++j) grad_in[j] += row[j] * grad_low[r];
            }
        }

        // Conditioning occupies the last E entries of the block input.
        const std::size_t cond_off = in_dim - E;
        for (int tok : y.tokens) {
            if (tok == concept_id) {
                if (!mask[kConceptSlots]) continue;
                auto row = into.tensors[kConceptSlots].row(l);
                for (std::size_t k = 0; k < E; ++k) row[k] += pool_w * grad_in[cond_off + k];
            } else if (tok != kNullToken) {
                if (!mask[kTokenTable]) continue;
                auto row = into.tensors[kTokenTable].row(static_cast<std::size_t>(tok));
                for (std::size_t k = 0; k < E; ++k) row[k] += pool_w * grad_in[cond_off + k];
            }
        }

        if (l > 0) grad_h.assign(grad_in.begin(), grad_in.begin() + static_cast<long>(H));
    }
}

// ------------------------------------------------------------------ updates

void VelocityNetwork::apply_sgd(const Gradients& grads, double learning_rate) {
    if (frozen_) throw FreezeViolation("parameter update on a frozen network");
    if (grads.tensors.size() != params_.size()) throw ShapeError("gradient set does not mirror the network");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!grads.mask[i] || !mask_[i]) continue;
        auto& p = params_[i].values;
        const auto& g = grads.tensors[i].values;
        if (g.size() != p.size()) throw ShapeError("gradient tensor shape mismatch");
        const std::size_t start = i == kTokenTable ? cfg_.embed_dim : 0;  // skip null row
        for (std::size_t k = start; k < p.size(); ++k) p[k] -= learning_rate * g[k];
    }
}

VelocityNetwork VelocityNetwork::attach_adapter(std::size_t rank, std::uint64_t seed) const {
    if (rank < 1) throw ConfigError("adapter rank must be >= 1");
    if (has_adapter()) throw StateError("network already has an adapter attached");
    VelocityNetwork out = *this;
    out.frozen_ = false;
    out.adapter_rank_ = rank;
    Rng rng(seed);
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        const Tensor& w = params_[block_weight(l)];
        Tensor a(block_name(l, "lora_a"), {rank, w.cols()});
        Tensor b(block_name(l, "lora_b"), {w.rows(), rank});
        fill_uniform(a, 1.0 / std::sqrt(static_cast<double>(w.cols())), rng);
        out.params_.push_back(std::move(a));
        out.params_.push_back(std::move(b));
    }
    out.mask_ = out.adapter_mask();
    return out;
}

VelocityNetwork VelocityNetwork::merge_adapter() const {
    if (!has_adapter()) throw StateError("no adapter to merge");
    VelocityNetwork out = *this;
    out.frozen_ = false;
    out.adapter_rank_ = 0;
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        Tensor& w = out.params_[block_weight(l)];
        const Tensor& a = params_[lora_a(l)];
        const Tensor& b = params_[lora_b(l)];
        for (std::size_t i = 0; i < w.rows(); ++i) {
            for (std::size_t j = 0; j < w.cols(); ++j) {
                double delta = 0.0;
                for (std::size_t r = 0; r < adapter_rank_; ++r) delta += b.at(i, r) * a.at(r, j);
                w.at(i, j) += delta;
            }
        }
    }
    out.params_.resize(head_bias() + 1);
    out.mask_ = out.full_mask();
    return out;
}

VelocityNetwork VelocityNetwork::clone_frozen() const {
    VelocityNetwork out = *this;
    out.frozen_ = true;
    return out;
}

VelocityNetwork VelocityNetwork::clone_trainable() const {
    VelocityNetwork out = *this;
    out.frozen_ = false;
    out.mask_ = out.full_mask();
    return out;
}

// ------------------------------------------------------------------- masks

void VelocityNetwork::set_trainable_mask(std::vector<bool> mask) {
    if (mask.size() != params_.size()) throw ShapeError("mask does not match parameter count");
    bool any = false;
    for (bool m : mask) any = any || m;
    if (frozen_ && any) throw FreezeViolation("cannot enable training on a frozen network");
    mask_ = std::move(mask);
}

std::vector<bool> VelocityNetwork::full_mask() const {
    std::vector<bool> m(params_.size(), true);
    return m;
}

std::vector<bool> VelocityNetwork::empty_mask() const { return std::vector<bool>(params_.size(), false); }

std::vector<bool> VelocityNetwork::adapter_mask() const {
    std::vector<bool> m(params_.size(), false);
    m[kConceptSlots] = true;
    if (has_adapter()) {
        for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
            m[lora_a(l)] = true;
            m[lora_b(l)] = true;
        }
    }
    return m;
}

std::size_t VelocityNetwork::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    throw IndexError("no parameter named '" + std::string(name) + "'");
}

const Tensor& VelocityNetwork::parameter(std::string_view name) const { return params_[index_of(name)]; }

Tensor& VelocityNetwork::parameter(std::string_view name) {
    if (frozen_) throw FreezeViolation("mutable parameter access on a frozen network");
    return params_[index_of(name)];
}

void VelocityNetwork::copy_concept_slots_from(const VelocityNetwork& other) {
    if (frozen_) throw FreezeViolation("parameter update on a frozen network");
    const Tensor& src = other.params_[kConceptSlots];
    Tensor& dst = params_[kConceptSlots];
    if (src.shape != dst.shape) throw ShapeError("concept slot shapes differ");
    dst.values = src.values;
}

}  // namespace purecc
