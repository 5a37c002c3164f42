#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "purecc/condition.hpp"
#include "purecc/tensor.hpp"

namespace purecc {

enum class Pooling { sum, mean };

struct NetworkConfig {
    std::size_t input_dim = 2;
    std::size_t hidden_width = 64;
    std::size_t num_layers = 3;
    std::size_t embed_dim = 8;
    std::size_t vocab_size = 5;
    // Token whose embedding is replaced by the per-layer concept slot.
    // Negative means "last token of the vocabulary".
    int concept_token = -1;
    Pooling pooling = Pooling::sum;

    void validate() const;
    int concept_token_id() const noexcept {
        return concept_token < 0 ? static_cast<int>(vocab_size) - 1 : concept_token;
    }
    // Width of the time-augmented network input: x, t, sin(2πt), cos(2πt).
    std::size_t feature_dim() const noexcept { return input_dim + 3; }

    bool operator==(const NetworkConfig&) const = default;
};

// Anything that can produce a conditional velocity. The network implements it;
// tests and evaluation wrappers provide closed-form fields.
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual std::size_t dim() const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual Vec velocity(std::span<const double> x, double t, const Condition& y) const = 0;
};

// Gradient arrays mirroring the network's parameter list. Tensors outside
// the mask stay zero.
struct Gradients {
    std::vector<Tensor> tensors;
    std::vector<bool> mask;

    void add(const Gradients& other);
    void scale(double factor);
    const Tensor& operator[](std::string_view name) const;
    bool operator==(const Gradients&) const = default;
};

class VelocityNetwork final : public VelocityField {
public:
    static VelocityNetwork build(const NetworkConfig& cfg, std::uint64_t seed);
    // Rebuild from a checkpoint's tensor list.
    static VelocityNetwork from_tensors(std::vector<Tensor> tensors);

    const NetworkConfig& config() const noexcept { return cfg_; }
    std::size_t dim() const override { return cfg_.input_dim; }
    std::size_t vocab_size() const override { return cfg_.vocab_size; }
    Vec velocity(std::span<const double> x, double t, const Condition& y) const override {
        return forward(x, t, y);
    }

    // Pooled conditioning vector seen by block `layer`.
    Vec encode_condition(const Condition& y, std::size_t layer) const;

    Vec forward(std::span<const double> x, double t, const Condition& y) const;

    // Reverse-mode gradients of <upstream, forward(x, t, y)> over the
    // network's trainable mask (or an explicit one).
    Gradients backward(std::span<const double> x, double t, const Condition& y,
                       std::span<const double> upstream) const;
    Gradients backward(std::span<const double> x, double t, const Condition& y,
                       std::span<const double> upstream, const std::vector<bool>& mask) const;
    // Adds into an existing gradient set; its mask selects the tensors.
    void accumulate_gradients(std::span<const double> x, double t, const Condition& y,
                              std::span<const double> upstream, Gradients& into) const;
    Gradients zero_gradients() const;
    Gradients zero_gradients(const std::vector<bool>& mask) const;

    // Plain SGD step on the masked tensors. The null-token row never moves.
    void apply_sgd(const Gradients& grads, double learning_rate);

    VelocityNetwork attach_adapter(std::size_t rank, std::uint64_t seed) const;
    VelocityNetwork merge_adapter() const;
    VelocityNetwork clone_frozen() const;
    // Unfrozen copy with every tensor trainable.
    VelocityNetwork clone_trainable() const;

    bool frozen() const noexcept { return frozen_; }
    bool has_adapter() const noexcept { return adapter_rank_ > 0; }
    std::size_t adapter_rank() const noexcept { return adapter_rank_; }

    const std::vector<bool>& trainable_mask() const noexcept { return mask_; }
    void set_trainable_mask(std::vector<bool> mask);
    std::vector<bool> full_mask() const;
    std::vector<bool> empty_mask() const;
    // Adapter factors plus the layer-wise concept slots.
    std::vector<bool> adapter_mask() const;

    const std::vector<Tensor>& parameters() const noexcept { return params_; }
    const Tensor& parameter(std::string_view name) const;
    // Mutable access; refused on a frozen network.
    Tensor& parameter(std::string_view name);
    std::size_t index_of(std::string_view name) const;

    // Copy the per-layer concept slots of another network with the same shape.
    void copy_concept_slots_from(const VelocityNetwork& other);

private:
    VelocityNetwork() = default;

    std::size_t block_weight(std::size_t l) const noexcept { return 2 + 2 * l; }
    std::size_t block_bias(std::size_t l) const noexcept { return 3 + 2 * l; }
    std::size_t head_weight() const noexcept { return 2 + 2 * cfg_.num_layers; }
    std::size_t head_bias() const noexcept { return 3 + 2 * cfg_.num_layers; }
    std::size_t lora_a(std::size_t l) const noexcept { return 4 + 2 * cfg_.num_layers + 2 * l; }
    std::size_t lora_b(std::size_t l) const noexcept { return 5 + 2 * cfg_.num_layers + 2 * l; }

    struct ForwardTrace;
    Vec forward_impl(std::span<const double> x, double t, const Condition& y,
                     ForwardTrace* trace) const;
    void check_inputs(std::span<const double> x, double t, const Condition& y) const;
    void encode_into(const Condition& y, std::size_t layer, std::span<double> out) const;

    NetworkConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<bool> mask_;
    std::size_t adapter_rank_ = 0;
    bool frozen_ = false;
};

}  // namespace purecc
