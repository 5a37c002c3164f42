#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "purecc/dataset.hpp"
#include "purecc/flow.hpp"
#include "purecc/net.hpp"

namespace purecc {

enum class LambdaMode { adaptive, fixed };
enum class OriginalMode { trainable_theta2, frozen_theta3 };

struct ExtractorConfig {
    std::size_t iterations = 400;
    double learning_rate = 1e-4;
    std::size_t batch_size = 2;
    std::size_t adapter_rank = 4;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ExtractorConfig&) const = default;
};

struct PureCCConfig {
    double eta = 1.0;
    LambdaMode lambda_mode = LambdaMode::adaptive;
    double fixed_lambda = 1.0;  // used when lambda_mode == fixed
    OriginalMode original_mode = OriginalMode::trainable_theta2;
    double eps_guard = 1e-8;
    std::size_t iterations = 400;
    double learning_rate = 1e-4;
    std::size_t batch_size = 2;
    std::size_t adapter_rank = 4;
    // Train every parameter of θ2 instead of a fresh adapter.
    bool full_finetune = false;
    // Treat v_original as a constant target (trainable_theta2 mode only).
    bool detach_original = true;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const PureCCConfig&) const = default;
};

// ------------------------------------------------------------------ stage 1

struct ExtractorResult {
    VelocityNetwork net;  // adapted and frozen
    std::vector<double> loss_trace;
};

// LoRA fine-tune of the pretrained model on the custom set, training the
// adapter factors and the layer-wise concept slots.
ExtractorResult train_extractor(const VelocityNetwork& pretrained, const CustomSet& refs,
                                const ExtractorConfig& cfg);

// ------------------------------------------------------- guidance algebra

// v(x|y) - v(x|null)
Vec representation_bias(const VelocityField& field, std::span<const double> x, double t, const Condition& y);

// Implicit guidance of the target concept taken from the frozen extractor.
// A VelocityNetwork passed here must be frozen.
Vec target_guidance(const VelocityField& extractor, std::span<const double> x_t, double t,
                    const Condition& y_tar);

// v(x|y_complete) - v(x|y_base) of the trainable model.
Vec learned_representation(const VelocityField& trainable, std::span<const double> x_t, double t,
                           const Condition& y_complete, const Condition& y_base);

struct AdaptiveLambda {
    double value = 0.0;
    bool degenerate = false;
};

// Projection coefficient <r_learned, r_tar> / ||r_tar||^2; zero and flagged
// degenerate when ||r_tar||^2 < eps_guard.
AdaptiveLambda adaptive_lambda(std::span<const double> r_learned, std::span<const double> r_tar,
                               double eps_guard);
// Batch version: ratio of the batch means of <r_learned_i, r_tar_i> and
// ||r_tar_i||^2, guarded on the latter.
AdaptiveLambda adaptive_lambda(const std::vector<Vec>& r_learned, const std::vector<Vec>& r_tar,
                               double eps_guard);

// v_original + lambda * r_tar
Vec purecc_target(std::span<const double> v_original, std::span<const double> r_tar, double lambda);

// Mean over the batch of ||v_purecc - v(x_t | y_complete)||^2.
double purecc_loss_value(const VelocityField& trainable, const std::vector<Vec>& x_t,
                         const std::vector<double>& t, const Condition& y_complete,
                         const std::vector<Vec>& v_purecc);
LossGrad purecc_loss(const VelocityNetwork& trainable, const std::vector<Vec>& x_t,
                     const std::vector<double>& t, const Condition& y_complete,
                     const std::vector<Vec>& v_purecc);

// ------------------------------------------------------------------ stage 2

// One draw of (x0, x1, t) per element, shared by both loss terms.
struct StepBatch {
    std::vector<Vec> x0;
    std::vector<Vec> x1;
    std::vector<double> t;
    Condition y_complete;
    Condition y_tar;
};

struct GuidancePair {
    std::vector<Vec> r_tar;
    std::vector<Vec> r_learned;
    double lambda_star = 0.0;
};

struct StepDiagnostics {
    std::size_t iter = 0;
    double loss_cc = 0.0;
    double loss_purecc = 0.0;
    double lambda_star = 0.0;
    double r_tar_norm = 0.0;      // root of the batch-mean squared norm
    double r_learned_norm = 0.0;  // same, for the learned representation
    bool degenerate = false;
};

struct PureStep {
    double loss_cc = 0.0;
    double loss_purecc = 0.0;
    double loss_total = 0.0;  // loss_cc + eta * loss_purecc
    Gradients grads;
    GuidancePair guidance;
    std::vector<Vec> v_purecc;
    bool degenerate = false;
};

// Losses and gradients of L_CC + eta * L_PureCC without updating θ2.
// `original` is the frozen θ3 and is only read in frozen_theta3 mode.
PureStep compute_pure_step(const VelocityNetwork& trainable, const VelocityNetwork& extractor,
                           const VelocityNetwork* original, const StepBatch& batch,
                           const PureCCConfig& cfg);

// compute_pure_step followed by one SGD update of θ2.
StepDiagnostics pure_learning_step(VelocityNetwork& trainable, const VelocityNetwork& extractor,
                                   const VelocityNetwork* original, const StepBatch& batch,
                                   const PureCCConfig& cfg);

using StepObserver = std::function<void(std::size_t iter, const VelocityNetwork& trainable)>;

struct CustomizeResult {
    VelocityNetwork net;
    std::vector<StepDiagnostics> trace;
};

// θ2 initialization shared by customize and finetune_cc: a copy of the
// pretrained model with a fresh adapter (or full fine-tuning) and the
// extractor's learned concept slots.
VelocityNetwork init_trainable(const VelocityNetwork& pretrained, const VelocityNetwork& extractor,
                               const PureCCConfig& cfg);

// Pure learning loop over K iterations. The observer, if set, runs after
// every update.
CustomizeResult customize(const VelocityNetwork& pretrained, const VelocityNetwork& extractor,
                          const CustomSet& refs, const PureCCConfig& cfg, const StepObserver& observer = {});

// Baseline: the same initialization and batch draws trained on L_CC only.
CustomizeResult finetune_cc(const VelocityNetwork& pretrained, const VelocityNetwork& extractor,
                            const CustomSet& refs, const PureCCConfig& cfg, const StepObserver& observer = {});

std::string trace_to_csv(const std::vector<StepDiagnostics>& trace);
std::vector<StepDiagnostics> trace_from_csv(const std::string& text);

}  // namespace purecc
