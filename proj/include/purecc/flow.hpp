#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "purecc/condition.hpp"
#include "purecc/dataset.hpp"
#include "purecc/net.hpp"

namespace purecc {

struct FlowBatch {
    std::vector<Vec> x0;  // data samples
    std::vector<Vec> x1;  // standard-normal source samples
    std::vector<double> t;
    std::vector<Condition> y;

    std::size_t size() const noexcept { return x0.size(); }
    void validate() const;
};

struct SamplerConfig {
    std::size_t steps = 28;
    double guidance_w = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SamplerConfig&) const = default;
};

struct TrainConfig {
    std::size_t iterations = 400;
    double learning_rate = 1e-4;
    std::size_t batch_size = 2;
    double cond_dropout_prob = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// x_t = (1 - t) x0 + t x1
Vec interpolate(std::span<const double> x0, std::span<const double> x1, double t);
// x1 - x0
Vec target_velocity(std::span<const double> x0, std::span<const double> x1);

struct LossGrad {
    double loss = 0.0;
    Gradients grads;
};

// Mean over the batch of ||(x1 - x0) - v(x_t | y)||^2.
double cfm_loss_value(const VelocityField& field, const FlowBatch& batch);
LossGrad cfm_loss(const VelocityNetwork& net, const FlowBatch& batch);

struct FlowTrainResult {
    VelocityNetwork net;
    std::vector<double> loss_trace;
};

// Plain SGD on the CFM loss; each drawn condition is replaced by the null
// condition with probability cond_dropout_prob.
FlowTrainResult train_flow(VelocityNetwork net, const Dataset& data, const TrainConfig& cfg);

// Classifier-free guidance, (1 - w) v(x|null) + w v(x|y).
Vec cfg_velocity(const VelocityField& field, std::span<const double> x, double t, const Condition& y,
                 double w);
// Same quantity written as v(x|null) + w (v(x|y) - v(x|null)).
Vec cfg_velocity_implicit(const VelocityField& field, std::span<const double> x, double t,
                          const Condition& y, double w);

// n x d standard-normal draws, row by row from one stream.
std::vector<Vec> draw_noise(std::size_t n, std::size_t dim, std::uint64_t seed);

// Explicit Euler from t = 1 to t = 0 on the guided field.
std::vector<Vec> integrate(const VelocityField& field, const Condition& y, std::vector<Vec> noise,
                           const SamplerConfig& cfg);
std::vector<Vec> sample(const VelocityField& field, const Condition& y, std::size_t n,
                        const SamplerConfig& cfg);

// Samples as CSV: header dim0,dim1,..., one row per sample.
std::string samples_to_csv(const std::vector<Vec>& samples);
std::vector<Vec> samples_from_csv(const std::string& text);

}  // namespace purecc
