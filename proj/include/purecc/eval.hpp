#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "purecc/data.hpp"
#include "purecc/flow.hpp"
#include "purecc/net.hpp"

namespace purecc {

// Regular grid with the same bounds and bin count on every dimension.
// Points outside the bounds are clipped into the edge cells.
struct HistogramGrid {
    double lo = -6.0;
    double hi = 6.0;
    std::size_t bins = 64;
    double alpha = 1e-6;  // additive mass per cell before normalization

    void validate() const;
    std::size_t cell_of(std::span<const double> x) const;
    // Total number of cells for dimension d.
    double cell_count(std::size_t dim) const;

    bool operator==(const HistogramGrid&) const = default;
};

// KL(P||Q) between smoothed histograms: p_i = (c_i/n + alpha) / (1 + alpha*M).
double histogram_kl(const std::vector<Vec>& p, const std::vector<Vec>& q, const HistogramGrid& grid);
double histogram_kl_symmetric(const std::vector<Vec>& p, const std::vector<Vec>& q, const HistogramGrid& grid);

// Sampler seed used for context `index`; both models in a comparison share it.
std::uint64_t context_seed(const SamplerConfig& sampler, std::size_t index);

// Per-context KL between base-conditioned samples of the custom and original
// models, in the order of `contexts`.
std::vector<double> preservation_drift(const VelocityField& custom, const VelocityField& original,
                                       const SceneSpec& spec, const std::vector<std::string>& contexts,
                                       const SamplerConfig& sampler, std::size_t n, const HistogramGrid& grid);

// Fraction of complete-conditioned samples nearest to the concept center.
double concept_fidelity(const VelocityField& custom, const SceneSpec& spec, std::string_view context,
                        const SamplerConfig& sampler, std::size_t n);
// Nearest-center rule on already drawn samples.
double concept_fidelity_of(const std::vector<Vec>& samples, const SceneSpec& spec, std::string_view context);

// Mean distance between custom(complete) - displacement and original(base)
// under shared noise.
double behavior_consistency(const VelocityField& custom, const VelocityField& original, const SceneSpec& spec,
                            std::string_view context, const SamplerConfig& sampler, std::size_t n);

struct ReportRow {
    std::string context;
    std::string metric;
    double value = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;

    bool operator==(const ReportRow&) const = default;
};

struct EvalReport {
    std::vector<ReportRow> rows;

    // Throws IndexError when the pair is absent.
    double value(std::string_view context, std::string_view metric) const;
    bool operator==(const EvalReport&) const = default;
};

struct EvalConfig {
    std::size_t n_samples = 2000;
    SamplerConfig sampler;
    HistogramGrid grid;

    void validate() const;
    bool operator==(const EvalConfig&) const = default;
};

// kl_drift for every context, concept_fidelity and behavior_consistency for
// every context.
EvalReport evaluate(const VelocityField& custom, const VelocityField& original, const SceneSpec& spec,
                    const std::vector<std::string>& contexts, const EvalConfig& cfg);

std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& text);

}  // namespace purecc
