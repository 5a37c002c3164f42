#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "purecc/customization.hpp"
#include "purecc/data.hpp"
#include "purecc/eval.hpp"
#include "purecc/flow.hpp"
#include "purecc/net.hpp"

namespace purecc {

struct StageSeeds {
    std::uint64_t data = 1;
    std::uint64_t net = 2;
    std::uint64_t pretrain = 3;
    std::uint64_t custom = 4;
    std::uint64_t extract = 5;
    std::uint64_t purecc = 6;
    std::uint64_t sampler = 7;

    // Derive every stage seed from one value.
    static StageSeeds from(std::uint64_t seed);
    bool operator==(const StageSeeds&) const = default;
};

// Complete hyperparameter surface of a pipeline run. input_dim and
// vocab_size of the network are derived from the scene.
struct RunConfig {
    std::string run_dir = "run";
    SceneSpec scene = SceneSpec::default_spec();
    NetworkConfig net;
    std::size_t pretrain_samples = 4000;
    TrainConfig pretrain{6000, 0.02, 32, 0.1, 0};
    std::string custom_context = "beach";
    std::size_t n_refs = kDefaultRefs;
    ExtractorConfig extract;
    PureCCConfig purecc;
    EvalConfig eval;
    // Drift probes during customization: every `probe_every` iterations
    // (0 disables), with `probe_samples` samples per context.
    std::size_t probe_every = 50;
    std::size_t probe_samples = 500;
    StageSeeds seeds;

    // Copies the stage seeds into the per-stage configs and the derived
    // network dimensions from the scene.
    RunConfig resolved() const;
    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

// Parses `key = value` lines; '#' starts a comment. Errors carry the line
// number.
RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
RunConfig parse_config(const std::string& path);

// Every key, in a fixed order; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// "adaptive" or "fixed:<value>".
void parse_lambda_mode(const std::string& text, PureCCConfig& cfg);
std::string lambda_mode_text(const PureCCConfig& cfg);
OriginalMode parse_original_mode(const std::string& text);
std::string original_mode_text(OriginalMode mode);

}  // namespace purecc
