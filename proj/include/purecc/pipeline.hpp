#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "purecc/config.hpp"
#include "purecc/customization.hpp"
#include "purecc/eval.hpp"

namespace purecc {

// Fixed artifact names inside the run directory.
struct RunPaths {
    std::filesystem::path dir;

    std::filesystem::path config_echo() const { return dir / "config.cfg"; }
    std::filesystem::path pretrained() const { return dir / "pretrained.pcck"; }
    std::filesystem::path pretrain_loss() const { return dir / "pretrain_loss.csv"; }
    std::filesystem::path extractor() const { return dir / "extractor.pcck"; }
    std::filesystem::path custom() const { return dir / "custom.pcck"; }
    std::filesystem::path trace() const { return dir / "trace.csv"; }
    std::filesystem::path drift() const { return dir / "drift.csv"; }
    std::filesystem::path baseline() const { return dir / "baseline.pcck"; }
    std::filesystem::path baseline_trace() const { return dir / "baseline_trace.csv"; }
    std::filesystem::path eval() const { return dir / "eval.csv"; }
    std::filesystem::path baseline_eval() const { return dir / "baseline_eval.csv"; }
    std::filesystem::path report() const { return dir / "report.csv"; }
    std::filesystem::path plot() const { return dir / "plot.csv"; }
    std::filesystem::path samples(const std::string& context, const std::string& kind) const {
        return dir / ("samples_" + context + "_" + kind + ".csv");
    }
};

RunPaths run_paths(const RunConfig& cfg);

// In-memory building blocks, shared by the stages and by callers that want
// to compare several customizations of one pretrained model.
std::vector<std::string> context_names(const SceneSpec& scene);
VelocityNetwork pretrain_model(const RunConfig& cfg);
CustomSet custom_set(const RunConfig& cfg);
VelocityNetwork extract_model(const RunConfig& cfg, const VelocityNetwork& pretrained);

struct DriftProbe {
    std::size_t iter = 0;
    std::string context;
    double kl_drift = 0.0;
};

struct CustomizeRun {
    CustomizeResult result;
    std::vector<DriftProbe> probes;
};

// customize() (or the L_CC baseline when `baseline` is set) with the
// configured drift probes.
CustomizeRun customize_model(const RunConfig& cfg, const VelocityNetwork& pretrained,
                             const VelocityNetwork& extractor, bool baseline = false);

std::string probes_to_csv(const std::vector<DriftProbe>& probes);
std::vector<DriftProbe> probes_from_csv(const std::string& text);

// Stages. Each reads its inputs from the run directory and throws
// PrerequisiteError naming the stage to run first when one is missing.
void write_config_echo(const RunConfig& cfg);
void stage_pretrain(const RunConfig& cfg);
void stage_extract(const RunConfig& cfg);
void stage_customize(const RunConfig& cfg);
void stage_baseline(const RunConfig& cfg);
void stage_sample(const RunConfig& cfg);
void stage_eval(const RunConfig& cfg);
void stage_report(const RunConfig& cfg);
// Every stage in order.
void run_pipeline(const RunConfig& cfg);

// Report rows: eval rows, the baseline's rows under "cc_baseline." metric
// names, and trace summaries under the context "all".
EvalReport build_report(const RunConfig& cfg, const EvalReport& eval, const EvalReport* baseline,
                        const std::vector<StepDiagnostics>& trace);
std::string plot_csv(const std::vector<StepDiagnostics>& trace, const std::vector<DriftProbe>& probes,
                     const std::vector<std::string>& contexts);

}  // namespace purecc
