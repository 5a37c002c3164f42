#include "purecc/pipeline.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "purecc/checkpoint.hpp"
#include "purecc/csv.hpp"
#include "purecc/errors.hpp"

namespace purecc {

namespace {

std::string read_file(const std::filesystem::path& path, const std::string& stage) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PrerequisiteError("missing " + path.string() + ": run " + stage + " first");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

VelocityNetwork require_checkpoint(const std::filesystem::path& path, const std::string& stage) {
    if (!std::filesystem::exists(path)) {
        throw PrerequisiteError("missing " + path.string() + ": run " + stage + " first");
    }
    return load_checkpoint(path);
}

void ensure_dir(const RunPaths& p) {
    std::error_code ec;
    std::filesystem::create_directories(p.dir, ec);
    if (ec) throw ConfigError("cannot create run directory '" + p.dir.string() + "': " + ec.message());
}

}  // namespace

RunPaths run_paths(const RunConfig& cfg) { return RunPaths{cfg.run_dir}; }

std::vector<std::string> context_names(const SceneSpec& scene) {
    std::vector<std::string> out;
    for (const auto& c : scene.contexts) out.push_back(c.name);
    return out;
}

VelocityNetwork pretrain_model(const RunConfig& cfg) {
    const RunConfig r = cfg.resolved();
    r.validate();
    const Dataset data = make_pretrain_set(r.scene, r.pretrain_samples, r.seeds.data);
    return train_flow(VelocityNetwork::build(r.net, r.seeds.net), data, r.pretrain).net.clone_frozen();
}

CustomSet custom_set(const RunConfig& cfg) {
    return make_custom_set(cfg.scene, cfg.custom_context, cfg.n_refs, cfg.seeds.custom);
}

VelocityNetwork extract_model(const RunConfig& cfg, const VelocityNetwork& pretrained) {
    const RunConfig r = cfg.resolved();
    return train_extractor(pretrained, custom_set(r), r.extract).net;
}

CustomizeRun customize_model(const RunConfig& cfg, const VelocityNetwork& pretrained,
                             const VelocityNetwork& extractor, bool baseline) {
    const RunConfig r = cfg.resolved();
    const auto contexts = context_names(r.scene);
    CustomizeRun run{{pretrained, {}}, {}};
    StepObserver observer;
    if (r.probe_every > 0) {
        observer = [&](std::size_t iter, const VelocityNetwork& net) {
            if ((iter + 1) % r.probe_every != 0) return;
            const auto drift = preservation_drift(net, pretrained, r.scene, contexts, r.eval.sampler,
                                                  r.probe_samples, r.eval.grid);
            for (std::size_t i = 0; i < contexts.size(); ++i) run.probes.push_back({iter, contexts[i], drift[i]});
        };
    }
    const CustomSet refs = custom_set(r);
    run.result = baseline ? finetune_cc(pretrained, extractor, refs, r.purecc, observer)
                          : customize(pretrained, extractor, refs, r.purecc, observer);
    return run;
}

std::string probes_to_csv(const std::vector<DriftProbe>& probes) {
    std::ostringstream out;
    out << "iter,context,kl_drift\n";
    for (const auto& p : probes) out << p.iter << ',' << p.context << ',' << format_double(p.kl_drift) << '\n';
    return out.str();
}

std::vector<DriftProbe> probes_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (trim(line) != "iter,context,kl_drift") throw FormatError("drift csv header is malformed");
    std::vector<DriftProbe> out;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto f = split(t, ',');
        if (f.size() != 3) throw FormatError("drift csv row has the wrong width");
        out.push_back({static_cast<std::size_t>(parse_double(f[0])), f[1], parse_double(f[2])});
    }
    return out;
}

// ------------------------------------------------------------------- stages

void write_config_echo(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    ensure_dir(p);
    write_text(p.config_echo(), serialize_config(cfg));
}

void stage_pretrain(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    ensure_dir(p);
    const RunConfig r = cfg.resolved();
    r.validate();
    const Dataset data = make_pretrain_set(r.scene, r.pretrain_samples, r.seeds.data);
    const FlowTrainResult res = train_flow(VelocityNetwork::build(r.net, r.seeds.net), data, r.pretrain);
    save_checkpoint(p.pretrained(), res.net.clone_frozen());
    std::ostringstream loss;
    loss << "iter,loss\n";
    for (std::size_t i = 0; i < res.loss_trace.size(); ++i) loss << i << ',' << format_double(res.loss_trace[i]) << '\n';
    write_text(p.pretrain_loss(), loss.str());
}

void stage_extract(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    const VelocityNetwork pretrained = require_checkpoint(p.pretrained(), "pretrain");
    save_checkpoint(p.extractor(), extract_model(cfg, pretrained));
}

void stage_customize(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    const VelocityNetwork pretrained = require_checkpoint(p.pretrained(), "pretrain");
    const VelocityNetwork extractor = require_checkpoint(p.extractor(), "extract");
    const CustomizeRun run = customize_model(cfg, pretrained, extractor, false);
    save_checkpoint(p.custom(), run.result.net);
    write_text(p.trace(), trace_to_csv(run.result.trace));
    write_text(p.drift(), probes_to_csv(run.probes));
}

void stage_baseline(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    const VelocityNetwork pretrained = require_checkpoint(p.pretrained(), "pretrain");
    const VelocityNetwork extractor = require_checkpoint(p.extractor(), "extract");
    RunConfig quiet = cfg;
    quiet.probe_every = 0;
    const CustomizeRun run = customize_model(quiet, pretrained, extractor, true);
    save_checkpoint(p.baseline(), run.result.net);
    write_text(p.baseline_trace(), trace_to_csv(run.result.trace));
}

void stage_sample(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    const RunConfig r = cfg.resolved();
    const VelocityNetwork custom = require_checkpoint(p.custom(), "customize");
    for (std::size_t i = 0; i < r.scene.contexts.size(); ++i) {
        const std::string& name = r.scene.contexts[i].name;
        SamplerConfig s = r.eval.sampler;
        s.seed = context_seed(r.eval.sampler, i);
        write_text(p.samples(name, "base"), samples_to_csv(sample(custom, base_condition(r.scene, name), r.eval.n_samples, s)));
        write_text(p.samples(name, "complete"),
                   samples_to_csv(sample(custom, complete_condition(r.scene, name), r.eval.n_samples, s)));
    }
}

void stage_eval(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    const RunConfig r = cfg.resolved();
    const VelocityNetwork pretrained = require_checkpoint(p.pretrained(), "pretrain");
    const VelocityNetwork custom = require_checkpoint(p.custom(), "customize");
    const auto contexts = context_names(r.scene);
    write_text(p.eval(), report_to_csv(evaluate(custom, pretrained, r.scene, contexts, r.eval)));
    if (std::filesystem::exists(p.baseline())) {
        const VelocityNetwork baseline = load_checkpoint(p.baseline());
        write_text(p.baseline_eval(), report_to_csv(evaluate(baseline, pretrained, r.scene, contexts, r.eval)));
    }
}

EvalReport build_report(const RunConfig& cfg, const EvalReport& eval, const EvalReport* baseline,
                        const std::vector<StepDiagnostics>& trace) {
    const RunConfig r = cfg.resolved();
    EvalReport out = eval;
    if (baseline) {
        for (ReportRow row : baseline->rows) {
            row.metric = "cc_baseline." + row.metric;
            out.rows.push_back(std::move(row));
        }
    }
    if (!trace.empty()) {
        double lambda_sum = 0.0;
        std::size_t degenerate = 0;
        for (const auto& d : trace) {
            lambda_sum += d.lambda_star;
            degenerate += d.degenerate ? 1 : 0;
        }
        const std::size_t n = trace.size();
        const std::uint64_t seed = r.purecc.seed;
        out.rows.push_back({"all", "lambda_star_mean", lambda_sum / static_cast<double>(n), n, seed});
        out.rows.push_back({"all", "lambda_star_final", trace.back().lambda_star, n, seed});
        out.rows.push_back({"all", "loss_cc_final", trace.back().loss_cc, n, seed});
        out.rows.push_back({"all", "loss_purecc_final", trace.back().loss_purecc, n, seed});
        out.rows.push_back({"all", "degenerate_steps", static_cast<double>(degenerate), n, seed});
    }
    return out;
}

std::string plot_csv(const std::vector<StepDiagnostics>& trace, const std::vector<DriftProbe>& probes,
                     const std::vector<std::string>& contexts) {
    std::map<std::pair<std::size_t, std::string>, double> drift;
    for (const auto& p : probes) drift[{p.iter, p.context}] = p.kl_drift;
    std::ostringstream out;
    out << "iter,loss_cc,loss_purecc,lambda_star";
    for (const auto& c : contexts) out << ",drift_" << c;
    out << '\n';
    for (const auto& d : trace) {
        out << d.iter << ',' << format_double(d.loss_cc) << ',' << format_double(d.loss_purecc) << ','
            << format_double(d.lambda_star);
        for (const auto& c : contexts) {
            out << ',';
            if (const auto it = drift.find({d.iter, c}); it != drift.end()) out << format_double(it->second);
        }
        out << '\n';
    }
    return out.str();
}

void stage_report(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    const EvalReport eval = report_from_csv(read_file(p.eval(), "eval"));
    const auto trace = trace_from_csv(read_file(p.trace(), "customize"));
    const auto probes = probes_from_csv(read_file(p.drift(), "customize"));
    std::optional<EvalReport> baseline;
    if (std::filesystem::exists(p.baseline_eval())) baseline = report_from_csv(read_file(p.baseline_eval(), "eval"));
    const EvalReport report = build_report(cfg, eval, baseline ? &*baseline : nullptr, trace);
    write_text(p.report(), report_to_csv(report));
    write_text(p.plot(), plot_csv(trace, probes, context_names(cfg.scene)));
}

void run_pipeline(const RunConfig& cfg) {
    write_config_echo(cfg);
    stage_pretrain(cfg);
    stage_extract(cfg);
    stage_customize(cfg);
    stage_baseline(cfg);
    stage_sample(cfg);
    stage_eval(cfg);
    stage_report(cfg);
}

}  // namespace purecc
