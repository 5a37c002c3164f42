#include "purecc/customization.hpp"

#include <cmath>
#include <sstream>

#include "purecc/csv.hpp"
#include "purecc/errors.hpp"
#include "purecc/rng.hpp"

namespace purecc {

namespace {

void check_finite_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be > 0");
}

StepBatch draw_step_batch(Rng& rng, const CustomSet& refs, std::size_t batch_size) {
    StepBatch b;
    b.y_complete = refs.conditions.front();
    b.y_tar = refs.target();
    const std::size_t d = refs.samples.front().size();
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t idx = rng.below(refs.size());
        Vec noise(d);
        for (double& v : noise) v = rng.normal();
        b.x0.push_back(refs.samples[idx]);
        b.x1.push_back(std::move(noise));
        b.t.push_back(rng.uniform());
    }
    return b;
}

void check_custom_set(const CustomSet& refs) {
    if (refs.size() == 0) throw ShapeError("custom set is empty");
    if (refs.conditions.size() != refs.size()) throw ShapeError("custom set conditions do not match samples");
    for (const auto& c : refs.conditions) {
        if (c.role != Role::complete || c != refs.conditions.front()) {
            throw ContractError("custom set conditions must be one shared complete condition");
        }
    }
}

double rms(const std::vector<Vec>& vs) {
    double s = 0.0;
    for (const auto& v : vs) s += squared_norm(v);
    return std::sqrt(s / static_cast<double>(vs.size()));
}

}  // namespace

void ExtractorConfig::validate() const {
    check_finite_positive(learning_rate, "extract.learning_rate");
    if (batch_size < 1) throw ConfigError("extract.batch_size must be >= 1");
    if (adapter_rank < 1) throw ConfigError("extract.rank must be >= 1");
}

void PureCCConfig::validate() const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("purecc.eta must be >= 0");
    if (lambda_mode == LambdaMode::fixed && (!(fixed_lambda >= 0.0) || !std::isfinite(fixed_lambda))) {
        throw ConfigError("fixed lambda must be >= 0");
    }
    if (!(eps_guard > 0.0)) throw ConfigError("purecc.eps_guard must be > 0");
    check_finite_positive(learning_rate, "purecc.learning_rate");
    if (batch_size < 1) throw ConfigError("purecc.batch_size must be >= 1");
    if (adapter_rank < 1) throw ConfigError("purecc.rank must be >= 1");
}

// ------------------------------------------------------------------ stage 1

ExtractorResult train_extractor(const VelocityNetwork& pretrained, const CustomSet& refs,
                                const ExtractorConfig& cfg) {
    cfg.validate();
    check_custom_set(refs);
    if (pretrained.has_adapter()) throw StateError("extractor input already carries an adapter");
    if (refs.concept_token != pretrained.config().concept_token_id()) {
        throw ContractError("custom set concept token does not match the network");
    }

    ExtractorResult out{pretrained.attach_adapter(cfg.adapter_rank, mix_seed(cfg.seed, 1)), {}};
    Rng rng(mix_seed(cfg.seed, 2));
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const StepBatch sb = draw_step_batch(rng, refs, cfg.batch_size);
        FlowBatch fb{sb.x0, sb.x1, sb.t, std::vector<Condition>(sb.x0.size(), sb.y_complete)};
        LossGrad lg = cfm_loss(out.net, fb);
        if (!std::isfinite(lg.loss)) {
            throw DivergenceError("extractor training diverged at iteration " + std::to_string(it));
        }
        out.loss_trace.push_back(lg.loss);
        out.net.apply_sgd(lg.grads, cfg.learning_rate);
    }
    out.net = out.net.clone_frozen();
    return out;
}

// ------------------------------------------------------- guidance algebra

Vec representation_bias(const VelocityField& field, std::span<const double> x, double t, const Condition& y) {
    Vec v = field.velocity(x, t, y);
    const Vec vn = field.velocity(x, t, Condition::null());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= vn[i];
    return v;
}

Vec target_guidance(const VelocityField& extractor, std::span<const double> x_t, double t,
                    const Condition& y_tar) {
    if (const auto* net = dynamic_cast<const VelocityNetwork*>(&extractor); net && !net->frozen()) {
        throw ContractError("target guidance requires a frozen extractor");
    }
    return representation_bias(extractor, x_t, t, y_tar);
}

Vec learned_representation(const VelocityField& trainable, std::span<const double> x_t, double t,
                           const Condition& y_complete, const Condition& y_base) {
    Vec v = trainable.velocity(x_t, t, y_complete);
    const Vec vb = trainable.velocity(x_t, t, y_base);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= vb[i];
    return v;
}

AdaptiveLambda adaptive_lambda(std::span<const double> r_learned, std::span<const double> r_tar,
                               double eps_guard) {
    if (r_learned.size() != r_tar.size()) throw ShapeError("adaptive_lambda: dimension mismatch");
    const double denom = squared_norm(r_tar);
    if (!(denom >= eps_guard)) return {0.0, true};
    return {dot(r_learned, r_tar) / denom, false};
}

AdaptiveLambda adaptive_lambda(const std::vector<Vec>& r_learned, const std::vector<Vec>& r_tar,
                               double eps_guard) {
    if (r_learned.size() != r_tar.size() || r_tar.empty()) {
        throw ShapeError("adaptive_lambda: batch sizes differ or are empty");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < r_tar.size(); ++i) {
        num += dot(r_learned[i], r_tar[i]);
        den += squared_norm(r_tar[i]);
    }
    const double n = static_cast<double>(r_tar.size());
    num /= n;
    den /= n;
    if (!(den >= eps_guard)) return {0.0, true};
    return {num / den, false};
}

Vec purecc_target(std::span<const double> v_original, std::span<const double> r_tar, double lambda) {
    if (v_original.size() != r_tar.size()) throw ShapeError("purecc_target: dimension mismatch");
    Vec out(v_original.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_original[i] + lambda * r_tar[i];
    return out;
}

double purecc_loss_value(const VelocityField& trainable, const std::vector<Vec>& x_t,
                         const std::vector<double>& t, const Condition& y_complete,
                         const std::vector<Vec>& v_purecc) {
    if (x_t.empty() || x_t.size() != t.size() || x_t.size() != v_purecc.size()) {
        throw ShapeError("purecc_loss: inconsistent batch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const Vec f = trainable.velocity(x_t[i], t[i], y_complete);
        if (v_purecc[i].size() != f.size()) throw ShapeError("purecc_loss: target dimension mismatch");
        for (std::size_t k = 0; k < f.size(); ++k) total += (v_purecc[i][k] - f[k]) * (v_purecc[i][k] - f[k]);
    }
    return total / static_cast<double>(x_t.size());
}

LossGrad purecc_loss(const VelocityNetwork& trainable, const std::vector<Vec>& x_t,
                     const std::vector<double>& t, const Condition& y_complete,
                     const std::vector<Vec>& v_purecc) {
    if (x_t.empty() || x_t.size() != t.size() || x_t.size() != v_purecc.size()) {
        throw ShapeError("purecc_loss: inconsistent batch");
    }
    LossGrad out{0.0, trainable.zero_gradients()};
    const double n = static_cast<double>(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const Vec f = trainable.forward(x_t[i], t[i], y_complete);
        if (v_purecc[i].size() != f.size()) throw ShapeError("purecc_loss: target dimension mismatch");
        Vec upstream(f.size());
        for (std::size_t k = 0; k < f.size(); ++k) {
            const double r = f[k] - v_purecc[i][k];
            out.loss += r * r;
            upstream[k] = 2.0 * r / n;
        }
        trainable.accumulate_gradients(x_t[i], t[i], y_complete, upstream, out.grads);
    }
    out.loss /= n;
    return out;
}

// ------------------------------------------------------------------ stage 2

PureStep compute_pure_step(const VelocityNetwork& trainable, const VelocityNetwork& extractor,
                           const VelocityNetwork* original, const StepBatch& batch,
                           const PureCCConfig& cfg) {
    if (!extractor.frozen()) throw ContractError("pure learning requires a frozen extractor");
    if (cfg.original_mode == OriginalMode::frozen_theta3 && (!original || !original->frozen())) {
        throw ContractError("frozen_theta3 mode requires a frozen original model");
    }
    const std::size_t n = batch.x0.size();
    if (n == 0 || batch.x1.size() != n || batch.t.size() != n) throw ShapeError("inconsistent step batch");
    const Condition y_base = batch.y_complete.base_part();

    PureStep step;
    std::vector<Vec> x_t(n), u(n), f_complete(n), v_original(n);
    step.guidance.r_tar.resize(n);
    step.guidance.r_learned.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        x_t[i] = interpolate(batch.x0[i], batch.x1[i], batch.t[i]);
        u[i] = target_velocity(batch.x0[i], batch.x1[i]);
        f_complete[i] = trainable.forward(x_t[i], batch.t[i], batch.y_complete);
        const Vec f_base = trainable.forward(x_t[i], batch.t[i], y_base);
        step.guidance.r_tar[i] = target_guidance(extractor, x_t[i], batch.t[i], batch.y_tar);
        Vec rl(f_complete[i]);
        for (std::size_t k = 0; k < rl.size(); ++k) rl[k] -= f_base[k];
        step.guidance.r_learned[i] = std::move(rl);
        v_original[i] = cfg.original_mode == OriginalMode::frozen_theta3
                            ? original->forward(x_t[i], batch.t[i], y_base)
                            : f_base;
    }

    if (cfg.lambda_mode == LambdaMode::adaptive) {
        const AdaptiveLambda al = adaptive_lambda(step.guidance.r_learned, step.guidance.r_tar, cfg.eps_guard);
        step.guidance.lambda_star = al.value;
        step.degenerate = al.degenerate;
    } else {
        step.guidance.lambda_star = cfg.fixed_lambda;
    }

    const bool grad_through_original =
        !cfg.detach_original && cfg.original_mode == OriginalMode::trainable_theta2 && cfg.eta != 0.0;
    const double nn = static_cast<double>(n);
    step.grads = trainable.zero_gradients();
    step.v_purecc.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        step.v_purecc[i] = purecc_target(v_original[i], step.guidance.r_tar[i], step.guidance.lambda_star);
        const Vec& f = f_complete[i];
        Vec upstream(f.size());
        Vec upstream_base(f.size());
        for (std::size_t k = 0; k < f.size(); ++k) {
            const double r_cc = f[k] - u[i][k];
            const double r_pure = f[k] - step.v_purecc[i][k];
            step.loss_cc += r_cc * r_cc;
            step.loss_purecc += r_pure * r_pure;
            upstream[k] = 2.0 * (r_cc + cfg.eta * r_pure) / nn;
            upstream_base[k] = -2.0 * cfg.eta * r_pure / nn;
        }
        trainable.accumulate_gradients(x_t[i], batch.t[i], batch.y_complete, upstream, step.grads);
        if (grad_through_original) {
            trainable.accumulate_gradients(x_t[i], batch.t[i], y_base, upstream_base, step.grads);
        }
    }
    step.loss_cc /= nn;
    step.loss_purecc /= nn;
    step.loss_total = step.loss_cc + cfg.eta * step.loss_purecc;
    return step;
}

StepDiagnostics pure_learning_step(VelocityNetwork& trainable, const VelocityNetwork& extractor,
                                   const VelocityNetwork* original, const StepBatch& batch,
                                   const PureCCConfig& cfg) {
    PureStep step = compute_pure_step(trainable, extractor, original, batch, cfg);
    if (!std::isfinite(step.loss_total)) throw DivergenceError("pure learning loss is not finite");
    trainable.apply_sgd(step.grads, cfg.learning_rate);
    StepDiagnostics d;
    d.loss_cc = step.loss_cc;
    d.loss_purecc = step.loss_purecc;
    d.lambda_star = step.guidance.lambda_star;
    d.r_tar_norm = rms(step.guidance.r_tar);
    d.r_learned_norm = rms(step.guidance.r_learned);
    d.degenerate = step.degenerate;
    return d;
}

VelocityNetwork init_trainable(const VelocityNetwork& pretrained, const VelocityNetwork& extractor,
                               const PureCCConfig& cfg) {
    if (pretrained.has_adapter()) throw StateError("pretrained model must not carry an adapter");
    if (extractor.config().concept_token_id() != pretrained.config().concept_token_id()) {
        throw ContractError("extractor and pretrained model disagree on the concept token");
    }
    VelocityNetwork net = cfg.full_finetune ? pretrained.clone_trainable()
                                            : pretrained.attach_adapter(cfg.adapter_rank, mix_seed(cfg.seed, 1));
    net.copy_concept_slots_from(extractor);
    return net;
}

namespace {

void check_stage2_inputs(const VelocityNetwork& extractor, const CustomSet& refs) {
    check_custom_set(refs);
    if (extractor.config().concept_token_id() != refs.concept_token) {
        throw ContractError("extractor concept token does not match the custom set");
    }
    if (!extractor.frozen()) throw ContractError("extractor must be frozen");
}

}  // namespace

CustomizeResult customize(const VelocityNetwork& pretrained, const VelocityNetwork& extractor,
                          const CustomSet& refs, const PureCCConfig& cfg, const StepObserver& observer) {
    cfg.validate();
    check_stage2_inputs(extractor, refs);
    CustomizeResult out{init_trainable(pretrained, extractor, cfg), {}};
    const VelocityNetwork original = pretrained.clone_frozen();
    const VelocityNetwork* original_ptr = cfg.original_mode == OriginalMode::frozen_theta3 ? &original : nullptr;
    Rng rng(mix_seed(cfg.seed, 2));
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const StepBatch batch = draw_step_batch(rng, refs, cfg.batch_size);
        StepDiagnostics d = pure_learning_step(out.net, extractor, original_ptr, batch, cfg);
        d.iter = it;
        out.trace.push_back(d);
        if (observer) observer(it, out.net);
    }
    return out;
}

CustomizeResult finetune_cc(const VelocityNetwork& pretrained, const VelocityNetwork& extractor,
                            const CustomSet& refs, const PureCCConfig& cfg, const StepObserver& observer) {
    cfg.validate();
    check_stage2_inputs(extractor, refs);
    CustomizeResult out{init_trainable(pretrained, extractor, cfg), {}};
    Rng rng(mix_seed(cfg.seed, 2));
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const StepBatch sb = draw_step_batch(rng, refs, cfg.batch_size);
        FlowBatch fb{sb.x0, sb.x1, sb.t, std::vector<Condition>(sb.x0.size(), sb.y_complete)};
        LossGrad lg = cfm_loss(out.net, fb);
        if (!std::isfinite(lg.loss)) throw DivergenceError("fine-tuning diverged at iteration " + std::to_string(it));
        out.net.apply_sgd(lg.grads, cfg.learning_rate);
        StepDiagnostics d;
        d.iter = it;
        d.loss_cc = lg.loss;
        out.trace.push_back(d);
        if (observer) observer(it, out.net);
    }
    return out;
}

// ---------------------------------------------------------------- trace csv

std::string trace_to_csv(const std::vector<StepDiagnostics>& trace) {
    std::ostringstream out;
    out << "iter,loss_cc,loss_purecc,lambda_star,r_tar_norm,r_learned_norm,degenerate_flag\n";
    for (const auto& d : trace) {
        out << d.iter << ',' << format_double(d.loss_cc) << ',' << format_double(d.loss_purecc) << ','
            << format_double(d.lambda_star) << ',' << format_double(d.r_tar_norm) << ','
            << format_double(d.r_learned_norm) << ',' << (d.degenerate ? 1 : 0) << '\n';
    }
    return out.str();
}

std::vector<StepDiagnostics> trace_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (trim(line) != "iter,loss_cc,loss_purecc,lambda_star,r_tar_norm,r_learned_norm,degenerate_flag") {
        throw FormatError("trace csv header is malformed");
    }
    std::vector<StepDiagnostics> trace;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto f = split(t, ',');
        if (f.size() != 7) throw FormatError("trace csv row has the wrong width");
        StepDiagnostics d;
        d.iter = static_cast<std::size_t>(parse_double(f[0]));
        d.loss_cc = parse_double(f[1]);
        d.loss_purecc = parse_double(f[2]);
        d.lambda_star = parse_double(f[3]);
        d.r_tar_norm = parse_double(f[4]);
        d.r_learned_norm = parse_double(f[5]);
        d.degenerate = parse_double(f[6]) != 0.0;
        trace.push_back(d);
    }
    return trace;
}

}  // namespace purecc
