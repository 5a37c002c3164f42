#include "purecc/flow.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "purecc/csv.hpp"
#include "purecc/errors.hpp"
#include "purecc/rng.hpp"

namespace purecc {

void FlowBatch::validate() const {
    if (x0.empty()) throw ShapeError("empty batch");
    if (x1.size() != x0.size() || t.size() != x0.size() || y.size() != x0.size()) {
        throw ShapeError("batch fields have inconsistent lengths");
    }
    for (std::size_t i = 0; i < x0.size(); ++i) {
        if (x1[i].size() != x0[i].size() || x0[i].size() != x0[0].size()) {
            throw ShapeError("batch samples have inconsistent dimensions");
        }
        if (!(t[i] >= 0.0 && t[i] <= 1.0)) throw DomainError("batch time outside [0, 1]");
    }
}

void SamplerConfig::validate() const {
    if (steps < 1) throw ConfigError("sampler.steps must be >= 1");
    if (!(guidance_w >= 0.0) || !std::isfinite(guidance_w)) throw ConfigError("sampler.guidance_w must be >= 0");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(cond_dropout_prob >= 0.0 && cond_dropout_prob < 1.0)) {
        throw ConfigError("cond_dropout_prob must lie in [0, 1)");
    }
}

Vec interpolate(std::span<const double> x0, std::span<const double> x1, double t) {
    if (x0.size() != x1.size()) throw ShapeError("interpolate: dimension mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolate: t outside [0, 1]");
    Vec out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * x1[i];
    return out;
}

Vec target_velocity(std::span<const double> x0, std::span<const double> x1) {
    if (x0.size() != x1.size()) throw ShapeError("target_velocity: dimension mismatch");
    Vec out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x1[i] - x0[i];
    return out;
}

double cfm_loss_value(const VelocityField& field, const FlowBatch& batch) {
    batch.validate();
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Vec xt = interpolate(batch.x0[i], batch.x1[i], batch.t[i]);
        const Vec u = target_velocity(batch.x0[i], batch.x1[i]);
        const Vec v = field.velocity(xt, batch.t[i], batch.y[i]);
        for (std::size_t k = 0; k < u.size(); ++k) total += (u[k] - v[k]) * (u[k] - v[k]);
    }
    return total / static_cast<double>(batch.size());
}

LossGrad cfm_loss(const VelocityNetwork& net, const FlowBatch& batch) {
    batch.validate();
    LossGrad out{0.0, net.zero_gradients()};
    const double n = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Vec xt = interpolate(batch.x0[i], batch.x1[i], batch.t[i]);
        const Vec u = target_velocity(batch.x0[i], batch.x1[i]);
        const Vec v = net.forward(xt, batch.t[i], batch.y[i]);
        Vec upstream(u.size());
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double r = v[k] - u[k];
            out.loss += r * r;
            upstream[k] = 2.0 * r / n;
        }
        net.accumulate_gradients(xt, batch.t[i], batch.y[i], upstream, out.grads);
    }
    out.loss /= n;
    return out;
}

FlowTrainResult train_flow(VelocityNetwork net, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() == 0) throw ShapeError("train_flow: empty dataset");
    FlowTrainResult result{std::move(net), {}};
    result.loss_trace.reserve(cfg.iterations);
    Rng rng(cfg.seed);
    const std::size_t d = result.net.dim();

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        FlowBatch batch;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t idx = rng.below(data.size());
            Vec noise(d);
            for (double& v : noise) v = rng.normal();
            const double t = rng.uniform();
            const bool drop = rng.uniform() < cfg.cond_dropout_prob;
            batch.x0.push_back(data.samples[idx]);
            batch.x1.push_back(std::move(noise));
            batch.t.push_back(t);
            batch.y.push_back(drop ? Condition::null() : data.conditions[idx]);
        }
        LossGrad lg = cfm_loss(result.net, batch);
        if (!std::isfinite(lg.loss)) {
            throw DivergenceError("training diverged at iteration " + std::to_string(it));
        }
        result.loss_trace.push_back(lg.loss);
        result.net.apply_sgd(lg.grads, cfg.learning_rate);
    }
    return result;
}

Vec cfg_velocity(const VelocityField& field, std::span<const double> x, double t, const Condition& y,
                 double w) {
    const Vec vy = field.velocity(x, t, y);
    // (1 - w) = 0 contributes an exact zero, so the null branch is skipped.
    if (w == 1.0) return vy;
    const Vec vn = field.velocity(x, t, Condition::null());
    Vec out(vy.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - w) * vn[i] + w * vy[i];
    return out;
}

Vec cfg_velocity_implicit(const VelocityField& field, std::span<const double> x, double t,
                          const Condition& y, double w) {
    const Vec vy = field.velocity(x, t, y);
    const Vec vn = field.velocity(x, t, Condition::null());
    Vec out(vy.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vn[i] + w * (vy[i] - vn[i]);
    return out;
}

std::vector<Vec> draw_noise(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec> out(n, Vec(dim));
    for (auto& row : out) {
        for (double& v : row) v = rng.normal();
    }
    return out;
}

std::vector<Vec> integrate(const VelocityField& field, const Condition& y, std::vector<Vec> noise,
                           const SamplerConfig& cfg) {
    cfg.validate();
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    for (auto& x : noise) {
        if (x.size() != field.dim()) throw ShapeError("noise dimension does not match the model");
        for (std::size_t k = 0; k < cfg.steps; ++k) {
            const double t = 1.0 - static_cast<double>(k) * dt;
            const Vec v = cfg_velocity(field, x, t, y, cfg.guidance_w);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dt * v[i];
            if (!all_finite(x)) throw DivergenceError("sampling produced a non-finite state");
        }
    }
    return noise;
}

std::vector<Vec> sample(const VelocityField& field, const Condition& y, std::size_t n,
                        const SamplerConfig& cfg) {
    if (n < 1) throw ConfigError("sample count must be >= 1");
    return integrate(field, y, draw_noise(n, field.dim(), cfg.seed), cfg);
}

std::string samples_to_csv(const std::vector<Vec>& samples) {
    std::ostringstream out;
    const std::size_t d = samples.empty() ? 0 : samples.front().size();
    for (std::size_t k = 0; k < d; ++k) out << (k ? "," : "") << "dim" << k;
    out << '\n';
    for (const auto& s : samples) {
        if (s.size() != d) throw ShapeError("samples have inconsistent dimensions");
        for (std::size_t k = 0; k < d; ++k) out << (k ? "," : "") << format_double(s[k]);
        out << '\n';
    }
    return out.str();
}

std::vector<Vec> samples_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("sample csv is empty");
    const auto header = split(trim(line), ',');
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] != "dim" + std::to_string(k)) throw FormatError("sample csv header is malformed");
    }
    std::vector<Vec> out;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto fields = split(t, ',');
        if (fields.size() != header.size()) throw FormatError("sample csv row has the wrong width");
        Vec row;
        for (const auto& f : fields) row.push_back(parse_double(f));
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace purecc
