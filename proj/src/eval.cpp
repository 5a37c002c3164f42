#include "purecc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <sstream>

#include "purecc/csv.hpp"
#include "purecc/errors.hpp"
#include "purecc/rng.hpp"

namespace purecc {

void HistogramGrid::validate() const {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError("eval.grid bounds must satisfy lo < hi");
    if (bins < 2) throw ConfigError("eval.grid.bins must be >= 2");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("eval.grid.alpha must be > 0");
}

std::size_t HistogramGrid::cell_of(std::span<const double> x) const {
    const double width = (hi - lo) / static_cast<double>(bins);
    std::size_t cell = 0;
    for (double v : x) {
        if (std::isnan(v)) throw NumericInputError("histogram input is NaN");
        double pos = std::floor((v - lo) / width);
        pos = std::clamp(pos, 0.0, static_cast<double>(bins - 1));
        cell = cell * bins + static_cast<std::size_t>(pos);
    }
    return cell;
}

double HistogramGrid::cell_count(std::size_t dim) const {
    return std::pow(static_cast<double>(bins), static_cast<double>(dim));
}

namespace {

using Counts = std::map<std::size_t, std::size_t>;

Counts count_cells(const std::vector<Vec>& samples, const HistogramGrid& grid, std::size_t dim) {
    Counts counts;
    for (const auto& s : samples) {
        if (s.size() != dim) throw ShapeError("histogram samples have inconsistent dimensions");
        ++counts[grid.cell_of(s)];
    }
    return counts;
}

std::size_t count_at(const Counts& c, std::size_t cell) {
    const auto it = c.find(cell);
    return it == c.end() ? 0 : it->second;
}

}  // namespace

double histogram_kl(const std::vector<Vec>& p, const std::vector<Vec>& q, const HistogramGrid& grid) {
    grid.validate();
    if (p.empty() || q.empty()) throw ShapeError("histogram_kl: empty sample set");
    const std::size_t dim = p.front().size();
    if (dim == 0) throw ShapeError("histogram_kl: zero-dimensional samples");
    if (std::log(static_cast<double>(grid.bins)) * static_cast<double>(dim) >
        std::log(static_cast<double>(std::numeric_limits<std::size_t>::max()))) {
        throw ConfigError("histogram grid too large for this dimension");
    }
    const Counts cp = count_cells(p, grid, dim);
    const Counts cq = count_cells(q, grid, dim);
    const double norm = 1.0 + grid.alpha * grid.cell_count(dim);
    const double np = static_cast<double>(p.size());
    const double nq = static_cast<double>(q.size());

    // Cells empty in both sets have p_i == q_i and contribute nothing.
    Counts cells = cp;
    for (const auto& [cell, _] : cq) cells.emplace(cell, 0);
    double kl = 0.0;
    for (const auto& [cell, _] : cells) {
        const double pi = (static_cast<double>(count_at(cp, cell)) / np + grid.alpha) / norm;
        const double qi = (static_cast<double>(count_at(cq, cell)) / nq + grid.alpha) / norm;
        kl += pi * std::log(pi / qi);
    }
    return std::max(kl, 0.0);
}

double histogram_kl_symmetric(const std::vector<Vec>& p, const std::vector<Vec>& q, const HistogramGrid& grid) {
    return 0.5 * (histogram_kl(p, q, grid) + histogram_kl(q, p, grid));
}

std::uint64_t context_seed(const SamplerConfig& sampler, std::size_t index) {
    return mix_seed(sampler.seed, 1000 + index);
}

namespace {

void check_compatible(const VelocityField& a, const VelocityField& b) {
    if (a.dim() != b.dim()) throw ShapeError("models differ in dimension");
    if (a.vocab_size() != b.vocab_size()) throw ContractError("models differ in vocabulary");
}

void check_n(std::size_t n) {
    if (n < 1) throw ConfigError("sample count must be >= 1");
}

SamplerConfig seeded(const SamplerConfig& sampler, std::uint64_t seed) {
    SamplerConfig s = sampler;
    s.seed = seed;
    return s;
}

}  // namespace

std::vector<double> preservation_drift(const VelocityField& custom, const VelocityField& original,
                                       const SceneSpec& spec, const std::vector<std::string>& contexts,
                                       const SamplerConfig& sampler, std::size_t n, const HistogramGrid& grid) {
    check_compatible(custom, original);
    check_n(n);
    if (contexts.empty()) throw ConfigError("no contexts to evaluate");
    std::vector<std::future<double>> jobs;
    for (const auto& name : contexts) {
        const std::size_t idx = spec.context_index(name);
        const Condition y = base_condition(spec, name);
        const SamplerConfig s = seeded(sampler, context_seed(sampler, idx));
        jobs.push_back(std::async(std::launch::async, [&custom, &original, &grid, y, s, n] {
            return histogram_kl(sample(custom, y, n, s), sample(original, y, n, s), grid);
        }));
    }
    std::vector<double> out;
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

double concept_fidelity_of(const std::vector<Vec>& samples, const SceneSpec& spec, std::string_view context) {
    if (samples.empty()) throw ShapeError("concept_fidelity: no samples");
    const Vec concept_c = spec.concept_center(context);
    auto sq_dist = [](const Vec& a, const Vec& b) {
        double d = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
        return d;
    };
    std::size_t hits = 0;
    for (const auto& s : samples) {
        if (s.size() != concept_c.size()) throw ShapeError("sample dimension does not match the scene");
        const double d_concept = sq_dist(s, concept_c);
        // Ties go to the context.
        const bool nearest = std::none_of(spec.contexts.begin(), spec.contexts.end(),
                                          [&](const ContextSpec& c) { return sq_dist(s, c.center) <= d_concept; });
        if (nearest) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double concept_fidelity(const VelocityField& custom, const SceneSpec& spec, std::string_view context,
                        const SamplerConfig& sampler, std::size_t n) {
    check_n(n);
    const std::size_t idx = spec.context_index(context);
    const auto xs = sample(custom, complete_condition(spec, context), n, seeded(sampler, context_seed(sampler, idx)));
    return concept_fidelity_of(xs, spec, context);
}

double behavior_consistency(const VelocityField& custom, const VelocityField& original, const SceneSpec& spec,
                            std::string_view context, const SamplerConfig& sampler, std::size_t n) {
    check_compatible(custom, original);
    check_n(n);
    const std::size_t idx = spec.context_index(context);
    const SamplerConfig s = seeded(sampler, context_seed(sampler, idx));
    const auto xc = sample(custom, complete_condition(spec, context), n, s);
    const auto xo = sample(original, base_condition(spec, context), n, s);
    const Vec& disp = spec.concept_spec.displacement;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < disp.size(); ++k) {
            const double diff = xc[i][k] - disp[k] - xo[i][k];
            sq += diff * diff;
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(n);
}

double EvalReport::value(std::string_view context, std::string_view metric) const {
    for (const auto& r : rows) {
        if (r.context == context && r.metric == metric) return r.value;
    }
    throw IndexError("report has no " + std::string(metric) + " for context '" + std::string(context) + "'");
}

void EvalConfig::validate() const {
    check_n(n_samples);
    sampler.validate();
    grid.validate();
}

EvalReport evaluate(const VelocityField& custom, const VelocityField& original, const SceneSpec& spec,
                    const std::vector<std::string>& contexts, const EvalConfig& cfg) {
    cfg.validate();
    if (contexts.empty()) throw ConfigError("no contexts to evaluate");
    const auto drift = preservation_drift(custom, original, spec, contexts, cfg.sampler, cfg.n_samples, cfg.grid);

    struct PerContext {
        double fidelity;
        double consistency;
    };
    std::vector<std::future<PerContext>> jobs;
    for (const auto& name : contexts) {
        jobs.push_back(std::async(std::launch::async, [&, name] {
            return PerContext{concept_fidelity(custom, spec, name, cfg.sampler, cfg.n_samples),
                              behavior_consistency(custom, original, spec, name, cfg.sampler, cfg.n_samples)};
        }));
    }

    EvalReport report;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        const PerContext pc = jobs[i].get();
        const std::uint64_t seed = context_seed(cfg.sampler, spec.context_index(contexts[i]));
        report.rows.push_back({contexts[i], "kl_drift", drift[i], cfg.n_samples, seed});
        report.rows.push_back({contexts[i], "concept_fidelity", pc.fidelity, cfg.n_samples, seed});
        report.rows.push_back({contexts[i], "behavior_consistency", pc.consistency, cfg.n_samples, seed});
    }
    for (const auto& r : report.rows) {
        if (!std::isfinite(r.value)) throw DivergenceError("metric " + r.metric + " is not finite");
    }
    return report;
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "context,metric,value,n,seed\n";
    for (const auto& r : report.rows) {
        out << r.context << ',' << r.metric << ',' << format_double(r.value) << ',' << r.n << ',' << r.seed << '\n';
    }
    return out.str();
}

EvalReport report_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (trim(line) != "context,metric,value,n,seed") throw FormatError("report csv header is malformed");
    EvalReport report;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto f = split(t, ',');
        if (f.size() != 5) throw FormatError("report csv row has the wrong width");
        ReportRow r;
        r.context = f[0];
        r.metric = f[1];
        r.value = parse_double(f[2]);
        try {
            r.n = std::stoull(f[3]);
            r.seed = std::stoull(f[4]);
        } catch (const std::exception&) {
            throw FormatError("report csv has a malformed integer field");
        }
        report.rows.push_back(std::move(r));
    }
    return report;
}

}  // namespace purecc
