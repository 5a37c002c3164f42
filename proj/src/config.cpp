#include "purecc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "purecc/csv.hpp"
#include "purecc/errors.hpp"
#include "purecc/rng.hpp"

namespace purecc {

StageSeeds StageSeeds::from(std::uint64_t seed) {
    StageSeeds s;
    s.data = mix_seed(seed, 1);
    s.net = mix_seed(seed, 2);
    s.pretrain = mix_seed(seed, 3);
    s.custom = mix_seed(seed, 4);
    s.extract = mix_seed(seed, 5);
    s.purecc = mix_seed(seed, 6);
    s.sampler = mix_seed(seed, 7);
    return s;
}

RunConfig RunConfig::resolved() const {
    RunConfig r = *this;
    r.net.input_dim = scene.dim;
    r.net.vocab_size = vocabulary(scene).size();
    r.net.concept_token = -1;
    r.pretrain.seed = seeds.pretrain;
    r.extract.seed = seeds.extract;
    r.purecc.seed = seeds.purecc;
    r.eval.sampler.seed = seeds.sampler;
    return r;
}

void RunConfig::validate() const {
    if (run_dir.empty()) throw ConfigError("run_dir must not be empty");
    scene.validate();
    const RunConfig r = resolved();
    r.net.validate();
    if (pretrain_samples < 1) throw ConfigError("pretrain.samples must be >= 1");
    r.pretrain.validate();
    scene.context_index(custom_context);
    if (n_refs < 1 || n_refs > 16) throw ConfigError("custom.n_refs must lie in [1, 16]");
    r.extract.validate();
    r.purecc.validate();
    r.eval.validate();
    if (probe_every > 0 && probe_samples < 1) throw ConfigError("eval.probe_samples must be >= 1");
}

// ------------------------------------------------------------ value parsing

namespace {

std::uint64_t to_u64(const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty()) {
        throw ConfigError("expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double to_real(const std::string& v) {
    try {
        const double d = parse_double(v);
        if (!std::isfinite(d)) throw ConfigError("expected a finite number, got '" + v + "'");
        return d;
    } catch (const FormatError&) {
        throw ConfigError("expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected true or false, got '" + v + "'");
}

Vec to_vec(const std::string& v) {
    Vec out;
    for (const auto& f : split(v, ',')) out.push_back(to_real(trim(f)));
    return out;
}

std::string vec_text(const Vec& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
    return out;
}

double positive(double v, const char* what) {
    if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be > 0");
    return v;
}

double non_negative(double v, const char* what) {
    if (!(v >= 0.0)) throw ConfigError(std::string(what) + " must be >= 0");
    return v;
}

std::size_t at_least_one(std::uint64_t v, const char* what) {
    if (v < 1) throw ConfigError(std::string(what) + " must be >= 1");
    return static_cast<std::size_t>(v);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& fixed_keys() {
    static const std::map<std::string, Setter> keys = {
        {"run_dir", [](RunConfig& c, const std::string& v) { c.run_dir = v; }},

        {"net.hidden_width", [](RunConfig& c, const std::string& v) { c.net.hidden_width = at_least_one(to_u64(v), "net.hidden_width"); }},
        {"net.layers", [](RunConfig& c, const std::string& v) { c.net.num_layers = at_least_one(to_u64(v), "net.layers"); }},
        {"net.embed_dim", [](RunConfig& c, const std::string& v) { c.net.embed_dim = at_least_one(to_u64(v), "net.embed_dim"); }},
        {"net.pooling", [](RunConfig& c, const std::string& v) {
             if (v == "sum") c.net.pooling = Pooling::sum;
             else if (v == "mean") c.net.pooling = Pooling::mean;
             else throw ConfigError("net.pooling must be sum or mean");
         }},

        {"scene.dim", [](RunConfig& c, const std::string& v) { c.scene.dim = at_least_one(to_u64(v), "scene.dim"); }},
        {"scene.noise_std", [](RunConfig& c, const std::string& v) { c.scene.noise_std = positive(to_real(v), "scene.noise_std"); }},
        {"scene.concept.name", [](RunConfig& c, const std::string& v) { c.scene.concept_spec.name = v; }},
        {"scene.concept.displacement", [](RunConfig& c, const std::string& v) { c.scene.concept_spec.displacement = to_vec(v); }},
        {"scene.concept.std", [](RunConfig& c, const std::string& v) { c.scene.concept_spec.std = positive(to_real(v), "scene.concept.std"); }},

        {"pretrain.samples", [](RunConfig& c, const std::string& v) { c.pretrain_samples = at_least_one(to_u64(v), "pretrain.samples"); }},
        {"pretrain.iterations", [](RunConfig& c, const std::string& v) { c.pretrain.iterations = to_u64(v); }},
        {"pretrain.learning_rate", [](RunConfig& c, const std::string& v) { c.pretrain.learning_rate = positive(to_real(v), "pretrain.learning_rate"); }},
        {"pretrain.batch_size", [](RunConfig& c, const std::string& v) { c.pretrain.batch_size = at_least_one(to_u64(v), "pretrain.batch_size"); }},
        {"pretrain.cond_dropout", [](RunConfig& c, const std::string& v) { c.pretrain.cond_dropout_prob = non_negative(to_real(v), "pretrain.cond_dropout"); }},

        {"custom.context", [](RunConfig& c, const std::string& v) { c.custom_context = v; }},
        {"custom.n_refs", [](RunConfig& c, const std::string& v) { c.n_refs = at_least_one(to_u64(v), "custom.n_refs"); }},

        {"extract.iterations", [](RunConfig& c, const std::string& v) { c.extract.iterations = to_u64(v); }},
        {"extract.learning_rate", [](RunConfig& c, const std::string& v) { c.extract.learning_rate = positive(to_real(v), "extract.learning_rate"); }},
        {"extract.batch_size", [](RunConfig& c, const std::string& v) { c.extract.batch_size = at_least_one(to_u64(v), "extract.batch_size"); }},
        {"extract.rank", [](RunConfig& c, const std::string& v) { c.extract.adapter_rank = at_least_one(to_u64(v), "extract.rank"); }},

        {"purecc.eta", [](RunConfig& c, const std::string& v) { c.purecc.eta = non_negative(to_real(v), "purecc.eta"); }},
        {"purecc.lambda_mode", [](RunConfig& c, const std::string& v) { parse_lambda_mode(v, c.purecc); }},
        {"purecc.original_mode", [](RunConfig& c, const std::string& v) { c.purecc.original_mode = parse_original_mode(v); }},
        {"purecc.eps_guard", [](RunConfig& c, const std::string& v) { c.purecc.eps_guard = positive(to_real(v), "purecc.eps_guard"); }},
        {"purecc.iterations", [](RunConfig& c, const std::string& v) { c.purecc.iterations = to_u64(v); }},
        {"purecc.learning_rate", [](RunConfig& c, const std::string& v) { c.purecc.learning_rate = positive(to_real(v), "purecc.learning_rate"); }},
        {"purecc.batch_size", [](RunConfig& c, const std::string& v) { c.purecc.batch_size = at_least_one(to_u64(v), "purecc.batch_size"); }},
        {"purecc.rank", [](RunConfig& c, const std::string& v) { c.purecc.adapter_rank = at_least_one(to_u64(v), "purecc.rank"); }},
        {"purecc.full_finetune", [](RunConfig& c, const std::string& v) { c.purecc.full_finetune = to_bool(v); }},
        {"purecc.detach_original", [](RunConfig& c, const std::string& v) { c.purecc.detach_original = to_bool(v); }},

        {"sampler.steps", [](RunConfig& c, const std::string& v) { c.eval.sampler.steps = at_least_one(to_u64(v), "sampler.steps"); }},
        {"sampler.guidance_w", [](RunConfig& c, const std::string& v) { c.eval.sampler.guidance_w = non_negative(to_real(v), "sampler.guidance_w"); }},

        {"eval.n_samples", [](RunConfig& c, const std::string& v) { c.eval.n_samples = at_least_one(to_u64(v), "eval.n_samples"); }},
        {"eval.grid.lo", [](RunConfig& c, const std::string& v) { c.eval.grid.lo = to_real(v); }},
        {"eval.grid.hi", [](RunConfig& c, const std::string& v) { c.eval.grid.hi = to_real(v); }},
        {"eval.grid.bins", [](RunConfig& c, const std::string& v) {
             c.eval.grid.bins = to_u64(v);
             if (c.eval.grid.bins < 2) throw ConfigError("eval.grid.bins must be >= 2");
         }},
        {"eval.grid.alpha", [](RunConfig& c, const std::string& v) { c.eval.grid.alpha = positive(to_real(v), "eval.grid.alpha"); }},
        {"eval.probe_every", [](RunConfig& c, const std::string& v) { c.probe_every = to_u64(v); }},
        {"eval.probe_samples", [](RunConfig& c, const std::string& v) { c.probe_samples = at_least_one(to_u64(v), "eval.probe_samples"); }},

        {"seed.data", [](RunConfig& c, const std::string& v) { c.seeds.data = to_u64(v); }},
        {"seed.net", [](RunConfig& c, const std::string& v) { c.seeds.net = to_u64(v); }},
        {"seed.pretrain", [](RunConfig& c, const std::string& v) { c.seeds.pretrain = to_u64(v); }},
        {"seed.custom", [](RunConfig& c, const std::string& v) { c.seeds.custom = to_u64(v); }},
        {"seed.extract", [](RunConfig& c, const std::string& v) { c.seeds.extract = to_u64(v); }},
        {"seed.purecc", [](RunConfig& c, const std::string& v) { c.seeds.purecc = to_u64(v); }},
        {"seed.sampler", [](RunConfig& c, const std::string& v) { c.seeds.sampler = to_u64(v); }},
    };
    return keys;
}

struct Entry {
    std::string key;
    std::string value;
    std::size_t line;
};

ConfigError at_line(const std::string& source, std::size_t line, const std::string& msg) {
    return ConfigError(source + ":" + std::to_string(line) + ": " + msg);
}

// scene.context.<name>.<field>
bool set_context_key(RunConfig& c, const std::string& key, const std::string& value) {
    const std::string prefix = "scene.context.";
    if (key.rfind(prefix, 0) != 0) return false;
    const std::string rest = key.substr(prefix.size());
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos) return false;
    const std::string name = rest.substr(0, dot);
    const std::string field = rest.substr(dot + 1);
    for (auto& ctx : c.scene.contexts) {
        if (ctx.name != name) continue;
        if (field == "center") {
            ctx.center = to_vec(value);
            return true;
        }
        if (field == "std") {
            ctx.std = positive(to_real(value), "context std");
            return true;
        }
        return false;
    }
    return false;
}

}  // namespace

void parse_lambda_mode(const std::string& text, PureCCConfig& cfg) {
    if (text == "adaptive") {
        cfg.lambda_mode = LambdaMode::adaptive;
        return;
    }
    if (text.rfind("fixed:", 0) == 0) {
        const double v = to_real(text.substr(6));
        if (!(v >= 0.0)) throw ConfigError("fixed lambda must be >= 0");
        cfg.lambda_mode = LambdaMode::fixed;
        cfg.fixed_lambda = v;
        return;
    }
    throw ConfigError("lambda mode must be 'adaptive' or 'fixed:<value>', got '" + text + "'");
}

std::string lambda_mode_text(const PureCCConfig& cfg) {
    return cfg.lambda_mode == LambdaMode::adaptive ? "adaptive" : "fixed:" + format_double(cfg.fixed_lambda);
}

OriginalMode parse_original_mode(const std::string& text) {
    if (text == "theta2") return OriginalMode::trainable_theta2;
    if (text == "theta3") return OriginalMode::frozen_theta3;
    throw ConfigError("original mode must be theta2 or theta3, got '" + text + "'");
}

std::string original_mode_text(OriginalMode mode) {
    return mode == OriginalMode::trainable_theta2 ? "theta2" : "theta3";
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
    std::vector<Entry> entries;
    std::map<std::string, std::size_t> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw at_line(source, lineno, "expected 'key = value'");
        Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
        if (e.key.empty()) throw at_line(source, lineno, "empty key");
        if (e.value.empty()) throw at_line(source, lineno, "empty value for '" + e.key + "'");
        if (auto it = seen.find(e.key); it != seen.end()) {
            throw at_line(source, lineno, "duplicate key '" + e.key + "' (first set on line " +
                                              std::to_string(it->second) + ")");
        }
        seen[e.key] = lineno;
        entries.push_back(std::move(e));
    }

    RunConfig cfg;
    // The context list decides which scene.context.* keys exist.
    for (const auto& e : entries) {
        if (e.key != "scene.contexts") continue;
        std::vector<ContextSpec> contexts;
        for (const auto& name : split(e.value, ',')) {
            const std::string n = trim(name);
            if (n.empty()) throw at_line(source, e.line, "empty context name");
            ContextSpec spec{n, {}, std::nullopt};
            for (const auto& d : cfg.scene.contexts) {
                if (d.name == n) spec = d;
            }
            contexts.push_back(std::move(spec));
        }
        cfg.scene.contexts = std::move(contexts);
    }
    for (const auto& e : entries) {
        if (e.key == "scene.contexts") continue;
        try {
            if (const auto it = fixed_keys().find(e.key); it != fixed_keys().end()) {
                it->second(cfg, e.value);
            } else if (!set_context_key(cfg, e.key, e.value)) {
                throw ConfigError("unknown key '" + e.key + "'");
            }
        } catch (const ConfigError& err) {
            throw at_line(source, e.line, err.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError& err) {
        throw ConfigError(source + ": " + err.what());
    }
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    auto kv = [&](const std::string& k, const std::string& v) { out << k << " = " << v << '\n'; };
    auto num = [](double v) { return format_double(v); };
    auto flag = [](bool b) { return std::string(b ? "true" : "false"); };

    kv("run_dir", c.run_dir);
    out << '\n';
    kv("net.hidden_width", std::to_string(c.net.hidden_width));
    kv("net.layers", std::to_string(c.net.num_layers));
    kv("net.embed_dim", std::to_string(c.net.embed_dim));
    kv("net.pooling", c.net.pooling == Pooling::sum ? "sum" : "mean");
    out << '\n';
    kv("scene.dim", std::to_string(c.scene.dim));
    kv("scene.noise_std", num(c.scene.noise_std));
    std::string names;
    for (std::size_t i = 0; i < c.scene.contexts.size(); ++i) names += (i ? "," : "") + c.scene.contexts[i].name;
    kv("scene.contexts", names);
    for (const auto& ctx : c.scene.contexts) {
        kv("scene.context." + ctx.name + ".center", vec_text(ctx.center));
        if (ctx.std) kv("scene.context." + ctx.name + ".std", num(*ctx.std));
    }
    kv("scene.concept.name", c.scene.concept_spec.name);
    kv("scene.concept.displacement", vec_text(c.scene.concept_spec.displacement));
    if (c.scene.concept_spec.std) kv("scene.concept.std", num(*c.scene.concept_spec.std));
    out << '\n';
    kv("pretrain.samples", std::to_string(c.pretrain_samples));
    kv("pretrain.iterations", std::to_string(c.pretrain.iterations));
    kv("pretrain.learning_rate", num(c.pretrain.learning_rate));
    kv("pretrain.batch_size", std::to_string(c.pretrain.batch_size));
    kv("pretrain.cond_dropout", num(c.pretrain.cond_dropout_prob));
    out << '\n';
    kv("custom.context", c.custom_context);
    kv("custom.n_refs", std::to_string(c.n_refs));
    out << '\n';
    kv("extract.iterations", std::to_string(c.extract.iterations));
    kv("extract.learning_rate", num(c.extract.learning_rate));
    kv("extract.batch_size", std::to_string(c.extract.batch_size));
    kv("extract.rank", std::to_string(c.extract.adapter_rank));
    out << '\n';
    kv("purecc.eta", num(c.purecc.eta));
    kv("purecc.lambda_mode", lambda_mode_text(c.purecc));
    kv("purecc.original_mode", original_mode_text(c.purecc.original_mode));
    kv("purecc.eps_guard", num(c.purecc.eps_guard));
    kv("purecc.iterations", std::to_string(c.purecc.iterations));
    kv("purecc.learning_rate", num(c.purecc.learning_rate));
    kv("purecc.batch_size", std::to_string(c.purecc.batch_size));
    kv("purecc.rank", std::to_string(c.purecc.adapter_rank));
    kv("purecc.full_finetune", flag(c.purecc.full_finetune));
    kv("purecc.detach_original", flag(c.purecc.detach_original));
    out << '\n';
    kv("sampler.steps", std::to_string(c.eval.sampler.steps));
    kv("sampler.guidance_w", num(c.eval.sampler.guidance_w));
    out << '\n';
    kv("eval.n_samples", std::to_string(c.eval.n_samples));
    kv("eval.grid.lo", num(c.eval.grid.lo));
    kv("eval.grid.hi", num(c.eval.grid.hi));
    kv("eval.grid.bins", std::to_string(c.eval.grid.bins));
    kv("eval.grid.alpha", num(c.eval.grid.alpha));
    kv("eval.probe_every", std::to_string(c.probe_every));
    kv("eval.probe_samples", std::to_string(c.probe_samples));
    out << '\n';
    kv("seed.data", std::to_string(c.seeds.data));
    kv("seed.net", std::to_string(c.seeds.net));
    kv("seed.pretrain", std::to_string(c.seeds.pretrain));
    kv("seed.custom", std::to_string(c.seeds.custom));
    kv("seed.extract", std::to_string(c.seeds.extract));
    kv("seed.purecc", std::to_string(c.seeds.purecc));
    kv("seed.sampler", std::to_string(c.seeds.sampler));
    return out.str();
}

}  // namespace purecc
