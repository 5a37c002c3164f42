#include "purecc/data.hpp"

#include <cmath>
#include <set>

#include "purecc/errors.hpp"
#include "purecc/rng.hpp"

namespace purecc {

SceneSpec SceneSpec::default_spec() {
    SceneSpec s;
    s.contexts = {{"beach", {-2.0, 0.0}, std::nullopt}, {"forest", {2.0, 0.0}, std::nullopt}};
    s.concept_spec = {"dog", {0.0, 1.5}, std::nullopt};
    return s;
}

void SceneSpec::validate() const {
    if (dim < 1) throw ConfigError("scene.dim must be >= 1");
    if (contexts.size() < 2) throw ConfigError("scene needs at least two contexts");
    if (!(noise_std > 0.0)) throw ConfigError("scene.noise_std must be > 0");
    std::set<std::string> seen;
    for (const auto& c : contexts) {
        if (c.name.empty()) throw ConfigError("context name is empty");
        if (!seen.insert(c.name).second) throw ConfigError("duplicate context name '" + c.name + "'");
        if (c.center.size() != dim) throw ConfigError("context '" + c.name + "' center has wrong dimension");
        if (c.std && !(*c.std > 0.0)) throw ConfigError("context '" + c.name + "' std must be > 0");
    }
    if (concept_spec.name.empty()) throw ConfigError("concept name is empty");
    if (seen.count(concept_spec.name) || concept_spec.name == "[V]" || concept_spec.name == "<null>") {
        throw ConfigError("concept name '" + concept_spec.name + "' clashes with another token");
    }
    if (concept_spec.displacement.size() != dim) throw ConfigError("concept displacement has wrong dimension");
    double norm2 = 0.0;
    for (double v : concept_spec.displacement) norm2 += v * v;
    if (!(norm2 > 0.0)) throw ConfigError("concept displacement must be nonzero");
    if (concept_spec.std && !(*concept_spec.std > 0.0)) throw ConfigError("concept std must be > 0");
}

double SceneSpec::context_std(std::size_t i) const { return contexts.at(i).std.value_or(noise_std); }

double SceneSpec::concept_std() const { return concept_spec.std.value_or(noise_std); }

std::size_t SceneSpec::context_index(std::string_view name) const {
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        if (contexts[i].name == name) return i;
    }
    throw ConfigError("unknown context '" + std::string(name) + "'");
}

Vec SceneSpec::concept_center(std::string_view context) const {
    Vec c = contexts[context_index(context)].center;
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += concept_spec.displacement[k];
    return c;
}

int Vocabulary::id(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw IndexError("unknown token '" + std::string(name) + "'");
}

Vocabulary vocabulary(const SceneSpec& spec) {
    spec.validate();
    Vocabulary v;
    v.names.push_back("<null>");
    for (const auto& c : spec.contexts) v.names.push_back(c.name);
    v.names.push_back(spec.concept_spec.name);
    v.names.push_back("[V]");
    return v;
}

Condition base_condition(const SceneSpec& spec, std::string_view context) {
    return Condition::base({static_cast<int>(spec.context_index(context)) + 1});
}

Condition complete_condition(const SceneSpec& spec, std::string_view context) {
    const Vocabulary v = vocabulary(spec);
    return Condition::complete(base_condition(spec, context).tokens, v.concept_token(), v.class_token());
}

Condition target_condition(const SceneSpec& spec) {
    const Vocabulary v = vocabulary(spec);
    return Condition::target(v.concept_token(), v.class_token());
}

Dataset make_pretrain_set(const SceneSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw ConfigError("pretraining set size must be >= 1");
    Rng rng(seed);
    Dataset d;
    d.seed = seed;
    d.samples.reserve(n);
    d.conditions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng.below(spec.contexts.size());
        const double s = spec.context_std(c);
        Vec x = spec.contexts[c].center;
        for (double& v : x) v += s * rng.normal();
        d.samples.push_back(std::move(x));
        d.conditions.push_back(Condition::base({static_cast<int>(c) + 1}));
    }
    return d;
}

CustomSet make_custom_set(const SceneSpec& spec, std::string_view context, std::size_t n_refs,
                          std::uint64_t seed) {
    spec.validate();
    if (n_refs < 1 || n_refs > 16) throw ConfigError("n_refs must lie in [1, 16]");
    const Vocabulary vocab = vocabulary(spec);
    const Vec center = spec.concept_center(context);
    const Condition cond = complete_condition(spec, context);
    Rng rng(seed);
    CustomSet set;
    set.concept_token = vocab.concept_token();
    set.class_token = vocab.class_token();
    for (std::size_t i = 0; i < n_refs; ++i) {
        Vec x = center;
        for (double& v : x) v += spec.concept_std() * rng.normal();
        set.samples.push_back(std::move(x));
        set.conditions.push_back(cond);
    }
    return set;
}

}  // namespace purecc
