#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "purecc/condition.hpp"
#include "purecc/dataset.hpp"

namespace purecc {

struct ContextSpec {
    std::string name;
    Vec center;
    std::optional<double> std;  // falls back to SceneSpec::noise_std

    bool operator==(const ContextSpec&) const = default;
};

// A concept is a displaced cluster sitting on top of a context.
struct ConceptSpec {
    std::string name = "dog";
    Vec displacement;
    std::optional<double> std;

    bool operator==(const ConceptSpec&) const = default;
};

struct SceneSpec {
    std::size_t dim = 2;
    std::vector<ContextSpec> contexts;
    ConceptSpec concept_spec;
    double noise_std = 0.15;

    // Two contexts on the x axis, concept displaced along y.
    static SceneSpec default_spec();

    void validate() const;
    double context_std(std::size_t i) const;
    double concept_std() const;
    std::size_t context_index(std::string_view name) const;
    Vec concept_center(std::string_view context) const;

    bool operator==(const SceneSpec&) const = default;
};

// Token ids: 0 null, 1..C contexts, C+1 concept class, C+2 identifier [V].
struct Vocabulary {
    std::vector<std::string> names;

    std::size_t size() const noexcept { return names.size(); }
    int context_token(std::size_t context_index) const noexcept { return static_cast<int>(context_index) + 1; }
    int class_token() const noexcept { return static_cast<int>(names.size()) - 2; }
    int concept_token() const noexcept { return static_cast<int>(names.size()) - 1; }
    int id(std::string_view name) const;

    bool operator==(const Vocabulary&) const = default;
};

Vocabulary vocabulary(const SceneSpec& spec);

Condition base_condition(const SceneSpec& spec, std::string_view context);
Condition complete_condition(const SceneSpec& spec, std::string_view context);
Condition target_condition(const SceneSpec& spec);

Dataset make_pretrain_set(const SceneSpec& spec, std::size_t n, std::uint64_t seed);

inline constexpr std::size_t kDefaultRefs = 4;
CustomSet make_custom_set(const SceneSpec& spec, std::string_view context, std::size_t n_refs,
                          std::uint64_t seed);

}  // namespace purecc
