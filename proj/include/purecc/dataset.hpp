#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "purecc/condition.hpp"
#include "purecc/tensor.hpp"

namespace purecc {

// Samples x0 ~ q(x|y) with the condition each one was drawn under.
struct Dataset {
    std::vector<Vec> samples;
    std::vector<Condition> conditions;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return samples.size(); }
    bool operator==(const Dataset&) const = default;
};

// Few-shot reference set: every condition is complete and shares one concept.
struct CustomSet {
    std::vector<Vec> samples;
    std::vector<Condition> conditions;
    int concept_token = -1;
    int class_token = -1;

    std::size_t size() const noexcept { return samples.size(); }
    Condition target() const { return Condition::target(concept_token, class_token); }
    bool operator==(const CustomSet&) const = default;
};

}  // namespace purecc
