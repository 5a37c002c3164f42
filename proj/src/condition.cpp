#include "purecc/condition.hpp"

#include <string>
#include <utility>

#include "purecc/errors.hpp"

namespace purecc {

std::string_view role_name(Role r) noexcept {
    switch (r) {
        case Role::base: return "base";
        case Role::target: return "target";
        case Role::complete: return "complete";
        case Role::null: return "null";
    }
    return "null";
}

Role parse_role(std::string_view name) {
    if (name == "base") return Role::base;
    if (name == "target") return Role::target;
    if (name == "complete") return Role::complete;
    if (name == "null") return Role::null;
    throw ConfigError("unknown condition role '" + std::string(name) + "'");
}

Condition Condition::null() { return Condition{}; }

Condition Condition::base(std::vector<int> base_tokens) {
    if (base_tokens.empty()) throw ConfigError("base condition needs at least one token");
    for (int t : base_tokens) {
        if (t == kNullToken) throw ConfigError("base condition may not contain the null token");
    }
    return Condition{Role::base, std::move(base_tokens), std::nullopt};
}

Condition Condition::target(int concept_token, int class_token) {
    return Condition{Role::target, {concept_token, class_token}, 0};
}

Condition Condition::complete(const std::vector<int>& base_tokens, int concept_token,
                              int class_token) {
    Condition c = base(base_tokens);
    c.role = Role::complete;
    c.concept_slot = c.tokens.size();
    c.tokens.push_back(concept_token);
    c.tokens.push_back(class_token);
    return c;
}

Condition Condition::base_part() const {
    if (role != Role::complete || !concept_slot) {
        throw StateError("base_part requires a complete condition");
    }
    return base(std::vector<int>(tokens.begin(), tokens.begin() + static_cast<long>(*concept_slot)));
}

}  // namespace purecc
