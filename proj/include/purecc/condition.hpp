#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace purecc {

inline constexpr int kNullToken = 0;

enum class Role { base, target, complete, null };

std::string_view role_name(Role r) noexcept;
Role parse_role(std::string_view name);

// Token sequence fed to the velocity network. For target and complete
// conditions concept_slot is the position of the identifier token [V].
struct Condition {
    Role role = Role::null;
    std::vector<int> tokens{kNullToken};
    std::optional<std::size_t> concept_slot;

    static Condition null();
    static Condition base(std::vector<int> base_tokens);
    // [V] followed by its class token.
    static Condition target(int concept_token, int class_token);
    // Base tokens in order, then [V] and its class token.
    static Condition complete(const std::vector<int>& base_tokens, int concept_token,
                              int class_token);

    // Base tokens of a complete condition.
    Condition base_part() const;

    bool operator==(const Condition&) const = default;
};

}  // namespace purecc
