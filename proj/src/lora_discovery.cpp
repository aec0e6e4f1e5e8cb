// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <map>
#include <numeric>
#include <optional>

#include <fmt/format.h>

#include "twostage/tensor_store.hpp"

namespace twostage {

namespace {

enum class Role { down, up };

struct FactorName {
    std::string prefix; // text before ".<suffix>"
    std::string tail;   // text after "<suffix>", empty or starting with '.'
    Role role;
};

// Matches "<prefix>.<suffix>" followed by end of string or '.'.
std::optional<FactorName> match_suffix(const std::string& name, const std::string& suffix, Role role) {
    const std::string needle = "." + suffix;
    for (std::size_t pos = name.find(needle); pos != std::string::npos; pos = name.find(needle, pos + 1)) {
        const std::size_t after = pos + needle.size();
        if (pos > 0 && (after == name.size() || name[after] == '.')) {
            return FactorName{name.substr(0, pos), name.substr(after), role};
        }
    }
    return std::nullopt;
}

std::optional<Matrix> as_matrix(const Tensor& t) {
    if (t.shape.size() < 2) {
        return std::nullopt;
    }
    const auto rows = static_cast<std::size_t>(t.shape[0]);
    const auto cols = static_cast<std::size_t>(
        std::accumulate(t.shape.begin() + 1, t.shape.end(), std::uint64_t{1}, std::multiplies<>()));
    return Matrix(rows, cols, t.to_f32());
}

struct PairSlot {
    std::optional<std::string> down;
    std::optional<std::string> up;
    std::string prefix;
    std::string tail;
};

} // namespace

LoraDiscovery discover_lora_pairs(const TensorStore& store, const NamingConfig& naming) {
    // Keyed by (suffix scheme, prefix + tail) so the result order follows names.
    std::map<std::pair<std::size_t, std::string>, PairSlot> slots;

    for (const auto& [name, tensor] : store.tensors()) {
        for (std::size_t scheme = 0; scheme < naming.suffixes.size(); ++scheme) {
            const auto& sfx = naming.suffixes[scheme];
            auto match = match_suffix(name, sfx.down, Role::down);
            if (!match) {
                match = match_suffix(name, sfx.up, Role::up);
            }
            if (!match) {
                continue;
            }
            auto& slot = slots[{scheme, match->prefix + match->tail}];
            slot.prefix = match->prefix;
            slot.tail = match->tail;
            (match->role == Role::down ? slot.down : slot.up) = name;
            break;
        }
    }

    LoraDiscovery result;
    for (const auto& [key, slot] : slots) {
        const auto& sfx = naming.suffixes[key.first];
        if (!slot.down || !slot.up) {
            const std::string& present = slot.down ? *slot.down : *slot.up;
            result.unmatched.push_back(
                {present, fmt::format("no matching '{}' factor", slot.down ? sfx.up : sfx.down)});
            continue;
        }
        auto down = as_matrix(store.at(*slot.down));
        auto up = as_matrix(store.at(*slot.up));
        if (!down || !up) {
            const std::string& bad = !down ? *slot.down : *slot.up;
            result.unmatched.push_back({bad, "factor has fewer than two dimensions"});
            continue;
        }
        if (up->cols() != down->rows()) {
            throw LoraDiscoveryError({*slot.up, *slot.down},
                                     fmt::format("inner dimension mismatch: '{}' has {} columns, '{}' has {} rows",
                                                 *slot.up, up->cols(), *slot.down, down->rows()));
        }

        LoraDelta delta;
        delta.base_name = slot.prefix + slot.tail;
        delta.rank = down->rows();
        delta.up_tensor = *slot.up;
        delta.down_tensor = *slot.down;

        const std::string alpha_name = slot.prefix + "." + naming.alpha_suffix;
        if (const Tensor* alpha = store.find(alpha_name)) {
            const auto values = alpha->to_f32();
            if (values.size() != 1) {
                throw LoraDiscoveryError({alpha_name}, fmt::format("alpha tensor '{}' holds {} values, expected 1",
                                                                   alpha_name, values.size()));
            }
            delta.alpha = values[0];
            delta.alpha_tensor = alpha_name;
        } else if (naming.alpha_policy == AlphaPolicy::required) {
            throw LoraDiscoveryError({*slot.up, *slot.down},
                                     fmt::format("missing alpha tensor '{}' for pair '{}' / '{}'", alpha_name,
                                                 *slot.up, *slot.down));
        }
        delta.up = std::move(*up);
        delta.down = std::move(*down);
        result.deltas.push_back(std::move(delta));
    }
    return result;
}

} // namespace twostage
