// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twostage {

std::string base64_encode(std::span<const std::byte> bytes);

// Throws std::invalid_argument on malformed input.
std::vector<std::byte> base64_decode(std::string_view text);

} // namespace twostage
