// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace twostage {

/// Lowercase hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

/// SHA-256 of a file's full contents. Throws std::runtime_error if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// First 8 bytes of SHA-256(text), little-endian. Used to key procedural generators.
std::uint64_t hash64(std::string_view text);

} // namespace twostage
