// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/digest.hpp"

#include <array>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <openssl/evp.h>

namespace twostage {

namespace {

std::array<unsigned char, 32> sha256_raw(const void* data, std::size_t size) {
    std::array<unsigned char, 32> out{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    return out;
}

std::string to_hex(const std::array<unsigned char, 32>& digest) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(64);
    for (unsigned char c : digest) {
        hex.push_back(kHex[c >> 4]);
        hex.push_back(kHex[c & 0xF]);
    }
    return hex;
}

} // namespace

std::string sha256_hex(std::span<const std::byte> bytes) {
    return to_hex(sha256_raw(bytes.data(), bytes.size()));
}

std::string sha256_hex(std::string_view text) {
    return to_hex(sha256_raw(text.data(), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "' for hashing");
    }
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return to_hex(sha256_raw(data.data(), data.size()));
}

std::uint64_t hash64(std::string_view text) {
    const auto digest = sha256_raw(text.data(), text.size());
    std::uint64_t h = 0;
    for (int i = 7; i >= 0; --i) {
        h = (h << 8) | digest[static_cast<std::size_t>(i)];
    }
    return h;
}

} // namespace twostage
