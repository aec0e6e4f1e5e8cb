// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/base64.hpp"

#include <stdexcept>

#include <openssl/evp.h>

namespace twostage {

std::string base64_encode(std::span<const std::byte> bytes) {
    if (bytes.empty()) {
        return {};
    }
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::byte> base64_decode(std::string_view text) {
    if (text.empty()) {
        return {};
    }
    if (text.size() % 4 != 0) {
        throw std::invalid_argument("base64 input length is not a multiple of 4");
    }
    std::vector<std::byte> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) {
        throw std::invalid_argument("malformed base64 input");
    }
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    std::size_t size = static_cast<std::size_t>(n);
    if (text.back() == '=') --size;
    if (text.size() >= 2 && text[text.size() - 2] == '=') --size;
    out.resize(size);
    return out;
}

} // namespace twostage
