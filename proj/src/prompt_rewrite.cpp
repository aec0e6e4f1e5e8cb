// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <fmt/format.h>

#include "twostage/pipeline.hpp"

namespace twostage {

namespace {

bool word_char(char ch) noexcept {
    const auto c = static_cast<unsigned char>(ch);
    return c >= 0x80 || c == '_' || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Start offsets of non-overlapping whole-word matches, left to right.
std::vector<std::size_t> find_words(std::string_view text, std::string_view word) {
    std::vector<std::size_t> hits;
    if (word.empty()) {
        return hits;
    }
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string_view::npos) {
        const std::size_t end = pos + word.size();
        const bool left = pos == 0 || !word_char(text[pos - 1]) || !word_char(word.front());
        const bool right = end == text.size() || !word_char(text[end]) || !word_char(word.back());
        if (left && right) {
            hits.push_back(pos);
            pos = end;
        } else {
            ++pos;
        }
    }
    return hits;
}

} // namespace

std::size_t count_whole_word(std::string_view text, std::string_view word) {
    return find_words(text, word).size();
}

std::string replace_whole_word(std::string_view text, std::string_view word, std::string_view replacement) {
    if (word.empty()) {
        throw std::invalid_argument("word to replace is empty");
    }
    const auto hits = find_words(text, word);
    if (hits.empty()) {
        throw std::invalid_argument(fmt::format("'{}' does not occur as a word in \"{}\"", word, text));
    }
    std::string out;
    out.reserve(text.size() + hits.size() * replacement.size());
    std::size_t prev = 0;
    for (std::size_t h : hits) {
        out.append(text.substr(prev, h - prev));
        out.append(replacement);
        prev = h + word.size();
    }
    out.append(text.substr(prev));
    return out;
}

std::string rewrite_stage1(std::string_view prompt, std::string_view subject_name, std::string_view class_label) {
    return replace_whole_word(prompt, subject_name, class_label);
}

std::string rewrite_stage2(std::string_view prompt, std::string_view subject_name, std::string_view placeholder) {
    return replace_whole_word(prompt, subject_name, placeholder);
}

} // namespace twostage
