// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

namespace twostage {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are copied verbatim and assume a little-endian host");

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kMaxHeaderBytes = 100u * 1024u * 1024u;
constexpr const char* kMetadataKey = "__metadata__";

std::uint64_t load_u64_le(const std::byte* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | std::to_integer<std::uint64_t>(p[i]);
    }
    return v;
}

void store_u64_le(std::uint64_t v, std::byte* p) {
    for (int i = 0; i < 8; ++i) {
        p[i] = static_cast<std::byte>(v & 0xFF);
        v >>= 8;
    }
}

std::uint64_t json_u64(const json& value, const std::string& tensor, const char* field) {
    if (!value.is_number_unsigned()) {
        throw StoreError(StoreErrc::invalid_entry, tensor,
                         fmt::format("tensor '{}': {} must hold non-negative integers", tensor, field));
    }
    return value.get<std::uint64_t>();
}

} // namespace

std::string_view dtype_name(DType t) noexcept {
    switch (t) {
    case DType::f32: return "F32";
    case DType::f16: return "F16";
    case DType::bf16: return "BF16";
    }
    return "?";
}

std::optional<DType> parse_dtype(std::string_view name) noexcept {
    if (name == "F32") return DType::f32;
    if (name == "F16") return DType::f16;
    if (name == "BF16") return DType::bf16;
    return std::nullopt;
}

float f16_to_f32(std::uint16_t h) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1Fu;
    std::uint32_t mant = h & 0x3FFu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            // subnormal: renormalize
            exp = 127 - 15 + 1;
            while ((mant & 0x400u) == 0) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3FFu;
            bits = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 0x1F) {
        bits = sign | 0x7F800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

std::uint16_t f32_to_f16(float value) noexcept {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
    const std::uint32_t abs = bits & 0x7FFFFFFFu;
    if (abs >= 0x7F800000u) {
        return static_cast<std::uint16_t>(sign | 0x7C00u | (abs > 0x7F800000u ? 0x200u : 0u));
    }
    if (abs >= 0x477FF000u) { // rounds to >= 65520
        return static_cast<std::uint16_t>(sign | 0x7C00u);
    }
    if (abs < 0x38800000u) { // below smallest normal half
        const std::uint32_t shift = 113u - (abs >> 23);
        if (shift > 11) { // below half the smallest subnormal
            return sign;
        }
        const std::uint32_t mant = (abs & 0x7FFFFFu) | 0x800000u;
        std::uint32_t half = mant >> (shift + 13);
        const std::uint32_t rem = mant & ((1u << (shift + 13)) - 1u);
        const std::uint32_t halfway = 1u << (shift + 12);
        if (rem > halfway || (rem == halfway && (half & 1u))) {
            ++half;
        }
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint32_t v = abs - 0x38000000u; // rebias exponent 127 -> 15
    v += 0xFFFu + ((v >> 13) & 1u);
    return static_cast<std::uint16_t>(sign | (v >> 13));
}

std::string_view to_string(StoreErrc code) noexcept {
    switch (code) {
    case StoreErrc::io: return "io";
    case StoreErrc::header_length: return "header_length";
    case StoreErrc::json_parse: return "json_parse";
    case StoreErrc::invalid_entry: return "invalid_entry";
    case StoreErrc::unknown_dtype: return "unknown_dtype";
    case StoreErrc::out_of_bounds: return "out_of_bounds";
    case StoreErrc::length_mismatch: return "length_mismatch";
    case StoreErrc::overlap: return "overlap";
    case StoreErrc::gap: return "gap";
    case StoreErrc::too_large: return "too_large";
    }
    return "unknown";
}

StoreError::StoreError(StoreErrc code, std::string tensor, const std::string& message)
    : std::runtime_error(message), code_(code), tensor_(std::move(tensor)) {}

std::uint64_t checked_element_count(std::span<const std::uint64_t> shape, const std::string& name) {
    std::uint64_t count = 1;
    for (std::uint64_t dim : shape) {
        if (dim != 0 && count > std::numeric_limits<std::uint64_t>::max() / 8 / dim) {
            throw StoreError(StoreErrc::too_large, name,
                             fmt::format("tensor '{}': element count overflows", name));
        }
        count *= dim;
    }
    return count;
}

std::uint64_t Tensor::element_count() const {
    return checked_element_count(shape, "");
}

std::vector<float> Tensor::to_f32() const {
    const std::size_t n = bytes.size() / dtype_size(dtype);
    std::vector<float> out(n);
    switch (dtype) {
    case DType::f32:
        std::memcpy(out.data(), bytes.data(), n * sizeof(float));
        break;
    case DType::f16:
    case DType::bf16:
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t h;
            std::memcpy(&h, bytes.data() + 2 * i, 2);
            out[i] = dtype == DType::f16 ? f16_to_f32(h) : bf16_to_f32(h);
        }
        break;
    }
    return out;
}

Tensor Tensor::from_f32(std::vector<std::uint64_t> shape, std::span<const float> values, DType dtype) {
    Tensor t;
    t.dtype = dtype;
    t.shape = std::move(shape);
    if (checked_element_count(t.shape, "") != values.size()) {
        throw std::invalid_argument("value count does not match shape");
    }
    t.bytes.resize(values.size() * dtype_size(dtype));
    if (dtype == DType::f32) {
        std::memcpy(t.bytes.data(), values.data(), t.bytes.size());
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const std::uint16_t h = dtype == DType::f16 ? f32_to_f16(values[i]) : f32_to_bf16(values[i]);
            std::memcpy(t.bytes.data() + 2 * i, &h, 2);
        }
    }
    return t;
}

void TensorStore::insert(std::string name, Tensor tensor) {
    if (name == kMetadataKey) {
        throw std::invalid_argument("'__metadata__' is reserved");
    }
    const std::uint64_t expected = checked_element_count(tensor.shape, name) * dtype_size(tensor.dtype);
    if (expected != tensor.bytes.size()) {
        throw std::invalid_argument(fmt::format("tensor '{}': {} bytes, shape requires {}", name,
                                                tensor.bytes.size(), expected));
    }
    auto [it, inserted] = tensors_.try_emplace(std::move(name), std::move(tensor));
    if (!inserted) {
        throw std::invalid_argument(fmt::format("duplicate tensor '{}'", it->first));
    }
}

void TensorStore::set_metadata(std::string key, std::string value) {
    metadata_[std::move(key)] = std::move(value);
}

const Tensor& TensorStore::at(const std::string& name) const {
    if (const Tensor* t = find(name)) {
        return *t;
    }
    throw std::out_of_range(fmt::format("no tensor named '{}'", name));
}

const Tensor* TensorStore::find(const std::string& name) const {
    auto it = tensors_.find(name);
    return it == tensors_.end() ? nullptr : &it->second;
}

std::vector<TensorMeta> TensorStore::layout() const {
    std::vector<TensorMeta> metas;
    metas.reserve(tensors_.size());
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors_) {
        const std::uint64_t size = tensor.bytes.size();
        if (offset > std::numeric_limits<std::uint64_t>::max() - size) {
            throw StoreError(StoreErrc::too_large, name, "data region exceeds 64-bit offsets");
        }
        metas.push_back({name, tensor.dtype, tensor.shape, offset, offset + size});
        offset += size;
    }
    return metas;
}

std::vector<std::byte> serialize_store(const TensorStore& store) {
    json header = json::object(); // std::map-backed: keys come out sorted
    if (!store.metadata().empty()) {
        header[kMetadataKey] = store.metadata();
    }
    const auto metas = store.layout();
    for (const auto& meta : metas) {
        header[meta.name] = {
            {"dtype", dtype_name(meta.dtype)},
            {"shape", meta.shape},
            {"data_offsets", {meta.begin, meta.end}},
        };
    }
    std::string text = header.dump();
    // Pad with spaces so the data region starts 8-byte aligned.
    text.append((8 - text.size() % 8) % 8, ' ');

    const std::uint64_t data_size = metas.empty() ? 0 : metas.back().end;
    std::vector<std::byte> out(8 + text.size() + data_size);
    store_u64_le(text.size(), out.data());
    std::memcpy(out.data() + 8, text.data(), text.size());
    std::byte* data = out.data() + 8 + text.size();
    for (const auto& meta : metas) {
        const auto& bytes = store.at(meta.name).bytes;
        std::copy(bytes.begin(), bytes.end(), data + meta.begin);
    }
    return out;
}

TensorStore parse_store(std::span<const std::byte> file) {
    if (file.size() < 8) {
        throw StoreError(StoreErrc::header_length, "",
                         fmt::format("file is {} bytes, too short for the header length", file.size()));
    }
    const std::uint64_t header_len = load_u64_le(file.data());
    if (header_len > kMaxHeaderBytes || header_len > file.size() - 8) {
        throw StoreError(StoreErrc::header_length, "",
                         fmt::format("header length {} exceeds file size {}", header_len, file.size()));
    }
    const auto* header_begin = reinterpret_cast<const char*>(file.data() + 8);
    json header;
    try {
        header = json::parse(header_begin, header_begin + header_len);
    } catch (const json::parse_error& e) {
        throw StoreError(StoreErrc::json_parse, "", fmt::format("header is not valid JSON: {}", e.what()));
    }
    if (!header.is_object()) {
        throw StoreError(StoreErrc::json_parse, "", "header is not a JSON object");
    }

    const auto data = file.subspan(8 + header_len);
    TensorStore store;
    std::vector<TensorMeta> metas;

    for (const auto& [name, entry] : header.items()) {
        if (name == kMetadataKey) {
            if (!entry.is_object()) {
                throw StoreError(StoreErrc::invalid_entry, name, "__metadata__ must be an object");
            }
            for (const auto& [key, value] : entry.items()) {
                if (!value.is_string()) {
                    throw StoreError(StoreErrc::invalid_entry, name,
                                     fmt::format("__metadata__ value for '{}' is not a string", key));
                }
                store.set_metadata(key, value.get<std::string>());
            }
            continue;
        }
        if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
            !entry.contains("data_offsets")) {
            throw StoreError(StoreErrc::invalid_entry, name,
                             fmt::format("tensor '{}': expected dtype, shape and data_offsets", name));
        }
        const auto& dtype_field = entry["dtype"];
        const auto dtype = dtype_field.is_string() ? parse_dtype(dtype_field.get<std::string>()) : std::nullopt;
        if (!dtype) {
            throw StoreError(StoreErrc::unknown_dtype, name,
                             fmt::format("tensor '{}': unsupported dtype {}", name, dtype_field.dump()));
        }
        TensorMeta meta;
        meta.name = name;
        meta.dtype = *dtype;
        if (!entry["shape"].is_array()) {
            throw StoreError(StoreErrc::invalid_entry, name, fmt::format("tensor '{}': shape is not an array", name));
        }
        for (const auto& dim : entry["shape"]) {
            meta.shape.push_back(json_u64(dim, name, "shape"));
        }
        const auto& offsets = entry["data_offsets"];
        if (!offsets.is_array() || offsets.size() != 2) {
            throw StoreError(StoreErrc::invalid_entry, name,
                             fmt::format("tensor '{}': data_offsets must be [begin, end]", name));
        }
        meta.begin = json_u64(offsets[0], name, "data_offsets");
        meta.end = json_u64(offsets[1], name, "data_offsets");
        if (meta.begin > meta.end || meta.end > data.size()) {
            throw StoreError(StoreErrc::out_of_bounds, name,
                             fmt::format("tensor '{}': offsets [{}, {}) outside data region of {} bytes", name,
                                         meta.begin, meta.end, data.size()));
        }
        const std::uint64_t expected = checked_element_count(meta.shape, name) * dtype_size(meta.dtype);
        if (meta.end - meta.begin != expected) {
            throw StoreError(StoreErrc::length_mismatch, name,
                             fmt::format("tensor '{}': {} bytes declared, shape and dtype require {}", name,
                                         meta.end - meta.begin, expected));
        }
        metas.push_back(std::move(meta));
    }

    std::vector<const TensorMeta*> order;
    for (const auto& m : metas) order.push_back(&m);
    std::sort(order.begin(), order.end(), [](const TensorMeta* a, const TensorMeta* b) {
        return a->begin != b->begin ? a->begin < b->begin : a->end < b->end;
    });
    std::uint64_t cursor = 0;
    const TensorMeta* prev = nullptr;
    for (const TensorMeta* m : order) {
        if (m->begin < cursor) {
            throw StoreError(StoreErrc::overlap, m->name,
                             fmt::format("tensor '{}' overlaps tensor '{}'", m->name, prev->name));
        }
        if (m->begin > cursor) {
            throw StoreError(StoreErrc::gap, m->name,
                             fmt::format("unused bytes [{}, {}) before tensor '{}'", cursor, m->begin, m->name));
        }
        cursor = m->end;
        prev = m;
    }
    if (cursor != data.size()) {
        throw StoreError(StoreErrc::gap, prev ? prev->name : std::string{},
                         fmt::format("{} trailing bytes after the last tensor", data.size() - cursor));
    }

    for (auto& meta : metas) {
        Tensor t;
        t.dtype = meta.dtype;
        t.shape = std::move(meta.shape);
        const auto* begin = data.data() + meta.begin;
        t.bytes.assign(begin, begin + (meta.end - meta.begin));
        store.insert(meta.name, std::move(t));
    }
    return store;
}

TensorStore read_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StoreError(StoreErrc::io, "", fmt::format("cannot open '{}'", path.string()));
    }
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw StoreError(StoreErrc::io, "", fmt::format("short read on '{}'", path.string()));
    }
    return parse_store(bytes);
}

void write_store(const TensorStore& store, const std::filesystem::path& path) {
    const auto bytes = serialize_store(store);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw StoreError(StoreErrc::io, "", fmt::format("cannot open '{}' for writing", path.string()));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) {
        throw StoreError(StoreErrc::io, "", fmt::format("write to '{}' failed", path.string()));
    }
}

} // namespace twostage
