// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reading and writing of the safetensors container:
//
//   [u64 little-endian header length N][N bytes of UTF-8 JSON header][data region]
//
// The header maps each tensor name to {"dtype", "shape", "data_offsets": [begin, end]}
// with offsets relative to the start of the data region, plus an optional
// "__metadata__" object of string values.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/dtype.hpp"
#include "twostage/matrix.hpp"

namespace twostage {

enum class StoreErrc {
    io,
    header_length,
    json_parse,
    invalid_entry,
    unknown_dtype,
    out_of_bounds,
    length_mismatch,
    overlap,
    gap,
    too_large,
};

std::string_view to_string(StoreErrc code) noexcept;

/// Error raised by the container reader/writer. `tensor()` names the offending
/// entry when one is involved (empty for file-level failures).
class StoreError : public std::runtime_error {
public:
    StoreError(StoreErrc code, std::string tensor, const std::string& message);

    StoreErrc code() const noexcept { return code_; }
    const std::string& tensor() const noexcept { return tensor_; }

private:
    StoreErrc code_;
    std::string tensor_;
};

struct TensorMeta {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};

/// Raw tensor payload in its stored dtype.
struct Tensor {
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::vector<std::byte> bytes;

    std::uint64_t element_count() const;
    /// Decodes f16/bf16 to f32; f32 is copied.
    std::vector<float> to_f32() const;

    static Tensor from_f32(std::vector<std::uint64_t> shape, std::span<const float> values,
                           DType dtype = DType::f32);

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Element count of a shape; throws StoreError(too_large) on overflow.
std::uint64_t checked_element_count(std::span<const std::uint64_t> shape, const std::string& name);

class TensorStore {
public:
    /// Adds a tensor. Throws std::invalid_argument on duplicate names or when
    /// the byte length disagrees with shape and dtype.
    void insert(std::string name, Tensor tensor);
    void set_metadata(std::string key, std::string value);

    bool contains(const std::string& name) const { return tensors_.contains(name); }
    const Tensor& at(const std::string& name) const;
    const Tensor* find(const std::string& name) const;

    const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
    std::size_t size() const noexcept { return tensors_.size(); }

    /// Offsets each tensor receives when serialized (name order, contiguous).
    std::vector<TensorMeta> layout() const;

    friend bool operator==(const TensorStore&, const TensorStore&) = default;

private:
    std::map<std::string, Tensor> tensors_;
    std::map<std::string, std::string> metadata_;
};

/// Serializes with sorted header keys; output depends only on store contents.
std::vector<std::byte> serialize_store(const TensorStore& store);
TensorStore parse_store(std::span<const std::byte> file_bytes);

TensorStore read_store(const std::filesystem::path& path);
void write_store(const TensorStore& store, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// LoRA factor discovery

/// One low-rank update W' = W + alpha * U * V, U is d1 x r and V is r x d2.
struct LoraDelta {
    std::string base_name;
    Matrix up;   // U
    Matrix down; // V
    double alpha = 1.0;
    std::size_t rank = 0;

    // Names of the store entries the factors were decoded from.
    std::string up_tensor;
    std::string down_tensor;
    std::string alpha_tensor;

    std::size_t out_dim() const noexcept { return up.rows(); }
    std::size_t in_dim() const noexcept { return down.cols(); }
};

struct FactorSuffixes {
    std::string down; // r x d2 factor (V)
    std::string up;   // d1 x r factor (U)
};

enum class AlphaPolicy {
    default_one, // missing alpha means alpha = 1
    required,    // missing alpha is an error
};

struct NamingConfig {
    std::vector<FactorSuffixes> suffixes{{"lora_A", "lora_B"}, {"lora_down", "lora_up"}};
    std::string alpha_suffix = "alpha";
    AlphaPolicy alpha_policy = AlphaPolicy::default_one;
};

struct UnmatchedFactor {
    std::string tensor;
    std::string reason;
};

struct LoraDiscovery {
    std::vector<LoraDelta> deltas;
    std::vector<UnmatchedFactor> unmatched;
};

class LoraDiscoveryError : public std::runtime_error {
public:
    LoraDiscoveryError(std::vector<std::string> tensors, const std::string& message)
        : std::runtime_error(message), tensors_(std::move(tensors)) {}
    const std::vector<std::string>& tensors() const noexcept { return tensors_; }

private:
    std::vector<std::string> tensors_;
};

/// Pairs up/down factors by naming convention. A factor named
/// "<prefix>.<suffix><tail>" targets base weight "<prefix><tail>", and its alpha
/// (if any) is "<prefix>.<alpha_suffix>". Factors with more than two dimensions
/// are flattened to (shape[0], product of the rest).
///
/// Throws LoraDiscoveryError on inner-dimension mismatch or a missing alpha
/// under AlphaPolicy::required.
LoraDiscovery discover_lora_pairs(const TensorStore& store, const NamingConfig& naming = {});

} // namespace twostage
