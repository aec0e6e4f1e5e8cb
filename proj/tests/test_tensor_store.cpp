// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cstring>

#include <gtest/gtest.h>
#include <json.hpp>

#include "support.hpp"
#include "twostage/tensor_store.hpp"

using namespace twostage;
using twostage::testing::Rng;

namespace {

std::vector<std::byte> with_header(const std::string& header, std::size_t data_bytes) {
    std::vector<std::byte> out(8 + header.size() + data_bytes, std::byte{0});
    const std::uint64_t n = header.size();
    std::memcpy(out.data(), &n, 8);
    std::memcpy(out.data() + 8, header.data(), header.size());
    return out;
}

StoreErrc parse_code(const std::vector<std::byte>& bytes) {
    try {
        parse_store(bytes);
    } catch (const StoreError& e) {
        return e.code();
    }
    ADD_FAILURE() << "parse unexpectedly succeeded";
    return StoreErrc::io;
}

TensorStore two_tensor_store() {
    TensorStore s;
    const std::vector<float> a{1, 2, 3, 4, 5, 6};
    const std::vector<float> b{-1.5f, 0.25f};
    s.insert("layer.weight", Tensor::from_f32({2, 3}, a));
    s.insert("bias", Tensor::from_f32({2}, b, DType::f16));
    s.set_metadata("format", "pt");
    return s;
}

} // namespace

TEST(HalfFloat, ExactValuesRoundTrip) {
    for (float v : {0.0f, -0.0f, 1.0f, -2.5f, 65504.0f, 6.103515625e-05f, 5.960464477539063e-08f}) {
        EXPECT_EQ(f16_to_f32(f32_to_f16(v)), v) << v;
    }
    EXPECT_TRUE(std::isinf(f16_to_f32(f32_to_f16(1e6f))));
    EXPECT_TRUE(std::isnan(f16_to_f32(f32_to_f16(std::nanf("")))));
    EXPECT_EQ(f16_to_f32(f32_to_f16(1e-10f)), 0.0f);
}

TEST(HalfFloat, AllF16BitPatternsSurviveWidening) {
    for (std::uint32_t bits = 0; bits < 0x10000; ++bits) {
        const auto h = static_cast<std::uint16_t>(bits);
        const float f = f16_to_f32(h);
        if (std::isnan(f)) continue;
        EXPECT_EQ(f32_to_f16(f), h) << std::hex << bits;
    }
}

TEST(HalfFloat, RoundsToNearestEven) {
    // 1 + 2^-11 sits halfway between 1 and the next f16; ties go to even (1).
    EXPECT_EQ(f16_to_f32(f32_to_f16(1.0f + 0x1.0p-11f)), 1.0f);
    EXPECT_EQ(f16_to_f32(f32_to_f16(1.0f + 3 * 0x1.0p-11f)), 1.0f + 0x1.0p-9f);
    EXPECT_EQ(bf16_to_f32(f32_to_bf16(1.0f + 0x1.0p-8f)), 1.0f);
}

TEST(TensorStore, SerializeParseRoundTrip) {
    const TensorStore s = two_tensor_store();
    const auto bytes = serialize_store(s);
    const TensorStore back = parse_store(bytes);
    EXPECT_EQ(back, s);
    EXPECT_EQ(serialize_store(back), bytes);
    EXPECT_EQ(back.at("bias").to_f32(), (std::vector<float>{-1.5f, 0.25f}));
    EXPECT_EQ(back.metadata().at("format"), "pt");
}

TEST(TensorStore, HeaderIsSortedAndAligned) {
    const auto bytes = serialize_store(two_tensor_store());
    std::uint64_t n = 0;
    std::memcpy(&n, bytes.data(), 8);
    EXPECT_EQ(n % 8, 0u);
    const std::string header(reinterpret_cast<const char*>(bytes.data() + 8), n);
    const auto j = nlohmann::json::parse(header);
    EXPECT_EQ(j.at("bias").at("data_offsets"), nlohmann::json::array({0, 4}));
    EXPECT_EQ(j.at("layer.weight").at("data_offsets"), nlohmann::json::array({4, 28}));
    EXPECT_EQ(j.at("layer.weight").at("dtype"), "F32");
    EXPECT_EQ(header.find("\"__metadata__\""), 1u);
}

TEST(TensorStore, EmptyStore) {
    const auto bytes = serialize_store(TensorStore{});
    const std::string header(reinterpret_cast<const char*>(bytes.data() + 8), bytes.size() - 8);
    EXPECT_EQ(header, "{}      ");
    EXPECT_EQ(parse_store(bytes).size(), 0u);
}

TEST(TensorStore, ScalarAndZeroSizedTensors) {
    TensorStore s;
    s.insert("scalar", Tensor::from_f32({}, std::vector<float>{3.0f}));
    s.insert("empty", Tensor::from_f32({0, 4}, std::vector<float>{}));
    const TensorStore back = parse_store(serialize_store(s));
    EXPECT_EQ(back, s);
    EXPECT_EQ(back.at("scalar").element_count(), 1u);
    EXPECT_EQ(back.at("empty").element_count(), 0u);
}

TEST(TensorStore, FileRoundTrip) {
    twostage::testing::TempDir dir("store");
    const TensorStore s = two_tensor_store();
    write_store(s, dir / "a.safetensors");
    EXPECT_EQ(read_store(dir / "a.safetensors"), s);
    try {
        read_store(dir / "missing.safetensors");
        FAIL();
    } catch (const StoreError& e) {
        EXPECT_EQ(e.code(), StoreErrc::io);
    }
}

TEST(TensorStore, InsertRejectsBadInput) {
    TensorStore s;
    s.insert("a", Tensor::from_f32({1}, std::vector<float>{1}));
    EXPECT_THROW(s.insert("a", Tensor::from_f32({1}, std::vector<float>{1})), std::invalid_argument);
    EXPECT_THROW(s.insert("__metadata__", Tensor::from_f32({1}, std::vector<float>{1})), std::invalid_argument);
    Tensor bad{DType::f32, {2}, std::vector<std::byte>(4)};
    EXPECT_THROW(s.insert("b", bad), std::invalid_argument);
}

TEST(TensorStore, RejectsTruncatedHeaderLength) {
    EXPECT_EQ(parse_code(std::vector<std::byte>(5)), StoreErrc::header_length);
    auto bytes = with_header("{}", 0);
    const std::uint64_t huge = 1000;
    std::memcpy(bytes.data(), &huge, 8);
    EXPECT_EQ(parse_code(bytes), StoreErrc::header_length);
}

TEST(TensorStore, RejectsMalformedHeaders) {
    EXPECT_EQ(parse_code(with_header("{not json", 0)), StoreErrc::json_parse);
    EXPECT_EQ(parse_code(with_header("[]", 0)), StoreErrc::json_parse);
    EXPECT_EQ(parse_code(with_header(R"({"a":{"dtype":"I7","shape":[1],"data_offsets":[0,4]}})", 4)),
              StoreErrc::unknown_dtype);
    EXPECT_EQ(parse_code(with_header(R"({"a":{"dtype":"F32","shape":[1]}})", 4)), StoreErrc::invalid_entry);
}

TEST(TensorStore, RejectsBadOffsets) {
    // Past the end of the data region.
    EXPECT_EQ(parse_code(with_header(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", 4)),
              StoreErrc::out_of_bounds);
    // Byte length disagrees with the shape.
    EXPECT_EQ(parse_code(with_header(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,4]}})", 4)),
              StoreErrc::length_mismatch);
    // Overlapping entries.
    EXPECT_EQ(parse_code(with_header(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
                                     R"("b":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})",
                                     8)),
              StoreErrc::overlap);
    // Unused bytes between entries.
    EXPECT_EQ(parse_code(with_header(R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
                                     R"("b":{"dtype":"F32","shape":[1],"data_offsets":[8,12]}})",
                                     12)),
              StoreErrc::gap);
}

TEST(TensorStore, ErrorNamesTheTensor) {
    try {
        parse_store(with_header(R"({"w.lora_up":{"dtype":"F32","shape":[3],"data_offsets":[0,4]}})", 4));
        FAIL();
    } catch (const StoreError& e) {
        EXPECT_EQ(e.tensor(), "w.lora_up");
    }
}

TEST(TensorStore, RejectsOverflowingShape) {
    EXPECT_EQ(parse_code(with_header(
                  R"({"a":{"dtype":"F32","shape":[4294967296,4294967296,16],"data_offsets":[0,4]}})", 4)),
              StoreErrc::too_large);
}

TEST(TensorStore, RandomStoresRoundTrip) {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        TensorStore s;
        const int n = rng.range(0, 6);
        for (int i = 0; i < n; ++i) {
            std::vector<std::uint64_t> shape(static_cast<std::size_t>(rng.range(0, 3)));
            std::uint64_t count = 1;
            for (auto& d : shape) count *= (d = static_cast<std::uint64_t>(rng.range(0, 5)));
            const DType dt = static_cast<DType>(rng.range(0, 2));
            s.insert("t" + std::to_string(i), Tensor::from_f32(shape, twostage::testing::random_floats(rng, count), dt));
        }
        if (rng.coin()) s.set_metadata("k", std::to_string(trial));
        const auto bytes = serialize_store(s);
        const TensorStore back = parse_store(bytes);
        ASSERT_EQ(back, s);
        ASSERT_EQ(serialize_store(back), bytes);
    }
}

// --- LoRA pair discovery -------------------------------------------------

namespace {

Tensor filled(std::vector<std::uint64_t> shape, float v = 0.5f) {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return Tensor::from_f32(std::move(shape), std::vector<float>(n, v));
}

} // namespace

TEST(LoraDiscovery, PairsDownUpAndAlpha) {
    TensorStore s;
    s.insert("unet.attn.to_q.lora_down.weight", filled({4, 16}));
    s.insert("unet.attn.to_q.lora_up.weight", filled({32, 4}));
    s.insert("unet.attn.to_q.alpha", Tensor::from_f32({}, std::vector<float>{2.0f}));
    s.insert("unet.attn.to_k.lora_A.weight", filled({2, 8}));
    s.insert("unet.attn.to_k.lora_B.weight", filled({8, 2}));
    const auto found = discover_lora_pairs(s);
    ASSERT_EQ(found.deltas.size(), 2u);
    EXPECT_TRUE(found.unmatched.empty());
    const auto& k = found.deltas[0];
    EXPECT_EQ(k.base_name, "unet.attn.to_k.weight");
    EXPECT_EQ(k.rank, 2u);
    EXPECT_EQ(k.alpha, 1.0);
    const auto& q = found.deltas[1];
    EXPECT_EQ(q.base_name, "unet.attn.to_q.weight");
    EXPECT_EQ(q.out_dim(), 32u);
    EXPECT_EQ(q.in_dim(), 16u);
    EXPECT_EQ(q.rank, 4u);
    EXPECT_EQ(q.alpha, 2.0);
    EXPECT_EQ(q.alpha_tensor, "unet.attn.to_q.alpha");
}

TEST(LoraDiscovery, ReportsOrphans) {
    TensorStore s;
    s.insert("a.lora_up.weight", filled({4, 2}));
    s.insert("b.lora_down.weight", filled({2, 4}));
    s.insert("plain.weight", filled({4, 4}));
    const auto found = discover_lora_pairs(s);
    EXPECT_TRUE(found.deltas.empty());
    ASSERT_EQ(found.unmatched.size(), 2u);
    EXPECT_EQ(found.unmatched[0].tensor, "a.lora_up.weight");
    EXPECT_EQ(found.unmatched[1].tensor, "b.lora_down.weight");
}

TEST(LoraDiscovery, InnerDimensionMismatchNamesBothTensors) {
    TensorStore s;
    s.insert("x.lora_down.weight", filled({4, 8}));
    s.insert("x.lora_up.weight", filled({8, 3}));
    try {
        discover_lora_pairs(s);
        FAIL();
    } catch (const LoraDiscoveryError& e) {
        ASSERT_EQ(e.tensors().size(), 2u);
        EXPECT_NE(std::string(e.what()).find("x.lora_down.weight"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("x.lora_up.weight"), std::string::npos);
    }
}

TEST(LoraDiscovery, AlphaPolicy) {
    TensorStore s;
    s.insert("x.lora_down.weight", filled({2, 8}));
    s.insert("x.lora_up.weight", filled({8, 2}));
    NamingConfig strict;
    strict.alpha_policy = AlphaPolicy::required;
    EXPECT_THROW(discover_lora_pairs(s, strict), LoraDiscoveryError);
    EXPECT_EQ(discover_lora_pairs(s).deltas.at(0).alpha, 1.0);

    s.insert("x.alpha", filled({2}));
    EXPECT_THROW(discover_lora_pairs(s), LoraDiscoveryError);
}

TEST(LoraDiscovery, ConvFactorsAreFlattened) {
    TensorStore s;
    s.insert("conv.lora_down.weight", filled({4, 3, 3, 3}));
    s.insert("conv.lora_up.weight", filled({16, 4, 1, 1}));
    const auto found = discover_lora_pairs(s);
    ASSERT_EQ(found.deltas.size(), 1u);
    EXPECT_EQ(found.deltas[0].in_dim(), 27u);
    EXPECT_EQ(found.deltas[0].out_dim(), 16u);
}
