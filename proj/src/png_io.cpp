// Copyright 2026 The twostage Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "twostage/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <fmt/format.h>
#include <png.h>

namespace twostage {

namespace {

// libpng reports errors by longjmp; the functions that call setjmp below keep
// only trivially destructible locals so nothing is skipped on that path.
struct ErrorSink {
    char message[256] = "unknown libpng error";
};

void on_error(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
    std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
    png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

struct MemReader {
    const std::byte* data;
    std::size_t size;
    std::size_t pos;
};

void read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (n > r->size - r->pos) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

void write_cb(png_structp png, png_bytep in, png_size_t n) {
    auto* out = static_cast<std::vector<std::byte>*>(png_get_io_ptr(png));
    const auto* p = reinterpret_cast<const std::byte*>(in);
    out->insert(out->end(), p, p + n);
}

void flush_cb(png_structp) {}

struct Decoded {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int channels = 0;
    int depth = 0;
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
};

bool run_decode(png_structp png, png_infop info, Decoded* out) {
    if (setjmp(png_jmpbuf(png))) {
        return false;
    }
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    out->width = png_get_image_width(png, info);
    out->height = png_get_image_height(png, info);
    out->channels = png_get_channels(png, info);
    out->depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    out->pixels.resize(rowbytes * out->height);
    out->rows.resize(out->height);
    for (png_uint_32 y = 0; y < out->height; ++y) {
        out->rows[y] = out->pixels.data() + y * rowbytes;
    }
    png_read_image(png, out->rows.data());
    png_read_end(png, nullptr);
    return true;
}

bool run_encode(png_structp png, png_infop info, const Decoded* in, std::vector<std::byte>* sink) {
    if (setjmp(png_jmpbuf(png))) {
        return false;
    }
    png_set_write_fn(png, sink, write_cb, flush_cb);
    png_set_IHDR(png, info, in->width, in->height, in->depth,
                 in->channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(in->rows.data()));
    png_write_end(png, nullptr);
    return true;
}

} // namespace

ImageBuffer decode_png(std::span<const std::byte> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        throw PngError("not a PNG stream");
    }
    ErrorSink sink;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
    if (!png) {
        throw PngError("png_create_read_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    MemReader reader{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &reader, read_cb);
    auto decoded = std::make_unique<Decoded>();
    const bool ok = info && run_decode(png, info, decoded.get());
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (!ok) {
        throw PngError(fmt::format("PNG decode failed: {}", sink.message));
    }

    const int ch_in = decoded->channels;
    const int ch_out = ch_in >= 3 ? 3 : 1;
    ImageBuffer img(static_cast<int>(decoded->width), static_cast<int>(decoded->height), ch_out);
    const bool wide = decoded->depth == 16;
    const double scale = wide ? 65535.0 : 255.0;
    const std::size_t stride = static_cast<std::size_t>(ch_in) * (wide ? 2 : 1);
    for (int y = 0; y < img.height(); ++y) {
        const unsigned char* row = decoded->rows[static_cast<std::size_t>(y)];
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < ch_out; ++c) {
                const unsigned char* s = row + static_cast<std::size_t>(x) * stride + (wide ? 2 * c : c);
                const unsigned v = wide ? (static_cast<unsigned>(s[0]) << 8) | s[1] : s[0];
                img.at(x, y, c) = static_cast<float>(v / scale);
            }
        }
    }
    return img;
}

std::vector<std::byte> encode_png(const ImageBuffer& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw PngError(fmt::format("unsupported PNG bit depth {}", bit_depth));
    }
    auto in = std::make_unique<Decoded>();
    in->width = static_cast<png_uint_32>(img.width());
    in->height = static_cast<png_uint_32>(img.height());
    in->channels = img.channels();
    in->depth = bit_depth;
    const bool wide = bit_depth == 16;
    const double scale = wide ? 65535.0 : 255.0;
    const std::size_t rowbytes = static_cast<std::size_t>(img.width()) * img.channels() * (wide ? 2 : 1);
    in->pixels.resize(rowbytes * in->height);
    in->rows.resize(in->height);
    for (int y = 0; y < img.height(); ++y) {
        unsigned char* row = in->pixels.data() + static_cast<std::size_t>(y) * rowbytes;
        in->rows[static_cast<std::size_t>(y)] = row;
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                const double v = std::clamp(static_cast<double>(img.at(x, y, c)), 0.0, 1.0);
                const auto code = static_cast<unsigned>(std::lround(v * scale));
                const std::size_t i = static_cast<std::size_t>(x) * img.channels() + c;
                if (wide) {
                    row[2 * i] = static_cast<unsigned char>(code >> 8);
                    row[2 * i + 1] = static_cast<unsigned char>(code & 0xFF);
                } else {
                    row[i] = static_cast<unsigned char>(code);
                }
            }
        }
    }

    ErrorSink sink;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
    if (!png) {
        throw PngError("png_create_write_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    auto out = std::make_unique<std::vector<std::byte>>();
    const bool ok = info && run_encode(png, info, in.get(), out.get());
    png_destroy_write_struct(&png, info ? &info : nullptr);
    if (!ok) {
        throw PngError(fmt::format("PNG encode failed: {}", sink.message));
    }
    return std::move(*out);
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> bytes(raw.size());
    std::memcpy(bytes.data(), raw.data(), raw.size());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
}

ImageBuffer read_png(const std::filesystem::path& path) {
    return decode_png(read_file_bytes(path));
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth) {
    write_file_bytes(path, encode_png(img, bit_depth));
}

Mask read_mask_png(const std::filesystem::path& path, float threshold) {
    return mask_from_image(read_png(path), threshold);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    write_png(path, image_from_mask(mask), 8);
}

ImageBuffer quantize8(const ImageBuffer& img) {
    ImageBuffer out = img;
    for (float& v : out.data()) {
        v = static_cast<float>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0) / 255.0);
    }
    return out;
}

} // namespace twostage
