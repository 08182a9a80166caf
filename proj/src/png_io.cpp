// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/render.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

namespace cogsplat {

namespace {

void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void write_chunk(std::ofstream& out, const char type[5], const std::vector<unsigned char>& data) {
    std::vector<unsigned char> head;
    put_u32_be(head, static_cast<std::uint32_t>(data.size()));
    out.write(reinterpret_cast<const char*>(head.data()), 4);
    out.write(type, 4);
    if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<unsigned char> tail;
    put_u32_be(tail, static_cast<std::uint32_t>(crc));
    out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const Image& image, const std::string& path) {
    const int h = image.height, w = image.width;
    if (h <= 0 || w <= 0) throw ConfigError("write_png: empty image");

    // Filter-0 scanlines, 8-bit RGB.
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(h) * (1 + 3 * w));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = image.at(y, x, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("write_png: deflate failed");
    compressed.resize(bound);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(w));
    put_u32_be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // adaptive filtering
    ihdr.push_back(0);   // no interlace
    write_chunk(out, "IHDR", ihdr);
    write_chunk(out, "IDAT", compressed);
    write_chunk(out, "IEND", {});
    out.close();
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cogsplat
