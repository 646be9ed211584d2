#include "framediff/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace fd {

namespace {

uint8_t to_byte(float v) {
    int k = static_cast<int>(std::lround(v * 255.0f));
    return static_cast<uint8_t>(std::min(255, std::max(0, k)));
}

// png ----------------------------------------------------------------------

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

void put_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
    std::vector<uint8_t> head;
    put_u32_be(head, static_cast<uint32_t>(data.size()));
    f.write(reinterpret_cast<const char*>(head.data()), 4);
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()),
                               static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<uint8_t> tail;
    put_u32_be(tail, static_cast<uint32_t>(crc));
    f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

void write_png_rgb(const std::string& path, const std::vector<uint8_t>& rgb, int H, int W) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open png for writing: " + path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(W));
    put_u32_be(ihdr, static_cast<uint32_t>(H));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // rgb
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(f, "IHDR", ihdr);

    // filter byte 0 per scanline
    std::vector<uint8_t> raw;
    raw.reserve(size_t(H) * (size_t(W) * 3 + 1));
    for (int y = 0; y < H; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb.begin() + size_t(y) * W * 3,
                   rgb.begin() + size_t(y + 1) * W * 3);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("zlib compression failed for " + path);
    comp.resize(comp_len);
    put_chunk(f, "IDAT", comp);
    put_chunk(f, "IEND", {});
    if (!f) throw std::runtime_error("write failure on png: " + path);
}

std::vector<uint8_t> frame_rgb(const Tensor<float>& video, int f) {
    int C = video.dim(1), H = video.dim(2), W = video.dim(3);
    std::vector<uint8_t> rgb(size_t(H) * W * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                rgb[(size_t(y) * W + x) * 3 + c] =
                    to_byte(video.v[((size_t(f) * C + c) * H + y) * W + x]);
    return rgb;
}

// gif ----------------------------------------------------------------------

// palette: 6x6x6 color cube followed by 40 grays
void build_palette(std::vector<uint8_t>& pal) {
    pal.clear();
    for (int r = 0; r < 6; ++r)
        for (int g = 0; g < 6; ++g)
            for (int b = 0; b < 6; ++b) {
                pal.push_back(uint8_t(r * 51));
                pal.push_back(uint8_t(g * 51));
                pal.push_back(uint8_t(b * 51));
            }
    for (int i = 0; i < 40; ++i) {
        uint8_t v = uint8_t(i * 255 / 39);
        pal.push_back(v);
        pal.push_back(v);
        pal.push_back(v);
    }
}

uint8_t palette_index(uint8_t r, uint8_t g, uint8_t b) {
    // gray pixels use the dedicated ramp, otherwise nearest cube cell
    int mx = std::max({r, g, b}), mn = std::min({r, g, b});
    if (mx - mn <= 6) {
        int i = (int(r) + g + b) / 3 * 39 / 255;
        return uint8_t(216 + std::min(39, i));
    }
    int ri = (r + 25) / 51, gi = (g + 25) / 51, bi = (b + 25) / 51;
    return uint8_t((std::min(5, ri) * 6 + std::min(5, gi)) * 6 + std::min(5, bi));
}

struct BitWriter {
    std::vector<uint8_t> bytes;
    uint32_t cur = 0;
    int nbits = 0;
    void put(uint32_t code, int width) {
        cur |= code << nbits;
        nbits += width;
        while (nbits >= 8) {
            bytes.push_back(uint8_t(cur & 0xFF));
            cur >>= 8;
            nbits -= 8;
        }
    }
    void flush() {
        if (nbits > 0) bytes.push_back(uint8_t(cur & 0xFF));
        cur = 0;
        nbits = 0;
    }
};

// GIF LZW with 8-bit minimum code size
std::vector<uint8_t> lzw_encode(const std::vector<uint8_t>& indices) {
    const int min_code = 8;
    const int clear = 1 << min_code, eoi = clear + 1;
    BitWriter bw;
    std::vector<std::unordered_map<uint8_t, int>> next;  // per-code transition table
    auto reset = [&] {
        next.assign(4096, {});
    };
    reset();
    int code_size = min_code + 1;
    int next_code = eoi + 1;
    bw.put(uint32_t(clear), code_size);
    int cur = -1;
    for (uint8_t k : indices) {
        if (cur < 0) {
            cur = k;
            continue;
        }
        auto it = next[size_t(cur)].find(k);
        if (it != next[size_t(cur)].end()) {
            cur = it->second;
            continue;
        }
        bw.put(uint32_t(cur), code_size);
        if (next_code < 4096) {
            next[size_t(cur)][k] = next_code++;
            if (next_code - 1 == (1 << code_size) && code_size < 12) ++code_size;
        } else {
            bw.put(uint32_t(clear), code_size);
            reset();
            code_size = min_code + 1;
            next_code = eoi + 1;
        }
        cur = k;
    }
    if (cur >= 0) bw.put(uint32_t(cur), code_size);
    bw.put(uint32_t(eoi), code_size);
    bw.flush();
    return bw.bytes;
}

void put_u16_le(std::ofstream& f, uint16_t v) {
    f.put(char(v & 0xFF));
    f.put(char(v >> 8));
}

}  // namespace

void write_png(const std::string& path, const Tensor<float>& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("write_png expects [3,H,W], got " + shape_str(image.shape));
    int H = image.dim(1), W = image.dim(2);
    std::vector<uint8_t> rgb(size_t(H) * W * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                rgb[(size_t(y) * W + x) * 3 + c] = to_byte(image.v[(size_t(c) * H + y) * W + x]);
    write_png_rgb(path, rgb, H, W);
}

void write_png_grid(const std::string& path, const Tensor<float>& video, int cols) {
    if (video.ndim() != 4 || video.dim(1) != 3)
        throw std::invalid_argument("write_png_grid expects [F,3,H,W], got " +
                                    shape_str(video.shape));
    if (cols < 1) throw std::invalid_argument("write_png_grid: cols must be >= 1");
    int F = video.dim(0), H = video.dim(2), W = video.dim(3);
    int rows = (F + cols - 1) / cols;
    int GH = rows * (H + 1) + 1, GW = cols * (W + 1) + 1;  // 1px separators
    std::vector<uint8_t> rgb(size_t(GH) * GW * 3, 32);
    for (int f = 0; f < F; ++f) {
        auto fr = frame_rgb(video, f);
        int oy = (f / cols) * (H + 1) + 1, ox = (f % cols) * (W + 1) + 1;
        for (int y = 0; y < H; ++y)
            std::memcpy(&rgb[((size_t(oy) + y) * GW + ox) * 3], &fr[size_t(y) * W * 3],
                        size_t(W) * 3);
    }
    write_png_rgb(path, rgb, GH, GW);
}

void write_gif(const std::string& path, const Tensor<float>& video, int delay_cs) {
    if (video.ndim() != 4 || video.dim(1) != 3)
        throw std::invalid_argument("write_gif expects [F,3,H,W], got " + shape_str(video.shape));
    int F = video.dim(0), H = video.dim(2), W = video.dim(3);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open gif for writing: " + path);
    f.write("GIF89a", 6);
    put_u16_le(f, uint16_t(W));
    put_u16_le(f, uint16_t(H));
    f.put(char(0xF7));  // global color table, 256 entries, 8-bit color
    f.put(0);           // background index
    f.put(0);           // aspect
    std::vector<uint8_t> pal;
    build_palette(pal);
    f.write(reinterpret_cast<const char*>(pal.data()), static_cast<std::streamsize>(pal.size()));

    // netscape looping extension
    f.put(char(0x21)); f.put(char(0xFF)); f.put(char(11));
    f.write("NETSCAPE2.0", 11);
    f.put(char(3)); f.put(char(1)); put_u16_le(f, 0); f.put(char(0));

    for (int fr = 0; fr < F; ++fr) {
        f.put(char(0x21)); f.put(char(0xF9)); f.put(char(4));
        f.put(char(0x04));  // no disposal, no transparency
        put_u16_le(f, uint16_t(delay_cs));
        f.put(char(0)); f.put(char(0));

        f.put(char(0x2C));  // image descriptor
        put_u16_le(f, 0); put_u16_le(f, 0);
        put_u16_le(f, uint16_t(W)); put_u16_le(f, uint16_t(H));
        f.put(char(0));  // no local color table

        auto rgb = frame_rgb(video, fr);
        std::vector<uint8_t> idx(size_t(H) * W);
        for (size_t p = 0; p < idx.size(); ++p)
            idx[p] = palette_index(rgb[p * 3], rgb[p * 3 + 1], rgb[p * 3 + 2]);
        f.put(char(8));  // lzw minimum code size
        auto enc = lzw_encode(idx);
        for (size_t off = 0; off < enc.size(); off += 255) {
            size_t n = std::min<size_t>(255, enc.size() - off);
            f.put(char(n));
            f.write(reinterpret_cast<const char*>(enc.data() + off),
                    static_cast<std::streamsize>(n));
        }
        f.put(char(0));  // block terminator
    }
    f.put(char(0x3B));  // trailer
    if (!f) throw std::runtime_error("write failure on gif: " + path);
}

}  // namespace fd
