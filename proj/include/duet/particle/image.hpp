#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace duet {

/// Axis-aligned pixel rectangle, origin top-left, end-exclusive extents.
struct Rect {
    std::size_t x = 0;
    std::size_t y = 0;
    std::size_t w = 0;
    std::size_t h = 0;

    bool within(std::size_t image_w, std::size_t image_h) const {
        return w >= 1 && h >= 1 && x + w <= image_w && y + h <= image_h;
    }

    bool contains(std::size_t px, std::size_t py) const {
        return px >= x && px < x + w && py >= y && py < y + h;
    }

    friend bool operator==(const Rect&, const Rect&) = default;
};

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // row-major, width*height

    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
    std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }

    std::optional<std::string> violation() const {
        if (width < 1 || height < 1) return std::string("image dimensions must be >= 1");
        if (pixels.size() != width * height)
            return std::string("pixel buffer length does not match width*height");
        return std::nullopt;
    }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline GrayImage make_gray_image(std::size_t width, std::size_t height, std::uint8_t fill = 0) {
    GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.assign(width * height, fill);
    return img;
}

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // row-major, 3 bytes per pixel (R, G, B)

    const std::uint8_t* at(std::size_t x, std::size_t y) const {
        return &pixels[(y * width + x) * 3];
    }
    std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct BinaryMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits; // 0 background, 1 foreground

    bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
    void set(std::size_t x, std::size_t y, bool v) { bits[y * width + x] = v ? 1 : 0; }

    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (std::uint8_t b : bits) n += b != 0;
        return n;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

inline BinaryMask make_mask(std::size_t width, std::size_t height) {
    BinaryMask m;
    m.width = width;
    m.height = height;
    m.bits.assign(width * height, 0);
    return m;
}

} // namespace duet
