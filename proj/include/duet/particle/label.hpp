#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "duet/error.hpp"
#include "duet/particle/image.hpp"

namespace duet {

enum class Connectivity { Four, Eight };

inline const char* to_string(Connectivity c) {
    return c == Connectivity::Four ? "4" : "8";
}

/// A maximal connected foreground set, before calibration: geometry only.
struct RawComponent {
    std::uint32_t id = 0; // 1-based, raster order of first pixel
    std::size_t pixel_count = 0;
    Rect bbox;

    std::size_t max_row() const { return bbox.y + bbox.h - 1; }

    friend bool operator==(const RawComponent&, const RawComponent&) = default;
};

struct LabeledComponents {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint32_t> labels; // 0 = background, else component id
    std::vector<RawComponent> components;
};

namespace detail {

inline std::uint32_t uf_find(std::vector<std::uint32_t>& parent, std::uint32_t i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]]; // path halving
        i = parent[i];
    }
    return i;
}

inline void uf_union(std::vector<std::uint32_t>& parent, std::uint32_t a, std::uint32_t b) {
    a = uf_find(parent, a);
    b = uf_find(parent, b);
    if (a != b) parent[b] = a;
}

} // namespace detail

/// Partitions the foreground into maximal connected sets with a
/// union-find over earlier-raster neighbors, then assigns ids 1..n in
/// raster order of each set's first pixel.
inline LabeledComponents label_components(const BinaryMask& mask,
                                          Connectivity connectivity = Connectivity::Eight) {
    const std::size_t w = mask.width;
    const std::size_t h = mask.height;
    if (mask.bits.size() != w * h) throw Error("mask buffer does not match its dimensions");

    LabeledComponents out;
    out.width = w;
    out.height = h;
    out.labels.assign(w * h, 0);
    if (w == 0 || h == 0) return out;
    if (w * h > std::numeric_limits<std::uint32_t>::max())
        throw Error("mask larger than the 2^32-pixel labeling capacity");

    std::vector<std::uint32_t> parent(w * h);
    std::iota(parent.begin(), parent.end(), std::uint32_t{0});
    const auto join = [&](std::size_t a, std::size_t b) {
        detail::uf_union(parent, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b));
    };

    const bool eight = connectivity == Connectivity::Eight;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            if (!mask.bits[i]) continue;
            if (x > 0 && mask.bits[i - 1]) join(i, i - 1);
            if (y > 0) {
                const std::size_t up = i - w;
                if (mask.bits[up]) join(i, up);
                if (eight) {
                    if (x > 0 && mask.bits[up - 1]) join(i, up - 1);
                    if (x + 1 < w && mask.bits[up + 1]) join(i, up + 1);
                }
            }
        }
    }

    std::vector<std::uint32_t> id_of_root(w * h, 0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            if (!mask.bits[i]) continue;
            const std::uint32_t root = detail::uf_find(parent, static_cast<std::uint32_t>(i));
            std::uint32_t id = id_of_root[root];
            if (id == 0) {
                id = static_cast<std::uint32_t>(out.components.size() + 1);
                id_of_root[root] = id;
                out.components.push_back(RawComponent{id, 0, Rect{x, y, 1, 1}});
            }
            out.labels[i] = id;

            RawComponent& comp = out.components[id - 1];
            ++comp.pixel_count;
            const std::size_t x0 = std::min(comp.bbox.x, x);
            const std::size_t y0 = std::min(comp.bbox.y, y);
            const std::size_t x1 = std::max(comp.bbox.x + comp.bbox.w, x + 1);
            const std::size_t y1 = std::max(comp.bbox.y + comp.bbox.h, y + 1);
            comp.bbox = Rect{x0, y0, x1 - x0, y1 - y0};
        }
    }
    return out;
}

} // namespace duet
