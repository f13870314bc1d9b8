#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "duet/error.hpp"
#include "duet/particle/image.hpp"

namespace duet {

using Histogram = std::array<std::uint64_t, 256>;

struct EmptyHistogram : Error {
    EmptyHistogram() : Error("histogram holds no pixels") {}
};

inline Histogram compute_histogram(const GrayImage& image) {
    Histogram h{};
    for (std::uint8_t px : image.pixels) ++h[px];
    return h;
}

namespace detail {

// Between-class variance of the split {<=t}/{>t}, kept as the exact
// rational num/den with num = (s0*N - S*w0)^2 and den = w0*w1. An empty
// upper class makes the numerator vanish, so den == 0 normalizes to 0/1.
struct OtsuScore {
    unsigned __int128 num = 0;
    std::uint64_t den = 1;
};

// a * b as three 64-bit limbs, least significant first.
inline std::array<std::uint64_t, 3> mul_u128_u64(unsigned __int128 a, std::uint64_t b) {
    const unsigned __int128 lo = (a & ~std::uint64_t{0}) * static_cast<unsigned __int128>(b);
    const unsigned __int128 hi =
        (a >> 64) * static_cast<unsigned __int128>(b) + (lo >> 64);
    return {static_cast<std::uint64_t>(lo), static_cast<std::uint64_t>(hi),
            static_cast<std::uint64_t>(hi >> 64)};
}

inline bool otsu_score_greater(const OtsuScore& a, const OtsuScore& b) {
    const auto lhs = mul_u128_u64(a.num, b.den);
    const auto rhs = mul_u128_u64(b.num, a.den);
    for (int i = 2; i >= 0; --i) {
        if (lhs[i] != rhs[i]) return lhs[i] > rhs[i];
    }
    return false;
}

} // namespace detail

/// Threshold maximizing between-class variance over splits {<=t}/{>t},
/// compared in exact integer arithmetic; ties (and the all-one-level
/// degenerate case) resolve to the lowest t whose lower class is
/// non-empty. Capacity: histogram total below 2^24 pixels, which keeps
/// every cross-multiplied comparison inside 192 bits.
inline int otsu_threshold(const Histogram& histogram) {
    std::uint64_t total = 0;
    std::uint64_t total_sum = 0;
    for (std::size_t i = 0; i < histogram.size(); ++i) {
        total += histogram[i];
        total_sum += i * histogram[i];
    }
    if (total == 0) throw EmptyHistogram();
    if (total >= (std::uint64_t{1} << 24))
        throw Error("histogram total " + std::to_string(total) +
                    " exceeds the supported 2^24 pixel capacity");

    int best_t = -1;
    detail::OtsuScore best{};
    std::uint64_t w0 = 0;
    std::uint64_t s0 = 0;
    for (int t = 0; t <= 255; ++t) {
        w0 += histogram[static_cast<std::size_t>(t)];
        s0 += static_cast<std::uint64_t>(t) * histogram[static_cast<std::size_t>(t)];
        if (w0 == 0) continue; // empty lower class: not a split

        const std::uint64_t w1 = total - w0;
        const std::uint64_t left = s0 * total;
        const std::uint64_t right = total_sum * w0;
        const std::uint64_t diff = left > right ? left - right : right - left;
        detail::OtsuScore score;
        if (w1 == 0) {
            score = {0, 1};
        } else {
            score.num = static_cast<unsigned __int128>(diff) * diff;
            score.den = w0 * w1;
        }
        if (best_t < 0 || detail::otsu_score_greater(score, best)) {
            best_t = t;
            best = score;
        }
    }
    return best_t;
}

struct ThresholdSpec {
    enum class Kind { Otsu, Fixed };
    Kind kind = Kind::Otsu;
    int level = 0; // Fixed only, 0..255

    static ThresholdSpec otsu() { return {}; }
    static ThresholdSpec fixed(int level) { return {Kind::Fixed, level}; }
};

/// The level actually applied: Otsu's choice or the fixed one.
inline int resolve_threshold(const GrayImage& image, const ThresholdSpec& spec) {
    if (spec.kind == ThresholdSpec::Kind::Fixed) {
        if (spec.level < 0 || spec.level > 255)
            throw Error("fixed threshold " + std::to_string(spec.level) +
                        " outside [0, 255]");
        return spec.level;
    }
    return otsu_threshold(compute_histogram(image));
}

/// Foreground is strictly above the threshold; at t = 255 the mask is
/// empty. Stated explicitly because an off-by-one here silently changes
/// particle counts.
inline BinaryMask binarize(const GrayImage& image, const ThresholdSpec& spec = {}) {
    if (auto why = image.violation()) throw Error("invalid image: " + *why);
    const int level = resolve_threshold(image, spec);
    BinaryMask mask = make_mask(image.width, image.height);
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        mask.bits[i] = image.pixels[i] > level ? 1 : 0;
    return mask;
}

} // namespace duet
