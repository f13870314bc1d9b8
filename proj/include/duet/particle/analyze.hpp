#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "duet/error.hpp"
#include "duet/particle/image.hpp"
#include "duet/particle/label.hpp"
#include "duet/particle/threshold.hpp"

namespace duet {

struct ZeroPixelLength : Error {
    ZeroPixelLength() : Error("scale bar pixel length must be at least 1") {}
};

struct NonPositiveLength : Error {
    explicit NonPositiveLength(const std::string& what_length)
        : Error(what_length + " must be a positive finite number") {}
};

struct ScaleCalibration {
    enum class Source { Direct, Bar };
    Source source = Source::Direct;
    double microns_per_pixel = 1.0;
    // Bar provenance, kept for reporting.
    double bar_microns = 0.0;
    std::size_t bar_pixels = 0;
    // Region to keep out of the count (scale bar, info banner).
    std::optional<Rect> exclusion;

    std::optional<std::string> violation() const {
        if (!(microns_per_pixel > 0.0) || !std::isfinite(microns_per_pixel))
            return std::string("microns_per_pixel must be positive and finite");
        if (source == Source::Bar && bar_pixels < 1)
            return std::string("bar pixel length must be >= 1");
        return std::nullopt;
    }
};

inline ScaleCalibration calibrate_direct(double microns_per_pixel,
                                         std::optional<Rect> exclusion = std::nullopt) {
    if (!(microns_per_pixel > 0.0) || !std::isfinite(microns_per_pixel))
        throw NonPositiveLength("microns-per-pixel factor");
    ScaleCalibration cal;
    cal.source = ScaleCalibration::Source::Direct;
    cal.microns_per_pixel = microns_per_pixel;
    cal.exclusion = exclusion;
    return cal;
}

inline ScaleCalibration calibrate_bar(double bar_microns, std::size_t bar_pixels,
                                      std::optional<Rect> exclusion = std::nullopt) {
    if (bar_pixels == 0) throw ZeroPixelLength();
    if (!(bar_microns > 0.0) || !std::isfinite(bar_microns))
        throw NonPositiveLength("scale bar physical length");
    ScaleCalibration cal;
    cal.source = ScaleCalibration::Source::Bar;
    cal.microns_per_pixel = bar_microns / static_cast<double>(bar_pixels);
    cal.bar_microns = bar_microns;
    cal.bar_pixels = bar_pixels;
    cal.exclusion = exclusion;
    return cal;
}

/// How the exclusion region is applied. ZeroOut removes its pixels from
/// the mask before labeling (partial overlaps just lose the overlapped
/// pixels); FlagOnly labels everything and drops any component with a
/// pixel inside the region.
enum class ExclusionMode { ZeroOut, FlagOnly };

struct AnalysisOptions {
    double min_area_um2 = 10.0;
    Connectivity connectivity = Connectivity::Eight;
    ThresholdSpec threshold{};
    ExclusionMode exclusion_mode = ExclusionMode::ZeroOut;
};

struct Component {
    std::uint32_t id = 0;
    std::size_t pixel_count = 0;
    double area_um2 = 0.0; // pixel_count * microns_per_pixel^2
    Rect bbox;
    bool touches_bottom = false;
    bool in_exclusion = false;
    bool passes_area = false; // area_um2 > min_area_um2

    bool counted() const { return passes_area && !touches_bottom && !in_exclusion; }

    friend bool operator==(const Component&, const Component&) = default;
};

struct ParticleAnalysisResult {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Component> components;
    std::size_t count = 0; // components with counted() true
    RgbImage overlay;
    ScaleCalibration calibration;
    std::vector<std::uint32_t> labels; // 0 = background, else Component::id
    int threshold_used = 0;
};

struct DimensionMismatch : Error {
    DimensionMismatch() : Error("result labels do not match the image dimensions") {}
};

/// Grayscale base promoted to RGB; counted components blended toward
/// green and excluded ones toward red, each pixel (g + tint) / 2. The
/// count itself is reported in the sidecar record, not drawn.
inline RgbImage render_overlay(const GrayImage& image, const ParticleAnalysisResult& result) {
    if (result.width != image.width || result.height != image.height ||
        result.labels.size() != image.pixels.size())
        throw DimensionMismatch();

    RgbImage out;
    out.width = image.width;
    out.height = image.height;
    out.pixels.resize(image.pixels.size() * 3);

    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const std::uint8_t g = image.pixels[i];
        std::uint8_t r8 = g, g8 = g, b8 = g;
        if (const std::uint32_t id = result.labels[i]; id != 0) {
            const Component& comp = result.components[id - 1];
            if (comp.counted()) {
                r8 = static_cast<std::uint8_t>(g / 2);
                g8 = static_cast<std::uint8_t>((g + 255) / 2);
                b8 = static_cast<std::uint8_t>(g / 2);
            } else {
                r8 = static_cast<std::uint8_t>((g + 255) / 2);
                g8 = static_cast<std::uint8_t>(g / 2);
                b8 = static_cast<std::uint8_t>(g / 2);
            }
        }
        out.pixels[i * 3 + 0] = r8;
        out.pixels[i * 3 + 1] = g8;
        out.pixels[i * 3 + 2] = b8;
    }
    return out;
}

namespace detail {

/// The bottom-most analyzable row: when the exclusion region is a
/// full-width strip docked at the image bottom, the row just above it;
/// otherwise the last image row.
inline std::size_t bottom_row(std::size_t width, std::size_t height,
                              const std::optional<Rect>& exclusion) {
    if (exclusion && exclusion->x == 0 && exclusion->w == width &&
        exclusion->y + exclusion->h == height && exclusion->y > 0)
        return exclusion->y - 1;
    return height - 1;
}

} // namespace detail

/// Full pipeline: threshold, drop the exclusion region, label, convert
/// areas, then count components passing the area cut that neither touch
/// the bottom row nor lie in the exclusion region.
inline ParticleAnalysisResult count_particles(const GrayImage& image,
                                              const ScaleCalibration& calibration,
                                              const AnalysisOptions& options = {}) {
    if (auto why = image.violation()) throw Error("invalid image: " + *why);
    if (auto why = calibration.violation()) throw Error("invalid calibration: " + *why);
    if (calibration.exclusion && !calibration.exclusion->within(image.width, image.height))
        throw Error("exclusion region extends outside the image");
    if (!(options.min_area_um2 >= 0.0) || !std::isfinite(options.min_area_um2))
        throw Error("minimum area must be a non-negative finite number");

    ParticleAnalysisResult result;
    result.width = image.width;
    result.height = image.height;
    result.calibration = calibration;

    // The threshold is chosen from the full image; the exclusion region
    // is removed from the mask afterwards so it cannot skew Otsu's split
    // ordering relative to a run without an exclusion region.
    result.threshold_used = resolve_threshold(image, options.threshold);
    BinaryMask mask = binarize(image, ThresholdSpec::fixed(result.threshold_used));

    const std::optional<Rect>& excl = calibration.exclusion;
    if (excl && options.exclusion_mode == ExclusionMode::ZeroOut) {
        for (std::size_t y = excl->y; y < excl->y + excl->h; ++y)
            for (std::size_t x = excl->x; x < excl->x + excl->w; ++x) mask.set(x, y, false);
    }

    LabeledComponents labeled = label_components(mask, options.connectivity);
    result.labels = std::move(labeled.labels);

    std::vector<bool> excluded(labeled.components.size() + 1, false);
    if (excl && options.exclusion_mode == ExclusionMode::FlagOnly) {
        for (std::size_t y = excl->y; y < excl->y + excl->h; ++y)
            for (std::size_t x = excl->x; x < excl->x + excl->w; ++x)
                if (const std::uint32_t id = result.labels[y * image.width + x]; id != 0)
                    excluded[id] = true;
    }

    const std::size_t bottom = detail::bottom_row(image.width, image.height, excl);
    const double px_area = calibration.microns_per_pixel * calibration.microns_per_pixel;

    result.components.reserve(labeled.components.size());
    for (const RawComponent& raw : labeled.components) {
        Component comp;
        comp.id = raw.id;
        comp.pixel_count = raw.pixel_count;
        comp.area_um2 = static_cast<double>(raw.pixel_count) * px_area;
        comp.bbox = raw.bbox;
        comp.touches_bottom = raw.max_row() >= bottom;
        comp.in_exclusion = excluded[raw.id];
        comp.passes_area = comp.area_um2 > options.min_area_um2;
        if (comp.counted()) ++result.count;
        result.components.push_back(comp);
    }

    result.overlay = render_overlay(image, result);
    return result;
}

} // namespace duet
