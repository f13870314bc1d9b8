#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "duet/particle/analyze.hpp"
#include "duet/particle/image.hpp"
#include "duet/particle/image_io.hpp"
#include "duet/particle/label.hpp"
#include "duet/particle/threshold.hpp"

#include "helpers.hpp"

using namespace duet;

namespace {

// Reference Otsu search. Scores are compared by cross-multiplying the
// exact rationals with base-2^32 schoolbook limb arithmetic, a different
// route than the library's 64-bit limb comparison.
std::array<std::uint32_t, 6> limb_product(unsigned __int128 a, std::uint64_t b) {
    const std::uint32_t al[4] = {
        static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
        static_cast<std::uint32_t>(a >> 64), static_cast<std::uint32_t>(a >> 96)};
    const std::uint32_t bl[2] = {static_cast<std::uint32_t>(b),
                                 static_cast<std::uint32_t>(b >> 32)};
    std::uint64_t acc[6] = {};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 2; ++j) {
            const std::uint64_t p = static_cast<std::uint64_t>(al[i]) * bl[j];
            acc[i + j] += p & 0xffffffffu;
            acc[i + j + 1] += p >> 32;
        }
    }
    std::array<std::uint32_t, 6> out{};
    std::uint64_t carry = 0;
    for (int k = 0; k < 6; ++k) {
        const std::uint64_t v = acc[k] + carry;
        out[k] = static_cast<std::uint32_t>(v);
        carry = v >> 32;
    }
    return out;
}

int reference_otsu(const Histogram& h) {
    std::uint64_t total = 0;
    std::uint64_t total_sum = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        total += h[i];
        total_sum += i * h[i];
    }
    REQUIRE(total > 0);

    int best_t = -1;
    unsigned __int128 best_num = 0;
    std::uint64_t best_den = 1;
    std::uint64_t w0 = 0;
    std::uint64_t s0 = 0;
    for (int t = 0; t <= 255; ++t) {
        w0 += h[static_cast<std::size_t>(t)];
        s0 += static_cast<std::uint64_t>(t) * h[static_cast<std::size_t>(t)];
        if (w0 == 0) continue;
        const std::uint64_t w1 = total - w0;
        unsigned __int128 num = 0;
        std::uint64_t den = 1;
        if (w1 != 0) {
            const std::uint64_t left = s0 * total;
            const std::uint64_t right = total_sum * w0;
            const std::uint64_t diff = left > right ? left - right : right - left;
            num = static_cast<unsigned __int128>(diff) * diff;
            den = w0 * w1;
        }
        if (best_t < 0) {
            best_t = t;
            best_num = num;
            best_den = den;
            continue;
        }
        const auto lhs = limb_product(num, best_den);
        const auto rhs = limb_product(best_num, den);
        bool greater = false;
        for (int k = 5; k >= 0; --k) {
            if (lhs[k] != rhs[k]) {
                greater = lhs[k] > rhs[k];
                break;
            }
        }
        if (greater) {
            best_t = t;
            best_num = num;
            best_den = den;
        }
    }
    return best_t;
}

// Reference labeling: BFS flood fill, seeding in raster order so ids
// match the library's first-pixel numbering.
std::vector<std::uint32_t> bfs_labels(const BinaryMask& mask, Connectivity conn) {
    const std::size_t w = mask.width;
    const std::size_t h = mask.height;
    std::vector<std::uint32_t> labels(w * h, 0);
    std::uint32_t next_id = 1;
    std::vector<std::size_t> queue;
    const bool eight = conn == Connectivity::Eight;

    for (std::size_t start = 0; start < w * h; ++start) {
        if (!mask.bits[start] || labels[start] != 0) continue;
        labels[start] = next_id;
        queue.assign(1, start);
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const std::size_t i = queue[qi];
            const std::size_t x = i % w;
            const std::size_t y = i / w;
            const auto visit = [&](std::size_t nx, std::size_t ny) {
                const std::size_t n = ny * w + nx;
                if (mask.bits[n] && labels[n] == 0) {
                    labels[n] = next_id;
                    queue.push_back(n);
                }
            };
            if (x > 0) visit(x - 1, y);
            if (x + 1 < w) visit(x + 1, y);
            if (y > 0) visit(x, y - 1);
            if (y + 1 < h) visit(x, y + 1);
            if (eight) {
                if (x > 0 && y > 0) visit(x - 1, y - 1);
                if (x + 1 < w && y > 0) visit(x + 1, y - 1);
                if (x > 0 && y + 1 < h) visit(x - 1, y + 1);
                if (x + 1 < w && y + 1 < h) visit(x + 1, y + 1);
            }
        }
        ++next_id;
    }
    return labels;
}

void stamp_disk(GrayImage& img, double cx, double cy, double r, std::uint8_t value) {
    const double r2 = r * r;
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            if (dx * dx + dy * dy <= r2) img.at(x, y) = value;
        }
    }
}

void stamp_rect(GrayImage& img, const Rect& r, std::uint8_t value) {
    for (std::size_t y = r.y; y < r.y + r.h; ++y)
        for (std::size_t x = r.x; x < r.x + r.w; ++x) img.at(x, y) = value;
}

} // namespace

TEST_CASE("otsu on a single-level histogram returns that level", "[particle][otsu]") {
    for (int level : {0, 1, 128, 254, 255}) {
        Histogram h{};
        h[static_cast<std::size_t>(level)] = 1234;
        CHECK(otsu_threshold(h) == level);
    }
}

TEST_CASE("otsu splits a clean two-level histogram at the lower level", "[particle][otsu]") {
    Histogram h{};
    h[0] = 5000;
    h[255] = 300;
    CHECK(otsu_threshold(h) == 0);

    Histogram h2{};
    h2[30] = 100;
    h2[200] = 50;
    CHECK(otsu_threshold(h2) == 30);
}

TEST_CASE("otsu ties resolve to the lowest threshold", "[particle][otsu]") {
    // Any t in [50, 199] separates the two spikes identically.
    Histogram h{};
    h[50] = 1;
    h[200] = 1;
    CHECK(otsu_threshold(h) == 50);
}

TEST_CASE("otsu rejects empty and oversized histograms", "[particle][otsu]") {
    Histogram empty{};
    CHECK_THROWS_AS(otsu_threshold(empty), EmptyHistogram);

    Histogram big{};
    big[10] = std::uint64_t{1} << 24;
    CHECK_THROWS_AS(otsu_threshold(big), Error);

    Histogram at_cap{};
    at_cap[10] = (std::uint64_t{1} << 24) - 1;
    CHECK(otsu_threshold(at_cap) == 10);
}

TEST_CASE("otsu matches a reference search on random histograms", "[particle][otsu]") {
    std::mt19937 rng(271828u);
    std::uniform_int_distribution<int> bins(2, 256);
    std::uniform_int_distribution<int> level(0, 255);
    std::uniform_int_distribution<std::uint64_t> bulk(0, 60000);
    std::uniform_int_distribution<std::uint64_t> tiny(0, 2);

    for (int trial = 0; trial < 300; ++trial) {
        Histogram h{};
        std::uint64_t total = 0;
        const int populated = bins(rng);
        // Tie-heavy tiny counts every third trial to stress the
        // lowest-t rule rather than the magnitude comparison.
        const bool sparse = trial % 3 == 0;
        for (int b = 0; b < populated; ++b) {
            const std::uint64_t count = sparse ? tiny(rng) : bulk(rng);
            h[static_cast<std::size_t>(level(rng))] += count;
            total += count;
        }
        if (total == 0) {
            h[level(rng)] = 1;
        }
        CHECK(otsu_threshold(h) == reference_otsu(h));
    }
}

TEST_CASE("fixed thresholds pass through and validate their range", "[particle][otsu]") {
    GrayImage img = make_gray_image(4, 1, 0);
    CHECK(resolve_threshold(img, ThresholdSpec::fixed(0)) == 0);
    CHECK(resolve_threshold(img, ThresholdSpec::fixed(255)) == 255);
    CHECK_THROWS_AS(resolve_threshold(img, ThresholdSpec::fixed(-1)), Error);
    CHECK_THROWS_AS(resolve_threshold(img, ThresholdSpec::fixed(256)), Error);
}

TEST_CASE("binarize keeps strictly brighter pixels only", "[particle][threshold]") {
    GrayImage img = make_gray_image(3, 1, 0);
    img.at(0, 0) = 4;
    img.at(1, 0) = 5;
    img.at(2, 0) = 6;

    const BinaryMask mask = binarize(img, ThresholdSpec::fixed(5));
    CHECK_FALSE(mask.at(0, 0));
    CHECK_FALSE(mask.at(1, 0)); // equal to the threshold stays background
    CHECK(mask.at(2, 0));

    GrayImage bright = make_gray_image(2, 2, 255);
    CHECK(binarize(bright, ThresholdSpec::fixed(255)).foreground_count() == 0);
}

TEST_CASE("binarize rejects an inconsistent image buffer", "[particle][threshold]") {
    GrayImage img = make_gray_image(3, 3, 0);
    img.pixels.pop_back();
    CHECK_THROWS_AS(binarize(img, ThresholdSpec::fixed(10)), Error);
}

TEST_CASE("labeling hand-built masks", "[particle][label]") {
    SECTION("empty and all-background masks") {
        const LabeledComponents none = label_components(make_mask(0, 0));
        CHECK(none.components.empty());
        CHECK(none.labels.empty());

        const LabeledComponents blank = label_components(make_mask(4, 3));
        CHECK(blank.components.empty());
        CHECK(blank.labels == std::vector<std::uint32_t>(12, 0));
    }

    SECTION("single pixel") {
        BinaryMask mask = make_mask(3, 3);
        mask.set(1, 1, true);
        const LabeledComponents got = label_components(mask, Connectivity::Four);
        REQUIRE(got.components.size() == 1);
        CHECK(got.components[0].id == 1);
        CHECK(got.components[0].pixel_count == 1);
        CHECK(got.components[0].bbox == Rect{1, 1, 1, 1});
        CHECK(got.components[0].max_row() == 1);
        CHECK(got.labels[4] == 1);
    }

    SECTION("diagonal pair splits under 4-connectivity and joins under 8") {
        BinaryMask mask = make_mask(2, 2);
        mask.set(0, 0, true);
        mask.set(1, 1, true);

        const LabeledComponents four = label_components(mask, Connectivity::Four);
        REQUIRE(four.components.size() == 2);
        CHECK(four.components[0].bbox == Rect{0, 0, 1, 1});
        CHECK(four.components[1].bbox == Rect{1, 1, 1, 1});
        CHECK(four.labels == std::vector<std::uint32_t>{1, 0, 0, 2});

        const LabeledComponents eight = label_components(mask, Connectivity::Eight);
        REQUIRE(eight.components.size() == 1);
        CHECK(eight.components[0].pixel_count == 2);
        CHECK(eight.components[0].bbox == Rect{0, 0, 2, 2});
        CHECK(eight.labels == std::vector<std::uint32_t>{1, 0, 0, 1});
    }

    SECTION("U shape merges two arms first seen as separate") {
        // X.X
        // X.X
        // XXX
        BinaryMask mask = make_mask(3, 3);
        for (std::size_t y = 0; y < 3; ++y) {
            mask.set(0, y, true);
            mask.set(2, y, true);
        }
        mask.set(1, 2, true);
        const LabeledComponents got = label_components(mask, Connectivity::Four);
        REQUIRE(got.components.size() == 1);
        CHECK(got.components[0].id == 1);
        CHECK(got.components[0].pixel_count == 7);
        CHECK(got.components[0].bbox == Rect{0, 0, 3, 3});
    }

    SECTION("ids follow raster order of each component's first pixel") {
        // .X..
        // ...X
        // X...
        BinaryMask mask = make_mask(4, 3);
        mask.set(1, 0, true);
        mask.set(3, 1, true);
        mask.set(0, 2, true);
        const LabeledComponents got = label_components(mask, Connectivity::Eight);
        REQUIRE(got.components.size() == 3);
        CHECK(got.labels[1] == 1);
        CHECK(got.labels[7] == 2);
        CHECK(got.labels[8] == 3);
    }

    SECTION("buffer that disagrees with the dimensions is rejected") {
        BinaryMask mask = make_mask(3, 3);
        mask.bits.pop_back();
        CHECK_THROWS_AS(label_components(mask), Error);
    }
}

TEST_CASE("labeling agrees with a flood-fill reference on random masks", "[particle][label]") {
    std::mt19937 rng(314159u);
    std::uniform_int_distribution<std::size_t> dim(1, 33);
    std::uniform_real_distribution<double> density(0.1, 0.9);
    std::bernoulli_distribution pick_eight(0.5);

    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t w = dim(rng);
        const std::size_t h = dim(rng);
        BinaryMask mask = make_mask(w, h);
        std::bernoulli_distribution cell(density(rng));
        for (std::size_t i = 0; i < w * h; ++i) mask.bits[i] = cell(rng) ? 1 : 0;

        const Connectivity conn = pick_eight(rng) ? Connectivity::Eight : Connectivity::Four;
        const LabeledComponents got = label_components(mask, conn);
        const std::vector<std::uint32_t> want = bfs_labels(mask, conn);
        REQUIRE(got.labels == want);

        // Recompute per-component geometry from the reference labels.
        std::uint32_t max_id = 0;
        for (std::uint32_t id : want) max_id = std::max(max_id, id);
        REQUIRE(got.components.size() == max_id);
        for (std::uint32_t id = 1; id <= max_id; ++id) {
            std::size_t count = 0;
            std::size_t x0 = w, y0 = h, x1 = 0, y1 = 0;
            for (std::size_t i = 0; i < w * h; ++i) {
                if (want[i] != id) continue;
                ++count;
                x0 = std::min(x0, i % w);
                x1 = std::max(x1, i % w);
                y0 = std::min(y0, i / w);
                y1 = std::max(y1, i / w);
            }
            const RawComponent& comp = got.components[id - 1];
            CHECK(comp.id == id);
            CHECK(comp.pixel_count == count);
            CHECK(comp.bbox == Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1});
        }
    }
}

TEST_CASE("scale calibration from a bar and from a direct factor", "[particle][scale]") {
    const ScaleCalibration bar = calibrate_bar(300.0, 600);
    CHECK(bar.source == ScaleCalibration::Source::Bar);
    CHECK(bar.microns_per_pixel == 0.5);
    CHECK(bar.bar_microns == 300.0);
    CHECK(bar.bar_pixels == 600);
    CHECK_FALSE(bar.exclusion.has_value());

    const ScaleCalibration direct = calibrate_direct(0.25, Rect{1, 2, 3, 4});
    CHECK(direct.source == ScaleCalibration::Source::Direct);
    CHECK(direct.microns_per_pixel == 0.25);
    REQUIRE(direct.exclusion.has_value());
    CHECK(*direct.exclusion == Rect{1, 2, 3, 4});

    CHECK_THROWS_AS(calibrate_bar(300.0, 0), ZeroPixelLength);
    CHECK_THROWS_AS(calibrate_bar(0.0, 600), NonPositiveLength);
    CHECK_THROWS_AS(calibrate_bar(-5.0, 600), NonPositiveLength);
    CHECK_THROWS_AS(calibrate_bar(std::nan(""), 600), NonPositiveLength);
    CHECK_THROWS_AS(calibrate_bar(std::numeric_limits<double>::infinity(), 600),
                    NonPositiveLength);
    CHECK_THROWS_AS(calibrate_direct(0.0), NonPositiveLength);
    CHECK_THROWS_AS(calibrate_direct(-1.0), NonPositiveLength);
    CHECK_THROWS_AS(calibrate_direct(std::nan("")), NonPositiveLength);
}

TEST_CASE("counting three disks keeps only those above the area cut", "[particle][count]") {
    GrayImage img = make_gray_image(256, 128, 10);
    stamp_disk(img, 40, 40, 2, 245);
    stamp_disk(img, 100, 60, 8, 245);
    stamp_disk(img, 180, 60, 10, 245);

    const ScaleCalibration cal = calibrate_direct(0.5);
    const ParticleAnalysisResult result = count_particles(img, cal);

    CHECK(result.count == 2);
    REQUIRE(result.components.size() == 3);
    CHECK(result.threshold_used == otsu_threshold(compute_histogram(img)));
    CHECK(result.width == 256);
    CHECK(result.height == 128);

    // Raster order by first pixel row: r=2 starts on row 38, r=10 on row 50,
    // r=8 on row 52.
    const Component& small = result.components[0];
    CHECK(small.passes_area == false);
    CHECK(small.counted() == false);
    CHECK(small.area_um2 == static_cast<double>(small.pixel_count) * 0.25);

    const Component& large = result.components[1];
    CHECK(large.counted());
    const Component& mid = result.components[2];
    CHECK(mid.counted());
    CHECK(mid.pixel_count < large.pixel_count);

    // A rasterized radius-10 disk should stay within 5% of pi*r^2.
    const double ideal_px = std::acos(-1.0) * 10.0 * 10.0;
    CHECK(std::abs(static_cast<double>(large.pixel_count) - ideal_px) <= 0.05 * ideal_px);
}

TEST_CASE("a component touching the bottom row is not counted", "[particle][count]") {
    GrayImage img = make_gray_image(256, 128, 10);
    stamp_disk(img, 100, 60, 8, 245);
    stamp_disk(img, 180, 60, 10, 245);
    stamp_disk(img, 60, 127, 8, 245); // clipped by the image edge

    const ParticleAnalysisResult result = count_particles(img, calibrate_direct(0.5));
    CHECK(result.count == 2);

    bool saw_bottom = false;
    for (const Component& comp : result.components) {
        if (comp.bbox.y + comp.bbox.h == 128) {
            saw_bottom = true;
            CHECK(comp.touches_bottom);
            CHECK(comp.passes_area);
            CHECK_FALSE(comp.counted());
        }
    }
    CHECK(saw_bottom);
}

TEST_CASE("exclusion region drops a blob in both modes", "[particle][count]") {
    GrayImage img = make_gray_image(256, 128, 10);
    stamp_disk(img, 100, 60, 8, 245);
    stamp_disk(img, 180, 60, 10, 245);
    stamp_rect(img, Rect{210, 5, 20, 20}, 245); // inside the exclusion region

    const Rect excl{200, 0, 56, 30};

    SECTION("zero-out removes the pixels before labeling") {
        const ParticleAnalysisResult result =
            count_particles(img, calibrate_direct(0.5, excl));
        CHECK(result.count == 2);
        CHECK(result.components.size() == 2);
        // The blob's pixels never reach the labeling pass.
        CHECK(result.labels[15 * 256 + 220] == 0);
    }

    SECTION("flag-only keeps the component but refuses to count it") {
        AnalysisOptions options;
        options.exclusion_mode = ExclusionMode::FlagOnly;
        const ParticleAnalysisResult result =
            count_particles(img, calibrate_direct(0.5, excl), options);
        CHECK(result.count == 2);
        REQUIRE(result.components.size() == 3);

        const std::uint32_t blob_id = result.labels[15 * 256 + 220];
        REQUIRE(blob_id != 0);
        const Component& blob = result.components[blob_id - 1];
        CHECK(blob.in_exclusion);
        CHECK(blob.passes_area);
        CHECK_FALSE(blob.counted());
    }
}

TEST_CASE("a full-width bottom strip moves the bottom row above it", "[particle][count]") {
    GrayImage img = make_gray_image(64, 64, 10);
    stamp_disk(img, 32, 48, 5, 245); // rows 43..53

    SECTION("strip docked at the bottom: the disk now touches row 53") {
        const Rect strip{0, 54, 64, 10};
        const ParticleAnalysisResult result =
            count_particles(img, calibrate_direct(1.0, strip));
        CHECK(result.count == 0);
        REQUIRE(result.components.size() == 1);
        CHECK(result.components[0].touches_bottom);
        CHECK(result.components[0].passes_area);
    }

    SECTION("partial-width strip: the bottom row stays at the image edge") {
        const Rect strip{0, 54, 32, 10};
        const ParticleAnalysisResult result =
            count_particles(img, calibrate_direct(1.0, strip));
        CHECK(result.count == 1);
        REQUIRE(result.components.size() == 1);
        CHECK_FALSE(result.components[0].touches_bottom);
    }

    SECTION("full-width strip away from the bottom only masks its own pixels") {
        const Rect strip{0, 50, 64, 10}; // overlaps disk rows 50..53
        const ParticleAnalysisResult result =
            count_particles(img, calibrate_direct(1.0, strip));
        REQUIRE(result.components.size() == 1);
        CHECK_FALSE(result.components[0].touches_bottom);
        CHECK(result.components[0].bbox.y + result.components[0].bbox.h == 50);
        CHECK(result.count == 1);
    }
}

TEST_CASE("the area cut is strict", "[particle][count]") {
    GrayImage img = make_gray_image(32, 32, 0);
    stamp_rect(img, Rect{5, 5, 5, 2}, 255); // 10 px = 10 um^2 at 1 um/px

    const ParticleAnalysisResult at_cut = count_particles(img, calibrate_direct(1.0));
    CHECK(at_cut.count == 0);
    REQUIRE(at_cut.components.size() == 1);
    CHECK(at_cut.components[0].area_um2 == 10.0);
    CHECK_FALSE(at_cut.components[0].passes_area);

    AnalysisOptions looser;
    looser.min_area_um2 = 9.9;
    CHECK(count_particles(img, calibrate_direct(1.0), looser).count == 1);
}

TEST_CASE("connectivity choice decides whether corner-touching blocks merge",
          "[particle][count]") {
    GrayImage img = make_gray_image(32, 32, 0);
    stamp_rect(img, Rect{4, 4, 3, 3}, 255);
    stamp_rect(img, Rect{7, 7, 3, 3}, 255);

    AnalysisOptions eight;
    eight.connectivity = Connectivity::Eight;
    const ParticleAnalysisResult merged = count_particles(img, calibrate_direct(1.0), eight);
    CHECK(merged.components.size() == 1);
    CHECK(merged.count == 1); // 18 um^2 passes

    AnalysisOptions four;
    four.connectivity = Connectivity::Four;
    const ParticleAnalysisResult split = count_particles(img, calibrate_direct(1.0), four);
    CHECK(split.components.size() == 2);
    CHECK(split.count == 0); // 9 um^2 each fails
}

TEST_CASE("a flat image yields no components", "[particle][count]") {
    const GrayImage img = make_gray_image(16, 16, 77);
    const ParticleAnalysisResult result = count_particles(img, calibrate_direct(1.0));
    CHECK(result.count == 0);
    CHECK(result.components.empty());
    CHECK(result.threshold_used == 77);
    CHECK(result.labels == std::vector<std::uint32_t>(256, 0));
}

TEST_CASE("count_particles validates its inputs", "[particle][count]") {
    GrayImage img = make_gray_image(16, 16, 0);

    ScaleCalibration bad_scale;
    bad_scale.microns_per_pixel = std::nan("");
    CHECK_THROWS_AS(count_particles(img, bad_scale), Error);

    CHECK_THROWS_AS(count_particles(img, calibrate_direct(1.0, Rect{10, 10, 10, 10})),
                    Error); // extends outside the 16x16 image

    AnalysisOptions bad_area;
    bad_area.min_area_um2 = -1.0;
    CHECK_THROWS_AS(count_particles(img, calibrate_direct(1.0), bad_area), Error);

    GrayImage broken = make_gray_image(4, 4, 0);
    broken.pixels.pop_back();
    CHECK_THROWS_AS(count_particles(broken, calibrate_direct(1.0)), Error);
}

TEST_CASE("overlay blends counted components green and rejected ones red",
          "[particle][overlay]") {
    GrayImage img = make_gray_image(256, 128, 10);
    stamp_disk(img, 180, 60, 10, 245);
    stamp_disk(img, 60, 127, 8, 245); // bottom-touching, so rejected

    const ParticleAnalysisResult result = count_particles(img, calibrate_direct(0.5));
    REQUIRE(result.count == 1);
    const RgbImage& overlay = result.overlay;
    REQUIRE(overlay.pixels.size() == 256 * 128 * 3);

    const std::uint8_t* background = overlay.at(0, 0);
    CHECK(background[0] == 10);
    CHECK(background[1] == 10);
    CHECK(background[2] == 10);

    const std::uint8_t* counted = overlay.at(180, 60);
    CHECK(counted[0] == 245 / 2);
    CHECK(counted[1] == (245 + 255) / 2);
    CHECK(counted[2] == 245 / 2);

    const std::uint8_t* rejected = overlay.at(60, 127);
    CHECK(rejected[0] == (245 + 255) / 2);
    CHECK(rejected[1] == 245 / 2);
    CHECK(rejected[2] == 245 / 2);
}

TEST_CASE("render_overlay rejects a result from a different image", "[particle][overlay]") {
    GrayImage img = make_gray_image(16, 16, 0);
    stamp_rect(img, Rect{2, 2, 6, 6}, 255);
    const ParticleAnalysisResult result = count_particles(img, calibrate_direct(1.0));

    const GrayImage other = make_gray_image(8, 8, 0);
    CHECK_THROWS_AS(render_overlay(other, result), DimensionMismatch);
}

TEST_CASE("PGM files round-trip exactly", "[particle][io]") {
    testutil::TempDir dir;
    GrayImage img = make_gray_image(7, 5, 0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(i * 7 + 3);

    const std::string path = dir.file("round.pgm");
    write_pgm(path, img);
    CHECK(read_pgm(path) == img);
    CHECK(read_gray_image(path) == img);
}

TEST_CASE("PGM parser handles comments and flexible whitespace", "[particle][io]") {
    testutil::TempDir dir;
    const std::string path = dir.file("commented.pgm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n# made by hand\n 3 2 # trailing note\n255\n";
        const char raster[6] = {0, 1, 2, 3, 4, 5};
        out.write(raster, 6);
    }
    const GrayImage img = read_pgm(path);
    CHECK(img.width == 3);
    CHECK(img.height == 2);
    CHECK(img.at(0, 0) == 0);
    CHECK(img.at(2, 1) == 5);
}

TEST_CASE("PGM parser rejects malformed files", "[particle][io]") {
    testutil::TempDir dir;
    const auto write_raw = [&dir](const std::string& name, const std::string& bytes) {
        const std::string path = dir.file(name);
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        return path;
    };

    CHECK_THROWS_AS(read_pgm(write_raw("ascii.pgm", "P2\n2 2\n255\n0 0 0 0\n")),
                    ImageFormatError);
    CHECK_THROWS_AS(read_pgm(write_raw("deep.pgm", std::string("P5\n2 2\n65535\n") +
                                                       std::string(8, '\0'))),
                    ImageFormatError);
    CHECK_THROWS_AS(read_pgm(write_raw("zeromax.pgm", std::string("P5\n2 2\n0\n") +
                                                          std::string(4, '\0'))),
                    ImageFormatError);
    CHECK_THROWS_AS(read_pgm(write_raw("flat.pgm", "P5\n0 2\n255\n")), ImageFormatError);
    CHECK_THROWS_AS(read_pgm(write_raw("alpha.pgm", "P5\ntwo 2\n255\n\0\0\0\0")),
                    ImageFormatError);
    CHECK_THROWS_AS(read_pgm(write_raw("short.pgm", std::string("P5\n4 4\n255\n") +
                                                        std::string(7, '\x20'))),
                    ImageFormatError);
    CHECK_THROWS_AS(read_pgm(dir.file("absent.pgm")), IoError);
}

TEST_CASE("grayscale PNG files round-trip exactly", "[particle][io]") {
    testutil::TempDir dir;
    GrayImage img = make_gray_image(9, 4, 0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(i * 13 + 1);

    const std::string path = dir.file("round.png");
    write_png_gray(path, img);
    CHECK(read_png_gray(path) == img);
    CHECK(read_gray_image(path) == img);
}

TEST_CASE("PNG reader accepts only 8-bit grayscale", "[particle][io]") {
    testutil::TempDir dir;
    RgbImage rgb;
    rgb.width = 4;
    rgb.height = 4;
    rgb.pixels.assign(4 * 4 * 3, 200);
    const std::string path = dir.file("color.png");
    write_png_rgb(path, rgb);
    CHECK_THROWS_AS(read_png_gray(path), ImageFormatError);
    CHECK_THROWS_AS(read_gray_image(path), ImageFormatError);
}

TEST_CASE("overlay PNG output carries the PNG signature", "[particle][io]") {
    testutil::TempDir dir;
    GrayImage img = make_gray_image(32, 32, 10);
    stamp_rect(img, Rect{4, 4, 8, 8}, 240);
    const ParticleAnalysisResult result = count_particles(img, calibrate_direct(1.0));

    const std::string path = dir.file("overlay.png");
    write_png_rgb(path, result.overlay);

    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    REQUIRE(in.gcount() == 8);
    CHECK(sig[0] == 0x89);
    CHECK(sig[1] == 'P');
    CHECK(sig[2] == 'N');
    CHECK(sig[3] == 'G');

    RgbImage bad;
    bad.width = 2;
    bad.height = 2;
    bad.pixels.assign(5, 0); // should be 12 bytes
    CHECK_THROWS_AS(write_png_rgb(dir.file("broken.png"), bad), Error);
}

TEST_CASE("unknown image formats are reported clearly", "[particle][io]") {
    testutil::TempDir dir;
    const std::string path = dir.file("opaque.bin");
    testutil::write_file(path, "GIF89a not really");
    CHECK_THROWS_AS(read_gray_image(path), ImageFormatError);
    CHECK_THROWS_AS(read_gray_image(dir.file("missing.png")), IoError);
}
