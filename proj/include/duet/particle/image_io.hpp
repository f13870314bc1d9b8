#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "duet/error.hpp"
#include "duet/particle/image.hpp"

namespace duet {

struct ImageFormatError : Error {
    explicit ImageFormatError(const std::string& why) : Error(why) {}
};

namespace detail {

struct FileCloser {
    std::FILE* fp = nullptr;
    ~FileCloser() {
        if (fp) std::fclose(fp);
    }
};

// Next PGM header token, skipping whitespace and '#' comment lines.
inline std::string pgm_token(std::istream& in) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) continue;
        token.push_back(static_cast<char>(c));
        while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#')
            token.push_back(static_cast<char>(in.get()));
        return token;
    }
    return token;
}

inline std::size_t pgm_number(std::istream& in, const std::string& path, const char* field) {
    const std::string token = pgm_token(in);
    if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos)
        throw ImageFormatError(path + ": bad PGM " + std::string(field) + " \"" + token + "\"");
    return static_cast<std::size_t>(std::stoull(token));
}

} // namespace detail

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5')
        throw ImageFormatError(path + ": not a binary PGM (P5) file");

    GrayImage img;
    img.width = detail::pgm_number(in, path, "width");
    img.height = detail::pgm_number(in, path, "height");
    const std::size_t maxval = detail::pgm_number(in, path, "maxval");
    if (img.width < 1 || img.height < 1)
        throw ImageFormatError(path + ": zero PGM dimensions");
    if (maxval < 1 || maxval > 255)
        throw ImageFormatError(path + ": PGM maxval " + std::to_string(maxval) +
                               " is not 8-bit");
    in.get(); // single whitespace byte separating header from raster

    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
        throw ImageFormatError(path + ": truncated PGM raster");
    return img;
}

inline void write_pgm(const std::string& path, const GrayImage& image) {
    if (auto why = image.violation()) throw Error("invalid image: " + *why);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("short write to " + path);
}

inline GrayImage read_png_gray(const std::string& path) {
    detail::FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.fp) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialization failed");
    }

    GrayImage img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageFormatError(path + ": libpng failed to decode");
    }

    png_init_io(png, file.fp);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != 8 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageFormatError(path + ": only 8-bit grayscale PNG is supported (depth " +
                               std::to_string(depth) + ", color type " +
                               std::to_string(color) + ")");
    }

    img.width = width;
    img.height = height;
    img.pixels.resize(img.width * img.height);
    rows.resize(height);
    for (std::size_t y = 0; y < height; ++y) rows[y] = img.pixels.data() + y * img.width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

namespace detail {

inline void write_png(const std::string& path, std::size_t width, std::size_t height,
                      int color_type, std::size_t bytes_per_pixel,
                      const std::uint8_t* pixels) {
    FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.fp) throw IoError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialization failed");
    }

    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(pixels + y * width * bytes_per_pixel);

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": libpng failed to encode");
    }

    png_init_io(png, file.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace detail

inline void write_png_rgb(const std::string& path, const RgbImage& image) {
    if (image.width < 1 || image.height < 1 ||
        image.pixels.size() != image.width * image.height * 3)
        throw Error("invalid RGB image buffer");
    detail::write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 3,
                      image.pixels.data());
}

inline void write_png_gray(const std::string& path, const GrayImage& image) {
    if (auto why = image.violation()) throw Error("invalid image: " + *why);
    detail::write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 1,
                      image.pixels.data());
}

/// Reads an 8-bit grayscale image, dispatching on the magic bytes:
/// "P5" for PGM, the PNG signature otherwise.
inline GrayImage read_gray_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open " + path);
    char magic[2] = {0, 0};
    probe.read(magic, 2);
    probe.close();

    if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
    if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P')
        return read_png_gray(path);
    throw ImageFormatError(path + ": unrecognized image format (expected PGM P5 or PNG)");
}

} // namespace duet
