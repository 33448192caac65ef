// Copyright 2026 The ihcq Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IHCQ_PNG_HPP
#define IHCQ_PNG_HPP

/**
 * @file png.hpp
 *
 * @brief Minimal 8-bit RGB / grayscale PNG reading and writing on top of libpng.
 */

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "core.hpp"

namespace ihcq::png {

/**
 * Decoded 8-bit raster; `channels` is 1 (gray) or 3 (RGB).
 */
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;
};

/**
 * Reads any PNG and converts it to `channels` (1 or 3) 8-bit samples per pixel.
 */
inline Raster read(const std::filesystem::path& path, int channels) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        std::string msg = "cannot read PNG '" + path.string() + "': " + image.message;
        throw Error(ErrorKind::Io, msg);
    }
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Raster out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.channels = channels;
    out.data.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
        std::string msg = "cannot decode PNG '" + path.string() + "': " + image.message;
        png_image_free(&image);
        throw Error(ErrorKind::Io, msg);
    }
    return out;
}

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};

} // namespace detail

/**
 * Writes an 8-bit PNG with fast zlib settings. Output bytes depend only on the input raster.
 */
inline void write(const std::filesystem::path& path, int width, int height, int channels,
                  const std::vector<std::uint8_t>& data, int compression_level = 1) {
    if (channels != 1 && channels != 3) {
        throw Error(ErrorKind::InvalidArgument, "PNG writer supports 1 or 3 channels");
    }
    if (data.size() != static_cast<std::size_t>(width) * height * channels) {
        throw Error(ErrorKind::InvalidArgument, "PNG raster size mismatch");
    }
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) {
        throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::Io, "libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::Io, "libpng failed while writing '" + path.string() + "'");
    }
    png_init_io(png, fp.get());
    png_set_compression_level(png, compression_level);
    png_set_filter(png, 0, PNG_FILTER_SUB);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(data.data() + stride * y));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(fp.get()) != 0) {
        throw Error(ErrorKind::Io, "flush failed for '" + path.string() + "'");
    }
}

} // namespace ihcq::png

#endif
