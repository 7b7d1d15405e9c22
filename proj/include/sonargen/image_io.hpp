#ifndef SONARGEN_IMAGE_IO_HPP
#define SONARGEN_IMAGE_IO_HPP

#include "sonargen/mission.hpp"

#include <filesystem>
#include <string>

namespace sonargen {

/// 16-bit grayscale PNG; intensities in [0, 1] map to 0..65535.
void write_png16(const std::filesystem::path& path, const Image& image);
Image read_png16(const std::filesystem::path& path);
std::string encode_png16(const Image& image);

/// 8-bit grayscale PNG holding label codes.
void write_png8(const std::filesystem::path& path, const LabelGrid& labels);
LabelGrid read_png8(const std::filesystem::path& path);

/// Rounds intensities to the 16-bit grid so that PNG storage is lossless.
void quantize16(Image& image);

/// Writes a file atomically (temporary + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace sonargen

#endif  // SONARGEN_IMAGE_IO_HPP
