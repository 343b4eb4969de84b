// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/spectrum.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rmies::io {

/// `wavenumber,absorbance` header, then one `%.17g,%.17g` row per point.
void save_spectrum_csv(const Spectrum& s, const std::filesystem::path& path);
/// ParseError on a missing header or malformed row.
Spectrum load_spectrum_csv(const std::filesystem::path& path);

/// Cube binary layout (little-endian):
///   "FTIRCUBE" | u32 version=1 | u32 width | u32 height | u32 bands
///   | bands x f64 grid | width*height*bands x f32 absorbance (pixel-major)
/// Absorbance is narrowed to f32 on save.
void save_cube(const SpectralCube& cube, const std::filesystem::path& path);
/// FormatError on bad magic, version, dimensions or truncation.
SpectralCube load_cube(const std::filesystem::path& path);

/// `index,class_id` rows after a header line.
void save_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path);
std::vector<int> load_labels_csv(const std::filesystem::path& path);

/// Bands x n dataset matrix wrapped as an n x 1 cube.
SpectralCube as_strip_cube(const GridPtr& grid, SpectraMatrix data);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace rmies::io
