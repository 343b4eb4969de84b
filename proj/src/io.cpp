// SPDX-License-Identifier: Apache-2.0
#include "rmies/io.hpp"

#include <array>
#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rmies::io {
namespace {

constexpr std::array<char, 8> kCubeMagic = {'F', 'T', 'I', 'R', 'C', 'U', 'B', 'E'};
constexpr std::uint32_t kCubeVersion = 1;

template <typename T>
void put_le(std::string& buf, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

template <typename T>
T get_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    bits = static_cast<U>((bits << 8) | static_cast<unsigned char>(p[i]));
  }
  return std::bit_cast<T>(bits);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& field, const std::string& context) {
  const std::string t = trim(field);
  if (t.empty()) throw ParseError(context + ": empty field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) throw ParseError(context + ": bad number '" + t + "'");
  return v;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void save_spectrum_csv(const Spectrum& s, const std::filesystem::path& path) {
  std::string text = "wavenumber,absorbance\n";
  char line[64];
  const Vector& x = s.grid().values();
  for (Index i = 0; i < s.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", x[i], s.absorbance()[i]);
    text += line;
  }
  write_text_file(path, text);
}

Spectrum load_spectrum_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != "wavenumber,absorbance") {
    throw ParseError(path.string() + ": missing 'wavenumber,absorbance' header");
  }
  std::vector<double> x, y;
  Index row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + " needs exactly two fields");
    }
    const std::string ctx = path.string() + ":" + std::to_string(row);
    x.push_back(parse_double(line.substr(0, comma), ctx));
    y.push_back(parse_double(line.substr(comma + 1), ctx));
  }
  auto grid = make_grid(WavenumberGrid(Eigen::Map<const Vector>(x.data(), static_cast<Index>(x.size()))));
  return Spectrum(grid, Eigen::Map<const Vector>(y.data(), static_cast<Index>(y.size())));
}

void save_cube(const SpectralCube& cube, const std::filesystem::path& path) {
  std::string buf(kCubeMagic.begin(), kCubeMagic.end());
  const Index bands = cube.bands();
  buf.reserve(buf.size() + 16 + 8 * static_cast<std::size_t>(bands) +
              4 * static_cast<std::size_t>(bands * cube.pixels()));
  put_le<std::uint32_t>(buf, kCubeVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(cube.width()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(cube.height()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(bands));
  for (Index b = 0; b < bands; ++b) put_le<double>(buf, cube.grid()[b]);
  const double* p = cube.data().data();
  const Index total = cube.data().size();
  for (Index i = 0; i < total; ++i) put_le<float>(buf, static_cast<float>(p[i]));
  write_text_file(path, buf);
}

SpectralCube load_cube(const std::filesystem::path& path) {
  const std::string buf = read_text_file(path);
  const std::string name = path.string();
  constexpr std::size_t header = 8 + 4 * 4;
  if (buf.size() < header || std::memcmp(buf.data(), kCubeMagic.data(), 8) != 0) {
    throw FormatError(name + ": not an FTIRCUBE file");
  }
  const char* p = buf.data() + 8;
  const auto version = get_le<std::uint32_t>(p);
  if (version != kCubeVersion) throw FormatError(name + ": unsupported cube version " + std::to_string(version));
  const auto width = get_le<std::uint32_t>(p + 4);
  const auto height = get_le<std::uint32_t>(p + 8);
  const auto bands = get_le<std::uint32_t>(p + 12);
  if (width == 0 || height == 0 || bands == 0) throw FormatError(name + ": zero cube dimension");
  const std::uint64_t values = std::uint64_t{width} * height * bands;
  const std::uint64_t expected = header + 8ull * bands + 4ull * values;
  if (buf.size() != expected) {
    throw FormatError(name + ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(buf.size()));
  }
  Vector grid(bands);
  const char* g = buf.data() + header;
  for (std::uint32_t b = 0; b < bands; ++b) grid[b] = get_le<double>(g + 8 * b);
  GridPtr gp;
  try {
    gp = make_grid(WavenumberGrid(std::move(grid)));
  } catch (const GridError& e) {
    throw FormatError(name + ": invalid grid (" + e.what() + ")");
  }
  SpectraMatrix data(bands, static_cast<Index>(std::uint64_t{width} * height));
  const char* d = g + 8ull * bands;
  double* out = data.data();
  for (std::uint64_t i = 0; i < values; ++i) out[i] = static_cast<double>(get_le<float>(d + 4 * i));
  return SpectralCube(width, height, std::move(gp), std::move(data));
}

void save_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path) {
  std::string text = "index,class_id\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    text += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  }
  write_text_file(path, text);
}

std::vector<int> load_labels_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != "index,class_id") {
    throw ParseError(path.string() + ": missing 'index,class_id' header");
  }
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path.string() + ": malformed label row");
    const std::string ctx = path.string();
    const auto index = static_cast<std::size_t>(parse_double(line.substr(0, comma), ctx));
    if (index != labels.size()) throw ParseError(path.string() + ": label indices must be consecutive");
    labels.push_back(static_cast<int>(parse_double(line.substr(comma + 1), ctx)));
  }
  return labels;
}

SpectralCube as_strip_cube(const GridPtr& grid, SpectraMatrix data) {
  const Index n = data.cols();
  return SpectralCube(n, 1, grid, std::move(data));
}

}  // namespace rmies::io
