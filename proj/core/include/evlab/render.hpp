#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "evlab/montage.hpp"

namespace evlab {

/// Channel-major values with channel names, e.g. an aggregated attribution.
struct ChannelMap {
  std::vector<std::string> channel_names;
  std::size_t samples = 0;
  std::vector<double> values;

  std::size_t channels() const { return channel_names.size(); }
  double at(std::size_t c, std::size_t t) const { return values[c * samples + t]; }
};

/// One row per channel: name followed by its samples.
std::string heatmap_csv(const ChannelMap& map);
ChannelMap parse_heatmap_csv(const std::string& text);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary P5, maxval 255.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// 128 + 127·v/max|v|; an all-zero input maps to uniform 128.
std::uint8_t symmetric_gray(double v, double max_abs);

/// Rows are channels, columns samples.
GrayImage heatmap_image(const ChannelMap& map);

struct Topomap {
  std::size_t grid = 64;
  /// Row-major grid×grid, +y up (row 0 is the front of the head); NaN off the disc.
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * grid + col]; }
};

/// Inverse-distance weighting (power 2) over the 4 nearest electrodes,
/// masked outside the unit disc. Throws UsageError for unknown channels.
Topomap topomap(std::span<const double> channel_values, std::span<const std::string> names, const Montage& montage,
                std::size_t grid = 64);

/// Window means of `frame_ms` width, each interpolated onto the disc.
std::vector<Topomap> joint_temporal_topomaps(const ChannelMap& map, const Montage& montage, double frame_ms = 100.0,
                                             std::size_t grid = 64);

/// Symmetric gray scale shared by all frames; 0 outside the disc.
std::vector<GrayImage> topomap_images(std::span<const Topomap> frames);

/// Grid cell whose centre lies nearest to (x, y).
std::pair<std::size_t, std::size_t> topomap_cell(double x, double y, std::size_t grid);

}  // namespace evlab
