#include "evlab/render.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "evlab/dataset.hpp"
#include "evlab/errors.hpp"

namespace evlab {

std::string heatmap_csv(const ChannelMap& map) {
  std::string out;
  char buf[32];
  for (std::size_t c = 0; c < map.channels(); ++c) {
    out += map.channel_names[c];
    for (std::size_t t = 0; t < map.samples; ++t) {
      auto res = std::to_chars(buf, buf + sizeof buf, map.at(c, t));
      out += ',';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

ChannelMap parse_heatmap_csv(const std::string& text) {
  ChannelMap map;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    map.channel_names.push_back(cell);
    std::size_t n = 0;
    while (std::getline(row, cell, ',')) {
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        throw PersistenceError("heat map line " + std::to_string(lineno) + ": bad value '" + cell + "'");
      }
      map.values.push_back(v);
      ++n;
    }
    if (map.channel_names.size() == 1) map.samples = n;
    if (n != map.samples) throw PersistenceError("heat map line " + std::to_string(lineno) + ": ragged row");
  }
  return map;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw DimensionError("image buffer size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PersistenceError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw PersistenceError("short write to " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot read " + path.string());
  std::string magic;
  GrayImage img;
  int maxval = 0;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw PersistenceError(path.string() + ": not an 8-bit P5 image");
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw PersistenceError(path.string() + ": truncated pixel data");
  return img;
}

std::uint8_t symmetric_gray(double v, double max_abs) {
  if (!(max_abs > 0.0) || !std::isfinite(v)) return 128;
  const double g = 128.0 + 127.0 * std::clamp(v / max_abs, -1.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(g));
}

GrayImage heatmap_image(const ChannelMap& map) {
  GrayImage img{map.samples, map.channels(), std::vector<std::uint8_t>(map.values.size())};
  double m = 0.0;
  for (double v : map.values) m = std::max(m, std::abs(v));
  for (std::size_t i = 0; i < map.values.size(); ++i) img.pixels[i] = symmetric_gray(map.values[i], m);
  return img;
}

namespace {

double cell_coord(std::size_t i, std::size_t grid) {
  return -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(grid);
}

}  // namespace

std::pair<std::size_t, std::size_t> topomap_cell(double x, double y, std::size_t grid) {
  auto idx = [grid](double u) {
    const double f = (u + 1.0) * static_cast<double>(grid) / 2.0;
    return static_cast<std::size_t>(std::clamp(std::floor(f), 0.0, static_cast<double>(grid - 1)));
  };
  return {grid - 1 - idx(y), idx(x)};
}

Topomap topomap(std::span<const double> channel_values, std::span<const std::string> names, const Montage& montage,
                std::size_t grid) {
  if (channel_values.size() != names.size()) throw DimensionError("topomap values and names differ in length");
  if (names.empty()) throw UsageError("topomap needs at least one channel");
  std::vector<Electrode> pos;
  for (const auto& n : names) pos.push_back(montage.at(n));

  Topomap map{grid, std::vector<double>(grid * grid, std::numeric_limits<double>::quiet_NaN())};
  const std::size_t k = std::min<std::size_t>(4, pos.size());
  std::vector<std::pair<double, std::size_t>> d(pos.size());
  for (std::size_t row = 0; row < grid; ++row) {
    const double y = cell_coord(grid - 1 - row, grid);
    for (std::size_t col = 0; col < grid; ++col) {
      const double x = cell_coord(col, grid);
      if (x * x + y * y > 1.0) continue;
      for (std::size_t e = 0; e < pos.size(); ++e) {
        d[e] = {(pos[e].x - x) * (pos[e].x - x) + (pos[e].y - y) * (pos[e].y - y), e};
      }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
      double value = 0.0;
      if (d[0].first == 0.0) {
        value = channel_values[d[0].second];
      } else {
        double wsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const double w = 1.0 / d[j].first;  // squared distance: power 2
          wsum += w;
          value += w * channel_values[d[j].second];
        }
        value /= wsum;
      }
      map.values[row * grid + col] = value;
    }
  }
  return map;
}

std::vector<Topomap> joint_temporal_topomaps(const ChannelMap& map, const Montage& montage, double frame_ms,
                                             std::size_t grid) {
  if (!(frame_ms > 0.0)) throw UsageError("frame width must be positive");
  const double per_frame = frame_ms * kSampleRateHz / 1000.0;
  const auto frames = static_cast<std::size_t>(std::ceil(static_cast<double>(map.samples) / per_frame - 1e-9));
  std::vector<Topomap> out;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto lo = static_cast<std::size_t>(std::floor(static_cast<double>(f) * per_frame));
    const auto hi = std::min(map.samples, static_cast<std::size_t>(std::floor(static_cast<double>(f + 1) * per_frame)));
    std::vector<double> v(map.channels(), 0.0);
    for (std::size_t c = 0; c < map.channels(); ++c) {
      for (std::size_t t = lo; t < hi; ++t) v[c] += map.at(c, t);
      if (hi > lo) v[c] /= static_cast<double>(hi - lo);
    }
    out.push_back(topomap(v, map.channel_names, montage, grid));
  }
  return out;
}

std::vector<GrayImage> topomap_images(std::span<const Topomap> frames) {
  double m = 0.0;
  for (const auto& f : frames)
    for (double v : f.values)
      if (std::isfinite(v)) m = std::max(m, std::abs(v));
  std::vector<GrayImage> out;
  for (const auto& f : frames) {
    GrayImage img{f.grid, f.grid, std::vector<std::uint8_t>(f.values.size(), 0)};
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      if (std::isfinite(f.values[i])) img.pixels[i] = symmetric_gray(f.values[i], m);
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace evlab
