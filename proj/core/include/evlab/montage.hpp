#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evlab {

struct Electrode {
  std::string name;
  /// Azimuthal-equidistant projection; +x right ear, +y nose, |(x, y)| < 1.
  double x = 0.0;
  double y = 0.0;
};

/// Channel name -> 2-D scalp position on the unit disc.
class Montage {
 public:
  Montage() = default;
  explicit Montage(std::vector<Electrode> electrodes);

  /// Case-insensitive lookup.
  std::optional<Electrode> find(std::string_view name) const;
  /// Throws UsageError for unknown names.
  const Electrode& at(std::string_view name) const;
  bool covers(std::span<const std::string> names) const;
  const std::vector<Electrode>& electrodes() const { return electrodes_; }

  std::string to_json() const;
  static Montage from_json(const std::string& text);

 private:
  std::vector<Electrode> electrodes_;
};

/// 10-10 positions for the 60 scalp channels (plus FCZ), computed from ring
/// angles and midline inclinations with linear in-row interpolation.
Montage builtin_montage();
/// The shipped JSON asset when present, otherwise builtin_montage().
Montage default_montage();
Montage load_montage(const std::filesystem::path& path);
/// Where default_montage() looks for its asset.
std::filesystem::path montage_asset_path();

}  // namespace evlab
