#include "evlab/montage.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>

#include "json.hpp"

#include "evlab/dataset.hpp"
#include "evlab/errors.hpp"
#include "evlab/roc.hpp"

#ifndef EVLAB_MONTAGE_ASSET
#define EVLAB_MONTAGE_ASSET ""
#endif

namespace evlab {

Montage::Montage(std::vector<Electrode> electrodes) : electrodes_(std::move(electrodes)) {
  for (const auto& e : electrodes_) {
    if (!(std::hypot(e.x, e.y) < 1.0)) throw UsageError("electrode " + e.name + " lies outside the unit disc");
  }
}

std::optional<Electrode> Montage::find(std::string_view name) const {
  for (const auto& e : electrodes_)
    if (same_channel(e.name, name)) return e;
  return std::nullopt;
}

const Electrode& Montage::at(std::string_view name) const {
  for (const auto& e : electrodes_)
    if (same_channel(e.name, name)) return e;
  throw UsageError("montage has no channel " + std::string(name));
}

bool Montage::covers(std::span<const std::string> names) const {
  for (const auto& n : names)
    if (!find(n)) return false;
  return true;
}

std::string Montage::to_json() const {
  nlohmann::ordered_json j;
  j["projection"] = "azimuthal-equidistant";
  auto& arr = j["electrodes"] = nlohmann::ordered_json::array();
  for (const auto& e : electrodes_) arr.push_back({{"name", e.name}, {"x", e.x}, {"y", e.y}});
  return j.dump(1) + "\n";
}

Montage Montage::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    std::vector<Electrode> out;
    for (const auto& e : j.at("electrodes")) {
      out.push_back({e.at("name").get<std::string>(), e.at("x").get<double>(), e.at("y").get<double>()});
    }
    return Montage(std::move(out));
  } catch (const nlohmann::json::exception& ex) {
    throw PersistenceError(std::string("montage json: ") + ex.what());
  }
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Polar {
  double theta;  // inclination from the vertex, degrees
  double phi;    // azimuth from the nose, degrees, positive toward the left ear
};

Electrode project(const std::string& name, Polar p) {
  const double r = p.theta / 90.0 * 0.9;
  const double a = p.phi * kPi / 180.0;
  return {name, -r * std::sin(a), r * std::cos(a)};
}

struct Row {
  const char* prefix;
  const char* midline;
  Polar mid;
  Polar ring;  // left-hemisphere ring electrode of the row
};

// The FP and O rows sit on the ring; their digit-1 members are the ring itself.
const Row kRows[] = {
    {"FP", "FPZ", {90, 0}, {90, 18}},      {"AF", "AFZ", {67.5, 0}, {90, 36}},
    {"F", "FZ", {45, 0}, {90, 54}},        {"FC", "FCZ", {22.5, 0}, {90, 72}},
    {"FT", nullptr, {22.5, 0}, {90, 72}},  {"C", "CZ", {0, 0}, {90, 90}},
    {"T", nullptr, {0, 0}, {90, 90}},      {"CP", "CPZ", {22.5, 180}, {90, 108}},
    {"TP", nullptr, {22.5, 180}, {90, 108}}, {"P", "PZ", {45, 180}, {90, 126}},
    {"PO", "POZ", {67.5, 180}, {90, 144}}, {"O", "OZ", {90, 180}, {90, 162}},
};

double digit_fraction(int digit) {
  switch (digit) {
    case 1: case 2: return 0.25;
    case 3: case 4: return 0.5;
    case 5: case 6: return 0.75;
    default: return 1.0;
  }
}

Electrode place(const std::string& name) {
  std::string upper;
  for (char c : name) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  std::size_t split = 0;
  while (split < upper.size() && !std::isdigit(static_cast<unsigned char>(upper[split])) && upper[split] != 'Z') ++split;
  const std::string prefix = upper.substr(0, split);
  const std::string suffix = upper.substr(split);
  for (const auto& row : kRows) {
    if (prefix != row.prefix) continue;
    if (suffix == "Z") return project(name, row.mid);
    const int digit = std::atoi(suffix.c_str());
    if (digit <= 0) break;
    const bool ring_row = prefix == "FP" || prefix == "O";
    const Electrode m = project(name, row.mid);
    const Electrode r = project(name, row.ring);
    const double f = ring_row ? 1.0 : digit_fraction(digit);
    Electrode e{name, m.x + f * (r.x - m.x), m.y + f * (r.y - m.y)};
    if (digit % 2 == 0) e.x = -e.x;
    return e;
  }
  throw UsageError("no 10-10 position for channel " + name);
}

}  // namespace

Montage builtin_montage() {
  std::vector<Electrode> out;
  for (const auto& n : full60_names()) out.push_back(place(n));
  out.push_back(place("FCZ"));
  return Montage(std::move(out));
}

std::filesystem::path montage_asset_path() {
  if (const char* env = std::getenv("EVLAB_MONTAGE")) return env;
  return EVLAB_MONTAGE_ASSET;
}

Montage load_montage(const std::filesystem::path& path) { return Montage::from_json(read_text(path)); }

Montage default_montage() {
  const auto path = montage_asset_path();
  std::error_code ec;
  if (!path.empty() && std::filesystem::exists(path, ec)) return load_montage(path);
  return builtin_montage();
}

}  // namespace evlab
