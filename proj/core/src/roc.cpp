#include "evlab/roc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "evlab/errors.hpp"
#include "json.hpp"

namespace evlab {
namespace {

std::pair<std::size_t, std::size_t> class_counts(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("roc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                         " labels");
  }
  std::size_t pos = 0, neg = 0;
  for (int y : labels) {
    if (y == 1) ++pos;
    else if (y == 0) ++neg;
    else throw UsageError("roc: labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw UsageError("roc: both classes must be present");
  return {pos, neg};
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = class_counts(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) ++tp;
      else ++fp;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  // Exact endpoint regardless of rounding in the divisions above.
  curve.points.back().fpr = 1.0;
  curve.points.back().tpr = 1.0;

  // Integrate in counts to keep the area exact up to one final division.
  double area2 = 0.0;
  std::size_t prev_tp = 0, prev_fp = 0;
  tp = fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) ++tp;
      else ++fp;
      ++i;
    }
    area2 += static_cast<double>((fp - prev_fp) * (tp + prev_tp));
    prev_tp = tp;
    prev_fp = fp;
  }
  curve.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

double auc_oracle(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = class_counts(scores, labels);
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw DimensionError("confusion_at: score/label length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i] == 1) (predicted ? c.tp : c.fn)++;
    else (predicted ? c.fp : c.tn)++;
  }
  return c;
}

std::string ResultTable::to_csv() const {
  std::ostringstream os;
  os << "experiment,ft_0.25,ft_0.50,ft_0.75\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ",%.3f,%.3f,%.3f\n", r.auc[0], r.auc[1], r.auc[2]);
    os << r.experiment << buf;
  }
  return os.str();
}

std::string ResultTable::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    j.push_back({{"experiment", r.experiment}, {"ft_0.25", r.auc[0]}, {"ft_0.50", r.auc[1]}, {"ft_0.75", r.auc[2]}});
  }
  return j.dump(2) + "\n";
}

ResultTable ResultTable::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  ResultTable table;
  if (!std::getline(is, line) || line != "experiment,ft_0.25,ft_0.50,ft_0.75") {
    throw PersistenceError("result table: unexpected header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ResultRow row;
    const auto c3 = line.rfind(',');
    const auto c2 = line.rfind(',', c3 - 1);
    const auto c1 = line.rfind(',', c2 - 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos) {
      throw PersistenceError("result table: malformed row '" + line + "'");
    }
    row.experiment = line.substr(0, c1);
    row.auc = {std::stod(line.substr(c1 + 1, c2 - c1 - 1)), std::stod(line.substr(c2 + 1, c3 - c2 - 1)),
               std::stod(line.substr(c3 + 1))};
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PersistenceError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw PersistenceError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PersistenceError("cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string roc_points_csv(const RocCurve& curve) {
  std::ostringstream os;
  os << "fpr,tpr,threshold\n";
  char buf[128];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.threshold);
    os << buf;
  }
  return os.str();
}

}  // namespace evlab
