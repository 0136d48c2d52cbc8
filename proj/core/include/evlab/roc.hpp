#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace evlab {

struct RocPoint {
  double fpr;
  double tpr;
  /// Scores >= threshold are predicted positive at this point (+inf at the origin).
  double threshold;
};

/// Points from (0,0) to (1,1), one per distinct score, plus trapezoidal area.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Labels are 0/1; both classes must be present (UsageError otherwise).
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// P(score_pos > score_neg) + 0.5 P(tie), by enumerating all pairs.
double auc_oracle(std::span<const double> scores, std::span<const int> labels);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Predicts positive iff score > threshold.
Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold);

struct ResultRow {
  std::string experiment;
  std::array<double, 3> auc{};  // FT 0.25, 0.5, 0.75
};

struct ResultTable {
  std::vector<ResultRow> rows;

  /// Header "experiment,ft_0.25,ft_0.50,ft_0.75", AUCs with three decimals.
  std::string to_csv() const;
  std::string to_json() const;
  static ResultTable from_csv(const std::string& text);
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// "fpr,tpr,threshold" rows for external plotting.
std::string roc_points_csv(const RocCurve& curve);

}  // namespace evlab
