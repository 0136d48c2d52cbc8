#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evlab {

inline constexpr std::size_t kSamplesPerTrial = 256;
inline constexpr double kSampleRateHz = 256.0;

enum class Group { HighRisk, LowRisk };
enum class Condition { S1Obj, S2Match, S2NoMatch, Error };
enum class Task { Match, Risk };

std::string_view to_string(Group g);
std::string_view to_string(Condition c);
std::string_view to_string(Task t);
Group parse_group(std::string_view s);
Condition parse_condition(std::string_view s);
/// Accepts "match" / "risk" (case-insensitive).
Task parse_task(std::string_view s);

/// One second of EEG: channels x 256 samples in microvolts, row-major.
struct Trial {
  std::string id;
  std::string subject_id;
  Group group = Group::LowRisk;
  Condition condition = Condition::S2Match;
  std::vector<std::string> channel_names;
  std::vector<double> data;
  double sample_rate = kSampleRateHz;

  std::size_t channels() const { return channel_names.size(); }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data).subspan(c * kSamplesPerTrial, kSamplesPerTrial);
  }
  double at(std::size_t c, std::size_t t) const { return data[c * kSamplesPerTrial + t]; }

  /// Throws IngestionError on a broken shape or duplicate channel names.
  void validate() const;
};

/// True for S2 match / no-match trials, the only conditions used for learning.
bool is_learnable(const Trial& trial);

/// MatchTask: S2Match -> 1, S2NoMatch -> 0. RiskTask: HighRisk -> 1, LowRisk -> 0.
/// Throws UsageError for S1 or error trials under MatchTask.
int label_trial(const Trial& trial, Task task);

/// Named channel subset.
struct ChannelSubset {
  std::string label;
  std::vector<std::string> names;
  /// When set, every channel outside `names` must be on the reference list.
  bool reject_unknown_extras = false;

  static ChannelSubset full60();
  static ChannelSubset mid12();
  static ChannelSubset mid8();
  static ChannelSubset custom(std::vector<std::string> names);
  /// "60", "12", "8", or a comma-separated list of channel names.
  static ChannelSubset parse(std::string_view spec);
};

/// The 60 non-reference scalp channels in acquisition order.
std::span<const std::string> full60_names();
/// Reference/ground rows dropped by Full60: X, Y, nd, FCZ.
std::vector<std::string> default_reference_channels();

/// Case-insensitive channel name comparison (the public files mix "nd" and "FP1").
bool same_channel(std::string_view a, std::string_view b);

/// Row subset in the order of the subset definition. Throws UsageError for
/// unknown names (or, for strict subsets, unexpected extra rows).
Trial select_channels(const Trial& trial, const ChannelSubset& subset,
                      std::span<const std::string> reference = {});

/// Parses one trial in the UCI text format. `source` prefixes error messages.
Trial parse_uci_trial(std::istream& in, const std::string& source = "<stream>");
/// Reads a plain or gzip-compressed trial file.
Trial read_uci_file(const std::filesystem::path& path);
/// Recursively reads every "*.rd*" file under `dir` in sorted path order.
std::vector<Trial> read_uci_directory(const std::filesystem::path& dir);

/// Binary trial store used between CLI stages ("EVLD" v1, little-endian).
void save_trials(const std::filesystem::path& path, std::span<const Trial> trials);
std::vector<Trial> load_trials(const std::filesystem::path& path);

std::vector<std::string> unique_subjects(std::span<const Trial> trials);

}  // namespace evlab
