#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evlab/dataset.hpp"

namespace evlab {

enum class SynthStyle {
  /// Class 1 = S2 match trials carrying an evoked burst on the planted channels.
  MatchStyle,
  /// Class 1 = high-risk subjects carrying a sustained oscillation on the planted channels.
  RiskStyle,
};

std::string_view to_string(SynthStyle s);
SynthStyle parse_synth_style(std::string_view s);

/// Desk-scale EEG generator settings. Amplitudes in microvolts, times in ms.
struct SynthSpec {
  std::size_t n_subjects = 24;
  std::size_t trials_per_subject = 120;
  /// 60, 12 or 8 select Full60 / Mid12 / Mid8; other counts take a prefix of Full60.
  std::size_t channels = 60;
  /// Explicit montage; overrides `channels` when non-empty.
  std::vector<std::string> channel_names;
  std::vector<std::string> planted_channels = {"PZ", "P3", "P4", "OZ"};
  double erp_latency_ms = 300.0;
  /// Standard deviation of the per-subject latency shift.
  double latency_jitter_ms = 10.0;
  double amplitude_uv = 6.0;
  /// Relative standard deviation of the per-subject amplitude (clamped at 0).
  double subject_amplitude_spread = 0.3;
  double burst_hz = 8.0;
  double burst_sigma_ms = 40.0;
  double risk_band_hz = 10.0;
  double ar_coeff = 0.9;
  double noise_scale_uv = 2.0;
  SynthStyle style = SynthStyle::MatchStyle;

  std::vector<std::string> resolved_channels() const;
  /// Throws UsageError on an invalid spec.
  void validate() const;
};

/// Generates n_subjects * trials_per_subject trials. Subjects alternate
/// high/low risk; each subject has exactly half S2 match and half S2 no-match
/// trials. Per-subject amplitude and latency are drawn once per subject.
std::vector<Trial> synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace evlab
