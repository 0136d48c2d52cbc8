#include "evlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "evlab/errors.hpp"
#include "evlab/rng.hpp"

namespace evlab {

std::string_view to_string(SynthStyle s) { return s == SynthStyle::MatchStyle ? "match" : "risk"; }

SynthStyle parse_synth_style(std::string_view s) {
  if (s == "match" || s == "MatchStyle") return SynthStyle::MatchStyle;
  if (s == "risk" || s == "RiskStyle") return SynthStyle::RiskStyle;
  throw UsageError("unknown synthetic style '" + std::string(s) + "' (expected match|risk)");
}

std::vector<std::string> SynthSpec::resolved_channels() const {
  if (!channel_names.empty()) return channel_names;
  if (channels == 60) return ChannelSubset::full60().names;
  if (channels == 12) return ChannelSubset::mid12().names;
  if (channels == 8) return ChannelSubset::mid8().names;
  auto all = full60_names();
  if (channels == 0 || channels > all.size()) {
    throw UsageError("synthetic channel count must be in [1, 60], got " + std::to_string(channels));
  }
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(channels)};
}

void SynthSpec::validate() const {
  if (n_subjects == 0) throw UsageError("synth: n_subjects must be positive");
  if (trials_per_subject == 0 || trials_per_subject % 2 != 0) {
    throw UsageError("synth: trials_per_subject must be a positive even number");
  }
  const auto names = resolved_channels();
  for (const auto& p : planted_channels) {
    if (std::none_of(names.begin(), names.end(), [&](const auto& n) { return same_channel(n, p); })) {
      throw UsageError("synth: planted channel " + p + " is not in the montage");
    }
  }
  if (!(ar_coeff > -1.0 && ar_coeff < 1.0)) throw UsageError("synth: ar_coeff must lie in (-1, 1)");
  if (noise_scale_uv < 0.0 || amplitude_uv < 0.0 || burst_sigma_ms <= 0.0) {
    throw UsageError("synth: amplitudes, noise scale and burst width must be non-negative");
  }
}

std::vector<Trial> synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto names = spec.resolved_channels();
  const std::size_t nch = names.size();
  std::vector<bool> planted(nch, false);
  for (std::size_t c = 0; c < nch; ++c) {
    planted[c] = std::any_of(spec.planted_channels.begin(), spec.planted_channels.end(),
                             [&](const auto& p) { return same_channel(p, names[c]); });
  }

  const double two_pi = 2.0 * std::numbers::pi;
  const double sigma_s = spec.burst_sigma_ms / 1000.0;
  const double stationary = spec.noise_scale_uv / std::sqrt(1.0 - spec.ar_coeff * spec.ar_coeff);

  std::vector<Trial> trials;
  trials.reserve(spec.n_subjects * spec.trials_per_subject);
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    Rng rng = Rng(seed).fork(s + 1);
    char sid[32];
    std::snprintf(sid, sizeof sid, "syn%03zu", s);
    const Group group = (s % 2 == 0) ? Group::HighRisk : Group::LowRisk;
    const double amp = spec.amplitude_uv * std::max(0.0, 1.0 + spec.subject_amplitude_spread * rng.normal());
    const double latency_s = (spec.erp_latency_ms + spec.latency_jitter_ms * rng.normal()) / 1000.0;

    for (std::size_t k = 0; k < spec.trials_per_subject; ++k) {
      Trial t;
      char tid[48];
      std::snprintf(tid, sizeof tid, "%s/%03zu", sid, k);
      t.id = tid;
      t.subject_id = sid;
      t.group = group;
      t.condition = (k < spec.trials_per_subject / 2) ? Condition::S2Match : Condition::S2NoMatch;
      t.channel_names = names;
      t.data.resize(nch * kSamplesPerTrial);

      const bool carries_effect = spec.style == SynthStyle::MatchStyle ? t.condition == Condition::S2Match
                                                                       : group == Group::HighRisk;
      const double phase = two_pi * rng.uniform();
      for (std::size_t c = 0; c < nch; ++c) {
        double x = stationary * rng.normal();
        for (std::size_t i = 0; i < kSamplesPerTrial; ++i) {
          if (i > 0) x = spec.ar_coeff * x + spec.noise_scale_uv * rng.normal();
          double v = x;
          if (carries_effect && planted[c]) {
            const double ts = static_cast<double>(i) / kSampleRateHz;
            if (spec.style == SynthStyle::MatchStyle) {
              const double d = ts - latency_s;
              v += amp * std::exp(-d * d / (2.0 * sigma_s * sigma_s)) * std::cos(two_pi * spec.burst_hz * d);
            } else {
              v += amp * std::sin(two_pi * spec.risk_band_hz * ts + phase);
            }
          }
          t.data[c * kSamplesPerTrial + i] = v;
        }
      }
      trials.push_back(std::move(t));
    }
  }
  return trials;
}

}  // namespace evlab
