#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <map>
#include <memory>
#include <sstream>

#include "evlab/dataset.hpp"
#include "evlab/errors.hpp"

namespace evlab {
namespace {

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw IngestionError(source + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

bool contains(const std::string& hay, std::string_view needle) {
  return hay.find(needle) != std::string::npos;
}

std::string lower_copy(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Trial parse_uci_trial(std::istream& in, const std::string& source) {
  Trial trial;
  bool have_condition = false;
  std::size_t declared_channels = 0;
  std::string trial_number;
  std::map<std::string, std::size_t> row_of;
  std::vector<std::vector<double>> rows;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    if (line[0] == '#') {
      const auto body = line.substr(1);
      const auto toks = split_ws(body);
      if (toks.empty()) continue;
      const auto low = lower_copy(body);
      if (trial.subject_id.empty() && contains(toks[0], ".rd")) {
        trial.subject_id = toks[0].substr(0, toks[0].find(".rd"));
        if (trial.subject_id.size() < 4) fail(source, lineno, "subject id too short: " + toks[0]);
        const char g = static_cast<char>(std::tolower(static_cast<unsigned char>(trial.subject_id[3])));
        if (g == 'a') {
          trial.group = Group::HighRisk;
        } else if (g == 'c') {
          trial.group = Group::LowRisk;
        } else {
          fail(source, lineno, "subject id " + trial.subject_id + " is neither co?a (high risk) nor co?c (low risk)");
        }
      } else if (contains(low, "s1 obj") || contains(low, "s2 match") || contains(low, "s2 nomatch")) {
        if (contains(low, "err")) {
          trial.condition = Condition::Error;
        } else if (contains(low, "s1 obj")) {
          trial.condition = Condition::S1Obj;
        } else if (contains(low, "s2 nomatch")) {
          trial.condition = Condition::S2NoMatch;
        } else {
          trial.condition = Condition::S2Match;
        }
        have_condition = true;
        const auto pos = low.find("trial");
        if (pos != std::string::npos) {
          auto rest = split_ws(body.substr(pos + 5));
          if (!rest.empty()) trial_number = rest[0];
        }
      } else if (toks.size() >= 4 && contains(low, "chans")) {
        for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
          if (lower_copy(toks[i + 1]).rfind("chans", 0) == 0) {
            declared_channels = static_cast<std::size_t>(std::strtoul(toks[i].c_str(), nullptr, 10));
          }
        }
      }
      continue;
    }

    const auto toks = split_ws(line);
    if (toks.size() != 4) fail(source, lineno, "expected 4 columns, got " + std::to_string(toks.size()));
    std::size_t sample = 0;
    {
      const auto& s = toks[2];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), sample);
      if (ec != std::errc() || p != s.data() + s.size()) fail(source, lineno, "bad sample index '" + s + "'");
    }
    char* end = nullptr;
    const double value = std::strtod(toks[3].c_str(), &end);
    if (end == toks[3].c_str() || *end != '\0') fail(source, lineno, "bad value '" + toks[3] + "'");
    if (trial_number.empty()) trial_number = toks[0];

    auto [it, inserted] = row_of.try_emplace(toks[1], rows.size());
    if (inserted) {
      rows.emplace_back();
      trial.channel_names.push_back(toks[1]);
    }
    auto& row = rows[it->second];
    if (sample != row.size()) {
      fail(source, lineno, "channel " + toks[1] + ": expected sample " + std::to_string(row.size()) +
                               ", got " + std::to_string(sample));
    }
    if (row.size() >= kSamplesPerTrial) {
      fail(source, lineno, "channel " + toks[1] + " has more than " + std::to_string(kSamplesPerTrial) + " samples");
    }
    row.push_back(value);
  }

  if (trial.subject_id.empty()) fail(source, lineno, "missing '# <subject>.rd' header");
  if (!have_condition) fail(source, lineno, "missing stimulus condition header");
  if (rows.empty()) fail(source, lineno, "no data rows");
  if (declared_channels != 0 && rows.size() != declared_channels) {
    fail(source, lineno, "header declares " + std::to_string(declared_channels) + " channels, found " +
                             std::to_string(rows.size()));
  }
  for (std::size_t c = 0; c < rows.size(); ++c) {
    if (rows[c].size() != kSamplesPerTrial) {
      fail(source, lineno, "channel " + trial.channel_names[c] + " has " + std::to_string(rows[c].size()) +
                               " samples, expected " + std::to_string(kSamplesPerTrial));
    }
  }
  trial.id = trial.subject_id + "/" + (trial_number.empty() ? std::string("0") : trial_number);
  trial.data.reserve(rows.size() * kSamplesPerTrial);
  for (const auto& r : rows) trial.data.insert(trial.data.end(), r.begin(), r.end());
  trial.validate();
  return trial;
}

Trial read_uci_file(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  std::unique_ptr<gzFile_s, int (*)(gzFile)> gz(gzopen(path.string().c_str(), "rb"), gzclose);
  if (!gz) throw IngestionError(path.string() + ": cannot open");
  std::string text;
  char buf[1 << 16];
  int n;
  while ((n = gzread(gz.get(), buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
  if (n < 0) throw IngestionError(path.string() + ": decompression failed");
  std::istringstream is(text);
  return parse_uci_trial(is, path.string());
}

std::vector<Trial> read_uci_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IngestionError(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename().string().find(".rd") != std::string::npos) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Trial> trials;
  trials.reserve(files.size());
  for (const auto& f : files) trials.push_back(read_uci_file(f));
  return trials;
}

}  // namespace evlab
