#include "evlab/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "evlab/errors.hpp"

namespace evlab {

std::string_view to_string(Group g) {
  return g == Group::HighRisk ? "HighRisk" : "LowRisk";
}

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::S1Obj: return "S1Obj";
    case Condition::S2Match: return "S2Match";
    case Condition::S2NoMatch: return "S2NoMatch";
    case Condition::Error: return "Error";
  }
  return "?";
}

std::string_view to_string(Task t) { return t == Task::Match ? "match" : "risk"; }

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

Group parse_group(std::string_view s) {
  const auto l = lower(s);
  if (l == "highrisk") return Group::HighRisk;
  if (l == "lowrisk") return Group::LowRisk;
  throw UsageError("unknown group '" + std::string(s) + "'");
}

Condition parse_condition(std::string_view s) {
  const auto l = lower(s);
  if (l == "s1obj") return Condition::S1Obj;
  if (l == "s2match") return Condition::S2Match;
  if (l == "s2nomatch") return Condition::S2NoMatch;
  if (l == "error") return Condition::Error;
  throw UsageError("unknown condition '" + std::string(s) + "'");
}

Task parse_task(std::string_view s) {
  const auto l = lower(s);
  if (l == "match") return Task::Match;
  if (l == "risk") return Task::Risk;
  throw UsageError("unknown task '" + std::string(s) + "' (expected match|risk)");
}

void Trial::validate() const {
  if (channel_names.empty()) throw IngestionError("trial " + id + ": no channels");
  if (data.size() != channel_names.size() * kSamplesPerTrial) {
    throw IngestionError("trial " + id + ": expected " + std::to_string(channel_names.size()) + "x" +
                         std::to_string(kSamplesPerTrial) + " samples, got " + std::to_string(data.size()));
  }
  std::set<std::string> seen;
  for (const auto& name : channel_names) {
    if (!seen.insert(lower(name)).second) {
      throw IngestionError("trial " + id + ": duplicate channel " + name);
    }
  }
}

bool is_learnable(const Trial& trial) {
  return trial.condition == Condition::S2Match || trial.condition == Condition::S2NoMatch;
}

int label_trial(const Trial& trial, Task task) {
  if (task == Task::Risk) return trial.group == Group::HighRisk ? 1 : 0;
  switch (trial.condition) {
    case Condition::S2Match: return 1;
    case Condition::S2NoMatch: return 0;
    default:
      throw UsageError("trial " + trial.id + " (" + std::string(to_string(trial.condition)) +
                       ") has no match/no-match label");
  }
}

namespace {

const std::vector<std::string> kFull60 = {
    "FP1", "FP2", "F7",  "F8",  "AF1", "AF2", "FZ",  "F4",  "F3",  "FC6",
    "FC5", "FC2", "FC1", "T8",  "T7",  "CZ",  "C3",  "C4",  "CP5", "CP6",
    "CP1", "CP2", "P3",  "P4",  "PZ",  "P8",  "P7",  "PO2", "PO1", "O2",
    "O1",  "AF7", "AF8", "F5",  "F6",  "FT7", "FT8", "FPZ", "FC4", "FC3",
    "C6",  "C5",  "F2",  "F1",  "TP8", "TP7", "AFZ", "CP3", "CP4", "P5",
    "P6",  "C1",  "C2",  "PO7", "PO8", "POZ", "OZ",  "P2",  "P1",  "CPZ"};

const std::vector<std::string> kMid8 = {"FZ", "CZ", "PZ", "OZ", "C3", "C4", "P3", "P4"};

}  // namespace

std::span<const std::string> full60_names() { return kFull60; }

std::vector<std::string> default_reference_channels() { return {"X", "Y", "nd", "FCZ"}; }

bool same_channel(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

ChannelSubset ChannelSubset::full60() { return {"Full60", kFull60, true}; }
ChannelSubset ChannelSubset::mid8() { return {"Mid8", kMid8, false}; }
ChannelSubset ChannelSubset::mid12() {
  auto names = kMid8;
  for (const char* n : {"F3", "F4", "O1", "O2"}) names.emplace_back(n);
  return {"Mid12", std::move(names), false};
}
ChannelSubset ChannelSubset::custom(std::vector<std::string> names) {
  if (names.empty()) throw UsageError("custom channel subset is empty");
  return {"custom", std::move(names), false};
}

ChannelSubset ChannelSubset::parse(std::string_view spec) {
  if (spec == "60") return full60();
  if (spec == "12") return mid12();
  if (spec == "8") return mid8();
  std::vector<std::string> names;
  std::string item;
  std::istringstream is{std::string(spec)};
  while (std::getline(is, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }
  return custom(std::move(names));
}

Trial select_channels(const Trial& trial, const ChannelSubset& subset,
                      std::span<const std::string> reference) {
  std::vector<std::string> ref_storage;
  if (reference.empty()) {
    ref_storage = default_reference_channels();
    reference = ref_storage;
  }
  auto find_row = [&](const std::string& name) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < trial.channel_names.size(); ++i) {
      if (same_channel(trial.channel_names[i], name)) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  };

  if (subset.reject_unknown_extras) {
    for (const auto& name : trial.channel_names) {
      const bool wanted = std::any_of(subset.names.begin(), subset.names.end(),
                                      [&](const auto& n) { return same_channel(n, name); });
      const bool is_ref = std::any_of(reference.begin(), reference.end(),
                                      [&](const auto& n) { return same_channel(n, name); });
      if (!wanted && !is_ref) {
        throw UsageError("trial " + trial.id + ": channel " + name + " is neither in " + subset.label +
                         " nor on the reference list");
      }
    }
  }

  Trial out;
  out.id = trial.id;
  out.subject_id = trial.subject_id;
  out.group = trial.group;
  out.condition = trial.condition;
  out.sample_rate = trial.sample_rate;
  out.data.reserve(subset.names.size() * kSamplesPerTrial);
  for (const auto& name : subset.names) {
    const auto row = find_row(name);
    if (row < 0) throw UsageError("trial " + trial.id + ": unknown channel " + name);
    out.channel_names.push_back(trial.channel_names[static_cast<std::size_t>(row)]);
    auto src = trial.channel(static_cast<std::size_t>(row));
    out.data.insert(out.data.end(), src.begin(), src.end());
  }
  return out;
}

std::vector<std::string> unique_subjects(std::span<const Trial> trials) {
  std::set<std::string> s;
  for (const auto& t : trials) s.insert(t.subject_id);
  return {s.begin(), s.end()};
}

// --- binary trial store -----------------------------------------------------

namespace {

constexpr char kTrialMagic[4] = {'E', 'V', 'L', 'D'};
constexpr std::uint32_t kTrialVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
}

template <typename T>
T get(std::istream& is, const std::string& field) {
  std::array<char, sizeof(T)> bytes;
  if (!is.read(bytes.data(), sizeof(T))) throw PersistenceError("trial store truncated at " + field);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& field) {
  const auto n = get<std::uint32_t>(is, field);
  if (n > (1u << 20)) throw PersistenceError("trial store: implausible length for " + field);
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw PersistenceError("trial store truncated at " + field);
  return s;
}

}  // namespace

void save_trials(const std::filesystem::path& path, std::span<const Trial> trials) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PersistenceError("cannot open " + path.string() + " for writing");
  os.write(kTrialMagic, 4);
  put<std::uint32_t>(os, kTrialVersion);
  put<std::uint64_t>(os, trials.size());
  for (const auto& t : trials) {
    put_string(os, t.id);
    put_string(os, t.subject_id);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.group));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.condition));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.channels()));
    for (const auto& n : t.channel_names) put_string(os, n);
    for (double v : t.data) put<double>(os, v);
  }
  if (!os) throw PersistenceError("write failed for " + path.string());
}

std::vector<Trial> load_trials(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PersistenceError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kTrialMagic, 4) != 0) {
    throw PersistenceError(path.string() + ": bad magic (expected EVLD)");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kTrialVersion) throw PersistenceError(path.string() + ": unsupported version " + std::to_string(version));
  const auto count = get<std::uint64_t>(is, "count");
  std::vector<Trial> trials;
  trials.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    Trial t;
    t.id = get_string(is, "id");
    t.subject_id = get_string(is, "subject_id");
    const auto g = get<std::uint32_t>(is, "group");
    const auto c = get<std::uint32_t>(is, "condition");
    if (g > 1 || c > 3) throw PersistenceError("trial store: bad enum in trial " + t.id);
    t.group = static_cast<Group>(g);
    t.condition = static_cast<Condition>(c);
    const auto nch = get<std::uint32_t>(is, "channels");
    for (std::uint32_t k = 0; k < nch; ++k) t.channel_names.push_back(get_string(is, "channel_name"));
    t.data.resize(static_cast<std::size_t>(nch) * kSamplesPerTrial);
    for (auto& v : t.data) v = get<double>(is, "data of " + t.id);
    t.validate();
    trials.push_back(std::move(t));
  }
  return trials;
}

}  // namespace evlab
