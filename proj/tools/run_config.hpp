#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace evlab::cli {

using json = nlohmann::json;

/// Invalid configuration or flag value (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every key a run config may carry, with its default value.
json default_config();

/// Overlays `user` on the defaults. Unknown keys and type mismatches throw ConfigError.
json merge_config(const json& user);
json load_config(const std::filesystem::path& path);

/// Hex SHA-256 of the canonical (sorted, compact) dump.
std::string hash_json(const json& j);

/// Named stage of a run: directory `<out_dir>/<stage>-<hash>-s<seed>`.
struct Stage {
  std::string name;
  json key;
  std::string hash;
  std::filesystem::path dir;
};

/// Settings that feed each stage, including everything upstream of it.
json data_key(const json& cfg);
json split_key(const json& cfg);
json train_key(const json& cfg);
json finetune_key(const json& cfg);
json eval_key(const json& cfg, const std::string& classifier);
json explain_key(const json& cfg);

Stage make_stage(const json& cfg, const std::string& name, const json& key);

std::filesystem::path out_dir(const json& cfg);

/// Collects files for a stage and publishes them with a manifest in one rename.
/// Refuses to replace an existing stage directory.
class StageWriter {
 public:
  StageWriter(const Stage& stage, const json& cfg, std::string command, std::vector<std::string> inputs);
  ~StageWriter();
  StageWriter(const StageWriter&) = delete;
  StageWriter& operator=(const StageWriter&) = delete;

  /// Path inside the staging directory.
  std::filesystem::path path(const std::string& file) const;
  void write(const std::string& file, const std::string& content);
  void note(const std::string& key, json value);
  void commit();

 private:
  Stage stage_;
  json manifest_;
  std::filesystem::path tmp_;
  bool committed_ = false;
};

/// Throws ConfigError unless `stage` has been published.
void require_stage(const Stage& stage, const std::string& producer);

}  // namespace evlab::cli
