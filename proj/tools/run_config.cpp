#include "run_config.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace evlab::cli {

namespace fs = std::filesystem;

json default_config() {
  return {
      {"seed", 0},
      {"data",
       {{"source", "synth"},
        {"path", ""},
        {"synth",
         {{"n_subjects", 24},
          {"trials_per_subject", 120},
          {"style", "match"},
          {"planted_channels", {"PZ", "P3", "P4", "OZ"}},
          {"amplitude_uv", 6.0},
          {"latency_ms", 300.0},
          {"latency_jitter_ms", 10.0},
          {"subject_amplitude_spread", 0.3},
          {"noise_scale_uv", 2.0},
          {"ar_coeff", 0.9}}}}},
      {"channels", "60"},
      {"task", "match"},
      {"scenario", 2},
      {"regime", "binary"},
      {"freeze", "penultimate"},
      {"lr_pretrain", 1e-3},
      {"lr_finetune", 1e-4},
      {"epochs", 7},
      {"batch", 128},
      {"ig", {{"steps", 64}, {"baseline", "zero"}, {"threshold", 0.51}, {"top_n", 50}}},
      {"out_dir", "runs"},
  };
}

namespace {

bool compatible(const json& def, const json& v) {
  if (def.is_number()) return v.is_number() && (def.is_number_float() || !v.is_number_float());
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!e.is_string()) return false;
    return true;
  }
  return v.is_object();
}

void overlay(json& target, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!target.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = target[it.key()];
    if (!compatible(slot, it.value())) throw ConfigError("config key '" + key + "' has the wrong type");
    if (slot.is_object())
      overlay(slot, it.value(), key);
    else
      slot = it.value();
  }
}

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

json merge_config(const json& user) {
  json cfg = default_config();
  overlay(cfg, user, "");
  return cfg;
}

json load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  try {
    return merge_config(json::parse(is));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string hash_json(const json& j) { return sha256_hex(j.dump()); }

json data_key(const json& cfg) {
  json data = {{"source", cfg["data"]["source"]}};
  if (cfg["data"]["source"] == "synth")
    data["synth"] = cfg["data"]["synth"];
  else
    data["path"] = cfg["data"]["path"];
  return {{"data", data}, {"channels", cfg["channels"]}};
}

json split_key(const json& cfg) {
  json k = data_key(cfg);
  k["scenario"] = cfg["scenario"];
  k["seed"] = cfg["seed"];
  return k;
}

json train_key(const json& cfg) {
  json k = split_key(cfg);
  for (const char* f : {"regime", "task", "lr_pretrain", "epochs", "batch"}) k[f] = cfg[f];
  return k;
}

json finetune_key(const json& cfg) {
  json k = train_key(cfg);
  k["freeze"] = cfg["freeze"];
  k["lr_finetune"] = cfg["lr_finetune"];
  return k;
}

json eval_key(const json& cfg, const std::string& classifier) {
  json k;
  if (classifier == "cnn") {
    k = finetune_key(cfg);
  } else {
    k = split_key(cfg);
    k["task"] = cfg["task"];
    if (classifier == "ffnn")
      for (const char* f : {"lr_pretrain", "epochs", "batch"}) k[f] = cfg[f];
  }
  k["classifier"] = classifier;
  return k;
}

json explain_key(const json& cfg) {
  json k = finetune_key(cfg);
  k["ig"] = cfg["ig"];
  return k;
}

fs::path out_dir(const json& cfg) {
  if (const char* env = std::getenv("EVLAB_OUT"); env && *env) return env;
  return cfg["out_dir"].get<std::string>();
}

Stage make_stage(const json& cfg, const std::string& name, const json& key) {
  Stage s{name, key, hash_json(key), {}};
  s.dir = out_dir(cfg) / (name + "-" + s.hash.substr(0, 12) + "-s" + std::to_string(cfg["seed"].get<std::uint64_t>()));
  return s;
}

StageWriter::StageWriter(const Stage& stage, const json& cfg, std::string command, std::vector<std::string> inputs)
    : stage_(stage) {
  if (fs::exists(stage_.dir)) throw ConfigError(stage_.dir.string() + " already exists; outputs are write-once");
  fs::create_directories(stage_.dir.parent_path());
  tmp_ = stage_.dir.parent_path() / (".tmp-" + stage_.dir.filename().string());
  fs::remove_all(tmp_);
  fs::create_directories(tmp_);
  manifest_ = {{"stage", stage_.name},
               {"command", std::move(command)},
               {"config_hash", hash_json(cfg)},
               {"stage_hash", stage_.hash},
               {"seed", cfg["seed"]},
               {"config", cfg},
               {"inputs", inputs},
               {"notes", json::object()}};
}

StageWriter::~StageWriter() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(tmp_, ec);
  }
}

fs::path StageWriter::path(const std::string& file) const { return tmp_ / file; }

void StageWriter::write(const std::string& file, const std::string& content) {
  std::ofstream os(path(file), std::ios::binary);
  os << content;
  if (!os) throw std::runtime_error("cannot write " + path(file).string());
}

void StageWriter::note(const std::string& key, json value) { manifest_["notes"][key] = std::move(value); }

void StageWriter::commit() {
  json files = json::object();
  for (const auto& e : fs::directory_iterator(tmp_))
    if (e.is_regular_file()) files[e.path().filename().string()] = sha256_hex(slurp(e.path()));
  manifest_["outputs"] = files;
  manifest_["created"] = iso_now();
  write("manifest.json", manifest_.dump(2) + "\n");
  if (fs::exists(stage_.dir)) throw ConfigError(stage_.dir.string() + " already exists; outputs are write-once");
  fs::rename(tmp_, stage_.dir);
  committed_ = true;
}

void require_stage(const Stage& stage, const std::string& producer) {
  if (!fs::exists(stage.dir / "manifest.json"))
    throw ConfigError("missing " + stage.dir.string() + "; run `" + producer + "` with the same config first");
}

}  // namespace evlab::cli
