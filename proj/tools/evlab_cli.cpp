#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "evlab/attribution.hpp"
#include "evlab/classifiers.hpp"
#include "evlab/dataset.hpp"
#include "evlab/errors.hpp"
#include "evlab/model.hpp"
#include "evlab/montage.hpp"
#include "evlab/regimes.hpp"
#include "evlab/render.hpp"
#include "evlab/roc.hpp"
#include "evlab/splits.hpp"
#include "evlab/synth.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace evlab;
using namespace evlab::cli;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> channels, task, regime, freeze, uci_dir;
  std::optional<int> scenario;
  std::optional<double> threshold;
  std::string classifier = "cnn";
  std::vector<std::string> report_inputs;
};

json effective_config(const Flags& f) {
  json cfg = f.config.empty() ? default_config() : load_config(f.config);
  if (f.seed) cfg["seed"] = *f.seed;
  if (f.channels) cfg["channels"] = *f.channels;
  if (f.task) cfg["task"] = *f.task;
  if (f.regime) cfg["regime"] = *f.regime;
  if (f.freeze) cfg["freeze"] = *f.freeze;
  if (f.scenario) cfg["scenario"] = *f.scenario;
  if (f.threshold) cfg["ig"]["threshold"] = *f.threshold;
  if (f.uci_dir) {
    cfg["data"]["source"] = "uci_dir";
    cfg["data"]["path"] = *f.uci_dir;
  }

  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  const auto src = cfg["data"]["source"].get<std::string>();
  need(src == "synth" || src == "uci_dir", "data.source must be synth or uci_dir");
  need(cfg["scenario"] == 1 || cfg["scenario"] == 2, "scenario must be 1 or 2");
  need(cfg["ig"]["baseline"] == "zero", "ig.baseline: only \"zero\" is supported");
  const double thr = cfg["ig"]["threshold"];
  need(thr >= 0.0 && thr <= 1.0, "ig.threshold must lie in [0, 1]");
  need(cfg["ig"]["steps"].get<int>() >= 1 && cfg["ig"]["top_n"].get<int>() >= 1, "ig.steps and ig.top_n must be >= 1");
  need(cfg["epochs"].get<int>() >= 1 && cfg["batch"].get<int>() >= 1, "epochs and batch must be >= 1");
  try {
    ChannelSubset::parse(cfg["channels"].get<std::string>());
    parse_task(cfg["task"].get<std::string>());
    parse_synth_style(cfg["data"]["synth"]["style"].get<std::string>());
    if (parse_regime(cfg["regime"].get<std::string>()) == Regime::BaselineScratch) cfg["freeze"] = "none";
    parse_freeze(cfg["freeze"].get<std::string>());
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

TrainConfig train_config(const json& cfg) {
  TrainConfig c;
  c.regime = parse_regime(cfg["regime"].get<std::string>());
  c.freeze = parse_freeze(cfg["freeze"].get<std::string>());
  c.task = parse_task(cfg["task"].get<std::string>());
  c.pretrain_task = c.task == Task::Match ? Task::Risk : Task::Match;
  c.lr_pretrain = cfg["lr_pretrain"];
  c.lr_finetune = cfg["lr_finetune"];
  c.epochs = cfg["epochs"];
  c.finetune_epochs = cfg["epochs"];
  c.batch = cfg["batch"];
  c.seed = cfg["seed"];
  c.validate();
  return c;
}

std::vector<Trial> load_pool(const json& cfg) {
  const Stage data = make_stage(cfg, "data", data_key(cfg));
  require_stage(data, cfg["data"]["source"] == "synth" ? "evlab synth" : "evlab ingest");
  return load_trials(data.dir / "trials.bin");
}

SplitPlan load_plan(const json& cfg, bool need_two) {
  const Stage split = make_stage(cfg, "split", split_key(cfg));
  require_stage(split, "evlab split");
  auto plan = SplitPlan::from_json(read_text(split.dir / "plan.json"));
  if (need_two && plan.scenario != Scenario::Two) throw ConfigError("this command needs a Scenario 2 split");
  return plan;
}

std::string fraction_tag(int k) {
  static const char* tags[] = {"0.25", "0.50", "0.75"};
  return tags[k - 1];
}

std::string scores_csv(const LabeledTrials& data, const std::vector<double>& scores) {
  std::ostringstream os;
  os << "trial,label,score\n";
  os.precision(17);
  for (std::size_t i = 0; i < scores.size(); ++i) os << data.trials[i]->id << ',' << data.labels[i] << ',' << scores[i] << '\n';
  return os.str();
}

void emit(const std::string& line) { std::cout << line << std::endl; }

// ---- commands ----

int cmd_store(const json& cfg, bool synth) {
  const bool is_synth = cfg["data"]["source"] == "synth";
  if (synth != is_synth)
    throw ConfigError(synth ? "`synth` needs data.source = synth" : "`ingest` needs data.source = uci_dir (or --uci-dir)");
  const auto subset = ChannelSubset::parse(cfg["channels"].get<std::string>());
  std::vector<Trial> trials;
  if (synth) {
    const auto& s = cfg["data"]["synth"];
    SynthSpec spec;
    spec.n_subjects = s["n_subjects"];
    spec.trials_per_subject = s["trials_per_subject"];
    spec.channel_names = subset.names;
    spec.planted_channels = s["planted_channels"].get<std::vector<std::string>>();
    spec.amplitude_uv = s["amplitude_uv"];
    spec.erp_latency_ms = s["latency_ms"];
    spec.latency_jitter_ms = s["latency_jitter_ms"];
    spec.subject_amplitude_spread = s["subject_amplitude_spread"];
    spec.noise_scale_uv = s["noise_scale_uv"];
    spec.ar_coeff = s["ar_coeff"];
    spec.style = parse_synth_style(s["style"].get<std::string>());
    try {
      spec.validate();
    } catch (const UsageError& e) {
      throw ConfigError(e.what());
    }
    trials = synth_generate(spec, cfg["seed"]);
  } else {
    const fs::path dir = cfg["data"]["path"].get<std::string>();
    if (!fs::is_directory(dir)) throw IngestionError("data.path " + dir.string() + " is not a directory");
    for (const auto& t : read_uci_directory(dir)) trials.push_back(select_channels(t, subset));
  }
  const Stage stage = make_stage(cfg, "data", data_key(cfg));
  StageWriter w(stage, cfg, synth ? "synth" : "ingest", {});
  save_trials(w.path("trials.bin"), trials);
  w.note("trials", trials.size());
  w.note("subjects", unique_subjects(trials).size());
  w.note("channels", subset.names);
  w.commit();
  emit(stage.dir.string());
  return 0;
}

int cmd_split(const json& cfg) {
  const auto trials = load_pool(cfg);
  const std::uint64_t seed = cfg["seed"];
  SplitPlan plan = split_scenario1(unique_subjects(trials), seed);
  if (cfg["scenario"] == 2) plan = split_scenario2(plan, trials, seed + 1);
  plan.check_invariants(trials);
  const Stage stage = make_stage(cfg, "split", split_key(cfg));
  StageWriter w(stage, cfg, "split", {make_stage(cfg, "data", data_key(cfg)).dir.filename().string()});
  w.write("plan.json", plan.to_json());
  w.commit();
  emit(stage.dir.string());
  return 0;
}

int cmd_train(const json& cfg) {
  const auto config = train_config(cfg);
  const auto trials = load_pool(cfg);
  const auto plan = load_plan(cfg, true);
  const Stage stage = make_stage(cfg, "train", train_key(cfg));
  StageWriter w(stage, cfg, "train", {make_stage(cfg, "split", split_key(cfg)).dir.filename().string()});
  if (config.regime == Regime::BaselineScratch) {
    w.note("pretrained", false);
  } else {
    Rng root(config.seed);
    Rng rng = root.fork(1);
    const auto result = pretrain(gather(trials, plan.pretrain, config.effective_pretrain_task()), config, rng);
    save_weights(result.model, w.path("pretrained.evlw"));
    json epochs = json::array();
    for (const auto& e : result.history.epochs) epochs.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}});
    w.write("history.json", epochs.dump(2) + "\n");
    w.note("pretrained", true);
    w.note("pretrain_task", to_string(config.effective_pretrain_task()));
    w.note("trained_trials", result.history.trained_trials.size());
  }
  w.commit();
  emit(stage.dir.string());
  return 0;
}

int cmd_finetune(const json& cfg) {
  const auto config = train_config(cfg);
  const auto trials = load_pool(cfg);
  const auto plan = load_plan(cfg, true);
  const Stage train = make_stage(cfg, "train", train_key(cfg));
  require_stage(train, "evlab train");
  std::optional<Model> base;
  if (fs::exists(train.dir / "pretrained.evlw")) base = load_weights(train.dir / "pretrained.evlw");

  const Stage stage = make_stage(cfg, "finetune", finetune_key(cfg));
  StageWriter w(stage, cfg, "finetune", {train.dir.filename().string()});
  Rng root(config.seed);
  const std::set<std::string> t(plan.t.begin(), plan.t.end());
  for (int k = 1; k <= 3; ++k) {
    const auto folds = gather(trials, plan.finetune_folds(k), config.task);
    Rng rng = root.fork(10 + static_cast<std::uint64_t>(k));
    Model start = base ? base->clone() : build_parallel_conv_net(folds.trials[0]->channels(), rng);
    auto [tuned, history] = finetune(start, folds, config, rng);
    for (const auto& id : history.trained_trials)
      if (t.count(id)) throw UsageError("held-out trial " + id + " reached a gradient step");
    save_weights(tuned, w.path("ft_" + fraction_tag(k) + ".evlw"));
  }
  w.note("experiment", experiment_name(config.regime, config.freeze));
  w.commit();
  emit(stage.dir.string());
  return 0;
}

std::vector<double> score_classifier(const std::string& name, const json& cfg, const LabeledTrials& train,
                                     const LabeledTrials& test, Rng& rng) {
  std::vector<double> s;
  if (name == "rmdm") {
    const auto m = fit_rmdm(train.trials, train.labels);
    for (const auto* tr : test.trials) s.push_back(score_rmdm(m, *tr));
  } else if (name == "lda" || name == "lr") {
    const auto x = trial_features(train.trials);
    const auto y = trial_features(test.trials);
    auto row = [&](std::size_t i) { return std::span<const double>(y.a).subspan(i * y.cols, y.cols); };
    if (name == "lda") {
      const auto m = fit_lda(x, train.labels);
      for (std::size_t i = 0; i < y.rows; ++i) s.push_back(score_lda(m, row(i)));
    } else {
      const auto m = fit_logreg(x, train.labels);
      for (std::size_t i = 0; i < y.rows; ++i) s.push_back(score_logreg(m, row(i)));
    }
  } else {
    Model m = build_ffnn(train.trials[0]->channels(), rng);
    train_binary(m, train, cfg["lr_pretrain"], cfg["epochs"], cfg["batch"], rng);
    s = predict(m, test.trials);
  }
  return s;
}

int cmd_eval(const json& cfg, const std::string& classifier) {
  static const std::map<std::string, std::string> names = {
      {"cnn", ""}, {"rmdm", "RMDM"}, {"lda", "LDA"}, {"lr", "LR"}, {"ffnn", "FFNN"}};
  if (!names.count(classifier)) throw ConfigError("--classifier must be one of rmdm|lda|lr|ffnn|cnn");
  const auto trials = load_pool(cfg);
  const auto plan = load_plan(cfg, true);
  const Task task = parse_task(cfg["task"].get<std::string>());
  const auto test = gather(trials, plan.t, task);

  std::string upstream;
  ResultRow row;
  if (classifier == "cnn") {
    const Stage ft = make_stage(cfg, "finetune", finetune_key(cfg));
    require_stage(ft, "evlab finetune");
    upstream = ft.dir.filename().string();
    row.experiment = experiment_name(train_config(cfg).regime, train_config(cfg).freeze);
  } else {
    upstream = make_stage(cfg, "split", split_key(cfg)).dir.filename().string();
    row.experiment = names.at(classifier);
  }

  const Stage stage = make_stage(cfg, "eval", eval_key(cfg, classifier));
  StageWriter w(stage, cfg, "eval", {upstream});
  Rng root(cfg["seed"].get<std::uint64_t>());
  for (int k = 1; k <= 3; ++k) {
    std::vector<double> scores;
    if (classifier == "cnn") {
      const auto model = load_weights(make_stage(cfg, "finetune", finetune_key(cfg)).dir / ("ft_" + fraction_tag(k) + ".evlw"));
      scores = predict(model, test.trials);
    } else {
      Rng rng = root.fork(20 + static_cast<std::uint64_t>(k));
      scores = score_classifier(classifier, cfg, gather(trials, plan.finetune_folds(k), task), test, rng);
    }
    const auto curve = roc_curve(scores, test.labels);
    row.auc[static_cast<std::size_t>(k - 1)] = curve.auc;
    w.write("scores_ft_" + fraction_tag(k) + ".csv", scores_csv(test, scores));
    w.write("roc_ft_" + fraction_tag(k) + ".csv", roc_points_csv(curve));
  }
  ResultTable table;
  table.rows.push_back(row);
  w.write("result.csv", table.to_csv());
  w.write("result.json", table.to_json());
  w.commit();
  emit(stage.dir.string());
  std::cout << table.to_csv() << std::flush;
  return 0;
}

void write_map(StageWriter& w, const std::string& prefix, const AggregateMap& agg, const Montage& montage) {
  const ChannelMap map{agg.channel_names, agg.samples, agg.mean};
  w.write(prefix + "_heatmap.csv", heatmap_csv(map));
  write_pgm(w.path(prefix + "_heatmap.pgm"), heatmap_image(map));
  const auto strength = agg.channel_abs_mean();
  std::ostringstream os;
  os.precision(17);
  os << "channel,mean_abs_phi\n";
  for (std::size_t c = 0; c < agg.channels(); ++c) os << agg.channel_names[c] << ',' << strength[c] << '\n';
  w.write(prefix + "_channels.csv", os.str());
  if (!montage.covers(agg.channel_names)) return;
  const auto frames = joint_temporal_topomaps(map, montage);
  const auto images = topomap_images(frames);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_topomap_%02zu.pgm", prefix.c_str(), i);
    write_pgm(w.path(name), images[i]);
  }
}

json cohort_json(const ExplainerCohort& c, const std::vector<AttributionMap>& members) {
  json j = {{"kind", to_string(c.kind)}, {"threshold", c.threshold}, {"top_n", c.top_n}, {"members", json::array()}};
  for (std::size_t i = 0; i < c.ids.size(); ++i)
    j["members"].push_back({{"trial", c.ids[i]}, {"score", c.scores[i]}, {"completeness_gap", members[i].completeness_gap}});
  return j;
}

int cmd_explain(const json& cfg) {
  const auto trials = load_pool(cfg);
  const auto plan = load_plan(cfg, true);
  const Stage ft = make_stage(cfg, "finetune", finetune_key(cfg));
  require_stage(ft, "evlab finetune");
  const auto model = load_weights(ft.dir / "ft_0.75.evlw");
  const auto test = gather(trials, plan.t, parse_task(cfg["task"].get<std::string>()));

  ExplainerOptions options;
  options.threshold = cfg["ig"]["threshold"];
  options.top_n = cfg["ig"]["top_n"];
  options.steps = cfg["ig"]["steps"];
  const auto result = run_explainer(model, test.trials, test.labels, options);

  const Stage stage = make_stage(cfg, "explain", explain_key(cfg));
  StageWriter w(stage, cfg, "explain", {ft.dir.filename().string()});
  const Montage montage = default_montage();
  w.write("tp_cohort.json", cohort_json(result.tp, result.tp_members).dump(2) + "\n");
  w.write("tn_cohort.json", cohort_json(result.tn, result.tn_members).dump(2) + "\n");
  if (!result.tp.empty()) write_map(w, "tp", result.tp_map, montage);
  if (!result.tn.empty()) write_map(w, "tn", result.tn_map, montage);
  w.note("tp_members", result.tp.members.size());
  w.note("tn_members", result.tn.members.size());
  w.commit();
  emit(stage.dir.string());
  return 0;
}

int cmd_report(const json& cfg, std::vector<std::string> inputs) {
  const fs::path root = out_dir(cfg);
  if (inputs.empty() && fs::is_directory(root))
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() && e.path().filename().string().rfind("eval-", 0) == 0) inputs.push_back(e.path().string());
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) throw ConfigError("no eval directories to report");
  ResultTable table;
  std::vector<std::string> names;
  for (const auto& dir : inputs) {
    const auto part = ResultTable::from_csv(read_text(fs::path(dir) / "result.csv"));
    table.rows.insert(table.rows.end(), part.rows.begin(), part.rows.end());
    names.push_back(fs::path(dir).filename().string());
  }
  const Stage stage = make_stage(cfg, "report", json{{"inputs", names}, {"seed", cfg["seed"]}});
  StageWriter w(stage, cfg, "report", names);
  w.write("table.csv", table.to_csv());
  w.write("table.json", table.to_json());
  w.commit();
  emit(stage.dir.string());
  std::cout << table.to_csv() << std::flush;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evlab: EEG transfer-learning laboratory"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "RunConfig JSON file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Run seed");
    sub->add_option("--channels", f.channels, "8, 12, 60 or a comma-separated channel list");
    sub->add_option("--task", f.task, "match | risk");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--regime", f.regime, "baseline | binary | ae | siamese | crosstask");
    sub->add_option("--freeze", f.freeze, "none | penultimate | last2");
  };

  auto* ingest = app.add_subcommand("ingest", "Read UCI trial files into a trial store");
  common(ingest);
  ingest->add_option("--uci-dir", f.uci_dir, "Directory of UCI trial files");
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  common(synth);
  auto* split = app.add_subcommand("split", "Partition subjects and trials");
  common(split);
  split->add_option("--scenario", f.scenario, "1 | 2");
  auto* train = app.add_subcommand("train", "Pre-train a network");
  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune on F1, F1+F2, F1+F2+F3");
  auto* eval = app.add_subcommand("eval", "Score the held-out part T and emit a result row");
  auto* explain = app.add_subcommand("explain", "Integrated-gradients cohort maps");
  for (auto* sub : {train, finetune_cmd, eval, explain}) {
    common(sub);
    training(sub);
    sub->add_option("--scenario", f.scenario, "1 | 2");
  }
  eval->add_option("--classifier", f.classifier, "cnn | rmdm | lda | lr | ffnn");
  explain->add_option("--threshold", f.threshold, "Cohort threshold");
  auto* report = app.add_subcommand("report", "Merge eval result rows into one table");
  common(report);
  report->add_option("dirs", f.report_inputs, "eval directories (default: every eval-* under out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const json cfg = effective_config(f);
    if (*ingest) return cmd_store(cfg, false);
    if (*synth) return cmd_store(cfg, true);
    if (*split) return cmd_split(cfg);
    if (*train) return cmd_train(cfg);
    if (*finetune_cmd) return cmd_finetune(cfg);
    if (*eval) return cmd_eval(cfg, f.classifier);
    if (*explain) return cmd_explain(cfg);
    if (*report) return cmd_report(cfg, f.report_inputs);
  } catch (const ConfigError& e) {
    std::cerr << "evlab: config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "evlab: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "evlab: config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "evlab: numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const IngestionError& e) {
    std::cerr << "evlab: data error: " << e.what() << '\n';
    return 3;
  } catch (const PersistenceError& e) {
    std::cerr << "evlab: data error: " << e.what() << '\n';
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "evlab: data error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "evlab: data error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
