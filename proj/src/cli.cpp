// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "selftrain/augment.hpp"
#include "selftrain/metrics.hpp"

namespace selftrain::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kRoles = {"generator", "classifier", "augmenter", "mlm"};

std::optional<fs::path> path_field(const Json& section, const char* key, const fs::path& base) {
  if (!section.contains(key) || section[key].is_null()) return std::nullopt;
  if (!section[key].is_string()) throw ValidationError(std::string(key) + " must be a path string");
  fs::path p = section[key].get<std::string>();
  return p.is_absolute() ? p : base / p;
}

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw ValidationError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

Json path_json(const std::optional<fs::path>& p) {
  return p ? Json(p->lexically_normal().string()) : Json(nullptr);
}

const fs::path& require_path(const std::optional<fs::path>& p, const char* what) {
  if (!p) throw ValidationError("config does not name a " + std::string(what) + " file");
  return *p;
}

// --- Backends ----------------------------------------------------------------

remote::BackendEndpoint endpoint_for(const Config& cfg, const std::string& role) {
  auto it = cfg.endpoints.find(role);
  if (it == cfg.endpoints.end()) {
    throw ValidationError("no endpoint for role '" + role + "'; pass --endpoint " + role +
                          "=<url> or --sim");
  }
  remote::BackendEndpoint e = cfg.endpoint_defaults;
  e.base_url = it->second;
  e.validate();
  return e;
}

std::unique_ptr<GeneratorBackend> make_generator(const Config& cfg) {
  if (cfg.sim) return std::make_unique<sim::SimGenerator>(cfg.world);
  return std::make_unique<remote::RemoteGenerator>(endpoint_for(cfg, "generator"));
}

std::unique_ptr<ClassifierBackend> make_classifier(const Config& cfg) {
  if (cfg.sim) return std::make_unique<sim::SimClassifier>(cfg.world);
  return std::make_unique<remote::RemoteClassifier>(endpoint_for(cfg, "classifier"), cfg.schema);
}

std::unique_ptr<AugmenterBackend> make_augmenter(const Config& cfg) {
  if (cfg.sim) return std::make_unique<sim::SimAugmenter>();
  return std::make_unique<remote::RemoteAugmenter>(endpoint_for(cfg, "augmenter"));
}

std::unique_ptr<MlmBackend> make_mlm(const Config& cfg) {
  if (cfg.sim) return std::make_unique<sim::SimMlm>(sim::SimMlm::for_world(cfg.world));
  return std::make_unique<remote::RemoteMlm>(endpoint_for(cfg, "mlm"));
}

Json endpoints_json(const Config& cfg, const std::vector<std::string>& roles) {
  Json j = Json::object();
  for (const auto& role : roles) {
    if (cfg.sim) {
      j[role] = "sim";
    } else {
      auto it = cfg.endpoints.find(role);
      j[role] = it == cfg.endpoints.end() ? Json(nullptr) : Json(it->second);
    }
  }
  return j;
}

// --- Run directory -----------------------------------------------------------

class RunLock {
 public:
  explicit RunLock(const fs::path& dir) {
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw StateError("run directory " + dir.string() + " is in use by another process");
    }
  }
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

Json input_digest(const fs::path& p) {
  return {{"path", p.lexically_normal().string()}, {"sha256", sha256_file(p.string())}};
}

void write_json(const fs::path& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");
  return j;
}

// --- Options shared by the config-driven commands ------------------------------

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool sim = false;
  std::vector<std::string> endpoints;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "config file (JSON)")->required();
    app->add_option("--seed", seed, "random seed; overrides SELFTRAIN_SEED and the config");
    app->add_flag("--sim", sim, "use the in-process simulated backends");
    app->add_option("--endpoint", endpoints, "backend endpoint as <role>=<url>")
        ->type_name("ROLE=URL");
  }

  Config resolve() const {
    Config cfg = Config::load(config);
    cfg.seed = resolve_seed(seed, cfg.seed);
    cfg.selftrain.seed = cfg.seed;
    cfg.decoding.seed = cfg.seed;
    if (sim) cfg.sim = true;
    for (const auto& e : endpoints) {
      auto eq = e.find('=');
      if (eq == std::string::npos) throw ValidationError("--endpoint expects <role>=<url>, got " + e);
      std::string role = e.substr(0, eq);
      if (!kRoles.contains(role)) throw ValidationError("unknown backend role '" + role + "'");
      cfg.endpoints[role] = e.substr(eq + 1);
    }
    return cfg;
  }
};

// --- Commands ----------------------------------------------------------------

struct SimTaskOptions {
  std::string out_dir;
  std::size_t labeled = 30;
  std::size_t unlabeled = 300;
  std::size_t dev = 300;
  std::uint64_t seed = 0;
  double noise_rate = 0.3;
};

int cmd_sim_task(const SimTaskOptions& o, std::ostream& out) {
  sim::SimWorld world;
  world.seed = o.seed;
  world.noise_rate = o.noise_rate;
  if (o.labeled < 1 || o.unlabeled < 1 || o.dev < 1) throw ValidationError("sizes must be >= 1");
  auto task = sim::sim_make_task(world, o.labeled, o.unlabeled, o.dev);
  fs::path dir = o.out_dir;
  fs::create_directories(dir);
  write_jsonl<LabeledExample>(dir / "labeled.jsonl", task.labeled);
  write_jsonl<UnlabeledPremise>(dir / "unlabeled.jsonl", task.unlabeled);
  write_jsonl<LabeledExample>(dir / "dev.jsonl", task.dev);
  Json cfg;
  cfg["schema"] = "nli3";
  cfg["seed"] = o.seed;
  cfg["backend"] = "sim";
  cfg["sim_world"] = world.to_json();
  cfg["data"] = {{"labeled", "labeled.jsonl"},
                 {"unlabeled", "unlabeled.jsonl"},
                 {"dev", "dev.jsonl"},
                 {"synthetic", "synthetic.jsonl"}};
  cfg["run_dir"] = "run";
  write_json(dir / "config.json", cfg);
  out << "wrote " << task.labeled.size() << " labeled, " << task.unlabeled.size()
      << " unlabeled, " << task.dev.size() << " dev examples and config.json to " << dir.string()
      << "\n";
  return kExitOk;
}

struct GenerateOptions {
  CommonOptions common;
  std::string out;
  bool random_hypotheses = false;
};

int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream& err) {
  Config cfg = o.common.resolve();
  if (o.random_hypotheses) cfg.random_hypotheses = true;
  fs::path output = o.out.empty() ? require_path(cfg.synthetic, "synthetic output") : fs::path(o.out);
  const auto& unlabeled_path = require_path(cfg.unlabeled, "unlabeled");

  Json manifest;
  manifest["command"] = "generate";
  manifest["config"] = cfg.to_json();
  manifest["inputs"] = Json::object();
  manifest["started_at"] = timestamp_now();

  auto unlabeled = load_unlabeled(unlabeled_path);
  if (unlabeled.premises.empty()) throw ValidationError(unlabeled_path.string() + " has no premises");
  if (unlabeled.duplicate_premises > 0) {
    err << "warning: " << unlabeled.duplicate_premises << " duplicate premise(s) in "
        << unlabeled_path.string() << "\n";
  }
  manifest["inputs"]["unlabeled"] = input_digest(unlabeled_path);

  std::vector<SyntheticExample> synthetic;
  if (cfg.random_hypotheses) {
    std::vector<std::string> pool;
    if (cfg.sentence_pool) {
      std::ifstream in(*cfg.sentence_pool);
      if (!in) throw ValidationError("cannot open " + cfg.sentence_pool->string());
      for (std::string line; std::getline(in, line);) {
        if (!trim(line).empty()) pool.push_back(trim(line));
      }
      manifest["inputs"]["sentence_pool"] = input_digest(*cfg.sentence_pool);
    } else {
      for (const auto& p : unlabeled.premises) pool.push_back(p.premise);
    }
    synthetic = augment::random_hypothesis_dataset(unlabeled.premises, pool,
                                                   derive_seed(cfg.seed, "random-hypotheses"));
    manifest["endpoints"] = Json::object();
  } else {
    const auto& labeled_path = require_path(cfg.labeled, "labeled");
    auto labeled = load_labeled(labeled_path, cfg.schema);
    manifest["inputs"]["labeled"] = input_digest(labeled_path);
    manifest["endpoints"] = endpoints_json(cfg, {"generator"});
    auto backend = make_generator(cfg);
    auto registry = generation::train_generators(labeled, cfg.schema, cfg.generator_mode, *backend,
                                                 cfg.decoding);
    synthetic = generation::generate_synthetic_dataset(unlabeled.premises, registry, cfg.decoding);
  }

  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_jsonl<SyntheticExample>(output, synthetic);
  manifest["output"] = input_digest(output);
  manifest["finished_at"] = timestamp_now();
  manifest["outcome"] = "completed";
  write_json(output.string() + ".manifest.json", manifest);

  auto st = stats(std::span<const SyntheticExample>(synthetic), cfg.schema);
  out << "wrote " << synthetic.size() << " synthetic examples to " << output.string();
  if (!cfg.random_hypotheses) {
    out << " (";
    for (std::size_t i = 0; i < cfg.schema.size(); ++i) {
      out << (i ? ", " : "") << cfg.schema.at(i) << " " << st.count(cfg.schema.at(i));
    }
    out << ")";
  }
  out << "\n";
  return kExitOk;
}

struct SelftrainOptions {
  CommonOptions common;
  std::string run_dir;
  bool resume = false;
  std::optional<int> stop_after;
};

Json run_report(const engine::RunResult& r, const LabelSchema& schema) {
  Json j;
  j["stop_reason"] = std::string(engine::to_string(r.stop));
  j["iterations"] = r.state.iteration();
  j["best_iteration"] = r.state.best_iteration ? Json(*r.state.best_iteration) : Json(nullptr);
  j["best_dev_macro_f1"] = r.best_dev_score;
  j["best_classifier_ref"] = r.best_classifier_ref;
  auto st = stats(std::span<const PseudoLabeledExample>(r.state.pseudo_labeled), schema);
  j["pseudo_labeled"] = st.total;
  Json per = Json::object();
  for (const auto& c : schema.classes()) per[c] = st.count(c);
  j["pseudo_labeled_per_class"] = per;
  j["noised"] = std::count_if(r.state.pseudo_labeled.begin(), r.state.pseudo_labeled.end(),
                              [](const PseudoLabeledExample& p) { return p.noised; });
  j["remaining_pool"] = r.state.remaining.size();
  j["dev_macro_f1_by_iteration"] = Json::array();
  for (const auto& h : r.state.history) j["dev_macro_f1_by_iteration"].push_back(h.dev_score);
  return j;
}

int cmd_selftrain(const SelftrainOptions& o, std::ostream& out, std::ostream& err) {
  Config cfg = o.common.resolve();
  cfg.selftrain.validate(cfg.schema);
  fs::path run_dir = !o.run_dir.empty() ? fs::path(o.run_dir) : require_path(cfg.run_dir, "run_dir");
  const auto& labeled_path = require_path(cfg.labeled, "labeled");
  const auto& dev_path = require_path(cfg.dev, "dev");
  const auto& synthetic_path = require_path(cfg.synthetic, "synthetic");

  Json inputs;
  inputs["labeled"] = input_digest(labeled_path);
  inputs["dev"] = input_digest(dev_path);
  inputs["synthetic"] = input_digest(synthetic_path);

  fs::create_directories(run_dir / "state");
  RunLock lock(run_dir);
  const fs::path manifest_path = run_dir / "manifest.json";

  std::vector<std::string> roles = {"classifier"};
  if (cfg.selftrain.noise) roles.push_back("augmenter");

  Json manifest;
  engine::RunState state;
  bool have_state = false;
  if (o.resume) {
    if (!fs::exists(manifest_path)) {
      throw ValidationError("nothing to resume: " + manifest_path.string() + " does not exist");
    }
    manifest = read_json(manifest_path);
    for (auto it = inputs.begin(); it != inputs.end(); ++it) {
      const auto& recorded = manifest["inputs"][it.key()]["sha256"];
      if (recorded != (*it)["sha256"]) {
        throw ValidationError("input '" + it.key() + "' changed since the run started (sha256 " +
                              recorded.dump() + " vs " + (*it)["sha256"].dump() + ")");
      }
    }
    if (manifest["config"]["selftrain"] != cfg.to_json()["selftrain"] ||
        manifest["config"]["seed"] != cfg.to_json()["seed"]) {
      throw ValidationError("self-training config or seed differs from the run being resumed");
    }
    if (auto k = engine::latest_state(run_dir / "state")) {
      state = engine::parse_state(engine::state_file(run_dir / "state", *k), cfg.schema);
      have_state = true;
      err << "resuming after iteration " << *k << "\n";
    }
  } else {
    if (fs::exists(manifest_path)) {
      throw ValidationError(run_dir.string() + " already holds a run; pass --resume to continue it");
    }
    manifest["command"] = "selftrain";
    manifest["config"] = cfg.to_json();
    manifest["inputs"] = inputs;
    manifest["endpoints"] = endpoints_json(cfg, roles);
    manifest["started_at"] = timestamp_now();
    manifest["finished_at"] = nullptr;
    manifest["outcome"] = "running";
    write_json(manifest_path, manifest);
  }

  auto labeled = load_labeled(labeled_path, cfg.schema);
  auto dev = load_labeled(dev_path, cfg.schema);
  if (!have_state) state = engine::initial_state(cfg.selftrain, load_synthetic(synthetic_path, cfg.schema));

  auto classifier = make_classifier(cfg);
  std::unique_ptr<AugmenterBackend> augmenter;
  if (cfg.selftrain.noise) augmenter = make_augmenter(cfg);

  engine::RunOptions options;
  options.state_dir = run_dir / "state";
  options.halt_after = o.stop_after;
  options.on_iteration = [&](const engine::RunState& s) {
    write_file_atomic(run_dir / "metrics.csv", engine::metrics_csv(s, cfg.schema));
    const auto& h = s.history.back();
    err << "iteration " << h.k << ": selected " << h.selected_total() << "/" << h.sampled
        << ", pool " << h.pool_after << ", dev macro F1 " << h.dev_score << "\n";
  };

  engine::RunResult result;
  try {
    result = engine::resume(std::move(state), labeled, dev, cfg.schema,
                            {*classifier, augmenter.get()}, options);
  } catch (const std::exception& e) {
    manifest["finished_at"] = timestamp_now();
    manifest["outcome"] = std::string("failed: ") + e.what();
    write_json(manifest_path, manifest);
    throw;
  }

  write_file_atomic(run_dir / "metrics.csv", engine::metrics_csv(result.state, cfg.schema));
  const bool halted = result.stop == engine::StopReason::kRunning;
  if (!halted) write_json(run_dir / "report.json", run_report(result, cfg.schema));
  manifest["finished_at"] = halted ? Json(nullptr) : Json(timestamp_now());
  manifest["outcome"] = halted ? "halted" : "completed";
  write_json(manifest_path, manifest);

  if (halted) {
    out << "halted after iteration " << result.state.iteration() << "; rerun with --resume\n";
  } else {
    out << "stopped (" << engine::to_string(result.stop) << ") after "
        << result.state.iteration() << " iteration(s); best iteration "
        << (result.state.best_iteration ? std::to_string(*result.state.best_iteration) : "-")
        << ", dev macro F1 " << result.best_dev_score << ", model " << result.best_classifier_ref
        << "\n";
  }
  return kExitOk;
}

// --- simulate ------------------------------------------------------------------

struct Profile {
  sim::SimWorld world;
  std::size_t n_labeled = 0;
  std::size_t m_unlabeled = 0;
  std::size_t n_dev = 0;
  std::size_t n_test = 0;
  std::vector<std::uint64_t> seeds;
  double tau = 0.9;
};

Profile profile_by_name(const std::string& name) {
  Profile p;
  p.world.noise_rate = 0.3;
  p.seeds = {1, 2, 3};
  if (name == "default") {
    p.n_labeled = 15;
    p.m_unlabeled = 600;
    p.n_dev = 300;
    p.n_test = 900;
  } else if (name == "small") {
    p.n_labeled = 9;
    p.m_unlabeled = 60;
    p.n_dev = 60;
    p.n_test = 150;
  } else {
    throw ValidationError("unknown profile '" + name + "' (expected default or small)");
  }
  return p;
}

struct SimulateOptions {
  std::string profile = "default";
  std::string out;
};

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  Profile profile = profile_by_name(o.profile);
  const LabelSchema schema = sim::sim_schema();
  Json seeds_json = profile.seeds;

  struct Totals {
    double dev = 0, test = 0;
    std::size_t syn_ok = 0, syn_n = 0, acc_ok = 0, acc_n = 0;
  };
  const std::vector<std::string> methods = {"baseline", "VST", "DBST"};
  std::map<std::string, Totals> totals;
  Json rows = Json::array();

  for (auto seed : profile.seeds) {
    sim::SimWorld world = profile.world;
    world.seed = seed;
    auto task = sim::sim_make_task(world, profile.n_labeled, profile.m_unlabeled, profile.n_dev);
    auto test = sim::sim_labeled_set(world, profile.n_test, "test", "t-");

    sim::SimGenerator generator(world);
    DecodingConfig decoding;
    decoding.seed = seed;
    auto registry = generation::train_generators(task.labeled, schema,
                                                 generation::GeneratorMode::kPerClass, generator,
                                                 decoding);
    auto synthetic = generation::generate_synthetic_dataset(task.unlabeled, registry, decoding);
    std::size_t syn_ok = 0;
    for (const auto& s : synthetic) {
      syn_ok += sim::sim_oracle(world, s.premise, s.hypothesis) == *s.synthetic_label ? 1 : 0;
    }

    for (const auto& method : methods) {
      sim::SimClassifier classifier(world);
      Json row;
      row["method"] = method;
      row["seed"] = seed;
      row["seeds"] = seeds_json;
      std::string ref;
      double dev_f1 = 0.0;
      std::size_t acc_ok = 0, acc_n = 0;
      if (method == "baseline") {
        std::vector<TrainingRecord> records;
        for (const auto& ex : task.labeled) records.push_back({ex.premise, ex.hypothesis, ex.label});
        ref = classifier.train(TrainPhase::kCombined, records, std::nullopt,
                               derive_seed(seed, "train", 0));
        dev_f1 = engine::evaluate(classifier, ref, task.dev, schema).macro_f1;
        row["iterations"] = 0;
      } else {
        engine::SelfTrainConfig config;
        config.tau = profile.tau;
        config.seed = seed;
        config.schedule = engine::schedule_from_string(method);
        auto result = engine::run(task.labeled, synthetic, task.dev, config, schema, {classifier});
        ref = result.best_classifier_ref;
        dev_f1 = result.best_dev_score;
        for (const auto& p : result.state.pseudo_labeled) {
          acc_ok += sim::sim_oracle(world, p.base.premise, p.base.hypothesis) == p.pseudo_label;
        }
        acc_n = result.state.pseudo_labeled.size();
        row["iterations"] = result.state.iteration();
        row["best_iteration"] = *result.state.best_iteration;
        row["stop_reason"] = std::string(engine::to_string(result.stop));
      }
      double test_f1 = engine::evaluate(classifier, ref, test, schema).macro_f1;
      row["dev_macro_f1"] = dev_f1;
      row["test_macro_f1"] = test_f1;
      row["synthetic"] = synthetic.size();
      row["precision_before_filter"] = ratio(syn_ok, synthetic.size());
      row["pseudo_labeled"] = acc_n;
      row["precision_after_filter"] = method == "baseline" ? Json(nullptr) : Json(ratio(acc_ok, acc_n));
      rows.push_back(row);

      auto& t = totals[method];
      t.dev += dev_f1;
      t.test += test_f1;
      t.syn_ok += syn_ok;
      t.syn_n += synthetic.size();
      t.acc_ok += acc_ok;
      t.acc_n += acc_n;
    }
  }

  const double n = static_cast<double>(profile.seeds.size());
  Json summary = Json::array();
  for (const auto& method : methods) {
    const auto& t = totals[method];
    Json s;
    s["method"] = method;
    s["seeds"] = seeds_json;
    s["mean_dev_macro_f1"] = t.dev / n;
    s["mean_test_macro_f1"] = t.test / n;
    s["precision_before_filter"] = ratio(t.syn_ok, t.syn_n);
    s["precision_after_filter"] = method == "baseline" ? Json(nullptr) : Json(ratio(t.acc_ok, t.acc_n));
    s["pseudo_labeled"] = t.acc_n;
    summary.push_back(s);
  }

  Json report;
  report["profile"] = o.profile;
  report["world"] = profile.world.to_json();
  report["sizes"] = {{"labeled", profile.n_labeled},
                     {"unlabeled", profile.m_unlabeled},
                     {"dev", profile.n_dev},
                     {"test", profile.n_test}};
  report["tau"] = profile.tau;
  report["seeds"] = seeds_json;
  report["rows"] = rows;
  report["summary"] = summary;
  if (!o.out.empty()) write_json(o.out, report);

  char line[160];
  std::snprintf(line, sizeof line, "%-9s %12s %13s %12s %11s %9s\n", "method", "mean dev F1",
                "mean test F1", "prec before", "prec after", "accepted");
  out << "profile " << o.profile << ", seeds " << seeds_json.dump() << ", tau " << profile.tau
      << ", noise rate " << profile.world.noise_rate << "\n" << line;
  for (const auto& s : summary) {
    std::string after = s["precision_after_filter"].is_null()
                            ? "-"
                            : std::to_string(s["precision_after_filter"].get<double>()).substr(0, 6);
    std::snprintf(line, sizeof line, "%-9s %12.4f %13.4f %12.4f %11s %9zu\n",
                  s["method"].get<std::string>().c_str(), s["mean_dev_macro_f1"].get<double>(),
                  s["mean_test_macro_f1"].get<double>(), s["precision_before_filter"].get<double>(),
                  after.c_str(), s["pseudo_labeled"].get<std::size_t>());
    out << line;
  }
  return kExitOk;
}

// --- augment -------------------------------------------------------------------

struct AugmentOptions {
  CommonOptions common;
  std::string method;
  std::string out;
  std::optional<double> rate;
  std::string lexicon;
};

int cmd_augment(const AugmentOptions& o, std::ostream& out) {
  Config cfg = o.common.resolve();
  const auto& labeled_path = require_path(cfg.labeled, "labeled");
  auto labeled = load_labeled(labeled_path, cfg.schema);
  const std::uint64_t seed = derive_seed(cfg.seed, "augment", o.method);

  std::vector<LabeledExample> augmented;
  Json manifest;
  manifest["command"] = "augment " + o.method;
  manifest["config"] = cfg.to_json();
  manifest["started_at"] = timestamp_now();
  manifest["inputs"] = {{"labeled", input_digest(labeled_path)}};
  if (o.method == "bt") {
    manifest["endpoints"] = endpoints_json(cfg, {"augmenter"});
    auto augmenter = make_augmenter(cfg);
    augmented = augment::bt_augment_labeled(labeled, *augmenter, seed);
  } else if (o.method == "sr") {
    fs::path lexicon_path = o.lexicon.empty() ? require_path(cfg.lexicon, "lexicon") : fs::path(o.lexicon);
    auto lexicon = MapLexicon::load(lexicon_path);
    manifest["inputs"]["lexicon"] = input_digest(lexicon_path);
    const double rate = o.rate.value_or(cfg.sr_rate);
    manifest["rate"] = rate;
    augmented = augment::sr_augment_labeled(labeled, lexicon, rate, seed);
  } else {
    manifest["endpoints"] = endpoints_json(cfg, {"mlm"});
    auto mlm = make_mlm(cfg);
    augmented = augment::cmlm_augment_labeled(labeled, cfg.schema, *mlm, seed);
  }

  fs::path output = o.out;
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_jsonl<LabeledExample>(output, augmented);
  manifest["output"] = input_digest(output);
  manifest["finished_at"] = timestamp_now();
  manifest["outcome"] = "completed";
  write_json(output.string() + ".manifest.json", manifest);
  out << "wrote " << augmented.size() << " examples (" << labeled.size() << " original) to "
      << output.string() << "\n";
  return kExitOk;
}

// --- evaluate / ttest ------------------------------------------------------------

struct EvaluateOptions {
  std::string gold;
  std::string pred;
  std::string schema = "nli3";
  std::string pred_schema;
  std::string out;
};

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  const LabelSchema schema = LabelSchema::by_name(o.schema);
  const LabelSchema pred_schema = o.pred_schema.empty() ? schema : LabelSchema::by_name(o.pred_schema);
  auto gold = load_labeled(o.gold, schema);

  std::map<std::string, std::string> predicted;
  for_each_jsonl(o.pred, [&](const Json& j, std::size_t line) {
    const std::string where = o.pred + ":" + std::to_string(line);
    if (!j.is_object() || !j.contains("id") || !j.contains("label") || !j["label"].is_string()) {
      throw ValidationError(where + ": prediction records need id and label");
    }
    std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    std::string label = trim(j["label"].get<std::string>());
    pred_schema.require(label);
    if (!predicted.emplace(id, label).second) throw ValidationError(where + ": duplicate id " + id);
  });

  std::vector<std::string> g, p;
  for (const auto& ex : gold) {
    auto it = predicted.find(ex.id);
    if (it == predicted.end()) throw ValidationError("no prediction for gold id '" + ex.id + "'");
    g.push_back(ex.label);
    p.push_back(it->second);
  }
  p = metrics::map_labels(p, pred_schema, schema);
  auto report = metrics::macro_f1(g, p, schema).to_json(schema);
  if (!o.out.empty()) write_json(o.out, report);
  out << report.dump(2) << "\n";
  return kExitOk;
}

std::vector<double> parse_scores(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ValidationError("not a number: '" + item + "'");
    v.push_back(x);
  }
  return v;
}

struct TTestOptions {
  std::string a;
  std::string b;
  double alpha = 0.05;
};

int cmd_ttest(const TTestOptions& o, std::ostream& out) {
  auto a = parse_scores(o.a);
  auto b = parse_scores(o.b);
  auto r = metrics::paired_t_test(a, b, o.alpha);
  Json j;
  j["n"] = a.size();
  j["df"] = r.df;
  j["t"] = std::isfinite(r.t) ? Json(r.t) : Json(r.t > 0 ? "inf" : "-inf");
  j["p_value"] = r.p_value;
  j["alpha"] = o.alpha;
  j["critical_t"] = metrics::t_critical(r.df, o.alpha);
  j["significant"] = r.significant;
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

// --- Config --------------------------------------------------------------------

Config Config::load(const fs::path& path) {
  Json j = read_json(path);
  fs::path base = path.parent_path();
  if (base.empty()) base = ".";
  try {
    return from_json(j, base);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

Config Config::from_json(const Json& j, const fs::path& base) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  reject_unknown(j,
                 {"schema", "seed", "backend", "sim_world", "data", "generation", "tau",
                  "sample_size", "max_iterations", "patience", "schedule", "filter_mode", "noise",
                  "endpoints", "endpoint_options", "run_dir", "augment"},
                 "config");
  Config c;
  try {
    if (j.contains("schema")) {
      c.schema = j["schema"].is_string() ? LabelSchema::by_name(j["schema"].get<std::string>())
                                         : LabelSchema::from_json(j["schema"]);
    }
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) throw ValidationError("seed must be a non-negative integer");
      c.seed = j["seed"].get<std::uint64_t>();
    }
    const std::string backend = j.value("backend", std::string("remote"));
    if (backend != "sim" && backend != "remote") {
      throw ValidationError("backend must be 'sim' or 'remote'");
    }
    c.sim = backend == "sim";
    if (j.contains("sim_world")) c.world = sim::SimWorld::from_json(j["sim_world"]);

    const Json data = j.value("data", Json::object());
    reject_unknown(data, {"labeled", "unlabeled", "dev", "synthetic", "sentence_pool", "lexicon"},
                   "data");
    c.labeled = path_field(data, "labeled", base);
    c.unlabeled = path_field(data, "unlabeled", base);
    c.dev = path_field(data, "dev", base);
    c.synthetic = path_field(data, "synthetic", base);
    c.sentence_pool = path_field(data, "sentence_pool", base);
    c.lexicon = path_field(data, "lexicon", base);
    c.run_dir = path_field(j, "run_dir", base);

    const Json gen = j.value("generation", Json::object());
    reject_unknown(gen, {"mode", "decoding", "random_hypotheses"}, "generation");
    if (gen.contains("mode")) {
      c.generator_mode = generation::generator_mode_from_string(gen["mode"].get<std::string>());
    }
    if (gen.contains("decoding")) c.decoding = DecodingConfig::from_json(gen["decoding"]);
    c.decoding.validate();
    c.random_hypotheses = gen.value("random_hypotheses", false);

    const Json aug = j.value("augment", Json::object());
    reject_unknown(aug, {"sr_rate"}, "augment");
    c.sr_rate = aug.value("sr_rate", c.sr_rate);

    Json st = Json::object();
    for (const char* key : {"tau", "sample_size", "max_iterations", "patience", "schedule",
                            "filter_mode", "noise"}) {
      if (j.contains(key)) st[key] = j[key];
    }
    c.selftrain = engine::SelfTrainConfig::from_json(st);
    c.selftrain.seed = c.seed;
    c.decoding.seed = c.seed;

    const Json eps = j.value("endpoints", Json::object());
    for (auto it = eps.begin(); it != eps.end(); ++it) {
      if (!kRoles.contains(it.key())) throw ValidationError("unknown backend role '" + it.key() + "'");
      c.endpoints[it.key()] = it->get<std::string>();
    }
    const Json eo = j.value("endpoint_options", Json::object());
    reject_unknown(eo, {"timeout_ms", "retries", "backoff_ms"}, "endpoint_options");
    c.endpoint_defaults.timeout = std::chrono::milliseconds(eo.value("timeout_ms", 60000));
    c.endpoint_defaults.retries = eo.value("retries", 3);
    c.endpoint_defaults.backoff = std::chrono::milliseconds(eo.value("backoff_ms", 500));
    if (c.endpoint_defaults.retries < 0) throw ValidationError("endpoint retries must be >= 0");
  } catch (const Json::exception& e) {
    throw ValidationError(e.what());
  }
  return c;
}

Json Config::to_json() const {
  Json j;
  j["schema"] = schema.to_json();
  j["seed"] = seed;
  j["backend"] = sim ? "sim" : "remote";
  if (sim) j["sim_world"] = world.to_json();
  j["data"] = {{"labeled", path_json(labeled)},
               {"unlabeled", path_json(unlabeled)},
               {"dev", path_json(dev)},
               {"synthetic", path_json(synthetic)},
               {"sentence_pool", path_json(sentence_pool)},
               {"lexicon", path_json(lexicon)}};
  j["run_dir"] = path_json(run_dir);
  j["generation"] = {{"mode", std::string(generation::to_string(generator_mode))},
                     {"decoding", decoding.to_json()},
                     {"random_hypotheses", random_hypotheses}};
  j["augment"] = {{"sr_rate", sr_rate}};
  j["selftrain"] = selftrain.to_json();
  j["endpoints"] = Json(endpoints);
  j["endpoint_options"] = {{"timeout_ms", endpoint_defaults.timeout.count()},
                           {"retries", endpoint_defaults.retries},
                           {"backoff_ms", endpoint_defaults.backoff.count()}};
  return j;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SELFTRAIN_SEED"); env != nullptr && *env != '\0') {
    std::string text = trim(env);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (!text.empty() && text[0] != '-') v = std::stoull(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) {
      throw ValidationError("SELFTRAIN_SEED must be a non-negative integer, got '" + text + "'");
    }
    return v;
  }
  return config_seed;
}

std::string timestamp_now() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    try {
      t = static_cast<std::time_t>(std::stoll(epoch));
    } catch (const std::exception&) {
      throw ValidationError("SOURCE_DATE_EPOCH must be an integer");
    }
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// --- Entry point -------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-training with synthetic hypotheses for low-resource NLI", "selftrain"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "selftrain 0.1.0");

  SimTaskOptions sim_task;
  auto* c_sim_task = app.add_subcommand("sim-task", "write a simulated task and a config for it");
  c_sim_task->add_option("--out", sim_task.out_dir, "output directory")->required();
  c_sim_task->add_option("--labeled", sim_task.labeled, "labeled examples");
  c_sim_task->add_option("--unlabeled", sim_task.unlabeled, "unlabeled premises");
  c_sim_task->add_option("--dev", sim_task.dev, "dev examples");
  c_sim_task->add_option("--seed", sim_task.seed, "world seed");
  c_sim_task->add_option("--noise-rate", sim_task.noise_rate, "generator label noise")
      ->check(CLI::Range(0.0, 1.0));

  GenerateOptions generate;
  auto* c_generate = app.add_subcommand("generate", "generate synthetic hypotheses");
  generate.common.attach(c_generate);
  c_generate->add_option("--out", generate.out, "output JSONL (defaults to data.synthetic)");
  c_generate->add_flag("--random-hypotheses", generate.random_hypotheses,
                       "pair premises with random pool sentences instead");

  SelftrainOptions selftrain;
  auto* c_selftrain = app.add_subcommand("selftrain", "run self-training");
  selftrain.common.attach(c_selftrain);
  c_selftrain->add_option("--run-dir", selftrain.run_dir, "run directory (defaults to run_dir)");
  c_selftrain->add_flag("--resume", selftrain.resume, "continue the run in the run directory");
  c_selftrain->add_option("--stop-after", selftrain.stop_after)->group("");

  SimulateOptions simulate;
  auto* c_simulate = app.add_subcommand("simulate", "baseline vs VST vs DBST on simulated data");
  c_simulate->add_option("--profile", simulate.profile, "default or small");
  c_simulate->add_option("--out", simulate.out, "write the JSON report here");

  AugmentOptions augment_opts;
  auto* c_augment = app.add_subcommand("augment", "augment the labeled set (bt, sr or cmlm)");
  c_augment->add_option("method", augment_opts.method, "bt | sr | cmlm")
      ->required()
      ->check(CLI::IsMember({"bt", "sr", "cmlm"}));
  augment_opts.common.attach(c_augment);
  c_augment->add_option("--out", augment_opts.out, "output JSONL")->required();
  c_augment->add_option("--rate", augment_opts.rate, "synonym replacement rate")
      ->check(CLI::Range(0.0, 1.0));
  c_augment->add_option("--lexicon", augment_opts.lexicon, "synonym table (JSON)");

  EvaluateOptions evaluate;
  auto* c_evaluate = app.add_subcommand("evaluate", "macro F1 of predictions against gold");
  c_evaluate->add_option("--gold", evaluate.gold, "gold JSONL")->required();
  c_evaluate->add_option("--pred", evaluate.pred, "predictions JSONL (id, label)")->required();
  c_evaluate->add_option("--schema", evaluate.schema, "gold schema: nli3 or nli2");
  c_evaluate->add_option("--pred-schema", evaluate.pred_schema,
                         "prediction schema, mapped onto the gold schema");
  c_evaluate->add_option("--out", evaluate.out, "write the JSON report here");

  TTestOptions ttest;
  auto* c_ttest = app.add_subcommand("ttest", "paired t-test on per-run scores");
  c_ttest->add_option("--a", ttest.a, "comma-separated scores")->required();
  c_ttest->add_option("--b", ttest.b, "comma-separated scores")->required();
  c_ttest->add_option("--alpha", ttest.alpha, "significance level")->check(CLI::Range(0.0, 1.0));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (c_sim_task->parsed()) return cmd_sim_task(sim_task, out);
    if (c_generate->parsed()) return cmd_generate(generate, out, err);
    if (c_selftrain->parsed()) return cmd_selftrain(selftrain, out, err);
    if (c_simulate->parsed()) return cmd_simulate(simulate, out);
    if (c_augment->parsed()) return cmd_augment(augment_opts, out);
    if (c_evaluate->parsed()) return cmd_evaluate(evaluate, out);
    if (c_ttest->parsed()) return cmd_ttest(ttest, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace selftrain::cli
