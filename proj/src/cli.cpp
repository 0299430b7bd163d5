#include "dyntrack/cli.hpp"

#include "dyntrack/baselines.hpp"
#include "dyntrack/io.hpp"
#include "dyntrack/metrics.hpp"
#include "dyntrack/recognition.hpp"
#include "dyntrack/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>

namespace dyntrack {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string method;
  std::string strategy;
  std::string feature;
};

// Config document plus the directory its relative paths resolve against.
class Config {
 public:
  Config(const std::string& path) {
    if (path.empty()) {
      doc_ = json::object();
      base_ = fs::current_path();
      source_ = "<defaults>";
    } else {
      doc_ = read_json(path);
      source_ = path;
      base_ = fs::absolute(path).parent_path();
      if (!doc_.is_object()) fail("config must be a JSON object");
    }
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, 0, what); }

  void allow(std::initializer_list<const char*> keys) const { allow(doc_, keys, ""); }

  void allow(const json& obj, std::initializer_list<const char*> keys, const std::string& where) const {
    if (!obj.is_object()) fail(where + ": expected an object");
    std::set<std::string> known(keys.begin(), keys.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!known.count(it.key())) {
        fail("unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
      }
    }
  }

  const json& doc() const { return doc_; }
  const std::string& source() const { return source_; }
  bool has(const std::string& key) const { return doc_.contains(key); }

  const json& at(const std::string& key) const {
    if (!doc_.contains(key)) fail("missing key '" + key + "'");
    return doc_.at(key);
  }

  template <typename T>
  T get(const json& obj, const std::string& key, const T& fallback) const {
    if (!obj.contains(key)) return fallback;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail("key '" + key + "' has the wrong type");
    }
  }

  template <typename T>
  T get(const std::string& key, const T& fallback) const {
    return get(doc_, key, fallback);
  }

  template <typename T>
  T require(const std::string& key) const {
    const json& v = at(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      fail("key '" + key + "' has the wrong type");
    }
  }

  fs::path path(const json& value, const std::string& key) const {
    if (!value.is_string()) fail("key '" + key + "' must be a path string");
    fs::path p = value.get<std::string>();
    if (p.is_relative()) p = base_ / p;
    if (!fs::exists(p)) fail("path for '" + key + "' does not exist: " + p.string());
    return p;
  }

  fs::path path(const std::string& key) const { return path(at(key), key); }

  Eigen::Vector2d pair(const json& value, const std::string& key) const {
    if (!value.is_array() || value.size() != 2 || !value[0].is_number() || !value[1].is_number()) {
      fail("key '" + key + "' must be [x, y]");
    }
    return {value[0].get<double>(), value[1].get<double>()};
  }

 private:
  json doc_;
  std::string source_;
  fs::path base_;
};

FeatureKind parse_feature(const std::string& name) {
  if (name == "hist") return FeatureKind::kKernelHistogram;
  if (name == "identity") return FeatureKind::kIdentity;
  throw Error("unknown feature '" + name + "' (expected hist or identity)");
}

TrackerConfig tracker_config(const Config& cfg, const Options& opt) {
  TrackerConfig t;
  if (cfg.has("tracker")) {
    const json& j = cfg.at("tracker");
    cfg.allow(j, {"sigma_H2", "max_iters", "grad_tol", "rel_tol", "bins", "sharpness", "feature",
                  "direction", "identity_R", "armijo"},
              "tracker");
    t.sigma_H2 = cfg.get(j, "sigma_H2", t.sigma_H2);
    t.max_iters = cfg.get(j, "max_iters", t.max_iters);
    t.grad_tol = cfg.get(j, "grad_tol", t.grad_tol);
    t.rel_tol = cfg.get(j, "rel_tol", t.rel_tol);
    t.binning.bins = cfg.get(j, "bins", t.binning.bins);
    t.binning.sharpness = cfg.get(j, "sharpness", t.binning.sharpness);
    t.identity_R = cfg.get(j, "identity_R", t.identity_R);
    if (j.contains("feature")) t.feature = parse_feature(cfg.get<std::string>(j, "feature", ""));
    if (j.contains("direction")) {
      const auto d = cfg.get<std::string>(j, "direction", "");
      if (d == "gauss-newton") {
        t.direction = DescentDirection::kGaussNewton;
      } else if (d == "gradient") {
        t.direction = DescentDirection::kGradient;
      } else {
        cfg.fail("tracker.direction must be gauss-newton or gradient");
      }
    }
    if (j.contains("armijo")) {
      const json& a = j.at("armijo");
      cfg.allow(a, {"initial_step", "backtrack", "sufficient_decrease", "max_backtracks"},
                "tracker.armijo");
      t.armijo.initial_step = cfg.get(a, "initial_step", t.armijo.initial_step);
      t.armijo.backtrack = cfg.get(a, "backtrack", t.armijo.backtrack);
      t.armijo.sufficient_decrease = cfg.get(a, "sufficient_decrease", t.armijo.sufficient_decrease);
      t.armijo.max_backtracks = cfg.get(a, "max_backtracks", t.armijo.max_backtracks);
    }
  }
  if (!opt.feature.empty()) t.feature = parse_feature(opt.feature);
  validate(t);
  return t;
}

std::uint64_t seed_of(const Config& cfg, const Options& opt, std::uint64_t fallback = 0) {
  if (opt.seed) return *opt.seed;
  return cfg.get<std::uint64_t>("seed", fallback);
}

// ---------------------------------------------------------------- subcommands

void cmd_synth(const Options& opt, std::ostream& out) {
  ScenarioSpec spec;
  if (!opt.config.empty()) spec = scenario_from_json(read_json(opt.config), opt.config);
  if (opt.seed) spec.seed = *opt.seed;
  const Scenario sc = composite_sequence(spec);
  const fs::path dir = opt.out;
  write_sequence(dir / "frames", sc.frames);
  write_file_atomic(dir / "ground_truth.csv", ground_truth_csv(sc.truth.centers));
  write_file_atomic(dir / "rendered_centers.csv", ground_truth_csv(sc.truth.rendered_centers));
  write_json(dir / "states.json", states_to_json(sc.truth.states, sc.truth.initial_state));
  write_model(dir / "model.json", sc.truth.model);
  write_json(dir / "scenario.json", to_json(spec));
  out << "synth: " << sc.frames.size() << " frames written to " << (dir / "frames").string() << "\n";
}

void cmd_identify(const Options& opt, std::ostream& out) {
  const Config cfg(opt.config);
  cfg.allow({"patches", "frames", "track", "rows", "cols", "order"});
  const int order = cfg.require<int>("order");
  Identification id;
  if (cfg.has("patches")) {
    id = identify(read_sequence(cfg.path("patches")), order);
  } else {
    const FrameSequence frames = read_sequence(cfg.path("frames"));
    const TemplateGeometry g{cfg.require<int>("rows"), cfg.require<int>("cols")};
    const fs::path track_path = cfg.path("track");
    const CsvTable table = read_csv(track_path);
    std::vector<Eigen::Vector2d> locs;
    if (std::find(table.header.begin(), table.header.end(), "loc_x") != table.header.end()) {
      for (const auto& r : parse_tracks(table)) locs.push_back(r.location);
    } else {
      locs = parse_ground_truth(table);
    }
    if (locs.size() != frames.size()) {
      throw Error(track_path.string() + ": " + std::to_string(locs.size()) + " locations for " +
                  std::to_string(frames.size()) + " frames");
    }
    std::vector<Eigen::VectorXd> patches;
    for (std::size_t t = 0; t < frames.size(); ++t) patches.push_back(extract_patch(frames[t], locs[t], g));
    id = identify(patches, g, order);
  }
  write_model(fs::path(opt.out) / "model.json", id.model);
  for (const auto& d : id.diagnostics) out << "diagnostic: " << d << "\n";
  out << "identify: order " << id.model.order() << ", R " << format_double(id.model.R) << "\n";
}

void cmd_track(const Options& opt, std::ostream& out) {
  const Config cfg(opt.config);
  cfg.allow({"frames", "model", "initial_location", "ground_truth", "tracker"});
  const FrameSequence frames = read_sequence(cfg.path("frames"));
  const LdsModel model = read_model(cfg.path("model"));
  Eigen::Vector2d start;
  if (cfg.has("initial_location")) {
    start = cfg.pair(cfg.at("initial_location"), "initial_location");
  } else {
    const auto gt = parse_ground_truth(read_csv(cfg.path("ground_truth")));
    if (gt.empty()) cfg.fail("ground truth has no rows");
    start = gt.front();
  }
  const TrackerConfig tc = tracker_config(cfg, opt);
  const TrackResult tr = track_sequence(frames, model, start, tc);
  write_file_atomic(fs::path(opt.out) / "tracks.csv", tracks_csv(tr));
  for (const auto& d : tr.diagnostics) out << "diagnostic: " << d << "\n";
  out << "track: " << tr.frames.size() << " frames, mean objective "
      << format_double(tr.mean_objective) << (tr.any_clamped() ? ", clamped" : "") << "\n";
}

void cmd_estimate(const Options& opt, std::ostream& out) {
  const Config cfg(opt.config);
  cfg.allow({"systems", "initializations", "frames", "order", "rows", "cols", "spectral_radius",
             "output_std", "sigma_Y", "particles", "init", "init_std", "method", "seed", "tracker"});
  const int systems = cfg.get("systems", 10);
  const int inits = cfg.get("initializations", 1);
  const int T = cfg.get("frames", 100);
  const int order = cfg.get("order", 5);
  const TemplateGeometry g{cfg.get("rows", 21), cfg.get("cols", 21)};
  const double rho = cfg.get("spectral_radius", 0.9);
  const double output_std = cfg.get("output_std", 0.05);
  const double sigma_Y = cfg.get("sigma_Y", 0.0);
  const std::string init = cfg.get<std::string>("init", "pinv");
  const double init_std = cfg.get("init_std", 1.0);
  if (init != "pinv" && init != "random") cfg.fail("init must be pinv or random");
  if (systems < 1 || inits < 1 || T < 1) cfg.fail("systems, initializations and frames must be >= 1");
  const Estimator method =
      parse_estimator(opt.method.empty() ? cfg.get<std::string>("method", "dk-ssd") : opt.method);
  const std::uint64_t seed = seed_of(cfg, opt);

  EstimatorConfig ec;
  ec.tracker = tracker_config(cfg, opt);
  ec.particles = cfg.get("particles", 100);

  std::string csv;
  std::vector<std::vector<double>> traces;
  std::vector<double> std1;
  for (int s = 0; s < systems; ++s) {
    const std::uint64_t sys_seed = seed + static_cast<std::uint64_t>(s);
    const LdsModel model = random_model(order, g, rho, sys_seed, output_std);
    SimulationOptions so;
    so.obs_noise_sigma = sigma_Y;
    const Simulation sim = simulate(model, T + 1, sys_seed + 1000003, so);
    std::vector<Eigen::VectorXd> patches;
    for (const Frame& f : sim.templates) patches.push_back(stack(f));
    std::mt19937_64 init_rng(sys_seed + 2000003);
    std::normal_distribution<double> normal(0.0, init_std);
    for (int k = 0; k < inits; ++k) {
      Eigen::VectorXd x0 = init_state(model, patches[0]);
      if (init == "random") {
        for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = normal(init_rng);
      }
      const std::uint64_t run_seed = sys_seed * 1000 + static_cast<std::uint64_t>(k);
      ec.seed = run_seed;
      const StateEstimate est = estimate_states(patches, sim.states, model, method, x0, ec);
      const std::string rows = errors_csv(est, to_string(method), run_seed);
      csv += csv.empty() ? rows : rows.substr(rows.find('\n') + 1);
      traces.push_back(est.errors);
      std1.push_back(est.noise_bands[0]);
    }
  }
  json summary;
  summary["method"] = to_string(method);
  summary["runs"] = traces.size();
  summary["median_std1"] = median(std1);
  std::vector<double> med;
  for (std::size_t t = 0; t < traces.front().size(); ++t) {
    std::vector<double> v;
    for (const auto& tr : traces) v.push_back(tr[t]);
    med.push_back(median(v));
  }
  summary["median_error"] = med;
  write_file_atomic(fs::path(opt.out) / "errors.csv", csv);
  write_json(fs::path(opt.out) / "estimate_summary.json", summary);
  out << "estimate: " << to_string(method) << ", " << traces.size() << " runs, final median error "
      << format_double(med.back()) << ", median std1 " << format_double(median(std1)) << "\n";
}

void cmd_martin(const Options& opt, std::ostream& out) {
  const Config cfg(opt.config);
  cfg.allow({"models"});
  const json& list = cfg.at("models");
  if (!list.is_array() || list.empty()) cfg.fail("models must be a nonempty array of paths");
  std::vector<LdsModel> models;
  for (std::size_t i = 0; i < list.size(); ++i) models.push_back(read_model(cfg.path(list[i], "models")));
  std::string csv = "i,j,distance\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = 0; j < models.size(); ++j) {
      const double d = martin_distance(models[i], models[j]);
      csv += std::to_string(i) + "," + std::to_string(j) + "," + format_double(d) + "\n";
      out << (j ? " " : "") << format_double(d);
    }
    out << "\n";
  }
  write_file_atomic(fs::path(opt.out) / "martin.csv", csv);
}

void cmd_recognize(const Options& opt, std::ostream& out) {
  const Config cfg(opt.config);
  cfg.allow({"training", "tests", "window", "try_reflection", "order", "strategy", "tracker"});
  RecognitionConfig rc;
  rc.tracker = tracker_config(cfg, opt);
  rc.try_reflection = cfg.get("try_reflection", true);
  rc.order = cfg.get("order", 0);
  if (cfg.has("window")) {
    const json& w = cfg.at("window");
    cfg.allow(w, {"rows", "cols"}, "window");
    rc.window = TemplateGeometry{cfg.get(w, "rows", 0), cfg.get(w, "cols", 0)};
    validate(*rc.window);
  }
  const Strategy strategy =
      parse_strategy(opt.strategy.empty() ? cfg.get<std::string>("strategy", "tr-c") : opt.strategy);

  TrainingSet all;
  const json& training = cfg.at("training");
  if (!training.is_array() || training.empty()) cfg.fail("training must be a nonempty array");
  for (std::size_t i = 0; i < training.size(); ++i) {
    cfg.allow(training[i], {"model", "label", "id"}, "training[" + std::to_string(i) + "]");
    TrainingModel tm;
    tm.model = read_model(cfg.path(training[i].value("model", json()), "model"));
    tm.label = cfg.get<std::string>(training[i], "label", "");
    tm.id = cfg.get<std::string>(training[i], "id", "m" + std::to_string(i));
    if (tm.label.empty()) cfg.fail("training[" + std::to_string(i) + "] needs a label");
    all.models.push_back(std::move(tm));
  }

  std::vector<std::string> labels = all.labels();
  const json& tests = cfg.at("tests");
  if (!tests.is_array() || tests.empty()) cfg.fail("tests must be a nonempty array");
  std::vector<ReportRow> report;
  std::string predictions = "test_id,true_label,predicted_label,model_id\n";
  std::vector<std::pair<std::string, std::string>> outcomes;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const json& tj = tests[i];
    const std::string where = "tests[" + std::to_string(i) + "]";
    cfg.allow(tj, {"id", "frames", "label", "initial_location", "ground_truth", "exclude"}, where);
    const std::string test_id = cfg.get<std::string>(tj, "id", "t" + std::to_string(i));
    const FrameSequence frames = read_sequence(cfg.path(tj.value("frames", json()), where + ".frames"));
    Eigen::Vector2d start;
    if (tj.contains("initial_location")) {
      start = cfg.pair(tj.at("initial_location"), where + ".initial_location");
    } else {
      const auto gt = parse_ground_truth(read_csv(cfg.path(tj.value("ground_truth", json()), where + ".ground_truth")));
      if (gt.empty()) cfg.fail(where + ": ground truth has no rows");
      start = gt.front();
    }
    const auto exclude = cfg.get<std::vector<std::string>>(tj, "exclude", {});
    TrainingSet ts;
    for (const auto& m : all.models) {
      if (std::find(exclude.begin(), exclude.end(), m.id) == exclude.end()) ts.models.push_back(m);
    }
    const RecognitionResult r = recognize(strategy, frames, start, ts, rc);
    for (std::size_t k = 0; k < r.costs.size(); ++k) {
      report.push_back({test_id, ts.models[k].id, ts.models[k].label, r.costs[k], to_string(strategy)});
    }
    const std::string truth = cfg.get<std::string>(tj, "label", "");
    predictions += test_id + "," + truth + "," + r.label + "," + ts.models[r.winner].id + "\n";
    if (!truth.empty()) {
      outcomes.emplace_back(truth, r.label);
      if (std::find(labels.begin(), labels.end(), truth) == labels.end()) labels.push_back(truth);
    }
    write_file_atomic(fs::path(opt.out) / "tracks" / (test_id + ".csv"), tracks_csv(r.tracks));
    out << test_id << ": " << r.label << " (model " << ts.models[r.winner].id << ")\n";
  }
  std::vector<std::vector<int>> counts(labels.size(), std::vector<int>(labels.size(), 0));
  int correct = 0;
  for (const auto& [truth, pred] : outcomes) {
    const auto ti = std::find(labels.begin(), labels.end(), truth) - labels.begin();
    const auto pi = std::find(labels.begin(), labels.end(), pred) - labels.begin();
    ++counts[ti][pi];
    correct += truth == pred;
  }
  write_file_atomic(fs::path(opt.out) / "report.csv", report_csv(report));
  write_file_atomic(fs::path(opt.out) / "predictions.csv", predictions);
  write_file_atomic(fs::path(opt.out) / "confusion.csv", confusion_csv(labels, counts));
  if (!outcomes.empty()) {
    out << "accuracy: " << correct << "/" << outcomes.size() << "\n";
  }
}

void cmd_eval(const Options& opt, std::ostream& out) {
  const Config cfg(opt.config);
  cfg.allow({"tracks", "ground_truth"});
  std::vector<Eigen::Vector2d> tracks;
  for (const auto& r : parse_tracks(read_csv(cfg.path("tracks")))) tracks.push_back(r.location);
  const auto truth = parse_ground_truth(read_csv(cfg.path("ground_truth")));
  const MetricsReport m = compute_metrics(tracks, truth);
  std::string csv = "frame,err\n";
  for (std::size_t t = 0; t < m.errors.size(); ++t) {
    csv += std::to_string(t) + "," + format_double(m.errors[t]) + "\n";
  }
  json summary = {{"median", m.summary.median},
                  {"rse", m.summary.rse},
                  {"mean", m.summary.mean},
                  {"std", m.summary.std},
                  {"frames", m.errors.size()}};
  write_file_atomic(fs::path(opt.out) / "metrics.csv", csv);
  write_json(fs::path(opt.out) / "metrics.json", summary);
  out << "eval: median " << format_double(m.summary.median) << ", rse "
      << format_double(m.summary.rse) << ", mean " << format_double(m.summary.mean) << " +- "
      << format_double(m.summary.std) << "\n";
}

void report_error(std::ostream& err, const std::string& message, const std::string& file = "",
                  std::optional<std::uint64_t> offset = std::nullopt) {
  json e = {{"error", message}};
  if (!file.empty()) e["file"] = file;
  if (offset) e["offset"] = *offset;
  err << e.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic template tracking and recognition"};
  app.require_subcommand(1);
  Options opt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "random seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--feature", opt.feature, "hist or identity")
        ->check(CLI::IsMember({"hist", "identity"}));
    return sub;
  };
  auto* synth = add_common(app.add_subcommand("synth", "render a synthetic scenario"));
  auto* ident = add_common(app.add_subcommand("identify", "learn an LDS from patches"));
  auto* track = add_common(app.add_subcommand("track", "track a sequence with a model"));
  auto* estimate = add_common(app.add_subcommand("estimate", "fixed-location state estimation benchmark"));
  estimate->add_option("--method", opt.method, "dk-ssd, ekf or pf")
      ->check(CLI::IsMember({"dk-ssd", "ekf", "pf"}));
  auto* martin = add_common(app.add_subcommand("martin", "pairwise Martin distances"));
  auto* recog = add_common(app.add_subcommand("recognize", "track and recognize test sequences"));
  recog->add_option("--strategy", opt.strategy, "tr-r, t+r or tr-c")
      ->check(CLI::IsMember({"tr-r", "t+r", "tr-c"}));
  auto* eval = add_common(app.add_subcommand("eval", "tracking error metrics"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, e.what());
    return 2;
  }

  try {
    fs::create_directories(opt.out);
    if (synth->parsed()) cmd_synth(opt, out);
    if (ident->parsed()) cmd_identify(opt, out);
    if (track->parsed()) cmd_track(opt, out);
    if (estimate->parsed()) cmd_estimate(opt, out);
    if (martin->parsed()) cmd_martin(opt, out);
    if (recog->parsed()) cmd_recognize(opt, out);
    if (eval->parsed()) cmd_eval(opt, out);
  } catch (const ParseError& e) {
    report_error(err, e.what(), e.file(), e.offset());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, e.what());
    return 1;
  }
  return 0;
}

}  // namespace dyntrack
