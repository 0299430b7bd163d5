#include "dyntrack/cli.hpp"
#include "dyntrack/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace dyntrack;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name)
      : root(fs::temp_directory_path() / ("dyntrack_test_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string put(const std::string& name, const nlohmann::json& doc) const {
    write_json(root / name, doc);
    return (root / name).string();
  }
  std::string path(const std::string& name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("synth, track, identify and eval chain") {
  Workspace ws("chain");
  const std::string scen = ws.put("scenario.json", {{"frames", 12}, {"sigma_Y", 0.0}});
  Run r = run({"synth", "--config", scen, "--out", ws.path("syn")});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(ws.root / "syn" / "frames" / "frame_00011.pgm"));
  CHECK(read_csv(ws.root / "syn" / "ground_truth.csv").rows.size() == 12);

  const std::string track = ws.put("track.json", {{"frames", "syn/frames"},
                                                  {"model", "syn/model.json"},
                                                  {"ground_truth", "syn/ground_truth.csv"}});
  r = run({"track", "--config", track, "--out", ws.path("trk")});
  REQUIRE(r.code == 0);
  const auto rows = parse_tracks(read_csv(ws.root / "trk" / "tracks.csv"));
  CHECK(rows.size() == 12);

  const std::string eval = ws.put("eval.json", {{"tracks", "trk/tracks.csv"},
                                                {"ground_truth", "syn/ground_truth.csv"}});
  r = run({"eval", "--config", eval, "--out", ws.path("ev")});
  REQUIRE(r.code == 0);
  const auto metrics = read_json(ws.root / "ev" / "metrics.json");
  CHECK(metrics.at("median").get<double>() < 3.0);

  const std::string ident = ws.put("identify.json", {{"frames", "syn/frames"},
                                                     {"track", "syn/rendered_centers.csv"},
                                                     {"rows", 21},
                                                     {"cols", 21},
                                                     {"order", 5}});
  r = run({"identify", "--config", ident, "--out", ws.path("id")});
  REQUIRE(r.code == 0);
  CHECK(read_model(ws.root / "id" / "model.json").order() == 5);

  const std::string martin =
      ws.put("martin.json", {{"models", {"syn/model.json", "id/model.json"}}});
  r = run({"martin", "--config", martin, "--out", ws.path("mt")});
  REQUIRE(r.code == 0);
  const CsvTable d = read_csv(ws.root / "mt" / "martin.csv");
  CHECK(d.number(0, d.column("distance")) == 0.0);
}

TEST_CASE("eval on tracks equal to the ground truth") {
  Workspace ws("eval");
  TrackResult tr;
  std::vector<Eigen::Vector2d> gt{{20, 20}, {21, 20.5}, {22, 21}};
  for (const auto& c : gt) {
    TrackState st;
    st.location = c;
    tr.frames.push_back(st);
  }
  write_file_atomic(ws.root / "tracks.csv", tracks_csv(tr));
  write_file_atomic(ws.root / "gt.csv", ground_truth_csv(gt));
  const std::string cfg = ws.put("eval.json", {{"tracks", "tracks.csv"}, {"ground_truth", "gt.csv"}});
  REQUIRE(run({"eval", "--config", cfg, "--out", ws.path("out")}).code == 0);
  const auto m = read_json(ws.root / "out" / "metrics.json");
  CHECK(m.at("median").get<double>() == 0.0);
  CHECK(m.at("rse").get<double>() == 0.0);
}

TEST_CASE("estimate writes error traces with noise bands") {
  Workspace ws("estimate");
  const std::string cfg = ws.put("est.json", {{"systems", 2}, {"frames", 8}, {"rows", 11}, {"cols", 11}});
  for (const std::string method : {"dk-ssd", "ekf", "pf"}) {
    const Run r = run({"estimate", "--config", cfg, "--method", method, "--seed", "3", "--out",
                       ws.path(method)});
    REQUIRE(r.code == 0);
    const CsvTable t = read_csv(ws.root / method / "errors.csv");
    CHECK(t.header == std::vector<std::string>{"t", "err", "std1", "std2", "std3", "method", "seed"});
    CHECK(t.rows.size() == 18);
    CHECK(t.rows[0][t.column("method")] == method);
  }
}

TEST_CASE("recognize over a small manifest") {
  Workspace ws("recognize");
  for (int k = 0; k < 2; ++k) {
    const std::string scen = ws.put("s" + std::to_string(k) + ".json",
                                    {{"frames", 10},
                                     {"sigma_Y", 0.0},
                                     {"seed", 5 + k},
                                     {"foreground", {{"seed", 11 + k}}}});
    REQUIRE(run({"synth", "--config", scen, "--out", ws.path("c" + std::to_string(k))}).code == 0);
  }
  nlohmann::json manifest = {
      {"training",
       {{{"model", "c0/model.json"}, {"label", "a"}, {"id", "m0"}},
        {{"model", "c1/model.json"}, {"label", "b"}, {"id", "m1"}}}},
      {"tests",
       {{{"id", "t0"}, {"frames", "c0/frames"}, {"label", "a"}, {"ground_truth", "c0/ground_truth.csv"}},
        {{"id", "t1"}, {"frames", "c1/frames"}, {"label", "b"}, {"ground_truth", "c1/ground_truth.csv"}}}},
      {"try_reflection", false}};
  const std::string cfg = ws.put("manifest.json", manifest);
  const Run r = run({"recognize", "--config", cfg, "--strategy", "tr-r", "--out", ws.path("rec")});
  REQUIRE(r.code == 0);
  const CsvTable report = read_csv(ws.root / "rec" / "report.csv");
  CHECK(report.header ==
        std::vector<std::string>{"test_id", "model_id", "label", "cost", "strategy"});
  CHECK(report.rows.size() == 4);
  CHECK(fs::exists(ws.root / "rec" / "tracks" / "t1.csv"));
  const std::string confusion = read_file(ws.root / "rec" / "confusion.csv");
  CHECK(confusion == "true\\predicted,a,b\na,1,0\nb,0,1\n");
}

TEST_CASE("errors are one JSON line with file and offset") {
  Workspace ws("errors");
  write_file_atomic(ws.root / "bad.json", "{\"frames\": 3,,}");
  Run r = run({"synth", "--config", ws.path("bad.json"), "--out", ws.path("o")});
  CHECK(r.code == 1);
  const auto e = nlohmann::json::parse(r.err);
  CHECK(e.at("file").get<std::string>() == ws.path("bad.json"));
  CHECK(e.at("offset").get<int>() == 13);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  const std::string unknown = ws.put("u.json", {{"tracks", "x.csv"}, {"ground_truth", "y.csv"}, {"extra", 1}});
  r = run({"eval", "--config", unknown, "--out", ws.path("o")});
  CHECK(r.code == 1);
  CHECK(nlohmann::json::parse(r.err).at("error").get<std::string>().find("extra") != std::string::npos);

  CHECK(run({"dance"}).code == 2);
  CHECK(run({"track", "--method", "ekf"}).code == 2);
  CHECK(run({"--help"}).code == 0);

  write_file_atomic(ws.root / "t.csv", "frame,loc_x,loc_y,objective,iterations,clamped\n0,1,2,3,4,0\n1,1,oops,3,4,0\n");
  write_file_atomic(ws.root / "g.csv", "frame,cx,cy\n0,1,2\n1,1,2\n");
  const std::string cfg = ws.put("e.json", {{"tracks", "t.csv"}, {"ground_truth", "g.csv"}});
  r = run({"eval", "--config", cfg, "--out", ws.path("o")});
  CHECK(r.code == 1);
  CHECK(nlohmann::json::parse(r.err).at("offset").get<int>() == 59);
}

TEST_CASE("synth output is identical across runs") {
  Workspace ws("determinism");
  const std::string scen = ws.put("scenario.json", {{"frames", 4}, {"background", {{"kind", "lds"}}}});
  REQUIRE(run({"synth", "--config", scen, "--seed", "7", "--out", ws.path("a")}).code == 0);
  REQUIRE(run({"synth", "--config", scen, "--seed", "7", "--out", ws.path("b")}).code == 0);
  for (const auto& entry : fs::recursive_directory_iterator(ws.root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), ws.root / "a");
    CHECK(read_file(entry.path()) == read_file(ws.root / "b" / rel));
  }
}
