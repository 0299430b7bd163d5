#include "dyntrack/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace dyntrack {

namespace fs = std::filesystem;
using nlohmann::json;

ParseError::ParseError(const std::string& file, std::uint64_t offset, const std::string& what)
    : Error(file + ":" + std::to_string(offset) + ": " + what), file_(file), offset_(offset) {}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- PGM

namespace {

struct PgmCursor {
  const std::string& bytes;
  const std::string& source;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1000000) throw ParseError(source, start, std::string(what) + " is too large");
      ++pos;
    }
    if (pos == start) throw ParseError(source, start, std::string("expected ") + what);
    return v;
  }
};

}  // namespace

Frame parse_pgm(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError(source, 0, "not a binary PGM (expected magic P5)");
  }
  PgmCursor cur{bytes, source, 2};
  const long width = cur.number("width");
  const long height = cur.number("height");
  const std::size_t maxval_at = cur.pos;
  const long maxval = cur.number("maxval");
  if (width < 1 || height < 1) throw ParseError(source, maxval_at, "image has zero extent");
  if (maxval < 1 || maxval > 65535) throw ParseError(source, maxval_at, "maxval out of range");
  if (cur.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[cur.pos]))) {
    throw ParseError(source, cur.pos, "expected whitespace after maxval");
  }
  ++cur.pos;
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(width) * height * bpp;
  if (bytes.size() - cur.pos < need) {
    throw ParseError(source, bytes.size(), "truncated pixel data: expected " + std::to_string(need) +
                                               " bytes after offset " + std::to_string(cur.pos));
  }
  Frame f(height, width);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + cur.pos);
  for (long r = 0; r < height; ++r) {
    for (long c = 0; c < width; ++c) {
      const std::size_t off = (static_cast<std::size_t>(r) * width + c) * bpp;
      const unsigned v = bpp == 1 ? p[off] : (static_cast<unsigned>(p[off]) << 8) | p[off + 1];
      if (static_cast<long>(v) > maxval) {
        throw ParseError(source, cur.pos + off, "pixel value exceeds maxval");
      }
      f(r, c) = static_cast<double>(v) / maxval;
    }
  }
  return f;
}

std::string encode_pgm(const Frame& frame) {
  std::string out = "P5\n" + std::to_string(frame.cols()) + " " + std::to_string(frame.rows()) +
                    "\n255\n";
  out.reserve(out.size() + frame.size());
  for (Eigen::Index r = 0; r < frame.rows(); ++r) {
    for (Eigen::Index c = 0; c < frame.cols(); ++c) {
      const double v = std::clamp(frame(r, c), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  return out;
}

Frame read_pgm(const fs::path& path) { return parse_pgm(read_file(path), path.string()); }

void write_pgm(const fs::path& path, const Frame& frame) {
  write_file_atomic(path, encode_pgm(frame));
}

std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.pgm", index);
  return buf;
}

FrameSequence read_sequence(const fs::path& dir) {
  FrameSequence frames;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = dir / frame_filename(i);
    if (!fs::exists(p)) break;
    frames.push_back(read_pgm(p));
    if (frames.back().rows() != frames.front().rows() || frames.back().cols() != frames.front().cols()) {
      throw Error(p.string() + ": frame size differs from " + (dir / frame_filename(0)).string());
    }
  }
  if (frames.empty()) throw Error("no frames (" + frame_filename(0) + ") in " + dir.string());
  return frames;
}

void write_sequence(const fs::path& dir, const FrameSequence& frames) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) write_pgm(dir / frame_filename(i), frames[i]);
}

// ---------------------------------------------------------------- JSON

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann counts characters read; the offending byte is the last one read.
    throw ParseError(source, e.byte > 0 ? e.byte - 1 : 0, e.what());
  }
}

json read_json(const fs::path& path) { return parse_json(read_file(path), path.string()); }

void write_json(const fs::path& path, const json& doc) {
  write_file_atomic(path, doc.dump(2) + "\n");
}

namespace {

json matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// Strict accessor for one JSON object: every key must be consumed or known.
class Fields {
 public:
  Fields(const json& doc, std::string source, std::string path)
      : doc_(doc), source_(std::move(source)), path_(std::move(path)) {
    if (!doc_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& what, const std::string& key = "") const {
    const std::string where = key.empty() ? path_ : path_ + (path_.empty() ? "" : ".") + key;
    throw ParseError(source_, 0, (where.empty() ? std::string() : where + ": ") + what);
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> known(keys.begin(), keys.end());
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!known.count(it.key())) fail("unknown key '" + it.key() + "'");
    }
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  const json& at(const std::string& key) const {
    if (!doc_.contains(key)) fail("missing key", key);
    return doc_.at(key);
  }

  double number(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number()) fail("expected a number", key);
    return v.get<double>();
  }

  int integer(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) fail("expected an integer", key);
    return v.get<int>();
  }

  std::uint64_t seed(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number_unsigned()) fail("expected a nonnegative integer", key);
    return v.get<std::uint64_t>();
  }

  std::string text(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_string()) fail("expected a string", key);
    return v.get<std::string>();
  }

  Eigen::VectorXd vector(const std::string& key) const { return to_vector(at(key), key); }

  Eigen::VectorXd to_vector(const json& v, const std::string& key) const {
    if (!v.is_array()) fail("expected an array", key);
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail("entry " + std::to_string(i) + " is not a number", key);
      out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
  }

  Eigen::MatrixXd matrix(const std::string& key, Eigen::Index rows, Eigen::Index cols) const {
    const json& v = at(key);
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != rows) {
      fail("expected " + std::to_string(rows) + " rows", key);
    }
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const json& row = v[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
        fail("row " + std::to_string(i) + " must have " + std::to_string(cols) + " entries", key);
      }
      for (Eigen::Index j = 0; j < cols; ++j) {
        const json& e = row[static_cast<std::size_t>(j)];
        if (!e.is_number()) fail("entry (" + std::to_string(i) + "," + std::to_string(j) + ") is not a number", key);
        M(i, j) = e.get<double>();
      }
    }
    return M;
  }

  Fields child(const std::string& key) const {
    return Fields(at(key), source_, path_.empty() ? key : path_ + "." + key);
  }

  Eigen::Vector2d pair(const std::string& key) const {
    const Eigen::VectorXd v = vector(key);
    if (v.size() != 2) fail("expected [x, y]", key);
    return v;
  }

 private:
  const json& doc_;
  std::string source_;
  std::string path_;
};

}  // namespace

json to_json(const LdsModel& model) {
  json doc;
  doc["rows"] = model.geometry.rows;
  doc["cols"] = model.geometry.cols;
  doc["order"] = model.order();
  doc["mu"] = vector_json(model.mu);
  doc["A"] = matrix_json(model.A);
  doc["C"] = matrix_json(model.C);
  doc["Q"] = matrix_json(model.Q);
  doc["R"] = model.R;
  return doc;
}

LdsModel model_from_json(const json& doc, const std::string& source) {
  const Fields f(doc, source, "");
  f.allow({"rows", "cols", "order", "mu", "A", "C", "Q", "R"});
  LdsModel m;
  m.geometry = {f.integer("rows"), f.integer("cols")};
  if (m.geometry.rows < 1 || m.geometry.cols < 1) f.fail("rows and cols must be positive");
  const int n = f.integer("order");
  if (n < 0) f.fail("order must be nonnegative");
  const Eigen::Index N = m.geometry.size();
  m.mu = f.vector("mu");
  if (m.mu.size() != N) f.fail("length " + std::to_string(m.mu.size()) + " != rows*cols", "mu");
  m.A = f.matrix("A", n, n);
  m.C = f.matrix("C", N, n);
  m.Q = f.matrix("Q", n, n);
  m.R = f.number("R");
  try {
    validate(m);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }
  return m;
}

LdsModel read_model(const fs::path& path) { return model_from_json(read_json(path), path.string()); }

void write_model(const fs::path& path, const LdsModel& model) { write_json(path, to_json(model)); }

json to_json(const ScenarioSpec& s) {
  const auto v2 = [](const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); };
  json doc;
  doc["foreground"] = {{"order", s.foreground.order},
                       {"rows", s.foreground.geometry.rows},
                       {"cols", s.foreground.geometry.cols},
                       {"spectral_radius", s.foreground.spectral_radius},
                       {"output_std", s.foreground.output_std},
                       {"seed", s.foreground.seed}};
  doc["background"] = {{"kind", to_string(s.background.kind)},
                       {"order", s.background.order},
                       {"spectral_radius", s.background.spectral_radius},
                       {"output_std", s.background.output_std},
                       {"low", s.background.low},
                       {"high", s.background.high},
                       {"seed", s.background.seed}};
  doc["trajectory"] = {{"kind", to_string(s.trajectory.kind)},
                       {"start", v2(s.trajectory.start)},
                       {"velocity", v2(s.trajectory.velocity)},
                       {"amplitude", v2(s.trajectory.amplitude)},
                       {"period", s.trajectory.period},
                       {"step_std", s.trajectory.step_std},
                       {"seed", s.trajectory.seed}};
  doc["frame_rows"] = s.frame_rows;
  doc["frame_cols"] = s.frame_cols;
  doc["frames"] = s.frames;
  doc["sigma_Y"] = s.sigma_Y;
  doc["seed"] = s.seed;
  return doc;
}

ScenarioSpec scenario_from_json(const json& doc, const std::string& source) {
  ScenarioSpec s;
  const Fields f(doc, source, "");
  f.allow({"foreground", "background", "trajectory", "frame_rows", "frame_cols", "frames",
           "sigma_Y", "seed"});
  if (f.has("foreground")) {
    const Fields g = f.child("foreground");
    g.allow({"order", "rows", "cols", "spectral_radius", "output_std", "seed"});
    if (g.has("order")) s.foreground.order = g.integer("order");
    if (g.has("rows")) s.foreground.geometry.rows = g.integer("rows");
    if (g.has("cols")) s.foreground.geometry.cols = g.integer("cols");
    if (g.has("spectral_radius")) s.foreground.spectral_radius = g.number("spectral_radius");
    if (g.has("output_std")) s.foreground.output_std = g.number("output_std");
    if (g.has("seed")) s.foreground.seed = g.seed("seed");
  }
  if (f.has("background")) {
    const Fields b = f.child("background");
    b.allow({"kind", "order", "spectral_radius", "output_std", "low", "high", "seed"});
    try {
      if (b.has("kind")) s.background.kind = parse_background(b.text("kind"));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      b.fail(e.what(), "kind");
    }
    if (b.has("order")) s.background.order = b.integer("order");
    if (b.has("spectral_radius")) s.background.spectral_radius = b.number("spectral_radius");
    if (b.has("output_std")) s.background.output_std = b.number("output_std");
    if (b.has("low")) s.background.low = b.number("low");
    if (b.has("high")) s.background.high = b.number("high");
    if (b.has("seed")) s.background.seed = b.seed("seed");
  }
  if (f.has("trajectory")) {
    const Fields t = f.child("trajectory");
    t.allow({"kind", "start", "velocity", "amplitude", "period", "step_std", "seed"});
    try {
      if (t.has("kind")) s.trajectory.kind = parse_trajectory(t.text("kind"));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      t.fail(e.what(), "kind");
    }
    if (t.has("start")) s.trajectory.start = t.pair("start");
    if (t.has("velocity")) s.trajectory.velocity = t.pair("velocity");
    if (t.has("amplitude")) s.trajectory.amplitude = t.pair("amplitude");
    if (t.has("period")) s.trajectory.period = t.number("period");
    if (t.has("step_std")) s.trajectory.step_std = t.number("step_std");
    if (t.has("seed")) s.trajectory.seed = t.seed("seed");
  }
  if (f.has("frame_rows")) s.frame_rows = f.integer("frame_rows");
  if (f.has("frame_cols")) s.frame_cols = f.integer("frame_cols");
  if (f.has("frames")) s.frames = f.integer("frames");
  if (f.has("sigma_Y")) s.sigma_Y = f.number("sigma_Y");
  if (f.has("seed")) s.seed = f.seed("seed");
  try {
    validate(s);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }
  return s;
}

json states_to_json(const StateSequence& states, const Eigen::VectorXd& initial_state) {
  json doc;
  doc["initial_state"] = vector_json(initial_state);
  json rows = json::array();
  for (const auto& x : states) rows.push_back(vector_json(x));
  doc["states"] = std::move(rows);
  return doc;
}

StateSequence states_from_json(const json& doc, const std::string& source,
                               Eigen::VectorXd* initial_state) {
  const Fields f(doc, source, "");
  f.allow({"initial_state", "states"});
  if (initial_state) *initial_state = f.vector("initial_state");
  const json& rows = f.at("states");
  if (!rows.is_array()) f.fail("expected an array", "states");
  StateSequence out;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    out.push_back(f.to_vector(rows[t], "states[" + std::to_string(t) + "]"));
    if (out.back().size() != out.front().size()) f.fail("state dimensions differ", "states");
  }
  return out;
}

// ---------------------------------------------------------------- CSV

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError(source, 0, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(source, row_offsets[row],
                     "column '" + header[col] + "': '" + s + "' is not a number");
  }
  return v;
}

long long CsvTable::integer(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(source, row_offsets[row],
                     "column '" + header[col] + "': '" + s + "' is not an integer");
  }
  return v;
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable t;
  t.source = source;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    const std::size_t start = pos;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t a = 0;
    while (true) {
      const std::size_t b = line.find(',', a);
      fields.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
      if (b == std::string::npos) break;
      a = b + 1;
    }
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError(source, start, "expected " + std::to_string(t.header.size()) +
                                          " fields, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.row_offsets.push_back(start);
  }
  if (first) throw ParseError(source, 0, "empty CSV (no header)");
  return t;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path), path.string()); }

std::string tracks_csv(const TrackResult& track) {
  std::string out = "frame,loc_x,loc_y,objective,iterations,clamped\n";
  for (std::size_t t = 0; t < track.frames.size(); ++t) {
    const TrackState& f = track.frames[t];
    out += std::to_string(t) + "," + format_double(f.location.x()) + "," +
           format_double(f.location.y()) + "," + format_double(f.objective) + "," +
           std::to_string(f.iterations) + "," + (f.clamped ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<TrackRow> parse_tracks(const CsvTable& table) {
  const std::size_t cf = table.column("frame");
  const std::size_t cx = table.column("loc_x");
  const std::size_t cy = table.column("loc_y");
  const std::size_t co = table.column("objective");
  const std::size_t ci = table.column("iterations");
  const std::size_t cc = table.column("clamped");
  std::vector<TrackRow> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    TrackRow row;
    row.frame = table.integer(r, cf);
    if (row.frame != static_cast<long long>(r)) {
      throw ParseError(table.source, table.row_offsets[r], "frames must be numbered 0, 1, 2, ...");
    }
    row.location = {table.number(r, cx), table.number(r, cy)};
    row.objective = table.number(r, co);
    row.iterations = static_cast<int>(table.integer(r, ci));
    row.clamped = table.integer(r, cc) != 0;
    out.push_back(row);
  }
  return out;
}

std::string ground_truth_csv(const std::vector<Eigen::Vector2d>& centers) {
  std::string out = "frame,cx,cy\n";
  for (std::size_t t = 0; t < centers.size(); ++t) {
    out += std::to_string(t) + "," + format_double(centers[t].x()) + "," +
           format_double(centers[t].y()) + "\n";
  }
  return out;
}

std::vector<Eigen::Vector2d> parse_ground_truth(const CsvTable& table) {
  const std::size_t cf = table.column("frame");
  const std::size_t cx = table.column("cx");
  const std::size_t cy = table.column("cy");
  std::vector<Eigen::Vector2d> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.integer(r, cf) != static_cast<long long>(r)) {
      throw ParseError(table.source, table.row_offsets[r], "frames must be numbered 0, 1, 2, ...");
    }
    out.emplace_back(table.number(r, cx), table.number(r, cy));
  }
  return out;
}

std::string errors_csv(const StateEstimate& estimate, const std::string& method,
                       std::uint64_t seed) {
  std::string out = "t,err,std1,std2,std3,method,seed\n";
  const auto& b = estimate.noise_bands;
  for (std::size_t t = 0; t < estimate.errors.size(); ++t) {
    out += std::to_string(t) + "," + format_double(estimate.errors[t]) + "," +
           format_double(b[0]) + "," + format_double(b[1]) + "," + format_double(b[2]) + "," +
           method + "," + std::to_string(seed) + "\n";
  }
  return out;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "test_id,model_id,label,cost,strategy\n";
  for (const auto& r : rows) {
    out += r.test_id + "," + r.model_id + "," + r.label + "," + format_double(r.cost) + "," +
           r.strategy + "\n";
  }
  return out;
}

std::string confusion_csv(const std::vector<std::string>& labels,
                          const std::vector<std::vector<int>>& counts) {
  std::string out = "true\\predicted";
  for (const auto& l : labels) out += "," + l;
  out += "\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += labels[i];
    for (std::size_t j = 0; j < labels.size(); ++j) out += "," + std::to_string(counts[i][j]);
    out += "\n";
  }
  return out;
}

}  // namespace dyntrack
