#include "ep2t/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "ep2t/binary.hpp"
#include "ep2t/error.hpp"
#include "ep2t/parallel.hpp"
#include "ep2t/rng.hpp"
#include "ep2t/weights_io.hpp"

namespace ep2t {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::ConfigError, "'" + key + "' expects " + want + ", got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* want) {
  const std::string v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, text, want);
  return out;
}

std::size_t parse_positive(const std::string& key, const std::string& text) {
  const auto n = parse_number<std::size_t>(key, text, "a positive integer");
  if (n == 0) bad_value(key, text, "a positive integer");
  return n;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, text, "true or false");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

using Clock = std::chrono::steady_clock;

volatile std::size_t g_bench_sink = 0;  // keeps timed selections from being optimized away

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  if (cfg.fen_count == 0 || cfg.sample_n == 0 || cfg.k == 0 || cfg.channels == 0 ||
      cfg.grid.count() == 0) {
    throw Error(ErrorCode::ConfigError, "counts and grid dimensions must be positive");
  }
  if (cfg.domain_weights.size() != 3) {
    throw Error(ErrorCode::ConfigError,
                "exactly three (alpha, beta) configurations are required, got " +
                    std::to_string(cfg.domain_weights.size()));
  }
  for (const DomainWeights& w : cfg.domain_weights) validate(w);
  validate(cfg.tensorize_config());
  if (cfg.threads < 0) throw Error(ErrorCode::ConfigError, "threads must be >= 0");
  if (cfg.crop_row < 0 || cfg.crop_col < 0) {
    throw Error(ErrorCode::ConfigError, "crop origin must be non-negative");
  }
}

GridDims parse_grid_dims(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) bad_value("grid", text, "three comma-separated sizes");
  return {parse_positive("grid", parts[0]), parse_positive("grid", parts[1]),
          parse_positive("grid", parts[2])};
}

std::vector<DomainWeights> parse_domain_weights(const std::string& text) {
  std::vector<DomainWeights> out;
  for (const std::string& pair : split(text, ',')) {
    const auto ab = split(pair, ':');
    if (ab.size() != 2) bad_value("domain-weights", text, "alpha:beta pairs separated by commas");
    DomainWeights w{parse_number<double>("domain-weights", ab[0], "a number"),
                    parse_number<double>("domain-weights", ab[1], "a number")};
    validate(w);
    out.push_back(w);
  }
  if (out.empty()) bad_value("domain-weights", text, "at least one alpha:beta pair");
  return out;
}

void apply_setting(PipelineConfig& cfg, const std::string& raw_key, const std::string& value) {
  const std::string key = trim(raw_key);
  if (key == "fen-count") {
    cfg.fen_count = parse_positive(key, value);
  } else if (key == "sample-n") {
    cfg.sample_n = parse_positive(key, value);
  } else if (key == "grid") {
    cfg.grid = parse_grid_dims(value);
  } else if (key == "k") {
    cfg.k = parse_positive(key, value);
  } else if (key == "domain-weights") {
    cfg.domain_weights = parse_domain_weights(value);
  } else if (key == "channels") {
    cfg.channels = parse_positive(key, value);
  } else if (key == "tensor-height") {
    cfg.tensor_height = parse_positive(key, value);
  } else if (key == "tensor-width") {
    cfg.tensor_width = parse_positive(key, value);
  } else if (key == "bins") {
    cfg.bins = parse_positive(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value, "an unsigned integer");
  } else if (key == "precision") {
    const std::string v = trim(value);
    if (v == "f32" || v == "32") {
      cfg.precision = Precision::F32;
    } else if (v == "f64" || v == "64") {
      cfg.precision = Precision::F64;
    } else {
      bad_value(key, value, "f32 or f64");
    }
  } else if (key == "threads") {
    cfg.threads = parse_number<int>(key, value, "a non-negative integer");
  } else if (key == "knn") {
    const std::string v = trim(value);
    if (v == "grid") {
      cfg.knn = KnnMethod::Grid;
    } else if (v == "exhaustive") {
      cfg.knn = KnnMethod::Exhaustive;
    } else {
      bad_value(key, value, "grid or exhaustive");
    }
  } else if (key == "crop") {
    cfg.crop = parse_bool(key, value);
  } else if (key == "crop-row") {
    cfg.crop_row = parse_number<int>(key, value, "a non-negative integer");
  } else if (key == "crop-col") {
    cfg.crop_col = parse_number<int>(key, value, "a non-negative integer");
  } else {
    throw Error(ErrorCode::ConfigError, "unknown setting '" + key + "'");
  }
}

void apply_config_text(PipelineConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError,
                  "config line " + std::to_string(line_no) + ": expected `key = value`");
    }
    try {
      apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.code(), "config line " + std::to_string(line_no) + ": " + e.detail());
    }
  }
}

void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config file " + path.string());
  apply_config_text(cfg, in);
}

EventWindow crop_window(const EventWindow& window, const PipelineConfig& cfg) {
  if (!cfg.crop) return window;
  const int h0 = cfg.crop_row;
  const int w0 = cfg.crop_col;
  const int hh = static_cast<int>(cfg.tensor_height);
  const int ww = static_cast<int>(cfg.tensor_width);
  if (h0 + hh > window.geom.height || w0 + ww > window.geom.width) {
    throw Error(ErrorCode::ConfigError,
                "crop " + std::to_string(hh) + "x" + std::to_string(ww) + " at (" +
                    std::to_string(h0) + "," + std::to_string(w0) + ") exceeds the " +
                    std::to_string(window.geom.height) + "x" + std::to_string(window.geom.width) +
                    " sensor");
  }
  EventWindow out;
  out.geom = {hh, ww};
  for (RawEvent e : window.events) {
    if (e.h < h0 || e.h >= h0 + hh || e.w < w0 || e.w >= w0 + ww) continue;
    e.h -= h0;
    e.w -= w0;
    out.events.push_back(e);
  }
  return out;
}

namespace {

template <typename T>
FeatureMatrix run_network(const STCloud& cloud, const CenterSet& centers,
                          std::span<const NeighborTable, 3> tables, const NetWeights<T>& w,
                          int threads, StageTimes* times) {
  auto t0 = Clock::now();
  const LaFeatures<T> la = la_forward(cloud, centers, tables, w.la, threads);
  if (times) times->emplace_back("la", ms_since(t0));
  t0 = Clock::now();
  const Matrix<T> sta = sta_forward(la.temporal, la.spatial, la.balanced, w.sta, threads);
  if (times) times->emplace_back("sta", ms_since(t0));
  t0 = Clock::now();
  Matrix<T> fp = fp_propagate(sta, centers, cloud, FpOptions{}, threads);
  if (times) times->emplace_back("fp", ms_since(t0));
  if constexpr (std::is_same_v<T, float>) {
    return fp;
  } else {
    return fp.template cast<float>();
  }
}

}  // namespace

GridTensor encode_window(const EventWindow& window, const PipelineConfig& cfg,
                         const NetWeights<float>& weights, std::size_t window_index,
                         StageTimes* times) {
  validate(cfg);
  if (weights.la.channels() != cfg.channels || weights.sta.channels() != cfg.channels) {
    throw Error(ErrorCode::ShapeMismatch,
                "weights have " + std::to_string(weights.la.channels()) +
                    " channels, config asks for " + std::to_string(cfg.channels));
  }
  const int threads = resolve_thread_count(cfg.threads);

  auto t0 = Clock::now();
  const EventWindow cropped = crop_window(window, cfg);
  const EventWindow sampled = sample_events(cropped, cfg.sample_n, mix_seed(cfg.seed, window_index));
  if (times) times->emplace_back("sample", ms_since(t0));

  t0 = Clock::now();
  const STCloud cloud = normalize(sampled);
  const CenterSet centers = uniform_centers(cfg.grid);
  if (times) times->emplace_back("normalize", ms_since(t0));

  t0 = Clock::now();
  std::array<NeighborTable, 3> tables;
  if (cfg.knn == KnnMethod::Grid) {
    const SpatioTemporalGrid grid(cloud);
    for (int c = 0; c < 3; ++c) {
      const DomainWeights w = cfg.domain_weights[c];
      tables[c] = apply_replacement(grid, cloud, centers,
                                    knn_separated(grid, cloud, centers, cfg.k, w, threads), w,
                                    threads);
    }
  } else {
    for (int c = 0; c < 3; ++c) {
      const DomainWeights w = cfg.domain_weights[c];
      tables[c] = apply_replacement(
          cloud, centers, knn_separated(cloud, centers, cfg.k, w, KnnMethod::Exhaustive, threads),
          w, threads);
    }
  }
  if (times) times->emplace_back("knn", ms_since(t0));

  const FeatureMatrix feats =
      cfg.precision == Precision::F32
          ? run_network(cloud, centers, tables, weights, threads, times)
          : run_network(cloud, centers, tables, cast_weights<double>(weights), threads, times);

  t0 = Clock::now();
  const TensorizeConfig tcfg = cfg.tensorize_config();
  const std::array<GridTensor, 3> parts{count_map(cloud, feats, tcfg, threads),
                                        latest_map(cloud, feats, tcfg, threads),
                                        temporal_volume(cloud, feats, tcfg, threads)};
  GridTensor out = concat_tensors(parts);
  if (times) times->emplace_back("tensorize", ms_since(t0));
  return out;
}

NetWeights<float> resolve_weights(const PipelineConfig& cfg,
                                  const std::optional<std::filesystem::path>& path) {
  if (path) return load_weights(*path);
  return cast_weights<float>(init_weights(cfg.seed, cfg.channels));
}

EncodeSummary encode_stream(const EventWindow& events, const PipelineConfig& cfg,
                            const NetWeights<float>& weights,
                            const std::filesystem::path& out_dir, std::size_t max_windows) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  EventStream stream(events.events, events.geom);
  if (stream.remaining() < cfg.fen_count) {
    throw Error(ErrorCode::InsufficientEvents,
                "input holds " + std::to_string(stream.remaining()) +
                    " events, one window needs " + std::to_string(cfg.fen_count));
  }
  EncodeSummary summary;
  while (stream.remaining() >= cfg.fen_count &&
         (max_windows == 0 || summary.windows < max_windows)) {
    const std::size_t index = summary.windows;
    GridTensor tensor;
    try {
      tensor = encode_window(stream.window_fen(cfg.fen_count), cfg, weights, index);
    } catch (const Error& e) {
      throw Error(e.code(), "window " + std::to_string(index) + ": " + e.detail());
    }
    std::ostringstream name;
    name << "window_" << std::setw(6) << std::setfill('0') << index << ".gtn";
    const auto path = out_dir / name.str();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    write_gtn1(out, tensor);
    summary.outputs.push_back(path);
    ++summary.windows;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Dataset construction

void write_index_file(const std::filesystem::path& path, const std::vector<std::size_t>& indices) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i : indices) binary::put(out, static_cast<std::uint64_t>(i));
}

std::vector<std::uint64_t> read_index_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const auto size = std::filesystem::file_size(path);
  if (size % sizeof(std::uint64_t) != 0) {
    throw Error(ErrorCode::ParseError, path.string() + ": size is not a multiple of 8 bytes");
  }
  binary::Reader reader(in);
  std::vector<std::uint64_t> out(size / sizeof(std::uint64_t));
  for (auto& v : out) v = reader.get<std::uint64_t>("point index");
  return out;
}

std::vector<DatasetEntry> build_dataset(const PointCloud3D& cloud,
                                        const std::vector<StampedPose>& poses,
                                        const Intrinsics& intr, const DatasetOptions& opts,
                                        const std::filesystem::path& out_dir) {
  validate(intr);
  std::filesystem::create_directories(out_dir);
  std::vector<DatasetEntry> entries;
  for (std::size_t p = 0; p < poses.size(); ++p) {
    const FramePair pair =
        make_pair(cloud, poses[p].pose, intr, opts.near, opts.far, opts.enlarge);
    std::ostringstream stem;
    stem << "pose_" << std::setw(6) << std::setfill('0') << p;
    DatasetEntry entry{poses[p].stamp, stem.str() + "_visible.idx", stem.str() + "_enlarged.idx",
                       pair.visible.size(), pair.enlarged.size()};
    write_index_file(out_dir / entry.visible_file, pair.visible);
    write_index_file(out_dir / entry.enlarged_file, pair.enlarged);
    entries.push_back(std::move(entry));
  }
  std::ofstream manifest(out_dir / "manifest.txt");
  if (!manifest) throw Error(ErrorCode::IoError, "cannot write manifest in " + out_dir.string());
  for (const DatasetEntry& e : entries) {
    manifest << e.stamp << ' ' << e.visible_file << ' ' << e.enlarged_file << '\n';
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Pose evaluation

EvalReport evaluate_poses(const std::vector<StampedPose>& gt,
                          const std::vector<StampedPose>& pred) {
  std::unordered_map<std::string, const Pose*> by_stamp;
  for (const StampedPose& p : pred) {
    if (!by_stamp.emplace(p.stamp, &p.pose).second) {
      throw Error(ErrorCode::KeyMismatch, "duplicate predicted timestamp " + p.stamp);
    }
  }
  EvalReport report;
  for (const StampedPose& g : gt) {
    const auto it = by_stamp.find(g.stamp);
    if (it == by_stamp.end()) {
      throw Error(ErrorCode::KeyMismatch, "no prediction for timestamp " + g.stamp);
    }
    const Pose& p = *it->second;
    report.rows.push_back({g.stamp, rotation_error(g.pose.R, p.R) * 180.0 / std::numbers::pi,
                           translation_error(g.pose.T, p.T)});
    by_stamp.erase(it);
  }
  if (!by_stamp.empty()) {
    std::vector<std::string> extra;
    for (const auto& kv : by_stamp) extra.push_back(kv.first);
    std::sort(extra.begin(), extra.end());
    throw Error(ErrorCode::KeyMismatch, "prediction for timestamp " + extra.front() +
                                            " has no ground truth");
  }
  for (const EvalRow& r : report.rows) {
    report.mean_re_deg += r.re_deg;
    report.mean_te += r.te;
  }
  if (!report.rows.empty()) {
    report.mean_re_deg /= static_cast<double>(report.rows.size());
    report.mean_te /= static_cast<double>(report.rows.size());
  }
  return report;
}

void write_eval_text(std::ostream& out, const EvalReport& report) {
  std::size_t width = 9;
  for (const EvalRow& r : report.rows) width = std::max(width, r.stamp.size());
  out << std::left << std::setw(static_cast<int>(width)) << "timestamp" << std::right
      << std::setw(14) << "RE (deg)" << std::setw(14) << "TE (m)" << '\n';
  out << std::fixed << std::setprecision(6);
  for (const EvalRow& r : report.rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.stamp << std::right
        << std::setw(14) << r.re_deg << std::setw(14) << r.te << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << "mean" << std::right << std::setw(14)
      << report.mean_re_deg << std::setw(14) << report.mean_te << '\n';
  out << std::defaultfloat;
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "timestamp,re_deg,te_m\n" << std::setprecision(17);
  for (const EvalRow& r : report.rows) out << r.stamp << ',' << r.re_deg << ',' << r.te << '\n';
}

// ---------------------------------------------------------------------------
// Benchmarks

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double peak_memory_mb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ss(line.substr(6));
      double kb = 0.0;
      ss >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

EventWindow synthetic_events(std::size_t min_events, std::uint64_t seed, SensorGeometry geom) {
  Rng rng(seed);
  const double phase = uniform_unit(rng);
  const double kh = 1.0 / (40.0 + 20.0 * uniform_unit(rng));
  const double kw = 1.0 / (50.0 + 20.0 * uniform_unit(rng));
  const auto render = [&](double t) {
    Frame f;
    f.t = t;
    f.intensity.resize(static_cast<std::size_t>(geom.height) * geom.width);
    for (int h = 0; h < geom.height; ++h) {
      for (int w = 0; w < geom.width; ++w) {
        const double arg = 2.0 * std::numbers::pi * (h * kh + w * kw - 10.0 * t + phase);
        f.intensity[static_cast<std::size_t>(h) * geom.width + w] = std::exp(0.8 * std::sin(arg));
      }
    }
    return f;
  };
  ImageSequence seq;
  seq.geom = geom;
  seq.frames.push_back(render(0.0));
  const double dt = 0.02;
  while (true) {
    seq.frames.push_back(render(dt * static_cast<double>(seq.frames.size())));
    EventWindow events = simulate_events(seq, SimParams{0.2});
    if (events.size() >= min_events) return events;
    if (seq.frames.size() > 1000) {
      throw Error(ErrorCode::ConfigError, "sensor too small to synthesize the requested events");
    }
  }
}

BenchReport bench_encode(const EventWindow& window, const PipelineConfig& cfg,
                         const NetWeights<float>& weights, const BenchOptions& opts) {
  if (opts.iterations == 0) {
    throw Error(ErrorCode::ConfigError, "benchmark needs at least one measured iteration");
  }
  BenchReport report;
  report.scenario = "encode";
  report.warmup = opts.warmup;
  report.iterations = opts.iterations;
  for (std::size_t i = 0; i < opts.warmup; ++i) encode_window(window, cfg, weights);
  std::vector<double> totals;
  std::vector<StageTimes> runs;
  for (std::size_t i = 0; i < opts.iterations; ++i) {
    StageTimes times;
    const auto t0 = Clock::now();
    encode_window(window, cfg, weights, 0, &times);
    totals.push_back(ms_since(t0));
    runs.push_back(std::move(times));
  }
  for (std::size_t s = 0; s < runs.front().size(); ++s) {
    std::vector<double> v;
    for (const StageTimes& r : runs) v.push_back(r[s].second);
    report.stage_ms.emplace_back(runs.front()[s].first, median(v));
  }
  report.total_ms = median(totals);
  report.events_per_sec = static_cast<double>(window.size()) / (report.total_ms / 1000.0);
  report.peak_mb = peak_memory_mb();
  return report;
}

FrustumScene synthetic_scene(std::size_t points, std::size_t poses, std::uint64_t seed,
                             double extent) {
  Rng rng(seed);
  FrustumScene scene;
  scene.cloud.points.reserve(points);
  const auto coord = [&](double half) { return (2.0 * uniform_unit(rng) - 1.0) * half; };
  for (std::size_t i = 0; i < points; ++i) {
    scene.cloud.points.emplace_back(coord(extent), coord(extent), coord(extent));
  }
  for (std::size_t p = 0; p < poses; ++p) {
    Pose pose;
    pose.R = random_rotation(rng);
    pose.T = {coord(0.25 * extent), coord(0.25 * extent), coord(0.25 * extent)};
    scene.poses.push_back(pose);
  }
  scene.intr = {300.0, 300.0, 173.0, 130.0, 260, 346};
  return scene;
}

BenchReport bench_frustum(const FrustumScene& scene, const BenchOptions& opts) {
  if (opts.iterations == 0) {
    throw Error(ErrorCode::ConfigError, "benchmark needs at least one measured iteration");
  }
  BenchReport report;
  report.scenario = "frustum";
  report.warmup = opts.warmup;
  report.iterations = opts.iterations;
  report.points = scene.cloud.size();
  report.poses = scene.poses.size();

  report.selections_match = true;
  for (const Pose& pose : scene.poses) {
    const Frustum fr = build_frustum(pose, scene.intr, scene.near, scene.far);
    const auto a = frustum_select(scene.cloud, fr);
    const auto b = project_select(scene.cloud, pose, scene.intr, scene.near, scene.far);
    if (!selections_agree(scene.cloud, fr, a, b)) report.selections_match = false;
  }

  std::size_t sink = 0;
  const auto run_frustum = [&] {
    const auto t0 = Clock::now();
    for (const Pose& pose : scene.poses) {
      sink += frustum_select(scene.cloud, build_frustum(pose, scene.intr, scene.near, scene.far))
                  .size();
    }
    return ms_since(t0);
  };
  const auto run_project = [&] {
    const auto t0 = Clock::now();
    for (const Pose& pose : scene.poses) {
      sink += project_select(scene.cloud, pose, scene.intr, scene.near, scene.far).size();
    }
    return ms_since(t0);
  };
  for (std::size_t i = 0; i < opts.warmup; ++i) {
    run_frustum();
    run_project();
  }
  std::vector<double> tf, tp;
  for (std::size_t i = 0; i < opts.iterations; ++i) {
    tf.push_back(run_frustum());
    tp.push_back(run_project());
  }
  report.frustum_ms = median(tf);
  report.project_ms = median(tp);
  report.speedup = report.project_ms / report.frustum_ms;
  report.total_ms = report.frustum_ms + report.project_ms;
  report.peak_mb = peak_memory_mb();
  g_bench_sink = sink;
  return report;
}

void write_bench_text(std::ostream& out, const BenchReport& r) {
  out << std::fixed << std::setprecision(3);
  out << "scenario: " << r.scenario << " (warmup " << r.warmup << ", iterations " << r.iterations
      << ", medians)\n";
  if (r.scenario == "encode") {
    for (const auto& [stage, ms] : r.stage_ms) out << "  " << stage << ": " << ms << " ms\n";
    out << "  total: " << r.total_ms << " ms\n";
    out << "  throughput: " << std::setprecision(1) << r.events_per_sec << " events/s\n";
  } else {
    out << "  points: " << r.points << ", poses: " << r.poses << '\n';
    out << "  frustum_select: " << r.frustum_ms << " ms\n";
    out << "  project_select: " << r.project_ms << " ms\n";
    out << "  speedup: " << r.speedup << "x\n";
    out << "  selections match: " << (r.selections_match ? "yes" : "no") << '\n';
  }
  out << "  peak memory: " << std::setprecision(1) << r.peak_mb << " MB\n";
  out << std::defaultfloat;
}

void write_bench_json(std::ostream& out, const BenchReport& r) {
  nlohmann::ordered_json j;
  j["scenario"] = r.scenario;
  j["warmup"] = r.warmup;
  j["iterations"] = r.iterations;
  if (r.scenario == "encode") {
    nlohmann::ordered_json stages;
    for (const auto& [stage, ms] : r.stage_ms) stages[stage] = ms;
    j["stage_ms"] = stages;
    j["total_ms"] = r.total_ms;
    j["events_per_sec"] = r.events_per_sec;
  } else {
    j["points"] = r.points;
    j["poses"] = r.poses;
    j["frustum_ms"] = r.frustum_ms;
    j["project_ms"] = r.project_ms;
    j["speedup"] = r.speedup;
    j["selections_match"] = r.selections_match;
  }
  j["peak_mb"] = r.peak_mb;
  out << j.dump(2) << '\n';
}

}  // namespace ep2t
