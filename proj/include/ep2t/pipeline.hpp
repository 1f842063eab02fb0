#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ep2t/events.hpp"
#include "ep2t/geometry.hpp"
#include "ep2t/net.hpp"
#include "ep2t/sampling.hpp"
#include "ep2t/tensorize.hpp"

namespace ep2t {

enum class Precision { F32, F64 };

struct PipelineConfig {
  std::size_t fen_count = 20000;
  std::size_t sample_n = 8192;
  GridDims grid{30, 30, 5};
  std::size_t k = 64;
  std::vector<DomainWeights> domain_weights{kDefaultDomainWeights.begin(),
                                            kDefaultDomainWeights.end()};
  std::size_t channels = 64;
  std::size_t tensor_height = 256;
  std::size_t tensor_width = 256;
  std::size_t bins = 5;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
  int threads = 0;  ///< 0 = default (E2P_THREADS or hardware)
  KnnMethod knn = KnnMethod::Grid;
  bool crop = true;  ///< cut a tensor-sized window out of the sensor instead of rescaling
  int crop_row = 0;
  int crop_col = 0;

  TensorizeConfig tensorize_config() const {
    return {tensor_height, tensor_width, bins, true};
  }
  /// C_count + C_latest + B * C.
  std::size_t output_channels() const { return 2 * channels + bins * channels; }
};

void validate(const PipelineConfig& cfg);

/// Applies one `key = value` setting (kebab-case keys mirroring the CLI
/// flags). Throws ConfigError for unknown keys or malformed values.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; blank lines and `#` comments are ignored.
void apply_config_text(PipelineConfig& cfg, std::istream& in);
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path);

std::vector<DomainWeights> parse_domain_weights(const std::string& text);
GridDims parse_grid_dims(const std::string& text);

/// Events inside the crop rectangle, shifted to its origin, on a crop-sized
/// sensor. Without cropping the window is returned unchanged.
EventWindow crop_window(const EventWindow& window, const PipelineConfig& cfg);

/// Wall-clock milliseconds per pipeline stage, in execution order.
using StageTimes = std::vector<std::pair<std::string, double>>;

/// Full encoding of one window: crop, sample, normalize, centers, k-NN with
/// replacement (one table per domain configuration), LA, STA, FP and the three
/// feature tensorizations concatenated as [count | latest | volume].
GridTensor encode_window(const EventWindow& window, const PipelineConfig& cfg,
                         const NetWeights<float>& weights, std::size_t window_index = 0,
                         StageTimes* times = nullptr);

struct EncodeSummary {
  std::size_t windows = 0;
  std::vector<std::filesystem::path> outputs;
};

/// Encodes every complete FEN window of `events` into `out_dir/window_NNNNNN.gtn`.
/// `max_windows` of 0 means all. Errors carry the window index.
EncodeSummary encode_stream(const EventWindow& events, const PipelineConfig& cfg,
                            const NetWeights<float>& weights,
                            const std::filesystem::path& out_dir, std::size_t max_windows = 0);

/// Weights from the file when given, otherwise seeded init for cfg.channels.
NetWeights<float> resolve_weights(const PipelineConfig& cfg,
                                  const std::optional<std::filesystem::path>& path);

// ---------------------------------------------------------------------------
// Dataset construction

struct DatasetOptions {
  double near = kDefaultNear;
  double far = kDefaultFar;
  double enlarge = 0.3;
};

struct DatasetEntry {
  std::string stamp;
  std::string visible_file;
  std::string enlarged_file;
  std::size_t visible_count = 0;
  std::size_t enlarged_count = 0;
};

/// Writes `pose_NNNNNN_visible.idx` / `pose_NNNNNN_enlarged.idx` (raw
/// little-endian u64 point indices) per pose plus `manifest.txt` with lines
/// `pose_timestamp visible_file enlarged_file`.
std::vector<DatasetEntry> build_dataset(const PointCloud3D& cloud,
                                        const std::vector<StampedPose>& poses,
                                        const Intrinsics& intr, const DatasetOptions& opts,
                                        const std::filesystem::path& out_dir);

std::vector<std::uint64_t> read_index_file(const std::filesystem::path& path);
void write_index_file(const std::filesystem::path& path, const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// Pose evaluation

struct EvalRow {
  std::string stamp;
  double re_deg = 0.0;
  double te = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_re_deg = 0.0;
  double mean_te = 0.0;
};

/// RE/TE for every ground-truth pose against the prediction with the same
/// timestamp token. Missing or extra keys throw KeyMismatch.
EvalReport evaluate_poses(const std::vector<StampedPose>& gt, const std::vector<StampedPose>& pred);
void write_eval_text(std::ostream& out, const EvalReport& report);
void write_eval_csv(std::ostream& out, const EvalReport& report);

// ---------------------------------------------------------------------------
// Benchmarks

struct BenchOptions {
  std::size_t warmup = 2;
  std::size_t iterations = 5;
};

struct BenchReport {
  std::string scenario;
  std::size_t warmup = 0;
  std::size_t iterations = 0;
  StageTimes stage_ms;  ///< per-stage medians
  double total_ms = 0.0;
  double peak_mb = 0.0;
  double events_per_sec = 0.0;  ///< source window events per second of encode time

  // frustum scenario
  std::size_t points = 0;
  std::size_t poses = 0;
  double frustum_ms = 0.0;
  double project_ms = 0.0;
  double speedup = 0.0;
  bool selections_match = false;
};

double median(std::vector<double> values);

/// Resident-set high-water mark of this process in MB (0 when unavailable).
double peak_memory_mb();

/// Smooth moving pattern rendered to log-intensity frames and run through
/// the simulator until at least `min_events` events exist.
EventWindow synthetic_events(std::size_t min_events, std::uint64_t seed,
                             SensorGeometry geom = {260, 346});

BenchReport bench_encode(const EventWindow& window, const PipelineConfig& cfg,
                         const NetWeights<float>& weights, const BenchOptions& opts);

struct FrustumScene {
  PointCloud3D cloud;
  std::vector<Pose> poses;
  Intrinsics intr;
  double near = kDefaultNear;
  double far = kDefaultFar;
};

/// Uniform points in a cube of half-width `extent` and random camera poses
/// inside its central region.
FrustumScene synthetic_scene(std::size_t points, std::size_t poses, std::uint64_t seed,
                             double extent = 20.0);

BenchReport bench_frustum(const FrustumScene& scene, const BenchOptions& opts);

void write_bench_text(std::ostream& out, const BenchReport& report);
void write_bench_json(std::ostream& out, const BenchReport& report);

}  // namespace ep2t
