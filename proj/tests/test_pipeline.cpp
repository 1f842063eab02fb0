#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "ep2t/pipeline.hpp"
#include "ep2t/weights_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ep2t;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.fen_count = 1500;
  cfg.sample_n = 512;
  cfg.grid = {4, 4, 2};
  cfg.k = 8;
  cfg.channels = 4;
  cfg.tensor_height = 24;
  cfg.tensor_width = 32;
  cfg.bins = 3;
  cfg.crop = false;
  cfg.threads = 1;
  return cfg;
}

NetWeights<float> small_weights(const PipelineConfig& cfg) {
  return cast_weights<float>(init_weights(cfg.seed, cfg.channels, StaInit::Random, {8, 16}));
}

StampedPose stamped(std::string stamp, const Eigen::Matrix3d& R, Eigen::Vector3d T) {
  StampedPose p;
  p.stamp = std::move(stamp);
  p.pose.R = R;
  p.pose.T = T;
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("default configuration") {
    const PipelineConfig cfg;
    CHECK(cfg.fen_count == 20000);
    CHECK(cfg.sample_n == 8192);
    CHECK(cfg.grid.count() == 4500);
    CHECK(cfg.k == 64);
    CHECK(cfg.output_channels() == 448);
    CHECK_NOTHROW(validate(cfg));
  }

  TEST_CASE("settings and config text") {
    PipelineConfig cfg;
    std::stringstream text(
        "# comment\n\nsample-n = 1024\ngrid = 10,12,3\nk=16\ndomain-weights = 0.7:0.2,0.2:0.7,0.4:0.4\n"
        "precision = f64\nknn = exhaustive\ncrop = false\n");
    apply_config_text(cfg, text);
    CHECK(cfg.sample_n == 1024);
    CHECK(cfg.grid.h == 10);
    CHECK(cfg.grid.w == 12);
    CHECK(cfg.grid.t == 3);
    CHECK(cfg.k == 16);
    CHECK(cfg.domain_weights[1].beta == 0.7);
    CHECK(cfg.precision == Precision::F64);
    CHECK(cfg.knn == KnnMethod::Exhaustive);
    CHECK_FALSE(cfg.crop);
    CHECK_ERROR_CODE(apply_setting(cfg, "colour", "red"), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(apply_setting(cfg, "k", "many"), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(apply_setting(cfg, "grid", "1,2"), ErrorCode::ConfigError);
    CHECK(parse_domain_weights("0.5:0.25").size() == 1);
    CHECK_ERROR_CODE(parse_domain_weights("0.5"), ErrorCode::ConfigError);
    PipelineConfig two;
    apply_setting(two, "domain-weights", "0.5:0.5,0.1:0.8");
    CHECK_ERROR_CODE(validate(two), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(apply_config_file(cfg, "/nonexistent/ep2t.cfg"), ErrorCode::ConfigError);
  }

  TEST_CASE("crop keeps and shifts events inside the window") {
    EventWindow win;
    win.geom = {10, 12};
    win.events = {{1, 1, 0.0, 1}, {3, 4, 0.1, -1}, {8, 11, 0.2, 1}, {5, 9, 0.3, 1}};
    PipelineConfig cfg;
    cfg.tensor_height = 4;
    cfg.tensor_width = 6;
    cfg.crop_row = 2;
    cfg.crop_col = 4;
    const EventWindow c = crop_window(win, cfg);
    CHECK(c.geom.height == 4);
    CHECK(c.geom.width == 6);
    REQUIRE(c.events.size() == 2);
    CHECK(c.events[0] == RawEvent{1, 0, 0.1, -1});
    CHECK(c.events[1] == RawEvent{3, 5, 0.3, 1});
    cfg.crop_row = 7;
    CHECK_ERROR_CODE(crop_window(win, cfg), ErrorCode::ConfigError);
    cfg.crop = false;
    CHECK(crop_window(win, cfg).events == win.events);
  }

  TEST_CASE("encoding equals the stage-by-stage composition") {
    const PipelineConfig cfg = small_config();
    const NetWeights<float> w = small_weights(cfg);
    const EventWindow win = synthetic_events(cfg.fen_count, 3, {24, 32});
    EventStream stream(win.events, win.geom);
    const EventWindow first = stream.window_fen(cfg.fen_count);
    StageTimes times;
    const GridTensor got = encode_window(first, cfg, w, 2, &times);
    CHECK(got.height == 24);
    CHECK(got.width == 32);
    CHECK(got.channels == cfg.output_channels());
    CHECK(times.size() == 7);

    const STCloud cloud = normalize(sample_events(first, cfg.sample_n, mix_seed(cfg.seed, 2)));
    const CenterSet cs = uniform_centers(cfg.grid);
    std::array<NeighborTable, 3> tables;
    for (std::size_t c = 0; c < 3; ++c) {
      const DomainWeights dw = cfg.domain_weights[c];
      tables[c] = oracle::replace(cloud, cs, oracle::knn(cloud, cs, cfg.k, dw), dw);
    }
    const LaFeatures<float> la = la_forward(cloud, cs, tables, w.la);
    const FeatureMatrix f =
        fp_propagate(sta_forward(la.temporal, la.spatial, la.balanced, w.sta), cs, cloud);
    const TensorizeConfig tc = cfg.tensorize_config();
    const std::vector<GridTensor> parts{count_map(cloud, f, tc), latest_map(cloud, f, tc),
                                        temporal_volume(cloud, f, tc)};
    CHECK(got == concat_tensors(parts));
  }

  TEST_CASE("encoding is reproducible across runs, thread counts and k-NN paths") {
    PipelineConfig cfg = small_config();
    const NetWeights<float> w = small_weights(cfg);
    const EventWindow win = synthetic_events(cfg.fen_count, 4, {24, 32});
    const GridTensor a = encode_window(win, cfg, w);
    CHECK(encode_window(win, cfg, w) == a);
    cfg.threads = 3;
    CHECK(encode_window(win, cfg, w) == a);
    cfg.knn = KnnMethod::Exhaustive;
    CHECK(encode_window(win, cfg, w) == a);
    cfg.precision = Precision::F64;
    const GridTensor d = encode_window(win, cfg, w);
    REQUIRE(d.data.size() == a.data.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < d.data.size(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(d.data[i] - a.data[i])) /
                                  std::max(1.0, static_cast<double>(std::abs(d.data[i]))));
    CHECK(worst < 1e-3);
    cfg.channels = 5;
    CHECK_ERROR_CODE(encode_window(win, cfg, w), ErrorCode::ShapeMismatch);
  }

  TEST_CASE("stream encoding writes one tensor per window") {
    TempDir dir("encode");
    const PipelineConfig cfg = small_config();
    const NetWeights<float> w = small_weights(cfg);
    const EventWindow events = synthetic_events(3 * cfg.fen_count + 10, 5, {24, 32});
    const EncodeSummary s = encode_stream(events, cfg, w, dir.path, 2);
    CHECK(s.windows == 2);
    REQUIRE(s.outputs.size() == 2);
    CHECK(s.outputs[1].filename() == "window_000001.gtn");
    std::ifstream in(s.outputs[1], std::ios::binary);
    EventStream stream(events.events, events.geom);
    stream.window_fen(cfg.fen_count);
    CHECK(read_gtn1(in) == encode_window(stream.window_fen(cfg.fen_count), cfg, w, 1));
    EventWindow few = events;
    few.events.resize(cfg.fen_count - 1);
    CHECK_ERROR_CODE(encode_stream(few, cfg, w, dir.path), ErrorCode::InsufficientEvents);
  }

  TEST_CASE("weights round trip and reject damage") {
    TempDir dir("weights");
    const NetWeights<float> w = cast_weights<float>(init_weights(8, 6, StaInit::Random, {5, 7}));
    save_weights(dir.path / "w.bin", w);
    NetWeights<float> back = load_weights(dir.path / "w.bin");
    NetWeights<float> orig = w;
    const auto a = named_tensors(orig);
    const auto b = named_tensors(back);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(*a[i].tensor == *b[i].tensor);
    }
    std::stringstream ss;
    write_weights(ss, w);
    std::stringstream cut(ss.str().substr(0, ss.str().size() - 3));
    CHECK_ERROR_CODE(read_weights(cut), ErrorCode::ParseError);
    std::string bytes = ss.str();
    bytes[4] = 9;
    std::stringstream bad_version(bytes);
    CHECK_ERROR_CODE(read_weights(bad_version), ErrorCode::ParseError);
    CHECK_ERROR_CODE(load_weights(dir.path / "none.bin"), ErrorCode::IoError);
  }

  TEST_CASE("dataset index files match the frustum oracle") {
    TempDir dir("dataset");
    const FrustumScene scene = synthetic_scene(5000, 3, 9, 8.0);
    std::vector<StampedPose> poses;
    for (std::size_t i = 0; i < scene.poses.size(); ++i)
      poses.push_back({"t" + std::to_string(i), scene.poses[i]});
    const DatasetOptions opts{0.1, 10.0, 0.3};
    const auto entries = build_dataset(scene.cloud, poses, scene.intr, opts, dir.path);
    REQUIRE(entries.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      const FramePair pair = make_pair(scene.cloud, poses[i].pose, scene.intr, 0.1, 10.0, 0.3);
      const auto vis = read_index_file(dir.path / entries[i].visible_file);
      const auto big = read_index_file(dir.path / entries[i].enlarged_file);
      CHECK(std::vector<std::size_t>(vis.begin(), vis.end()) == pair.visible);
      CHECK(std::vector<std::size_t>(big.begin(), big.end()) == pair.enlarged);
      CHECK(entries[i].visible_count == pair.visible.size());
      const Frustum fr = build_frustum(poses[i].pose, scene.intr, 0.1, 10.0);
      CHECK(selections_agree(scene.cloud, fr, pair.visible,
                             project_select(scene.cloud, poses[i].pose, scene.intr, 0.1, 10.0)));
    }
    std::ifstream manifest(dir.path / "manifest.txt");
    std::string stamp, vis, big;
    manifest >> stamp >> vis >> big;
    CHECK(stamp == "t0");
    CHECK(vis == "pose_000000_visible.idx");
    CHECK(big == "pose_000000_enlarged.idx");
  }

  TEST_CASE("pose evaluation") {
    const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
    const std::vector<StampedPose> gt{stamped("a", I, {0, 0, 0}), stamped("b", I, {1, 1, 1})};
    const std::vector<StampedPose> pred{
        stamped("b", axis_angle({0, 0, 1}, std::numbers::pi / 2), {1, 1, 3}),
        stamped("a", I, {3, 4, 0})};
    const EvalReport r = evaluate_poses(gt, pred);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].stamp == "a");
    CHECK(r.rows[0].re_deg == 0.0);
    CHECK(r.rows[0].te == 5.0);
    CHECK(std::abs(r.rows[1].re_deg - 90.0) <= 1e-9);
    CHECK(r.rows[1].te == 2.0);
    CHECK(std::abs(r.mean_re_deg - 45.0) <= 1e-9);
    CHECK(r.mean_te == 3.5);
    std::stringstream csv;
    write_eval_csv(csv, r);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "timestamp,re_deg,te_m");
    CHECK_ERROR_CODE(evaluate_poses(gt, {pred[0]}), ErrorCode::KeyMismatch);
    CHECK_ERROR_CODE(evaluate_poses({gt[0]}, pred), ErrorCode::KeyMismatch);
    CHECK_ERROR_CODE(evaluate_poses(gt, {pred[0], pred[1], pred[1]}), ErrorCode::KeyMismatch);
  }

  TEST_CASE("benchmark helpers") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    const FrustumScene scene = synthetic_scene(2000, 4, 1);
    CHECK_ERROR_CODE(bench_frustum(scene, {0, 0}), ErrorCode::ConfigError);
    const BenchReport r = bench_frustum(scene, {0, 1});
    CHECK(r.selections_match);
    CHECK(r.poses == 4);
    std::stringstream js;
    write_bench_json(js, r);
    CHECK(js.str().find("\"speedup\"") != std::string::npos);
  }
}
