// e2p: command-line front end for the event-to-tensor pipeline.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "ep2t/error.hpp"
#include "ep2t/event_io.hpp"
#include "ep2t/events.hpp"
#include "ep2t/geometry.hpp"
#include "ep2t/pipeline.hpp"
#include "ep2t/tensorize.hpp"
#include "ep2t/weights_io.hpp"

namespace fs = std::filesystem;
using namespace ep2t;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidInterval:
    case ErrorCode::InvalidDepths:
    case ErrorCode::ZeroDim:
    case ErrorCode::UnsupportedOp:
      return kExitUsage;
    default:
      return kExitData;
  }
}

/// Pipeline flags shared by `encode` and `bench`. Values are collected as
/// text and applied after the optional config file, so flags win.
struct PipelineFlags {
  std::optional<fs::path> config_file;
  std::vector<std::pair<std::string, std::string>> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value settings file")->check(CLI::ExistingFile);
    const std::pair<const char*, const char*> keys[] = {
        {"fen-count", "events per window"},
        {"sample-n", "events sampled per window"},
        {"grid", "center grid as Gh,Gw,Gt"},
        {"k", "neighbors per center"},
        {"domain-weights", "alpha:beta list, e.g. 0.8:0.1,0.1:0.8,0.5:0.5"},
        {"channels", "feature channels C"},
        {"tensor-height", "output rows"},
        {"tensor-width", "output columns"},
        {"bins", "temporal bins B"},
        {"seed", "sampling and weight seed"},
        {"precision", "f32 or f64"},
        {"threads", "worker threads (0 = default)"},
        {"knn", "grid or exhaustive"},
        {"crop-row", "crop origin row"},
        {"crop-col", "crop origin column"},
    };
    for (const auto& [key, help] : keys) {
      const std::string k = key;
      app->add_option_function<std::string>(
          "--" + k, [this, k](const std::string& v) { overrides.emplace_back(k, v); }, help);
    }
    app->add_flag_callback(
        "--no-crop", [this] { overrides.emplace_back("crop", "false"); },
        "rescale the full sensor instead of cropping");
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg;
    if (config_file) apply_config_file(cfg, *config_file);
    for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
    validate(cfg);
    return cfg;
  }
};

struct InputFlags {
  fs::path path;
  int sensor_height = 0;
  int sensor_width = 0;

  void attach(CLI::App* app, bool required = true) {
    auto* opt = app->add_option("-i,--input", path, "EVT1 or CSV event file");
    if (required) opt->required();
    opt->check(CLI::ExistingFile);
    app->add_option("--sensor-height", sensor_height, "CSV sensor rows (default: max h + 1)");
    app->add_option("--sensor-width", sensor_width, "CSV sensor columns (default: max w + 1)");
  }

  EventWindow load() const { return load_events(path, {sensor_height, sensor_width}); }
};

std::string window_name(std::size_t index, const char* ext) {
  std::ostringstream name;
  name << "window_" << std::setw(6) << std::setfill('0') << index << ext;
  return name.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event stream to point-cloud features, tensors and dataset tools"};
  app.require_subcommand(1);

  // simulate ---------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "ideal event camera over PGM frames");
  fs::path sim_frames, sim_stamps, sim_out;
  double sim_threshold = 0.2, sim_offset = 0.0;
  std::size_t sim_synthetic = 0;
  std::uint64_t sim_seed = 0;
  sim->add_option("--frames", sim_frames, "directory of PGM frames")->check(CLI::ExistingDirectory);
  sim->add_option("--timestamps", sim_stamps, "one frame timestamp per line")
      ->check(CLI::ExistingFile);
  sim->add_option("--threshold", sim_threshold, "contrast threshold (log units)")
      ->capture_default_str();
  sim->add_option("--offset", sim_offset, "added to pixel values before the log")
      ->capture_default_str();
  sim->add_option("--synthetic", sim_synthetic, "render a moving pattern with at least N events");
  sim->add_option("--seed", sim_seed, "seed for --synthetic");
  sim->add_option("-o,--out", sim_out, "output events (.csv or EVT1)")->required();

  // window -----------------------------------------------------------------
  auto* win = app.add_subcommand("window", "split an event file into FEN or FIT windows");
  InputFlags win_in;
  win_in.attach(win);
  std::size_t win_fen = 0, win_max = 0;
  double win_fit = 0.0;
  fs::path win_out;
  std::string win_format = "evt";
  auto* fen_opt = win->add_option("--fen", win_fen, "events per window");
  auto* fit_opt = win->add_option("--fit", win_fit, "seconds per window");
  fen_opt->excludes(fit_opt);
  win->add_option("--max-windows", win_max, "stop after this many windows (0 = all)");
  win->add_option("--format", win_format, "evt or csv")->check(CLI::IsMember({"evt", "csv"}));
  win->add_option("-o,--out-dir", win_out, "output directory")->required();

  // encode -----------------------------------------------------------------
  auto* enc = app.add_subcommand("encode", "run the learned encoder, one GTN1 tensor per window");
  InputFlags enc_in;
  enc_in.attach(enc);
  PipelineFlags enc_flags;
  enc_flags.attach(enc);
  std::optional<fs::path> enc_weights;
  fs::path enc_out;
  std::size_t enc_max = 0;
  enc->add_option("--weights", enc_weights, "EP2T weights file (default: seeded init)")
      ->check(CLI::ExistingFile);
  enc->add_option("--max-windows", enc_max, "stop after this many windows (0 = all)");
  enc->add_option("-o,--out-dir", enc_out, "output directory")->required();

  // init-weights -------------------------------------------------------------
  auto* initw = app.add_subcommand("init-weights", "write seeded encoder weights");
  std::uint64_t initw_seed = 0;
  std::size_t initw_channels = 64;
  bool initw_zero_sta = false;
  fs::path initw_out;
  initw->add_option("--seed", initw_seed);
  initw->add_option("--channels", initw_channels)->capture_default_str();
  initw->add_flag("--zero-sta", initw_zero_sta, "zero every attention parameter");
  initw->add_option("-o,--out", initw_out)->required();

  // tensorize --------------------------------------------------------------
  auto* ten = app.add_subcommand("tensorize", "hand-crafted E-Statistic tensors per window");
  InputFlags ten_in;
  ten_in.attach(ten);
  PipelineConfig ten_cfg;
  bool ten_no_split = false, ten_no_crop = false;
  std::size_t ten_max = 0;
  fs::path ten_out;
  ten->add_option("--fen-count", ten_cfg.fen_count, "events per window")->capture_default_str();
  ten->add_option("--tensor-height", ten_cfg.tensor_height)->capture_default_str();
  ten->add_option("--tensor-width", ten_cfg.tensor_width)->capture_default_str();
  ten->add_option("--bins", ten_cfg.bins)->capture_default_str();
  ten->add_option("--crop-row", ten_cfg.crop_row);
  ten->add_option("--crop-col", ten_cfg.crop_col);
  ten->add_flag("--no-crop", ten_no_crop, "rescale the full sensor instead of cropping");
  ten->add_flag("--no-polarity-split", ten_no_split, "single count channel");
  ten->add_option("--max-windows", ten_max, "stop after this many windows (0 = all)");
  ten->add_option("-o,--out-dir", ten_out, "output directory")->required();

  // dataset ----------------------------------------------------------------
  auto* ds = app.add_subcommand("dataset", "frustum selections per pose for event/cloud pairs");
  fs::path ds_cloud, ds_poses, ds_intr, ds_out;
  DatasetOptions ds_opts;
  ds->add_option("--cloud", ds_cloud, "PLY or PC31 point cloud")->required()->check(CLI::ExistingFile);
  ds->add_option("--poses", ds_poses, "camera-to-world poses")->required()->check(CLI::ExistingFile);
  ds->add_option("--intrinsics", ds_intr, "`fx fy cx cy width height`")
      ->required()
      ->check(CLI::ExistingFile);
  ds->add_option("--near", ds_opts.near)->capture_default_str();
  ds->add_option("--far", ds_opts.far)->capture_default_str();
  ds->add_option("--enlarge", ds_opts.enlarge, "surrounding-region growth fraction")
      ->capture_default_str();
  ds->add_option("-o,--out-dir", ds_out)->required();

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "rotation / translation error of predicted poses");
  fs::path ev_gt, ev_pred;
  std::optional<fs::path> ev_csv;
  ev->add_option("--gt", ev_gt)->required()->check(CLI::ExistingFile);
  ev->add_option("--pred", ev_pred)->required()->check(CLI::ExistingFile);
  ev->add_option("--csv", ev_csv, "also write per-pose rows as CSV");

  // bench ------------------------------------------------------------------
  auto* bn = app.add_subcommand("bench", "timing harness (medians after warmup)");
  std::string bn_scenario;
  BenchOptions bn_opts;
  InputFlags bn_in;
  bn_in.attach(bn, false);
  PipelineFlags bn_flags;
  bn_flags.attach(bn);
  std::size_t bn_points = 100000, bn_poses = 100;
  std::optional<fs::path> bn_json;
  bn->add_option("--scenario", bn_scenario)->required()->check(CLI::IsMember({"encode", "frustum"}));
  bn->add_option("--warmup", bn_opts.warmup)->capture_default_str();
  bn->add_option("--iterations", bn_opts.iterations)->capture_default_str();
  bn->add_option("--points", bn_points, "frustum scenario cloud size")->capture_default_str();
  bn->add_option("--poses", bn_poses, "frustum scenario pose count")->capture_default_str();
  bn->add_option("--json", bn_json, "also write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (sim->parsed()) {
      EventWindow events;
      if (sim_synthetic > 0) {
        events = synthetic_events(sim_synthetic, sim_seed);
      } else {
        if (sim_frames.empty() || sim_stamps.empty()) {
          throw Error(ErrorCode::ConfigError, "simulate needs --frames and --timestamps or --synthetic");
        }
        events = simulate_events(load_image_sequence(sim_frames, sim_stamps, sim_offset),
                                 SimParams{sim_threshold});
      }
      save_events(sim_out, events);
      std::cout << events.size() << " events written to " << sim_out.string() << '\n';
    } else if (win->parsed()) {
      if (fen_opt->count() == 0 && fit_opt->count() == 0) {
        throw Error(ErrorCode::ConfigError, "window needs --fen or --fit");
      }
      const EventWindow events = win_in.load();
      EventStream stream(events.events, events.geom,
                         events.empty() ? 0.0 : events.events.front().t);
      fs::create_directories(win_out);
      std::size_t n = 0;
      const char* ext = win_format == "csv" ? ".csv" : ".evt";
      while (win_max == 0 || n < win_max) {
        EventWindow w;
        if (fen_opt->count() > 0) {
          if (win_fen == 0) throw Error(ErrorCode::ConfigError, "--fen must be positive");
          if (stream.remaining() < win_fen) break;
          w = stream.window_fen(win_fen);
        } else {
          if (stream.remaining() == 0) break;
          w = stream.window_fit(win_fit);
        }
        save_events(win_out / window_name(n, ext), w);
        ++n;
      }
      std::cout << n << " windows written to " << win_out.string() << '\n';
    } else if (enc->parsed()) {
      const PipelineConfig cfg = enc_flags.resolve();
      const NetWeights<float> weights = resolve_weights(cfg, enc_weights);
      const EncodeSummary s = encode_stream(enc_in.load(), cfg, weights, enc_out, enc_max);
      std::cout << s.windows << " tensors (" << cfg.tensor_height << "x" << cfg.tensor_width
                << "x" << cfg.output_channels() << ") written to " << enc_out.string() << '\n';
    } else if (initw->parsed()) {
      save_weights(initw_out, cast_weights<float>(init_weights(
                                  initw_seed, initw_channels,
                                  initw_zero_sta ? StaInit::Zero : StaInit::Random)));
      std::cout << "weights written to " << initw_out.string() << '\n';
    } else if (ten->parsed()) {
      ten_cfg.crop = !ten_no_crop;
      validate(ten_cfg);
      TensorizeConfig tcfg = ten_cfg.tensorize_config();
      tcfg.polarity_split = !ten_no_split;
      const EventWindow events = ten_in.load();
      EventStream stream(events.events, events.geom);
      if (stream.remaining() < ten_cfg.fen_count) {
        throw Error(ErrorCode::InsufficientEvents, "input holds " +
                                                       std::to_string(stream.remaining()) +
                                                       " events, one window needs " +
                                                       std::to_string(ten_cfg.fen_count));
      }
      fs::create_directories(ten_out);
      std::size_t n = 0;
      while (stream.remaining() >= ten_cfg.fen_count && (ten_max == 0 || n < ten_max)) {
        GridTensor t;
        try {
          t = e_statistic(crop_window(stream.window_fen(ten_cfg.fen_count), ten_cfg), tcfg);
        } catch (const Error& e) {
          throw Error(e.code(), "window " + std::to_string(n) + ": " + e.detail());
        }
        std::ofstream out(ten_out / window_name(n, ".gtn"), std::ios::binary);
        if (!out) throw Error(ErrorCode::IoError, "cannot write into " + ten_out.string());
        write_gtn1(out, t);
        ++n;
      }
      std::cout << n << " E-Statistic tensors written to " << ten_out.string() << '\n';
    } else if (ds->parsed()) {
      const auto entries = build_dataset(load_cloud(ds_cloud), load_poses(ds_poses),
                                         load_intrinsics(ds_intr), ds_opts, ds_out);
      for (const DatasetEntry& e : entries) {
        std::cout << e.stamp << ": " << e.visible_count << " visible, " << e.enlarged_count
                  << " in enlarged region\n";
      }
      std::cout << "manifest: " << (ds_out / "manifest.txt").string() << '\n';
    } else if (ev->parsed()) {
      const EvalReport report = evaluate_poses(load_poses(ev_gt), load_poses(ev_pred));
      write_eval_text(std::cout, report);
      if (ev_csv) {
        std::ofstream out(*ev_csv);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + ev_csv->string());
        write_eval_csv(out, report);
      }
    } else if (bn->parsed()) {
      if (bn_opts.iterations == 0) {
        throw Error(ErrorCode::ConfigError, "--iterations must be at least 1");
      }
      BenchReport report;
      if (bn_scenario == "frustum") {
        report = bench_frustum(synthetic_scene(bn_points, bn_poses, bn_flags.resolve().seed),
                               bn_opts);
      } else {
        const PipelineConfig cfg = bn_flags.resolve();
        EventWindow source = bn_in.path.empty() ? synthetic_events(cfg.fen_count, cfg.seed)
                                                : bn_in.load();
        EventStream stream(std::move(source.events), source.geom);
        report = bench_encode(stream.window_fen(cfg.fen_count), cfg, resolve_weights(cfg, {}),
                              bn_opts);
      }
      write_bench_text(std::cout, report);
      if (bn_json) {
        std::ofstream out(*bn_json);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + bn_json->string());
        write_bench_json(out, report);
      }
    }
  } catch (const Error& e) {
    std::cerr << "e2p: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "e2p: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "e2p: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
