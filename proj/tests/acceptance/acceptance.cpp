// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "ep2t/events.hpp"
#include "ep2t/geometry.hpp"
#include "ep2t/gradcheck.hpp"
#include "ep2t/net.hpp"
#include "ep2t/pipeline.hpp"
#include "ep2t/sampling.hpp"
#include "ep2t/tensorize.hpp"
#include "oracles.hpp"

using namespace ep2t;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix<double> random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix<double> m(r, c);
  for (double& v : m.data) v = 2.0 * uniform_unit(rng) - 1.0;
  return m;
}

EventWindow first_window(std::size_t n, std::uint64_t seed) {
  const EventWindow all = synthetic_events(n, seed);
  EventStream stream(all.events, all.geom);
  return stream.window_fen(n);
}

Outcome frustum_speed() {
  const FrustumScene scene = synthetic_scene(100000, 100, 2024);
  const BenchReport r = bench_frustum(scene, {1, 5});
  return {r.selections_match && r.speedup >= 1.5,
          fmt("selections %s, frustum %.1f ms, projection %.1f ms, speedup %.2fx (need >= 1.5x)",
              r.selections_match ? "identical" : "DIFFER", r.frustum_ms, r.project_ms, r.speedup)};
}

Outcome knn_oracle() {
  Rng rng(7001);
  std::size_t mismatches = 0, checks = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + uniform_index(rng, 512);
    const std::size_t m = 1 + uniform_index(rng, 16);
    const std::size_t k = 1 + uniform_index(rng, 64);
    const STCloud cloud = oracle::random_cloud(rng, n, inst % 4 == 0 ? 5 : 0);
    const CenterSet cs = oracle::random_centers(rng, m);
    for (DomainWeights w : kDefaultDomainWeights) {
      const NeighborTable want = oracle::replace(cloud, cs, oracle::knn(cloud, cs, k, w), w);
      for (KnnMethod method : {KnnMethod::Grid, KnnMethod::Exhaustive}) {
        const NeighborTable got = apply_replacement(cloud, cs, knn_separated(cloud, cs, k, w, method), w);
        ++checks;
        if (!(got == want)) ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt("%zu/%zu tables equal the exhaustive oracle", checks - mismatches, checks)};
}

Outcome fp_correctness() {
  Rng rng(7002);
  double unity = 0.0;
  std::size_t convex_bad = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 1 + uniform_index(rng, 64);
    const std::size_t m = 1 + uniform_index(rng, 32);
    const STCloud cloud = oracle::random_cloud(rng, n);
    const CenterSet cs = oracle::random_centers(rng, m);
    for (double v : fp_propagate(Matrix<double>(m, 2, 1.0), cs, cloud).data)
      unity = std::max(unity, std::abs(v - 1.0));
    const Matrix<double> f = random_matrix(rng, m, 3);
    const Matrix<double> out = fp_propagate(f, cs, cloud);
    for (std::size_t c = 0; c < 3; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t j = 0; j < m; ++j) {
        lo = std::min(lo, f(j, c));
        hi = std::max(hi, f(j, c));
      }
      for (std::size_t i = 0; i < n; ++i)
        if (out(i, c) < lo || out(i, c) > hi) ++convex_bad;
    }
  }
  // Coincident point and a second center at squared distance 1/2: weights 1e5 and 2.
  STCloud one;
  one.points = {{0.25, 0.25, 0.25, 1}};
  CenterSet cs;
  cs.centers = {{0.25, 0.25, 0.25}, {0.75, 0.75, 0.25}};
  Matrix<double> f(2, 1);
  f(0, 0) = 1.0;
  f(1, 0) = 2.0;
  const double want = (1e5 * 1.0 + 2.0 * 2.0) / (1e5 + 2.0);
  const double clamp_err = std::abs(fp_propagate(f, cs, one)(0, 0) - want);
  return {unity <= 1e-12 && clamp_err <= 1e-12 && convex_bad == 0,
          fmt("partition of unity max error %.2e, clamp example error %.2e (tol 1e-12), "
              "%zu convexity violations over 1000 instances",
              unity, clamp_err, convex_bad)};
}

Outcome differentiability() {
  double worst[3] = {0, 0, 0};
  bool ok = true;
  const OpId ops[3] = {OpId::La, OpId::Sta, OpId::Fp};
  for (int o = 0; o < 3; ++o) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const VjpReport r = finite_diff_check(ops[o], seed, 1e-4, 1e-3);
      worst[o] = std::max(worst[o], r.max_rel_error);
      ok = ok && r.passed && r.entries > 0;
    }
  }
  return {ok, fmt("max relative error la %.2e, sta %.2e, fp %.2e over 10 seeds (tol 1e-4, step 1e-3)",
                  worst[0], worst[1], worst[2])};
}

Outcome sta_bypass() {
  Rng rng(7005);
  int equal = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 16 + uniform_index(rng, 200);
    const std::size_t c = 4 + uniform_index(rng, 61);
    const NetWeights<double> w = init_weights(trial, c, StaInit::Zero, {8, 8});
    const Matrix<double> ft = random_matrix(rng, m, c), fs = random_matrix(rng, m, c),
                         fst = random_matrix(rng, m, c);
    const bool f64 = sta_forward(ft, fs, fst, w.sta) == fst;
    const auto w32 = cast_weights<float>(w);
    const Matrix<float> fst32 = fst.cast<float>();
    const bool f32 = sta_forward(ft.cast<float>(), fs.cast<float>(), fst32, w32.sta) == fst32;
    if (f64 && f32) ++equal;
  }
  return {equal == 10, fmt("%d/10 random triples bitwise equal to F_st (32- and 64-bit)", equal)};
}

Outcome tensorization() {
  Rng rng(7006);
  int count_ok = 0, latest_ok = 0, hist_ok = 0;
  double vol_err = 0.0;
  const TensorizeConfig cfg{256, 256, 5, true};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 10000);
    const EventWindow win = oracle::random_window(rng, n, 260, 346);
    const STCloud cloud = normalize(win);
    FeatureMatrix f(n, 4);
    for (float& v : f.data) v = static_cast<float>(2.0 * uniform_unit(rng) - 1.0);
    if (count_map(cloud, f, cfg).data == oracle::scatter_sum(cloud, f, 256, 256)) ++count_ok;
    if (latest_map(cloud, f, cfg).data == oracle::scatter_latest(cloud, f, 256, 256)) ++latest_ok;
    const GridTensor vol = temporal_volume(cloud, f, cfg);
    const auto ref = oracle::scatter_volume(cloud, f, 256, 256, 5);
    for (std::size_t i = 0; i < ref.size(); ++i) vol_err = std::max(vol_err, std::abs(vol.data[i] - ref[i]));
    const GridTensor es = e_statistic(win, cfg);
    const auto hist = oracle::polarity_histogram(win, 256, 256);
    bool same = true;
    for (std::size_t px = 0; px < hist.size(); ++px) {
      same = same && es.data[px * es.channels] == static_cast<float>(hist[px][0]) &&
             es.data[px * es.channels + 1] == static_cast<float>(hist[px][1]);
    }
    if (same) ++hist_ok;
  }
  return {count_ok == 100 && latest_ok == 100 && hist_ok == 100 && vol_err <= 1e-6,
          fmt("count %d/100 and latest %d/100 bitwise, volume max error %.2e (tol 1e-6), "
              "E-Statistic counts %d/100",
              count_ok, latest_ok, vol_err, hist_ok)};
}

Outcome metrics() {
  Rng rng(7007);
  double self = 0.0, angle_err = 0.0, asym = 0.0, left = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Matrix3d a = random_rotation(rng), b = random_rotation(rng), q = random_rotation(rng);
    self = std::max(self, rotation_error(a, a));
    const double e = rotation_error(a, b);
    asym = std::max(asym, std::abs(e - rotation_error(b, a)));
    left = std::max(left, std::abs(e - rotation_error(q * a, q * b)));
  }
  for (double deg : {30.0, 90.0, 180.0}) {
    for (int i = 0; i < 50; ++i) {
      Eigen::Vector3d axis(2 * uniform_unit(rng) - 1, 2 * uniform_unit(rng) - 1, 2 * uniform_unit(rng) - 1);
      axis.normalize();
      const Eigen::Matrix3d base = random_rotation(rng);
      const double theta = deg * kPi / 180.0;
      angle_err = std::max(angle_err, std::abs(rotation_error(base, base * axis_angle(axis, theta)) - theta));
      angle_err = std::max(angle_err,
                           std::abs(rotation_error(Eigen::Matrix3d::Identity(), axis_angle(axis, theta)) - theta));
    }
  }
  const bool te = translation_error({0, 0, 0}, {3, 4, 0}) == 5.0 &&
                  translation_error({1, 2, 3}, {1, 2, 3}) == 0.0 &&
                  translation_error({0, 0, 0}, {0, 0, -2}) == 2.0;
  return {self == 0.0 && angle_err <= 1e-9 && te && asym <= 1e-12 && left <= 1e-9,
          fmt("RE(R,R) max %.1e, 30/90/180 deg max error %.2e (tol 1e-9), TE cases %s, "
              "symmetry %.1e, left-invariance %.1e over 1000 pairs",
              self, angle_err, te ? "exact" : "WRONG", asym, left)};
}

Outcome simulator() {
  Rng rng(7008);
  std::size_t events = 0, below = 0, missed = 0;
  for (int s = 0; s < 50; ++s) {
    const int H = 1 + static_cast<int>(uniform_index(rng, 6));
    const int W = 1 + static_cast<int>(uniform_index(rng, 6));
    const ImageSequence seq = oracle::random_sequence(rng, H, W, 3 + uniform_index(rng, 8));
    const double tau = 0.05 + 0.3 * uniform_unit(rng);
    const EventWindow out = simulate_events(seq, {tau});
    const oracle::SimulationAudit a = oracle::audit_simulation(seq, tau, out);
    events += a.events;
    below += a.below_threshold;
    missed += a.missed;
  }
  ImageSequence two;
  two.geom = {1, 1};
  two.frames = {{0.0, {1.0}}, {1.0, {2.0}}};
  const EventWindow ex = simulate_events(two, {0.2});
  bool example = ex.size() == 3;
  for (std::size_t i = 0; example && i < 3; ++i) {
    example = ex.events[i].p == 1 && std::abs(ex.events[i].t - 0.2 * (i + 1) / std::log(2.0)) <= 1e-12;
  }
  return {below == 0 && missed == 0 && example,
          fmt("%zu events over 50 sequences, %zu below threshold, %zu unreported crossings; "
              "log 2 step with tau 0.2 gives %zu events",
              events, below, missed, ex.size())};
}

Outcome shape_contract() {
  const EventWindow win = first_window(20000, 11);
  PipelineConfig cfg;
  cfg.threads = 1;
  const NetWeights<float> w = resolve_weights(cfg, std::nullopt);
  const GridTensor a = encode_window(win, cfg, w);
  const GridTensor b = encode_window(win, cfg, w);
  cfg.threads = 2;
  const GridTensor c = encode_window(win, cfg, w);
  const bool shape = a.height == 256 && a.width == 256 && a.channels == 64 + 64 + 320;
  return {shape && a == b && a == c && uniform_centers(cfg.grid).size() == 4500,
          fmt("%zu events -> %zux%zux%zu, repeat run %s, 2 threads %s", win.size(), a.height,
              a.width, a.channels, a == b ? "identical" : "DIFFERS", a == c ? "identical" : "DIFFERS")};
}

Outcome throughput_trend() {
  const EventWindow win = first_window(20000, 12);
  PipelineConfig cfg;
  const NetWeights<float> w = resolve_weights(cfg, std::nullopt);
  double eps[3];
  const std::size_t ns[3] = {512, 8192, 16384};
  for (int i = 0; i < 3; ++i) {
    cfg.sample_n = ns[i];
    eps[i] = bench_encode(win, cfg, w, {1, 3}).events_per_sec;
  }
  return {eps[0] > eps[1] && eps[1] > eps[2],
          fmt("events/s at N=512: %.0f, N=8192: %.0f, N=16384: %.0f (median of 3 after 1 warmup)",
              eps[0], eps[1], eps[2])};
}

}  // namespace

int main() {
  run(1, "frustum selection speed", frustum_speed);
  run(2, "k-NN with replacement vs oracle", knn_oracle);
  run(3, "feature propagation", fp_correctness);
  run(4, "analytic gradients", differentiability);
  run(5, "zero attention bypass", sta_bypass);
  run(6, "tensorization oracles", tensorization);
  run(7, "pose metrics", metrics);
  run(8, "simulator soundness", simulator);
  run(9, "default shape and reproducibility", shape_contract);
  run(10, "throughput vs sample count", throughput_trend);
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
