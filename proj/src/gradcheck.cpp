#include "ep2t/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "ep2t/error.hpp"
#include "ep2t/rng.hpp"

namespace ep2t {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

constexpr std::size_t kCheckChannels = 4;
// Narrow hidden layers keep every unit's pre-activations well separated.
constexpr std::array<std::size_t, 2> kCheckHidden{16, 16};
constexpr double kLinearityTol = 1e-10;

Matrix<double> random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix<double> m(rows, cols);
  for (double& v : m.data) v = 2.0 * uniform_unit(rng) - 1.0;
  return m;
}

double dot(const Matrix<double>& a, const Matrix<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

STCloud random_cloud(Rng& rng, std::size_t n) {
  STCloud cloud;
  cloud.source_geom = {1, 1};
  cloud.t_max = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    NormalizedEvent e;
    e.h = uniform_unit(rng);
    e.w = uniform_unit(rng);
    e.t = uniform_unit(rng);
    e.p = uniform_unit(rng) < 0.5 ? -1 : 1;
    cloud.points.push_back(e);
  }
  return cloud;
}

// Distinct neighbors of every center in first-occurrence order, as the MLP sees them.
std::vector<std::array<double, kLaInputDim>> la_inputs(const STCloud& cloud,
                                                       const CenterSet& centers,
                                                       const NeighborTable& table) {
  std::vector<std::array<double, kLaInputDim>> rows;
  for (std::size_t j = 0; j < centers.size(); ++j) {
    std::vector<std::uint32_t> seen;
    const StPoint& c = centers.centers[j];
    for (std::size_t n = 0; n < table.k; ++n) {
      const std::uint32_t idx = table.at(j, n);
      if (std::find(seen.begin(), seen.end(), idx) != seen.end()) continue;
      seen.push_back(idx);
      const NormalizedEvent& e = cloud.points[idx];
      rows.push_back({e.h - c.h, e.w - c.w, e.t - c.t, double(e.p)});
    }
  }
  return rows;
}

// Chooses each hidden bias so that zero falls in the middle of the widest gap
// between the unit's pre-activations, then returns the post-ReLU values and
// the smallest |pre-activation| seen.
double place_biases(const std::vector<std::vector<double>>& inputs, const Matrix<double>& w,
                    Matrix<double>& bias, std::vector<std::vector<double>>& outputs) {
  double margin = std::numeric_limits<double>::infinity();
  outputs.assign(inputs.size(), std::vector<double>(w.cols));
  std::vector<double> z(inputs.size());
  for (std::size_t u = 0; u < w.cols; ++u) {
    for (std::size_t r = 0; r < inputs.size(); ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w.rows; ++i) acc += inputs[r][i] * w(i, u);
      z[r] = acc;
    }
    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end());
    double best_gap = -1.0, split = sorted.back() + 1.0;
    for (std::size_t r = 0; r + 1 < sorted.size(); ++r) {
      if (sorted[r + 1] - sorted[r] > best_gap) {
        best_gap = sorted[r + 1] - sorted[r];
        split = 0.5 * (sorted[r] + sorted[r + 1]);
      }
    }
    if (best_gap <= 0.0) split = sorted.front() - 1.0;  // all equal: keep the unit active
    bias(0, u) = -split;
    for (std::size_t r = 0; r < inputs.size(); ++r) {
      const double pre = z[r] + bias(0, u);
      margin = std::min(margin, std::abs(pre));
      outputs[r][u] = pre > 0.0 ? pre : 0.0;
    }
  }
  return margin;
}

// True when every single-parameter move of +/- step leaves each configuration's
// output on one linear piece (zero second difference), i.e. no ReLU sign or
// max-pool winner changes inside the central-difference stencil.
bool locally_linear(LaCheckInstance& inst, double step) {
  for (std::size_t cfg = 0; cfg < 3; ++cfg) {
    MlpWeights<double>& mlp = inst.weights.configs[cfg];
    const auto eval = [&] {
      return la_aggregate(inst.cloud, inst.centers, inst.tables[cfg], mlp);
    };
    const Matrix<double> mid = eval();
    std::vector<Matrix<double>*> params;
    for (auto& m : mlp.layers) params.push_back(&m);
    for (auto& b : mlp.biases) params.push_back(&b);
    for (Matrix<double>* p : params) {
      for (double& v : p->data) {
        const double orig = v;
        v = orig + step;
        const Matrix<double> up = eval();
        v = orig - step;
        const Matrix<double> down = eval();
        v = orig;
        for (std::size_t i = 0; i < mid.data.size(); ++i) {
          if (std::abs(up.data[i] - 2.0 * mid.data[i] + down.data[i]) > kLinearityTol) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace

LaCheckInstance make_la_check_instance(std::uint64_t seed, double step) {
  constexpr int kMaxAttempts = 500;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(attempt));
    Rng rng(s);
    LaCheckInstance inst;
    inst.cloud = random_cloud(rng, 32);
    inst.centers = uniform_centers({2, 2, 2});
    for (int cfg = 0; cfg < 3; ++cfg) {
      const NeighborTable knn =
          knn_separated(inst.cloud, inst.centers, 4, kDefaultDomainWeights[cfg]);
      inst.tables[cfg] =
          apply_replacement(inst.cloud, inst.centers, knn, kDefaultDomainWeights[cfg]);
    }
    inst.weights = init_weights(mix_seed(s, 1), kCheckChannels, StaInit::Random, kCheckHidden).la;

    double relu_margin = std::numeric_limits<double>::infinity();
    double pool_margin = std::numeric_limits<double>::infinity();
    for (int cfg = 0; cfg < 3; ++cfg) {
      MlpWeights<double>& mlp = inst.weights.configs[cfg];
      std::vector<std::vector<double>> acts;
      for (const auto& row : la_inputs(inst.cloud, inst.centers, inst.tables[cfg])) {
        acts.emplace_back(row.begin(), row.end());
      }
      for (std::size_t l = 0; l + 1 < mlp.layers.size(); ++l) {
        std::vector<std::vector<double>> next;
        relu_margin = std::min(relu_margin, place_biases(acts, mlp.layers[l], mlp.biases[l], next));
        acts.swap(next);
      }
      const Matrix<double> feats =
          la_aggregate(inst.cloud, inst.centers, inst.tables[cfg], mlp);
      // Gap between the winner and the best distinct runner-up, per (center, channel).
      std::size_t offset = 0;
      for (std::size_t j = 0; j < inst.centers.size(); ++j) {
        std::vector<std::uint32_t> seen;
        for (std::size_t n = 0; n < inst.tables[cfg].k; ++n) {
          const std::uint32_t idx = inst.tables[cfg].at(j, n);
          if (std::find(seen.begin(), seen.end(), idx) == seen.end()) seen.push_back(idx);
        }
        for (std::size_t c = 0; c < kCheckChannels; ++c) {
          double runner_up = -std::numeric_limits<double>::infinity();
          const double top = feats(j, c);
          bool top_seen = false;
          for (std::size_t r = 0; r < seen.size(); ++r) {
            const auto& a = acts[offset + r];
            double v = mlp.biases.back()(0, c);
            for (std::size_t i = 0; i < a.size(); ++i) v += a[i] * mlp.layers.back()(i, c);
            if (!top_seen && std::abs(v - top) < 1e-12) {
              top_seen = true;
              continue;
            }
            runner_up = std::max(runner_up, v);
          }
          if (seen.size() > 1) pool_margin = std::min(pool_margin, top - runner_up);
        }
        offset += seen.size();
      }
    }
    if (!locally_linear(inst, step)) continue;

    inst.relu_margin = relu_margin;
    inst.pool_margin = pool_margin;
    Rng cot(mix_seed(s, 2));
    inst.cotangent.spatial = random_matrix(cot, inst.centers.size(), kCheckChannels);
    inst.cotangent.temporal = random_matrix(cot, inst.centers.size(), kCheckChannels);
    inst.cotangent.balanced = random_matrix(cot, inst.centers.size(), kCheckChannels);
    return inst;
  }
  throw Error(ErrorCode::ConfigError, "could not build a kink-free LA check instance");
}

StaCheckInstance make_sta_check_instance(std::uint64_t seed) {
  constexpr std::size_t kRows = 6;
  Rng rng(mix_seed(seed, 0));
  StaCheckInstance inst;
  inst.f_t = random_matrix(rng, kRows, kCheckChannels);
  inst.f_s = random_matrix(rng, kRows, kCheckChannels);
  inst.f_st = random_matrix(rng, kRows, kCheckChannels);
  inst.cotangent = random_matrix(rng, kRows, kCheckChannels);
  inst.weights = init_weights(mix_seed(seed, 1), kCheckChannels).sta;
  return inst;
}

FpCheckInstance make_fp_check_instance(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0));
  FpCheckInstance inst;
  for (int j = 0; j < 6; ++j) {
    inst.centers.centers.push_back({uniform_unit(rng), uniform_unit(rng), uniform_unit(rng)});
  }
  inst.cloud.source_geom = {1, 1};
  inst.cloud.t_max = 1.0;
  while (inst.cloud.size() < 16) {
    const STCloud candidate = random_cloud(rng, 1);
    const NormalizedEvent& e = candidate.points.front();
    bool clear = true;
    for (const StPoint& c : inst.centers.centers) {
      const double d2 = (e.h - c.h) * (e.h - c.h) + (e.w - c.w) * (e.w - c.w) +
                        (e.t - c.t) * (e.t - c.t);
      clear = clear && d2 >= 10.0 * kFpMinDistance;
    }
    if (clear) inst.cloud.points.push_back(e);
  }
  inst.f_sta = random_matrix(rng, inst.centers.size(), kCheckChannels);
  inst.cotangent = random_matrix(rng, inst.cloud.size(), kCheckChannels);
  return inst;
}

namespace {

void sweep(VjpReport& report, const std::string& name, Matrix<double>& param,
           const Matrix<double>& analytic, const std::function<double()>& objective) {
  TensorCheck tc{name, param.data.size(), 0.0};
  const double h = report.step;
  double scale = 0.0;
  for (double g : analytic.data) scale = std::max(scale, std::abs(g));
  const double floor = std::max(kGradcheckFloor, kGradcheckScaleFloor * scale);
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double orig = param.data[i];
    param.data[i] = orig + h;
    const double plus = objective();
    param.data[i] = orig - h;
    const double minus = objective();
    param.data[i] = orig;
    const double numeric = (plus - minus) / (2.0 * h);
    tc.max_rel_error = std::max(tc.max_rel_error, relative_error(analytic.data[i], numeric, floor));
  }
  report.entries += tc.entries;
  report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
  report.tensors.push_back(std::move(tc));
}

void check_la(VjpReport& report) {
  LaCheckInstance inst = make_la_check_instance(report.seed, report.step);
  const LaWeights<double> grad =
      la_vjp<double>(inst.cloud, inst.centers, inst.tables, inst.weights, inst.cotangent);
  const Matrix<double>* cot[3] = {&inst.cotangent.spatial, &inst.cotangent.temporal,
                                  &inst.cotangent.balanced};
  auto params = named_tensors(inst.weights);
  LaWeights<double> grad_copy = grad;
  auto grads = named_tensors(grad_copy);
  const std::size_t per_config = params.size() / 3;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const std::size_t cfg = t / per_config;
    // Parameters of one configuration only reach that configuration's output.
    auto objective = [&] {
      return dot(*cot[cfg], la_aggregate(inst.cloud, inst.centers, inst.tables[cfg],
                                         inst.weights.configs[cfg]));
    };
    sweep(report, params[t].name, *params[t].tensor, *grads[t].tensor, objective);
  }
}

void check_sta(VjpReport& report) {
  StaCheckInstance inst = make_sta_check_instance(report.seed);
  StaGradients<double> grad =
      sta_vjp(inst.f_t, inst.f_s, inst.f_st, inst.weights, inst.cotangent);
  auto objective = [&] {
    return dot(inst.cotangent, sta_forward(inst.f_t, inst.f_s, inst.f_st, inst.weights));
  };
  auto params = named_tensors(inst.weights);
  auto grads = named_tensors(grad.weights);
  for (std::size_t t = 0; t < params.size(); ++t) {
    sweep(report, params[t].name, *params[t].tensor, *grads[t].tensor, objective);
  }
  sweep(report, "input.f_t", inst.f_t, grad.f_t, objective);
  sweep(report, "input.f_s", inst.f_s, grad.f_s, objective);
  sweep(report, "input.f_st", inst.f_st, grad.f_st, objective);
}

void check_fp(VjpReport& report) {
  FpCheckInstance inst = make_fp_check_instance(report.seed);
  const Matrix<double> grad = fp_vjp(inst.f_sta, inst.centers, inst.cloud, inst.cotangent);
  auto objective = [&] {
    return dot(inst.cotangent, fp_propagate(inst.f_sta, inst.centers, inst.cloud));
  };
  sweep(report, "input.f_sta", inst.f_sta, grad, objective);
}

}  // namespace

VjpReport finite_diff_check(OpId op, std::uint64_t seed, double tolerance, double step) {
  VjpReport report;
  report.op = op;
  report.seed = seed;
  report.tolerance = tolerance;
  report.step = step;
  switch (op) {
    case OpId::La: check_la(report); break;
    case OpId::Sta: check_sta(report); break;
    case OpId::Fp: check_fp(report); break;
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace ep2t
