#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ep2t/net.hpp"

namespace ep2t {

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
};

struct VjpReport {
  OpId op = OpId::La;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  double step = 0.0;
  std::vector<TensorCheck> tensors;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// entries whose true gradient is ~0 from dividing truncation and rounding
/// noise by itself. Sweeps use max(kGradcheckFloor, kGradcheckScaleFloor *
/// largest |analytic| entry of the tensor).
inline constexpr double kGradcheckFloor = 1e-6;
inline constexpr double kGradcheckScaleFloor = 1e-3;
double relative_error(double analytic, double numeric, double floor = kGradcheckFloor);

/// Small LA instance (N=32, M=8, K=4, C=4, hidden 16/16). Hidden biases sit in
/// the widest gap of each unit's pre-activations, and the instance is redrawn
/// until no single parameter move of +/- `step` crosses a ReLU or max-pool kink.
struct LaCheckInstance {
  STCloud cloud;
  CenterSet centers;
  std::array<NeighborTable, 3> tables;
  LaWeights<double> weights;
  LaFeatures<double> cotangent;
  double relu_margin = 0.0;  ///< smallest |pre-activation| observed
  double pool_margin = 0.0;  ///< smallest gap between distinct max-pool candidates
};
LaCheckInstance make_la_check_instance(std::uint64_t seed, double step = 1e-3);

struct StaCheckInstance {
  Matrix<double> f_t, f_s, f_st;
  StaWeights<double> weights;
  Matrix<double> cotangent;
};
StaCheckInstance make_sta_check_instance(std::uint64_t seed);

/// Every point keeps a squared distance of at least 10x the clamp to every center.
struct FpCheckInstance {
  STCloud cloud;
  CenterSet centers;
  Matrix<double> f_sta;
  Matrix<double> cotangent;
};
FpCheckInstance make_fp_check_instance(std::uint64_t seed);

/// Central differences of <cotangent, op(...)> for every parameter and
/// differentiable input entry, compared against the analytic VJP (64-bit).
VjpReport finite_diff_check(OpId op, std::uint64_t seed, double tolerance, double step = 1e-3);

}  // namespace ep2t
