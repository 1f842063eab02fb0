#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ep2t/events.hpp"
#include "ep2t/matrix.hpp"
#include "ep2t/sampling.hpp"

namespace ep2t {

/// Per-neighbor input: (h - c_h, w - c_w, t - c_t, p).
inline constexpr std::size_t kLaInputDim = 4;
inline constexpr std::array<std::size_t, 2> kLaHiddenDims{64, 128};

/// Pointwise MLP. Layer l maps rows through x * layers[l] + biases[l] with a
/// ReLU after every layer except the last.
template <typename T>
struct MlpWeights {
  std::vector<Matrix<T>> layers;  ///< in x out
  std::vector<Matrix<T>> biases;  ///< 1 x out

  std::size_t out_dim() const { return layers.back().cols; }
};

/// One MLP per domain configuration: spatial-, temporal-, balanced-focused.
template <typename T>
struct LaWeights {
  std::array<MlpWeights<T>, 3> configs;

  std::size_t channels() const { return configs[0].out_dim(); }
};

template <typename T>
struct AttentionWeights {
  Matrix<T> query, key, value;  ///< C x C each
};

/// Self-attention within a domain, cross-attention to the other domain, and
/// the tanh / sigmoid gate projections that turn them into a residual.
template <typename T>
struct ResidualKernel {
  AttentionWeights<T> self_attn;
  AttentionWeights<T> cross_attn;
  Matrix<T> gate_tanh;     ///< C x C, applied to the self-attention output
  Matrix<T> gate_sigmoid;  ///< C x C, applied to the cross-attention output
};

template <typename T>
struct StaWeights {
  ResidualKernel<T> temporal;
  ResidualKernel<T> spatial;
  Matrix<T> merge;  ///< 2C x C, maps [R_t | R_s] to the spatio-temporal residual

  std::size_t channels() const { return merge.cols; }
};

template <typename T>
struct NetWeights {
  LaWeights<T> la;
  StaWeights<T> sta;
};

enum class StaInit { Random, Zero };

/// Seeded init: every matrix entry ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
/// biases zero. StaInit::Zero leaves every STA parameter at exactly 0.
NetWeights<double> init_weights(std::uint64_t seed, std::size_t channels,
                                StaInit sta_init = StaInit::Random,
                                std::array<std::size_t, 2> hidden = kLaHiddenDims);

template <typename U, typename T>
NetWeights<U> cast_weights(const NetWeights<T>& w);

template <typename T>
struct NamedTensor {
  std::string name;
  Matrix<T>* tensor;
  int rank;  ///< 1 for biases (stored 1 x n), 2 otherwise
};

/// Stable, ordered view of every parameter tensor; used for serialization and
/// for finite-difference sweeps.
template <typename T>
std::vector<NamedTensor<T>> named_tensors(NetWeights<T>& w);
template <typename T>
std::vector<NamedTensor<T>> named_tensors(LaWeights<T>& w);
template <typename T>
std::vector<NamedTensor<T>> named_tensors(StaWeights<T>& w);

template <typename T>
struct LaFeatures {
  Matrix<T> spatial;   ///< F_s
  Matrix<T> temporal;  ///< F_t
  Matrix<T> balanced;  ///< F_st
};

/// One configuration of local aggregation: M x C max-pooled MLP features.
template <typename T>
Matrix<T> la_aggregate(const STCloud& cloud, const CenterSet& centers, const NeighborTable& table,
                       const MlpWeights<T>& mlp, int threads = 1);

/// Local aggregation: for each configuration and center, the MLP is applied to
/// every neighbor's relative input and the results are max-pooled per channel.
/// `tables` are in configuration order (spatial, temporal, balanced).
template <typename T>
LaFeatures<T> la_forward(const STCloud& cloud, const CenterSet& centers,
                         std::span<const NeighborTable, 3> tables, const LaWeights<T>& weights,
                         int threads = 1);

/// Separated attention: out = F_st + [R_t | R_s] * W_m with
///   R_t = tanh(Attn(F_t, F_t, F_t) * Wg_t) . sigmoid(Attn(F_t, F_s, F_s) * Wr_t)
/// and R_s symmetric; Attn(Q, K, V) = softmax(Q Wq (K Wk)^T / sqrt(C)) V Wv.
template <typename T>
Matrix<T> sta_forward(const Matrix<T>& f_t, const Matrix<T>& f_s, const Matrix<T>& f_st,
                      const StaWeights<T>& weights, int threads = 1);

struct FpOptions {
  /// 0 sums over all centers; otherwise only the n nearest centers contribute.
  std::size_t nearest_centers = 0;
};

/// Inverse squared-distance interpolation of center features onto every
/// event point, with weights 1 / max(|e_i - c_j|^2, 1e-5) in (h, w, t).
/// Weights are evaluated in 64-bit; feature accumulation runs in T.
template <typename T>
Matrix<T> fp_propagate(const Matrix<T>& f_sta, const CenterSet& centers, const STCloud& cloud,
                       FpOptions options = {}, int threads = 1);

inline constexpr double kFpMinDistance = 1e-5;

enum class OpId { La, Sta, Fp };

/// "la", "sta" or "fp"; anything else throws UnsupportedOp.
OpId parse_op(std::string_view name);
std::string_view to_string(OpId op);

// Vector-Jacobian products. Neighbor indices and all coordinates are
// constants. Subgradients: ReLU'(0) = 0, max-pool ties go to the first
// neighbor in row order, an active distance clamp has zero gradient.

/// Gradient of <cotangent, la_forward(...)> w.r.t. the LA parameters.
template <typename T>
LaWeights<T> la_vjp(const STCloud& cloud, const CenterSet& centers,
                    std::span<const NeighborTable, 3> tables, const LaWeights<T>& weights,
                    const LaFeatures<T>& cotangent);

template <typename T>
struct StaGradients {
  Matrix<T> f_t, f_s, f_st;
  StaWeights<T> weights;
};

template <typename T>
StaGradients<T> sta_vjp(const Matrix<T>& f_t, const Matrix<T>& f_s, const Matrix<T>& f_st,
                        const StaWeights<T>& weights, const Matrix<T>& cotangent);

/// Gradient w.r.t. the center features only.
template <typename T>
Matrix<T> fp_vjp(const Matrix<T>& f_sta, const CenterSet& centers, const STCloud& cloud,
                 const Matrix<T>& cotangent, FpOptions options = {});

}  // namespace ep2t
