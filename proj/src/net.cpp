#include "ep2t/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ep2t/error.hpp"
#include "ep2t/parallel.hpp"
#include "ep2t/rng.hpp"

namespace ep2t {

namespace {

// All products below accumulate over the inner dimension in ascending order,
// one output element at a time, so results do not depend on how rows are
// split between threads.

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b, int threads = 1) {
  Matrix<T> out(a.rows, b.cols);
  parallel_for(a.rows, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      T* o = out.row(r);
      const T* x = a.row(r);
      for (std::size_t k = 0; k < a.cols; ++k) {
        const T xk = x[k];
        const T* br = b.row(k);
        for (std::size_t c = 0; c < b.cols; ++c) o[c] += xk * br[c];
      }
    }
  });
  return out;
}

// a^T * b
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.cols, b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const T* x = a.row(r);
    const T* br = b.row(r);
    for (std::size_t i = 0; i < a.cols; ++i) {
      T* o = out.row(i);
      const T xi = x[i];
      for (std::size_t c = 0; c < b.cols; ++c) o[c] += xi * br[c];
    }
  }
  return out;
}

// a * b^T
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows, b.rows);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const T* x = a.row(r);
    for (std::size_t c = 0; c < b.rows; ++c) {
      const T* y = b.row(c);
      T acc = 0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += x[k] * y[k];
      out(r, c) = acc;
    }
  }
  return out;
}

template <typename T>
void add_into(Matrix<T>& dst, const Matrix<T>& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols, a.rows);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
  }
  return out;
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
Matrix<T> zeros_like(const Matrix<T>& m) {
  return Matrix<T>(m.rows, m.cols);
}

// ---------------------------------------------------------------- init

Matrix<double> uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix<double> m(rows, cols);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : m.data) v = bound * (2.0 * uniform_unit(rng) - 1.0);
  return m;
}

Matrix<double> square(Rng& rng, std::size_t c, bool zero) {
  return zero ? Matrix<double>(c, c) : uniform_matrix(rng, c, c);
}

ResidualKernel<double> init_kernel(Rng& rng, std::size_t c, bool zero) {
  ResidualKernel<double> k;
  k.self_attn = {square(rng, c, zero), square(rng, c, zero), square(rng, c, zero)};
  k.cross_attn = {square(rng, c, zero), square(rng, c, zero), square(rng, c, zero)};
  k.gate_tanh = square(rng, c, zero);
  k.gate_sigmoid = square(rng, c, zero);
  return k;
}

template <typename U, typename T>
MlpWeights<U> cast_mlp(const MlpWeights<T>& m) {
  MlpWeights<U> out;
  for (const auto& l : m.layers) out.layers.push_back(l.template cast<U>());
  for (const auto& b : m.biases) out.biases.push_back(b.template cast<U>());
  return out;
}

template <typename U, typename T>
AttentionWeights<U> cast_attn(const AttentionWeights<T>& a) {
  return {a.query.template cast<U>(), a.key.template cast<U>(), a.value.template cast<U>()};
}

template <typename U, typename T>
ResidualKernel<U> cast_kernel(const ResidualKernel<T>& k) {
  return {cast_attn<U>(k.self_attn), cast_attn<U>(k.cross_attn), k.gate_tanh.template cast<U>(),
          k.gate_sigmoid.template cast<U>()};
}

template <typename T>
void push_kernel(std::vector<NamedTensor<T>>& out, const std::string& prefix,
                 ResidualKernel<T>& k) {
  out.push_back({prefix + ".self.query", &k.self_attn.query, 2});
  out.push_back({prefix + ".self.key", &k.self_attn.key, 2});
  out.push_back({prefix + ".self.value", &k.self_attn.value, 2});
  out.push_back({prefix + ".cross.query", &k.cross_attn.query, 2});
  out.push_back({prefix + ".cross.key", &k.cross_attn.key, 2});
  out.push_back({prefix + ".cross.value", &k.cross_attn.value, 2});
  out.push_back({prefix + ".gate_tanh", &k.gate_tanh, 2});
  out.push_back({prefix + ".gate_sigmoid", &k.gate_sigmoid, 2});
}

constexpr const char* kConfigNames[3] = {"spatial", "temporal", "balanced"};

}  // namespace

NetWeights<double> init_weights(std::uint64_t seed, std::size_t channels, StaInit sta_init,
                                std::array<std::size_t, 2> hidden) {
  if (channels == 0 || hidden[0] == 0 || hidden[1] == 0) {
    throw Error(ErrorCode::ConfigError, "layer widths must be at least 1");
  }
  Rng rng(seed);
  NetWeights<double> w;
  const std::size_t dims[4] = {kLaInputDim, hidden[0], hidden[1], channels};
  for (auto& mlp : w.la.configs) {
    for (int l = 0; l < 3; ++l) {
      mlp.layers.push_back(uniform_matrix(rng, dims[l], dims[l + 1]));
      mlp.biases.emplace_back(1, dims[l + 1]);
    }
  }
  const bool zero = sta_init == StaInit::Zero;
  w.sta.temporal = init_kernel(rng, channels, zero);
  w.sta.spatial = init_kernel(rng, channels, zero);
  w.sta.merge = zero ? Matrix<double>(2 * channels, channels)
                     : uniform_matrix(rng, 2 * channels, channels);
  return w;
}

template <typename U, typename T>
NetWeights<U> cast_weights(const NetWeights<T>& w) {
  NetWeights<U> out;
  for (int i = 0; i < 3; ++i) out.la.configs[i] = cast_mlp<U>(w.la.configs[i]);
  out.sta.temporal = cast_kernel<U>(w.sta.temporal);
  out.sta.spatial = cast_kernel<U>(w.sta.spatial);
  out.sta.merge = w.sta.merge.template cast<U>();
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> named_tensors(LaWeights<T>& w) {
  std::vector<NamedTensor<T>> out;
  for (int c = 0; c < 3; ++c) {
    auto& mlp = w.configs[c];
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      const std::string prefix = std::string("la.") + kConfigNames[c] + ".layer" + std::to_string(l);
      out.push_back({prefix + ".weight", &mlp.layers[l], 2});
      out.push_back({prefix + ".bias", &mlp.biases[l], 1});
    }
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> named_tensors(StaWeights<T>& w) {
  std::vector<NamedTensor<T>> out;
  push_kernel(out, "sta.temporal", w.temporal);
  push_kernel(out, "sta.spatial", w.spatial);
  out.push_back({"sta.merge", &w.merge, 2});
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> named_tensors(NetWeights<T>& w) {
  auto out = named_tensors(w.la);
  auto sta = named_tensors(w.sta);
  out.insert(out.end(), sta.begin(), sta.end());
  return out;
}

// ---------------------------------------------------------------- LA

namespace {

template <typename T>
void check_mlp(const MlpWeights<T>& mlp, std::size_t channels) {
  if (mlp.layers.empty() || mlp.layers.size() != mlp.biases.size() ||
      mlp.layers.front().rows != kLaInputDim || mlp.out_dim() != channels) {
    throw Error(ErrorCode::ShapeMismatch, "LA weights have inconsistent layer shapes");
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    if (mlp.biases[l].rows != 1 || mlp.biases[l].cols != mlp.layers[l].cols ||
        (l > 0 && mlp.layers[l].rows != mlp.layers[l - 1].cols)) {
      throw Error(ErrorCode::ShapeMismatch, "LA weights have inconsistent layer shapes");
    }
  }
}

void check_table(const STCloud& cloud, const CenterSet& centers, const NeighborTable& t) {
  if (t.rows != centers.size() || t.k == 0 || t.indices.size() != t.rows * t.k) {
    throw Error(ErrorCode::ShapeMismatch, "neighbor table does not match the center set");
  }
  for (std::uint32_t idx : t.indices) {
    if (idx >= cloud.size()) throw Error(ErrorCode::ShapeMismatch, "neighbor index out of range");
  }
}

void check_tables(const STCloud& cloud, const CenterSet& centers,
                  std::span<const NeighborTable, 3> tables) {
  for (const NeighborTable& t : tables) check_table(cloud, centers, t);
}

/// Per-thread buffers for a center's neighbor rows. acts[l] holds the
/// post-activation output of layer l for every unique neighbor.
template <typename T>
struct LaScratch {
  std::vector<std::uint32_t> unique;
  std::vector<T> input;
  std::vector<std::vector<T>> acts;
};

template <typename T>
void dense_rows(const T* in, std::size_t rows, const Matrix<T>& w, const Matrix<T>& b, T* out,
                bool relu) {
  const std::size_t n_in = w.rows;
  const std::size_t n_out = w.cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in + r * n_in;
    T* o = out + r * n_out;
    std::copy(b.data.begin(), b.data.end(), o);
    for (std::size_t i = 0; i < n_in; ++i) {
      const T xi = x[i];
      if (xi == T(0)) continue;
      const T* wr = w.row(i);
      for (std::size_t c = 0; c < n_out; ++c) o[c] += xi * wr[c];
    }
    if (relu) {
      for (std::size_t c = 0; c < n_out; ++c) o[c] = o[c] > T(0) ? o[c] : T(0);
    }
  }
}

// Gathers the distinct neighbors of row j (first-occurrence order) and runs
// the MLP over them.
template <typename T>
void run_center(const STCloud& cloud, const StPoint& c, const std::uint32_t* row, std::size_t k,
                const MlpWeights<T>& mlp, LaScratch<T>& s) {
  s.unique.clear();
  for (std::size_t n = 0; n < k; ++n) {
    if (std::find(s.unique.begin(), s.unique.end(), row[n]) == s.unique.end()) {
      s.unique.push_back(row[n]);
    }
  }
  const std::size_t rows = s.unique.size();
  s.input.resize(rows * kLaInputDim);
  for (std::size_t r = 0; r < rows; ++r) {
    const NormalizedEvent& e = cloud.points[s.unique[r]];
    T* x = s.input.data() + r * kLaInputDim;
    x[0] = static_cast<T>(e.h - c.h);
    x[1] = static_cast<T>(e.w - c.w);
    x[2] = static_cast<T>(e.t - c.t);
    x[3] = static_cast<T>(e.p);
  }
  s.acts.resize(mlp.layers.size());
  const T* in = s.input.data();
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    s.acts[l].resize(rows * mlp.layers[l].cols);
    dense_rows(in, rows, mlp.layers[l], mlp.biases[l], s.acts[l].data(),
               l + 1 < mlp.layers.size());
    in = s.acts[l].data();
  }
}

}  // namespace

template <typename T>
Matrix<T> la_aggregate(const STCloud& cloud, const CenterSet& centers, const NeighborTable& table,
                       const MlpWeights<T>& mlp, int threads) {
  const std::size_t channels = mlp.out_dim();
  check_mlp(mlp, channels);
  check_table(cloud, centers, table);
  Matrix<T> f(centers.size(), channels);
  parallel_for(centers.size(), threads, [&](std::size_t begin, std::size_t end) {
    LaScratch<T> s;
    for (std::size_t j = begin; j < end; ++j) {
      run_center(cloud, centers.centers[j], table.row(j), table.k, mlp, s);
      const T* last = s.acts.back().data();
      T* o = f.row(j);
      std::copy(last, last + channels, o);
      for (std::size_t r = 1; r < s.unique.size(); ++r) {
        const T* v = last + r * channels;
        for (std::size_t c = 0; c < channels; ++c) o[c] = v[c] > o[c] ? v[c] : o[c];
      }
    }
  });
  return f;
}

template <typename T>
LaFeatures<T> la_forward(const STCloud& cloud, const CenterSet& centers,
                         std::span<const NeighborTable, 3> tables, const LaWeights<T>& weights,
                         int threads) {
  const std::size_t channels = weights.channels();
  for (const auto& mlp : weights.configs) check_mlp(mlp, channels);
  LaFeatures<T> out;
  out.spatial = la_aggregate(cloud, centers, tables[0], weights.configs[0], threads);
  out.temporal = la_aggregate(cloud, centers, tables[1], weights.configs[1], threads);
  out.balanced = la_aggregate(cloud, centers, tables[2], weights.configs[2], threads);
  return out;
}

template <typename T>
LaWeights<T> la_vjp(const STCloud& cloud, const CenterSet& centers,
                    std::span<const NeighborTable, 3> tables, const LaWeights<T>& weights,
                    const LaFeatures<T>& cotangent) {
  const std::size_t channels = weights.channels();
  for (const auto& mlp : weights.configs) check_mlp(mlp, channels);
  check_tables(cloud, centers, tables);
  const Matrix<T>* upstream[3] = {&cotangent.spatial, &cotangent.temporal, &cotangent.balanced};
  for (const Matrix<T>* g : upstream) {
    if (g->rows != centers.size() || g->cols != channels) {
      throw Error(ErrorCode::ShapeMismatch, "LA cotangent shape mismatch");
    }
  }

  LaWeights<T> grad;
  for (int cfg = 0; cfg < 3; ++cfg) {
    const MlpWeights<T>& mlp = weights.configs[cfg];
    MlpWeights<T>& g = grad.configs[cfg];
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      g.layers.push_back(zeros_like(mlp.layers[l]));
      g.biases.push_back(zeros_like(mlp.biases[l]));
    }
    const NeighborTable& table = tables[cfg];
    const std::size_t depth = mlp.layers.size();
    LaScratch<T> s;
    std::vector<T> dz, dprev;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      run_center(cloud, centers.centers[j], table.row(j), table.k, mlp, s);
      const std::size_t rows = s.unique.size();
      const T* last = s.acts.back().data();

      // Route each channel's cotangent to its max-pool winner.
      dz.assign(rows * channels, T(0));
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t arg = 0;
        for (std::size_t r = 1; r < rows; ++r) {
          if (last[r * channels + c] > last[arg * channels + c]) arg = r;
        }
        dz[arg * channels + c] = (*upstream[cfg])(j, c);
      }

      for (std::size_t l = depth; l-- > 0;) {
        const Matrix<T>& w = mlp.layers[l];
        const T* in = l == 0 ? s.input.data() : s.acts[l - 1].data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dzr = dz.data() + r * w.cols;
          const T* x = in + r * w.rows;
          for (std::size_t o = 0; o < w.cols; ++o) g.biases[l].data[o] += dzr[o];
          for (std::size_t i = 0; i < w.rows; ++i) {
            const T xi = x[i];
            T* gw = g.layers[l].row(i);
            for (std::size_t o = 0; o < w.cols; ++o) gw[o] += xi * dzr[o];
          }
        }
        if (l == 0) break;
        dprev.assign(rows * w.rows, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dzr = dz.data() + r * w.cols;
          const T* a = s.acts[l - 1].data() + r * w.rows;
          for (std::size_t i = 0; i < w.rows; ++i) {
            if (!(a[i] > T(0))) continue;
            const T* wr = w.row(i);
            T acc = 0;
            for (std::size_t o = 0; o < w.cols; ++o) acc += dzr[o] * wr[o];
            dprev[r * w.rows + i] = acc;
          }
        }
        dz.swap(dprev);
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------- STA

namespace {

template <typename T>
struct AttentionCache {
  Matrix<T> q, k, v;  // projected inputs
  Matrix<T> probs;    // row-wise softmax, M x M
};

/// softmax(Q Wq (K Wk)^T / sqrt(C)) V Wv, computed one query row at a time.
/// The probability matrix is only materialized when `cache` is given.
template <typename T>
Matrix<T> attention(const Matrix<T>& q_in, const Matrix<T>& k_in, const Matrix<T>& v_in,
                    const AttentionWeights<T>& w, int threads, AttentionCache<T>* cache) {
  Matrix<T> q = matmul(q_in, w.query, threads);
  Matrix<T> k = matmul(k_in, w.key, threads);
  Matrix<T> v = matmul(v_in, w.value, threads);
  const Matrix<T> kt = transpose(k);
  const std::size_t m = q.rows;
  const std::size_t n = k.rows;
  const std::size_t ch = q.cols;
  const T scale = T(1) / std::sqrt(static_cast<T>(ch));
  Matrix<T> out(m, v.cols);
  if (cache) cache->probs = Matrix<T>(m, n);
  parallel_for(m, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<T> s(n);
    for (std::size_t i = begin; i < end; ++i) {
      std::fill(s.begin(), s.end(), T(0));
      const T* qi = q.row(i);
      for (std::size_t c = 0; c < ch; ++c) {
        const T qc = qi[c];
        const T* kr = kt.row(c);
        for (std::size_t j = 0; j < n; ++j) s[j] += qc * kr[j];
      }
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        s[j] *= scale;
        peak = std::max(peak, s[j]);
      }
      T sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        s[j] = std::exp(s[j] - peak);
        sum += s[j];
      }
      T* o = out.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        const T p = s[j] / sum;
        if (cache) cache->probs(i, j) = p;
        const T* vr = v.row(j);
        for (std::size_t c = 0; c < v.cols; ++c) o[c] += p * vr[c];
      }
    }
  });
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
  }
  return out;
}

template <typename T>
struct KernelCache {
  AttentionCache<T> self_attn, cross_attn;
  Matrix<T> a_self, a_cross;
  Matrix<T> tanh_g, sig_h;
};

template <typename T>
Matrix<T> residual_kernel(const Matrix<T>& own, const Matrix<T>& other, const ResidualKernel<T>& w,
                          int threads, KernelCache<T>* cache) {
  Matrix<T> a_self =
      attention(own, own, own, w.self_attn, threads, cache ? &cache->self_attn : nullptr);
  Matrix<T> a_cross =
      attention(own, other, other, w.cross_attn, threads, cache ? &cache->cross_attn : nullptr);
  Matrix<T> g = matmul(a_self, w.gate_tanh, threads);
  Matrix<T> h = matmul(a_cross, w.gate_sigmoid, threads);
  Matrix<T> r(g.rows, g.cols);
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    g.data[i] = std::tanh(g.data[i]);
    h.data[i] = sigmoid(h.data[i]);
    r.data[i] = g.data[i] * h.data[i];
  }
  if (cache) {
    cache->a_self = std::move(a_self);
    cache->a_cross = std::move(a_cross);
    cache->tanh_g = std::move(g);
    cache->sig_h = std::move(h);
  }
  return r;
}

template <typename T>
Matrix<T> concat_cols(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::copy(a.row(r), a.row(r) + a.cols, out.row(r));
    std::copy(b.row(r), b.row(r) + b.cols, out.row(r) + a.cols);
  }
  return out;
}

template <typename T>
void check_sta(const Matrix<T>& f_t, const Matrix<T>& f_s, const Matrix<T>& f_st,
               const StaWeights<T>& w) {
  const std::size_t m = f_st.rows;
  const std::size_t c = f_st.cols;
  const auto square = [c](const Matrix<T>& x) { return x.rows == c && x.cols == c; };
  const auto kernel_ok = [&](const ResidualKernel<T>& k) {
    return square(k.self_attn.query) && square(k.self_attn.key) && square(k.self_attn.value) &&
           square(k.cross_attn.query) && square(k.cross_attn.key) && square(k.cross_attn.value) &&
           square(k.gate_tanh) && square(k.gate_sigmoid);
  };
  if (m == 0 || c == 0 || f_t.rows != m || f_s.rows != m || f_t.cols != c || f_s.cols != c ||
      !kernel_ok(w.temporal) || !kernel_ok(w.spatial) || w.merge.rows != 2 * c ||
      w.merge.cols != c) {
    throw Error(ErrorCode::ShapeMismatch, "STA inputs and weights must share M x C / C x C shapes");
  }
}

}  // namespace

template <typename T>
Matrix<T> sta_forward(const Matrix<T>& f_t, const Matrix<T>& f_s, const Matrix<T>& f_st,
                      const StaWeights<T>& weights, int threads) {
  check_sta(f_t, f_s, f_st, weights);
  const Matrix<T> r_t = residual_kernel<T>(f_t, f_s, weights.temporal, threads, nullptr);
  const Matrix<T> r_s = residual_kernel<T>(f_s, f_t, weights.spatial, threads, nullptr);
  Matrix<T> out = matmul(concat_cols(r_t, r_s), weights.merge, threads);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f_st.data[i] + out.data[i];
  return out;
}

namespace {

// Accumulates input gradients of one attention call into dq / dk / dv and
// parameter gradients into `gw`.
template <typename T>
void attention_backward(const Matrix<T>& d_out, const Matrix<T>& q_in, const Matrix<T>& k_in,
                        const Matrix<T>& v_in, const AttentionWeights<T>& w,
                        const AttentionCache<T>& cache, AttentionWeights<T>& gw, Matrix<T>& dq,
                        Matrix<T>& dk, Matrix<T>& dv) {
  const Matrix<T>& p = cache.probs;
  const T scale = T(1) / std::sqrt(static_cast<T>(cache.q.cols));
  const Matrix<T> d_vp = matmul_tn(p, d_out);
  Matrix<T> d_s = matmul_nt(d_out, cache.v);
  for (std::size_t i = 0; i < p.rows; ++i) {
    T dot = 0;
    for (std::size_t j = 0; j < p.cols; ++j) dot += p(i, j) * d_s(i, j);
    for (std::size_t j = 0; j < p.cols; ++j) d_s(i, j) = p(i, j) * (d_s(i, j) - dot) * scale;
  }
  const Matrix<T> d_qp = matmul(d_s, cache.k);
  const Matrix<T> d_kp = matmul_tn(d_s, cache.q);

  add_into(gw.query, matmul_tn(q_in, d_qp));
  add_into(gw.key, matmul_tn(k_in, d_kp));
  add_into(gw.value, matmul_tn(v_in, d_vp));
  add_into(dq, matmul_nt(d_qp, w.query));
  add_into(dk, matmul_nt(d_kp, w.key));
  add_into(dv, matmul_nt(d_vp, w.value));
}

template <typename T>
ResidualKernel<T> zero_kernel(const ResidualKernel<T>& k) {
  return {{zeros_like(k.self_attn.query), zeros_like(k.self_attn.key), zeros_like(k.self_attn.value)},
          {zeros_like(k.cross_attn.query), zeros_like(k.cross_attn.key),
           zeros_like(k.cross_attn.value)},
          zeros_like(k.gate_tanh),
          zeros_like(k.gate_sigmoid)};
}

template <typename T>
void kernel_backward(const Matrix<T>& d_r, const Matrix<T>& own, const Matrix<T>& other,
                     const ResidualKernel<T>& w, const KernelCache<T>& cache,
                     ResidualKernel<T>& gw, Matrix<T>& d_own, Matrix<T>& d_other) {
  Matrix<T> d_g(d_r.rows, d_r.cols);
  Matrix<T> d_h(d_r.rows, d_r.cols);
  for (std::size_t i = 0; i < d_r.data.size(); ++i) {
    const T tg = cache.tanh_g.data[i];
    const T sh = cache.sig_h.data[i];
    d_g.data[i] = d_r.data[i] * sh * (T(1) - tg * tg);
    d_h.data[i] = d_r.data[i] * tg * sh * (T(1) - sh);
  }
  add_into(gw.gate_tanh, matmul_tn(cache.a_self, d_g));
  add_into(gw.gate_sigmoid, matmul_tn(cache.a_cross, d_h));
  const Matrix<T> d_self = matmul_nt(d_g, w.gate_tanh);
  const Matrix<T> d_cross = matmul_nt(d_h, w.gate_sigmoid);
  attention_backward(d_self, own, own, own, w.self_attn, cache.self_attn, gw.self_attn, d_own,
                     d_own, d_own);
  attention_backward(d_cross, own, other, other, w.cross_attn, cache.cross_attn, gw.cross_attn,
                     d_own, d_other, d_other);
}

}  // namespace

template <typename T>
StaGradients<T> sta_vjp(const Matrix<T>& f_t, const Matrix<T>& f_s, const Matrix<T>& f_st,
                        const StaWeights<T>& weights, const Matrix<T>& cotangent) {
  check_sta(f_t, f_s, f_st, weights);
  if (cotangent.rows != f_st.rows || cotangent.cols != f_st.cols) {
    throw Error(ErrorCode::ShapeMismatch, "STA cotangent shape mismatch");
  }
  KernelCache<T> cache_t, cache_s;
  const Matrix<T> r_t = residual_kernel(f_t, f_s, weights.temporal, 1, &cache_t);
  const Matrix<T> r_s = residual_kernel(f_s, f_t, weights.spatial, 1, &cache_s);
  const Matrix<T> merged_in = concat_cols(r_t, r_s);

  StaGradients<T> g;
  g.f_st = cotangent;
  g.f_t = zeros_like(f_t);
  g.f_s = zeros_like(f_s);
  g.weights.temporal = zero_kernel(weights.temporal);
  g.weights.spatial = zero_kernel(weights.spatial);
  g.weights.merge = matmul_tn(merged_in, cotangent);

  const Matrix<T> d_merged = matmul_nt(cotangent, weights.merge);
  const std::size_t c = f_st.cols;
  Matrix<T> d_rt(f_st.rows, c), d_rs(f_st.rows, c);
  for (std::size_t r = 0; r < f_st.rows; ++r) {
    std::copy(d_merged.row(r), d_merged.row(r) + c, d_rt.row(r));
    std::copy(d_merged.row(r) + c, d_merged.row(r) + 2 * c, d_rs.row(r));
  }
  kernel_backward(d_rt, f_t, f_s, weights.temporal, cache_t, g.weights.temporal, g.f_t, g.f_s);
  kernel_backward(d_rs, f_s, f_t, weights.spatial, cache_s, g.weights.spatial, g.f_s, g.f_t);
  return g;
}

// ---------------------------------------------------------------- FP

namespace {

double fp_weight(const NormalizedEvent& e, const StPoint& c) {
  const double dh = e.h - c.h, dw = e.w - c.w, dt = e.t - c.t;
  return 1.0 / std::max(dh * dh + dw * dw + dt * dt, kFpMinDistance);
}

// Center indices contributing to point i: all of them, or the n nearest
// (ties by index) when truncation is on.
void contributing_centers(const NormalizedEvent& e, const CenterSet& centers,
                          std::size_t nearest, std::vector<std::pair<double, std::uint32_t>>& buf,
                          std::vector<std::uint32_t>& out) {
  out.clear();
  const std::size_t m = centers.size();
  if (nearest == 0 || nearest >= m) {
    out.resize(m);
    std::iota(out.begin(), out.end(), 0u);
    return;
  }
  buf.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    buf[j] = {1.0 / fp_weight(e, centers.centers[j]), static_cast<std::uint32_t>(j)};
  }
  std::partial_sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(nearest), buf.end());
  for (std::size_t n = 0; n < nearest; ++n) out.push_back(buf[n].second);
  std::sort(out.begin(), out.end());
}

template <typename T>
void check_fp(const Matrix<T>& f_sta, const CenterSet& centers, const STCloud& cloud) {
  if (centers.size() == 0 || cloud.size() == 0 || f_sta.rows != centers.size() || f_sta.cols == 0) {
    throw Error(ErrorCode::ShapeMismatch, "FP needs one feature row per center and a non-empty cloud");
  }
}

}  // namespace

template <typename T>
Matrix<T> fp_propagate(const Matrix<T>& f_sta, const CenterSet& centers, const STCloud& cloud,
                       FpOptions options, int threads) {
  check_fp(f_sta, centers, cloud);
  const std::size_t ch = f_sta.cols;
  const bool all = options.nearest_centers == 0 || options.nearest_centers >= centers.size();
  // Channel ranges over all centers; rounding in the weighted mean can step
  // a few ulps outside the convex hull, so results are clamped back into it.
  std::vector<T> lo_all(f_sta.row(0), f_sta.row(0) + ch), hi_all = lo_all;
  for (std::size_t j = 1; j < centers.size(); ++j) {
    for (std::size_t c = 0; c < ch; ++c) {
      lo_all[c] = std::min(lo_all[c], f_sta(j, c));
      hi_all[c] = std::max(hi_all[c], f_sta(j, c));
    }
  }
  Matrix<T> out(cloud.size(), ch);
  parallel_for(cloud.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::uint32_t>> buf;
    std::vector<std::uint32_t> use;
    std::vector<T> lo = lo_all, hi = hi_all;
    for (std::size_t i = begin; i < end; ++i) {
      const NormalizedEvent& e = cloud.points[i];
      contributing_centers(e, centers, options.nearest_centers, buf, use);
      if (!all) {
        lo.assign(f_sta.row(use[0]), f_sta.row(use[0]) + ch);
        hi = lo;
      }
      T* o = out.row(i);
      T total = 0;
      for (std::uint32_t j : use) {
        const T wij = static_cast<T>(fp_weight(e, centers.centers[j]));
        total += wij;
        const T* f = f_sta.row(j);
        for (std::size_t c = 0; c < ch; ++c) {
          o[c] += wij * f[c];
          if (!all) {
            lo[c] = std::min(lo[c], f[c]);
            hi[c] = std::max(hi[c], f[c]);
          }
        }
      }
      for (std::size_t c = 0; c < ch; ++c) o[c] = std::clamp(o[c] / total, lo[c], hi[c]);
    }
  });
  return out;
}

template <typename T>
Matrix<T> fp_vjp(const Matrix<T>& f_sta, const CenterSet& centers, const STCloud& cloud,
                 const Matrix<T>& cotangent, FpOptions options) {
  check_fp(f_sta, centers, cloud);
  if (cotangent.rows != cloud.size() || cotangent.cols != f_sta.cols) {
    throw Error(ErrorCode::ShapeMismatch, "FP cotangent shape mismatch");
  }
  const std::size_t ch = f_sta.cols;
  Matrix<T> grad(f_sta.rows, ch);
  std::vector<std::pair<double, std::uint32_t>> buf;
  std::vector<std::uint32_t> use;
  std::vector<T> wts;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const NormalizedEvent& e = cloud.points[i];
    contributing_centers(e, centers, options.nearest_centers, buf, use);
    wts.clear();
    T total = 0;
    for (std::uint32_t j : use) {
      wts.push_back(static_cast<T>(fp_weight(e, centers.centers[j])));
      total += wts.back();
    }
    const T* g = cotangent.row(i);
    for (std::size_t n = 0; n < use.size(); ++n) {
      const T share = wts[n] / total;
      T* d = grad.row(use[n]);
      for (std::size_t c = 0; c < ch; ++c) d[c] += share * g[c];
    }
  }
  return grad;
}

OpId parse_op(std::string_view name) {
  if (name == "la") return OpId::La;
  if (name == "sta") return OpId::Sta;
  if (name == "fp") return OpId::Fp;
  throw Error(ErrorCode::UnsupportedOp, "unknown operation '" + std::string(name) + "'");
}

std::string_view to_string(OpId op) {
  switch (op) {
    case OpId::La: return "la";
    case OpId::Sta: return "sta";
    case OpId::Fp: return "fp";
  }
  return "?";
}

#define EP2T_INSTANTIATE(T)                                                                    \
  template NetWeights<T> cast_weights<T, double>(const NetWeights<double>&);                  \
  template std::vector<NamedTensor<T>> named_tensors(NetWeights<T>&);                         \
  template std::vector<NamedTensor<T>> named_tensors(LaWeights<T>&);                          \
  template std::vector<NamedTensor<T>> named_tensors(StaWeights<T>&);                         \
  template Matrix<T> la_aggregate(const STCloud&, const CenterSet&, const NeighborTable&,    \
                                  const MlpWeights<T>&, int);                                 \
  template LaFeatures<T> la_forward(const STCloud&, const CenterSet&,                         \
                                    std::span<const NeighborTable, 3>, const LaWeights<T>&,   \
                                    int);                                                     \
  template Matrix<T> sta_forward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,        \
                                 const StaWeights<T>&, int);                                  \
  template Matrix<T> fp_propagate(const Matrix<T>&, const CenterSet&, const STCloud&,         \
                                  FpOptions, int);                                            \
  template LaWeights<T> la_vjp(const STCloud&, const CenterSet&,                              \
                               std::span<const NeighborTable, 3>, const LaWeights<T>&,        \
                               const LaFeatures<T>&);                                         \
  template StaGradients<T> sta_vjp(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,      \
                                   const StaWeights<T>&, const Matrix<T>&);                   \
  template Matrix<T> fp_vjp(const Matrix<T>&, const CenterSet&, const STCloud&,               \
                            const Matrix<T>&, FpOptions);

EP2T_INSTANTIATE(float)
EP2T_INSTANTIATE(double)
template NetWeights<double> cast_weights<double, float>(const NetWeights<float>&);
template NetWeights<float> cast_weights<float, float>(const NetWeights<float>&);

#undef EP2T_INSTANTIATE

}  // namespace ep2t
