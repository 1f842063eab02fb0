#include "ep2t/tensorize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ep2t/binary.hpp"
#include "ep2t/error.hpp"
#include "ep2t/parallel.hpp"

namespace ep2t {

void validate(const TensorizeConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0 || cfg.bins == 0) {
    throw Error(ErrorCode::ConfigError, "tensor dimensions and bin count must be at least 1");
  }
}

std::pair<std::size_t, std::size_t> pixel_of(const NormalizedEvent& e, const TensorizeConfig& cfg) {
  const auto bin = [](double x, std::size_t n) {
    const double scaled = std::floor(x * static_cast<double>(n));
    if (!(scaled > 0.0)) return std::size_t{0};
    return std::min(n - 1, static_cast<std::size_t>(scaled));
  };
  return {bin(e.h, cfg.height), bin(e.w, cfg.width)};
}

double bin_weight(double t, std::size_t bin, std::size_t bins) {
  const double b = static_cast<double>(bins);
  const double center = (static_cast<double>(bin) + 0.5) / b;
  return std::max(0.0, 1.0 - b * std::abs(t - center));
}

namespace {

void check_features(const STCloud& cloud, const FeatureMatrix& feats, const TensorizeConfig& cfg) {
  validate(cfg);
  if (feats.rows != cloud.size() || feats.cols == 0) {
    throw Error(ErrorCode::ShapeMismatch, "feature rows (" + std::to_string(feats.rows) +
                                              ") must match cloud points (" +
                                              std::to_string(cloud.size()) + ")");
  }
}

/// Each worker owns a band of pixel rows and walks every event in index
/// order, so per-pixel accumulation order never depends on the thread count.
template <typename Fn>
void scatter_by_row(const STCloud& cloud, const TensorizeConfig& cfg, int threads, Fn&& fn) {
  std::vector<std::pair<std::size_t, std::size_t>> pix(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) pix[i] = pixel_of(cloud.points[i], cfg);
  parallel_for(cfg.height, threads, [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto [r, c] = pix[i];
      if (r >= row_begin && r < row_end) fn(i, r, c);
    }
  });
}

}  // namespace

GridTensor count_map(const STCloud& cloud, const FeatureMatrix& feats, const TensorizeConfig& cfg,
                     int threads) {
  check_features(cloud, feats, cfg);
  GridTensor out(cfg.height, cfg.width, feats.cols);
  scatter_by_row(cloud, cfg, threads, [&](std::size_t i, std::size_t r, std::size_t c) {
    float* px = out.pixel(r, c);
    const float* f = feats.row(i);
    for (std::size_t k = 0; k < feats.cols; ++k) px[k] += f[k];
  });
  return out;
}

GridTensor count_map_sparse(const STCloud& cloud, const FeatureMatrix& feats,
                            const TensorizeConfig& cfg) {
  check_features(cloud, feats, cfg);
  std::vector<std::pair<std::size_t, std::size_t>> coo(cloud.size());  // (linear pixel, event)
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto [r, c] = pixel_of(cloud.points[i], cfg);
    coo[i] = {r * cfg.width + c, i};
  }
  std::sort(coo.begin(), coo.end());
  GridTensor out(cfg.height, cfg.width, feats.cols);
  std::size_t n = 0;
  std::vector<float> acc(feats.cols);
  while (n < coo.size()) {
    const std::size_t pixel = coo[n].first;
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (; n < coo.size() && coo[n].first == pixel; ++n) {
      const float* f = feats.row(coo[n].second);
      for (std::size_t k = 0; k < feats.cols; ++k) acc[k] += f[k];
    }
    std::copy(acc.begin(), acc.end(), out.data.begin() + static_cast<std::ptrdiff_t>(pixel * feats.cols));
  }
  return out;
}

GridTensor latest_map(const STCloud& cloud, const FeatureMatrix& feats, const TensorizeConfig& cfg,
                      int threads) {
  check_features(cloud, feats, cfg);
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> winner(cfg.height * cfg.width, kNone);
  scatter_by_row(cloud, cfg, threads, [&](std::size_t i, std::size_t r, std::size_t c) {
    std::size_t& w = winner[r * cfg.width + c];
    if (w == kNone || cloud.points[i].t >= cloud.points[w].t) w = i;
  });
  GridTensor out(cfg.height, cfg.width, feats.cols);
  for (std::size_t p = 0; p < winner.size(); ++p) {
    if (winner[p] == kNone) continue;
    const float* f = feats.row(winner[p]);
    std::copy(f, f + feats.cols, out.data.begin() + static_cast<std::ptrdiff_t>(p * feats.cols));
  }
  return out;
}

GridTensor temporal_volume(const STCloud& cloud, const FeatureMatrix& feats,
                           const TensorizeConfig& cfg, int threads) {
  check_features(cloud, feats, cfg);
  const std::size_t ch = feats.cols;
  GridTensor out(cfg.height, cfg.width, cfg.bins * ch);
  scatter_by_row(cloud, cfg, threads, [&](std::size_t i, std::size_t r, std::size_t c) {
    float* px = out.pixel(r, c);
    const float* f = feats.row(i);
    for (std::size_t b = 0; b < cfg.bins; ++b) {
      const auto w = static_cast<float>(bin_weight(cloud.points[i].t, b, cfg.bins));
      if (w == 0.0f) continue;
      float* dst = px + b * ch;
      for (std::size_t k = 0; k < ch; ++k) dst[k] += w * f[k];
    }
  });
  return out;
}

GridTensor concat_tensors(std::span<const GridTensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::DimMismatch, "nothing to concatenate");
  const std::size_t h = parts.front().height;
  const std::size_t w = parts.front().width;
  std::size_t channels = 0;
  for (const GridTensor& p : parts) {
    if (p.height != h || p.width != w) {
      throw Error(ErrorCode::DimMismatch, "cannot concatenate " + std::to_string(p.height) + "x" +
                                              std::to_string(p.width) + " onto " +
                                              std::to_string(h) + "x" + std::to_string(w));
    }
    channels += p.channels;
  }
  GridTensor out(h, w, channels);
  for (std::size_t px = 0; px < h * w; ++px) {
    float* dst = out.data.data() + px * channels;
    for (const GridTensor& p : parts) {
      const float* src = p.data.data() + px * p.channels;
      dst = std::copy(src, src + p.channels, dst);
    }
  }
  return out;
}

GridTensor e_statistic(const EventWindow& window, const TensorizeConfig& cfg) {
  validate(cfg);
  if (window.empty()) throw Error(ErrorCode::EmptyWindow, "E-Statistic of an empty window");
  const STCloud cloud = normalize(window);
  const std::size_t counts = cfg.polarity_split ? 2 : 1;
  const std::size_t latest_ch = counts;
  const std::size_t mean_ch = counts + 1;
  const std::size_t bins_ch = counts + 2;
  GridTensor out(cfg.height, cfg.width, bins_ch + cfg.bins);
  std::vector<float> latest_t(cfg.height * cfg.width, -1.0f);
  for (const NormalizedEvent& e : cloud.points) {
    const auto [r, c] = pixel_of(e, cfg);
    float* px = out.pixel(r, c);
    px[cfg.polarity_split && e.p < 0 ? 1 : 0] += 1.0f;
    float& lt = latest_t[r * cfg.width + c];
    lt = std::max(lt, static_cast<float>(e.t));
    px[mean_ch] += static_cast<float>(e.t);  // running sum, divided below
    for (std::size_t b = 0; b < cfg.bins; ++b) {
      px[bins_ch + b] += static_cast<float>(bin_weight(e.t, b, cfg.bins)) * float(e.p);
    }
  }
  for (std::size_t p = 0; p < latest_t.size(); ++p) {
    if (latest_t[p] < 0.0f) continue;
    float* px = out.data.data() + p * out.channels;
    float total = 0.0f;
    for (std::size_t k = 0; k < counts; ++k) total += px[k];
    px[latest_ch] = latest_t[p];
    px[mean_ch] /= total;
  }
  return out;
}

void write_gtn1(std::ostream& out, const GridTensor& tensor) {
  binary::put_magic(out, "GTN1");
  binary::put(out, static_cast<std::uint32_t>(tensor.height));
  binary::put(out, static_cast<std::uint32_t>(tensor.width));
  binary::put(out, static_cast<std::uint32_t>(tensor.channels));
  out.write(reinterpret_cast<const char*>(tensor.data.data()),
            static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
}

GridTensor read_gtn1(std::istream& in) {
  binary::Reader reader(in);
  reader.expect_magic("GTN1");
  const auto h = reader.get<std::uint32_t>("height");
  const auto w = reader.get<std::uint32_t>("width");
  const auto c = reader.get<std::uint32_t>("channels");
  GridTensor t(h, w, c);
  reader.read(reinterpret_cast<char*>(t.data.data()), t.data.size() * sizeof(float), "tensor data");
  return t;
}

}  // namespace ep2t
