#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "ep2t/events.hpp"
#include "ep2t/matrix.hpp"

namespace ep2t {

/// H' x W' x C, channel fastest.
struct GridTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  GridTensor() = default;
  GridTensor(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), channels(c), data(h * w * c, 0.0f) {}

  float* pixel(std::size_t r, std::size_t c) { return data.data() + (r * width + c) * channels; }
  const float* pixel(std::size_t r, std::size_t c) const {
    return data.data() + (r * width + c) * channels;
  }

  friend bool operator==(const GridTensor&, const GridTensor&) = default;
};

struct TensorizeConfig {
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t bins = 5;
  bool polarity_split = true;  ///< raw-event baseline only
};

void validate(const TensorizeConfig& cfg);

/// Pixel (row, col) of a normalized event: floor(h * H'), clamped to H' - 1.
std::pair<std::size_t, std::size_t> pixel_of(const NormalizedEvent& e, const TensorizeConfig& cfg);

/// Temporal kernel weight of bin b: max(0, 1 - B * |t - (b + 0.5) / B|).
double bin_weight(double t, std::size_t bin, std::size_t bins);

/// Per-pixel sum of the features of every event landing there, in event order.
GridTensor count_map(const STCloud& cloud, const FeatureMatrix& feats, const TensorizeConfig& cfg,
                     int threads = 1);

/// Same result as count_map through a pixel-sorted coordinate list.
GridTensor count_map_sparse(const STCloud& cloud, const FeatureMatrix& feats,
                            const TensorizeConfig& cfg);

/// Feature of the latest event per pixel (greatest t, ties to the larger index).
GridTensor latest_map(const STCloud& cloud, const FeatureMatrix& feats, const TensorizeConfig& cfg,
                      int threads = 1);

/// B temporal bins per pixel, bin-major: channel b * C + c. Each event votes
/// with bin_weight(t, b, B) times its feature.
GridTensor temporal_volume(const STCloud& cloud, const FeatureMatrix& feats,
                           const TensorizeConfig& cfg, int threads = 1);

/// Channel-wise concatenation in argument order.
GridTensor concat_tensors(std::span<const GridTensor> parts);

/// Hand-crafted raw-event baseline: [count p=+1, count p=-1, latest t, mean t,
/// B polarity-weighted temporal bins] per pixel (4 + B channels). Without
/// polarity split the two count channels collapse into one (3 + B).
GridTensor e_statistic(const EventWindow& window, const TensorizeConfig& cfg);

// GTN1: "GTN1" | u32 H' | u32 W' | u32 C | f32 data, little-endian row-major.
void write_gtn1(std::ostream& out, const GridTensor& tensor);
GridTensor read_gtn1(std::istream& in);

}  // namespace ep2t
