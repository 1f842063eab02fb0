#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ep2t/events.hpp"

namespace ep2t {

/// Location in the normalized (h, w, t) unit cube.
struct StPoint {
  double h = 0.0;
  double w = 0.0;
  double t = 0.0;

  friend bool operator==(const StPoint&, const StPoint&) = default;
};

struct GridDims {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t t = 1;

  std::size_t count() const { return h * w * t; }
};

struct CenterSet {
  std::vector<StPoint> centers;
  std::optional<GridDims> grid_dims;

  std::size_t size() const { return centers.size(); }
};

/// Weights of the spatial and temporal terms of the neighbor metric. The same
/// values are the replacement thresholds.
struct DomainWeights {
  double alpha = 0.5;
  double beta = 0.5;
};

/// Spatially-, temporally- and balanced-focused configurations, in that order.
inline constexpr std::array<DomainWeights, 3> kDefaultDomainWeights{
    DomainWeights{0.8, 0.1}, DomainWeights{0.1, 0.8}, DomainWeights{0.5, 0.5}};

/// Rejects negative or non-finite weights and the all-zero pair.
void validate(DomainWeights weights);

inline double space_distance(const NormalizedEvent& e, const StPoint& c) {
  const double dh = e.h - c.h;
  const double dw = e.w - c.w;
  return dh * dh + dw * dw;
}

inline double time_distance(const NormalizedEvent& e, const StPoint& c) {
  const double dt = e.t - c.t;
  return dt * dt;
}

inline double separated_distance(const NormalizedEvent& e, const StPoint& c, DomainWeights wt) {
  return wt.alpha * space_distance(e, c) + wt.beta * time_distance(e, c);
}

/// Row-major M x K table of indices into an STCloud.
struct NeighborTable {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;

  std::uint32_t& at(std::size_t row, std::size_t col) { return indices[row * k + col]; }
  std::uint32_t at(std::size_t row, std::size_t col) const { return indices[row * k + col]; }
  const std::uint32_t* row(std::size_t r) const { return indices.data() + r * k; }

  friend bool operator==(const NeighborTable&, const NeighborTable&) = default;
};

/// Cell midpoints ((i+0.5)/G_h, (j+0.5)/G_w, (k+0.5)/G_t), i slowest, k fastest.
CenterSet uniform_centers(GridDims dims);

/// Farthest-point sampling baseline under Euclidean distance in (h, w, t).
/// The start index is drawn from `seed`; ties pick the lowest index.
CenterSet fps_centers(const STCloud& cloud, std::size_t m, std::uint64_t seed);

/// FPS from an explicit start point; returns the selected point indices.
std::vector<std::size_t> fps_indices(const STCloud& cloud, std::size_t m, std::size_t start);

enum class KnnMethod { Exhaustive, Grid };

/// Uniform cell grid over the unit cube used for exact k-NN under the
/// separated metric. Independent of the domain weights, so one index serves
/// every (alpha, beta) configuration.
class SpatioTemporalGrid {
public:
  explicit SpatioTemporalGrid(const STCloud& cloud, std::size_t points_per_cell = 8);

  /// K nearest points to `center` sorted by (distance, index), written to `out`.
  void query(const StPoint& center, std::size_t k, DomainWeights weights,
             std::vector<std::pair<double, std::uint32_t>>& out) const;

  std::array<std::size_t, 3> cells() const { return {gh_, gw_, gt_}; }

private:
  std::size_t cell_of(double x, std::size_t n) const;

  const STCloud* cloud_;
  std::size_t gh_ = 1, gw_ = 1, gt_ = 1;
  std::vector<std::uint32_t> cell_start_;   // CSR offsets, size cells + 1
  std::vector<std::uint32_t> cell_points_;  // point indices, ascending within a cell
};

/// For every center, the K points minimizing alpha * d_space + beta * d_time
/// (squared distances), ties by ascending index. With fewer than K points the
/// row is padded with copies of the nearest point.
NeighborTable knn_separated(const STCloud& cloud, const CenterSet& centers, std::size_t k,
                            DomainWeights weights, KnnMethod method = KnnMethod::Grid,
                            int threads = 1);

/// Same as the Grid path of knn_separated with a prebuilt index.
NeighborTable knn_separated(const SpatioTemporalGrid& grid, const STCloud& cloud,
                            const CenterSet& centers, std::size_t k, DomainWeights weights,
                            int threads = 1);

/// Replaces every neighbor with d_space >= alpha or d_time >= beta by the
/// center's single nearest point under the combined metric.
NeighborTable apply_replacement(const STCloud& cloud, const CenterSet& centers,
                                const NeighborTable& table, DomainWeights weights,
                                int threads = 1);

NeighborTable apply_replacement(const SpatioTemporalGrid& grid, const STCloud& cloud,
                                const CenterSet& centers, const NeighborTable& table,
                                DomainWeights weights, int threads = 1);

// NBR1: "NBR1" | u32 M | u32 K | M*K u32, little-endian.
void write_nbr1(std::ostream& out, const NeighborTable& table);
NeighborTable read_nbr1(std::istream& in);

}  // namespace ep2t
