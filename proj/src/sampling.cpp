#include "ep2t/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ep2t/binary.hpp"
#include "ep2t/error.hpp"
#include "ep2t/parallel.hpp"
#include "ep2t/rng.hpp"

namespace ep2t {

using Candidate = std::pair<double, std::uint32_t>;

void validate(DomainWeights weights) {
  const bool ok = std::isfinite(weights.alpha) && std::isfinite(weights.beta) &&
                  weights.alpha >= 0.0 && weights.beta >= 0.0 &&
                  (weights.alpha > 0.0 || weights.beta > 0.0);
  if (!ok) throw Error(ErrorCode::ConfigError, "domain weights must be non-negative, not both 0");
}

CenterSet uniform_centers(GridDims dims) {
  if (dims.h == 0 || dims.w == 0 || dims.t == 0) {
    throw Error(ErrorCode::ZeroDim, "center grid dimensions must be at least 1");
  }
  CenterSet out;
  out.grid_dims = dims;
  out.centers.reserve(dims.count());
  for (std::size_t i = 0; i < dims.h; ++i) {
    for (std::size_t j = 0; j < dims.w; ++j) {
      for (std::size_t k = 0; k < dims.t; ++k) {
        out.centers.push_back({(i + 0.5) / static_cast<double>(dims.h),
                               (j + 0.5) / static_cast<double>(dims.w),
                               (k + 0.5) / static_cast<double>(dims.t)});
      }
    }
  }
  return out;
}

std::vector<std::size_t> fps_indices(const STCloud& cloud, std::size_t m, std::size_t start) {
  const std::size_t n = cloud.size();
  if (m == 0 || n < m) {
    throw Error(ErrorCode::TooFewPoints, "need 1 <= M <= |cloud|, got M=" + std::to_string(m) +
                                             " with " + std::to_string(n) + " points");
  }
  if (start >= n) throw Error(ErrorCode::TooFewPoints, "FPS start index out of range");
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picked{start};
  picked.reserve(m);
  std::size_t last = start;
  while (picked.size() < m) {
    const NormalizedEvent& a = cloud.points[last];
    std::size_t best = 0;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const NormalizedEvent& b = cloud.points[i];
      const double dh = a.h - b.h, dw = a.w - b.w, dt = a.t - b.t;
      min_dist[i] = std::min(min_dist[i], dh * dh + dw * dw + dt * dt);
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    picked.push_back(best);
    last = best;
  }
  return picked;
}

CenterSet fps_centers(const STCloud& cloud, std::size_t m, std::uint64_t seed) {
  if (cloud.size() == 0) throw Error(ErrorCode::TooFewPoints, "FPS on an empty cloud");
  Rng rng(seed);
  const auto start = static_cast<std::size_t>(uniform_index(rng, cloud.size()));
  CenterSet out;
  for (std::size_t i : fps_indices(cloud, m, start)) {
    const NormalizedEvent& p = cloud.points[i];
    out.centers.push_back({p.h, p.w, p.t});
  }
  return out;
}

SpatioTemporalGrid::SpatioTemporalGrid(const STCloud& cloud, std::size_t points_per_cell)
    : cloud_(&cloud) {
  const double per = static_cast<double>(std::max<std::size_t>(1, points_per_cell));
  const auto side = static_cast<std::size_t>(
      std::clamp(std::lround(std::cbrt(static_cast<double>(cloud.size()) / per)), 1L, 64L));
  gh_ = gw_ = gt_ = side;

  const std::size_t cells = gh_ * gw_ * gt_;
  std::vector<std::uint32_t> cell_id(cloud.size());
  cell_start_.assign(cells + 1, 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const NormalizedEvent& p = cloud.points[i];
    cell_id[i] = static_cast<std::uint32_t>(
        (cell_of(p.h, gh_) * gw_ + cell_of(p.w, gw_)) * gt_ + cell_of(p.t, gt_));
    ++cell_start_[cell_id[i] + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];
  cell_points_.resize(cloud.size());
  std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cell_points_[fill[cell_id[i]]++] = static_cast<std::uint32_t>(i);
  }
}

std::size_t SpatioTemporalGrid::cell_of(double x, std::size_t n) const {
  const double scaled = std::floor(x * static_cast<double>(n));
  if (!(scaled > 0.0)) return 0;
  return std::min(n - 1, static_cast<std::size_t>(scaled));
}

void SpatioTemporalGrid::query(const StPoint& center, std::size_t k, DomainWeights weights,
                               std::vector<Candidate>& out) const {
  out.clear();
  if (k == 0) return;
  const auto& pts = cloud_->points;
  const long dims[3] = {long(gh_), long(gw_), long(gt_)};
  const double coord[3] = {center.h, center.w, center.t};
  const double axis_weight[3] = {weights.alpha, weights.alpha, weights.beta};
  long home[3];
  for (int d = 0; d < 3; ++d) home[d] = long(cell_of(coord[d], std::size_t(dims[d])));

  auto consider = [&](std::uint32_t idx) {
    const Candidate cand{separated_distance(pts[idx], center, weights), idx};
    if (out.size() < k) {
      out.push_back(cand);
      std::push_heap(out.begin(), out.end());
    } else if (cand < out.front()) {
      std::pop_heap(out.begin(), out.end());
      out.back() = cand;
      std::push_heap(out.begin(), out.end());
    }
  };

  for (long r = 0;; ++r) {
    long lo[3], hi[3];
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::max(0L, home[d] - r);
      hi[d] = std::min(dims[d] - 1, home[d] + r);
    }
    for (long i = lo[0]; i <= hi[0]; ++i) {
      const long di = std::labs(i - home[0]);
      for (long j = lo[1]; j <= hi[1]; ++j) {
        const long dj = std::max(di, std::labs(j - home[1]));
        for (long l = lo[2]; l <= hi[2]; ++l) {
          if (std::max(dj, std::labs(l - home[2])) != r) continue;
          const std::size_t cell = (std::size_t(i) * gw_ + std::size_t(j)) * gt_ + std::size_t(l);
          for (std::uint32_t p = cell_start_[cell]; p < cell_start_[cell + 1]; ++p) {
            consider(cell_points_[p]);
          }
        }
      }
    }

    // Any unvisited point lies outside the box on at least one axis, so its
    // distance is bounded below by the cheapest axis gap.
    double bound = std::numeric_limits<double>::infinity();
    bool covered = true;
    for (int d = 0; d < 3; ++d) {
      double gap = std::numeric_limits<double>::infinity();
      if (lo[d] > 0) gap = std::min(gap, coord[d] - double(lo[d]) / double(dims[d]));
      if (hi[d] < dims[d] - 1) gap = std::min(gap, double(hi[d] + 1) / double(dims[d]) - coord[d]);
      if (std::isfinite(gap)) {
        covered = false;
        gap = std::max(gap, 0.0);
        bound = std::min(bound, axis_weight[d] * gap * gap);
      }
    }
    if (covered) break;
    // Ties must still be visited (lower index wins), hence strict comparison;
    // the relative slack absorbs rounding in the cell assignment.
    if (out.size() == k && bound * (1.0 - 1e-9) > out.front().first) break;
  }
  std::sort_heap(out.begin(), out.end());
}

namespace {

void fill_row(NeighborTable& table, std::size_t row, const std::vector<Candidate>& best) {
  for (std::size_t c = 0; c < table.k; ++c) {
    table.at(row, c) = c < best.size() ? best[c].second : best.front().second;
  }
}

NeighborTable make_table(std::size_t rows, std::size_t k) {
  NeighborTable table;
  table.rows = rows;
  table.k = k;
  table.indices.assign(rows * k, 0);
  return table;
}

void check_knn_args(const STCloud& cloud, std::size_t k, DomainWeights weights) {
  if (cloud.size() == 0) throw Error(ErrorCode::EmptyCloud, "k-NN over an empty cloud");
  if (k == 0) throw Error(ErrorCode::ConfigError, "K must be at least 1");
  if (cloud.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::ConfigError, "cloud too large for 32-bit neighbor indices");
  }
  validate(weights);
}

}  // namespace

NeighborTable knn_separated(const SpatioTemporalGrid& grid, const STCloud& cloud,
                            const CenterSet& centers, std::size_t k, DomainWeights weights,
                            int threads) {
  check_knn_args(cloud, k, weights);
  NeighborTable table = make_table(centers.size(), k);
  parallel_for(centers.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Candidate> best;
    for (std::size_t j = begin; j < end; ++j) {
      grid.query(centers.centers[j], k, weights, best);
      fill_row(table, j, best);
    }
  });
  return table;
}

NeighborTable knn_separated(const STCloud& cloud, const CenterSet& centers, std::size_t k,
                            DomainWeights weights, KnnMethod method, int threads) {
  check_knn_args(cloud, k, weights);
  if (method == KnnMethod::Grid) {
    const SpatioTemporalGrid grid(cloud);
    return knn_separated(grid, cloud, centers, k, weights, threads);
  }
  NeighborTable table = make_table(centers.size(), k);
  const std::size_t keep = std::min(k, cloud.size());
  parallel_for(centers.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Candidate> all(cloud.size());
    for (std::size_t j = begin; j < end; ++j) {
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        all[i] = {separated_distance(cloud.points[i], centers.centers[j], weights),
                  static_cast<std::uint32_t>(i)};
      }
      std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end());
      std::vector<Candidate> best(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep));
      fill_row(table, j, best);
    }
  });
  return table;
}

NeighborTable apply_replacement(const SpatioTemporalGrid& grid, const STCloud& cloud,
                                const CenterSet& centers, const NeighborTable& table,
                                DomainWeights weights, int threads) {
  validate(weights);
  if (cloud.size() == 0) throw Error(ErrorCode::EmptyCloud, "replacement over an empty cloud");
  if (table.rows != centers.size() || table.indices.size() != table.rows * table.k) {
    throw Error(ErrorCode::InconsistentTable, "table shape does not match the center set");
  }
  for (std::uint32_t idx : table.indices) {
    if (idx >= cloud.size()) {
      throw Error(ErrorCode::InconsistentTable, "neighbor index " + std::to_string(idx) +
                                                    " out of range");
    }
  }
  NeighborTable out = table;
  parallel_for(centers.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Candidate> nearest;
    for (std::size_t j = begin; j < end; ++j) {
      const StPoint& c = centers.centers[j];
      bool looked_up = false;
      for (std::size_t col = 0; col < out.k; ++col) {
        const NormalizedEvent& e = cloud.points[out.at(j, col)];
        if (space_distance(e, c) >= weights.alpha || time_distance(e, c) >= weights.beta) {
          if (!looked_up) {
            grid.query(c, 1, weights, nearest);
            looked_up = true;
          }
          out.at(j, col) = nearest.front().second;
        }
      }
    }
  });
  return out;
}

NeighborTable apply_replacement(const STCloud& cloud, const CenterSet& centers,
                                const NeighborTable& table, DomainWeights weights, int threads) {
  if (cloud.size() == 0) throw Error(ErrorCode::EmptyCloud, "replacement over an empty cloud");
  const SpatioTemporalGrid grid(cloud);
  return apply_replacement(grid, cloud, centers, table, weights, threads);
}

void write_nbr1(std::ostream& out, const NeighborTable& table) {
  binary::put_magic(out, "NBR1");
  binary::put(out, static_cast<std::uint32_t>(table.rows));
  binary::put(out, static_cast<std::uint32_t>(table.k));
  for (std::uint32_t idx : table.indices) binary::put(out, idx);
}

NeighborTable read_nbr1(std::istream& in) {
  binary::Reader reader(in);
  reader.expect_magic("NBR1");
  NeighborTable table;
  table.rows = reader.get<std::uint32_t>("row count");
  table.k = reader.get<std::uint32_t>("K");
  table.indices.resize(table.rows * table.k);
  for (auto& idx : table.indices) idx = reader.get<std::uint32_t>("neighbor index");
  return table;
}

}  // namespace ep2t
