#include <set>
#include <sstream>

#include "doctest.h"
#include "ep2t/sampling.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ep2t;

namespace {

// Greedy farthest point selection written out directly.
std::vector<std::size_t> fps_oracle(const STCloud& c, std::size_t m, std::size_t start) {
  std::vector<std::size_t> out{start};
  while (out.size() < m) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      double d = 1e300;
      for (std::size_t s : out) {
        const double dh = c.points[i].h - c.points[s].h;
        const double dw = c.points[i].w - c.points[s].w;
        const double dt = c.points[i].t - c.points[s].t;
        d = std::min(d, dh * dh + dw * dw + dt * dt);
      }
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    out.push_back(best);
  }
  return out;
}

STCloud cloud_of(std::initializer_list<StPoint> pts) {
  STCloud c;
  for (const StPoint& p : pts) c.points.push_back({p.h, p.w, p.t, 1});
  return c;
}

}  // namespace

TEST_SUITE("sampling") {
  TEST_CASE("uniform centers are cell midpoints in h, w, t order") {
    const CenterSet cs = uniform_centers({2, 3, 2});
    REQUIRE(cs.size() == 12);
    CHECK(cs.centers[0] == StPoint{0.25, 1.0 / 6.0, 0.25});
    CHECK(cs.centers[1] == StPoint{0.25, 1.0 / 6.0, 0.75});
    CHECK(cs.centers[2] == StPoint{0.25, 0.5, 0.25});
    CHECK(cs.centers[11] == StPoint{0.75, 5.0 / 6.0, 0.75});
    CHECK(uniform_centers({1, 1, 1}).centers[0] == StPoint{0.5, 0.5, 0.5});
    CHECK(uniform_centers({30, 30, 5}).size() == 4500);
    CHECK_ERROR_CODE(uniform_centers({0, 3, 2}), ErrorCode::ZeroDim);
    CHECK_ERROR_CODE(uniform_centers({3, 3, 0}), ErrorCode::ZeroDim);
  }

  TEST_CASE("every cube point has a center within half a cell") {
    const GridDims g{4, 5, 3};
    const CenterSet cs = uniform_centers(g);
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
      const double h = uniform_unit(rng), w = uniform_unit(rng), t = uniform_unit(rng);
      bool covered = false;
      for (const StPoint& c : cs.centers) {
        if (std::abs(c.h - h) <= 0.5 / g.h && std::abs(c.w - w) <= 0.5 / g.w &&
            std::abs(c.t - t) <= 0.5 / g.t) {
          covered = true;
        }
      }
      CHECK(covered);
    }
  }

  TEST_CASE("farthest point sampling") {
    const STCloud line = cloud_of({{0, 0, 0}, {0.1, 0, 0}, {1, 0, 0}, {0.5, 0, 0}});
    CHECK(fps_indices(line, 3, 0) == std::vector<std::size_t>{0, 2, 3});
    CHECK(fps_indices(line, 4, 0) == std::vector<std::size_t>{0, 2, 3, 1});
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      const STCloud c = oracle::random_cloud(rng, 200, trial % 2 ? 6 : 0);
      CHECK(fps_indices(c, 20, trial) == fps_oracle(c, 20, trial));
    }
    const CenterSet a = fps_centers(line, 2, 99);
    const CenterSet b = fps_centers(line, 2, 99);
    CHECK(a.centers == b.centers);
    CHECK_ERROR_CODE(fps_indices(line, 5, 0), ErrorCode::TooFewPoints);
    CHECK_ERROR_CODE(fps_indices(line, 0, 0), ErrorCode::TooFewPoints);
  }

  TEST_CASE("k-NN matches the full sort oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 1 + uniform_index(rng, 600);
      const STCloud cloud = oracle::random_cloud(rng, n, trial % 3 == 0 ? 4 : 0);
      const CenterSet cs = oracle::random_centers(rng, 1 + uniform_index(rng, 20));
      const std::size_t k = 1 + uniform_index(rng, 64);
      for (DomainWeights w : kDefaultDomainWeights) {
        const NeighborTable want = oracle::knn(cloud, cs, k, w);
        CHECK(knn_separated(cloud, cs, k, w, KnnMethod::Exhaustive) == want);
        CHECK(knn_separated(cloud, cs, k, w, KnnMethod::Grid) == want);
      }
    }
  }

  TEST_CASE("k-NN on a lattice orders ties by index") {
    STCloud c = cloud_of({{0.5, 0.5, 0.4}, {0.5, 0.5, 0.6}, {0.4, 0.5, 0.5}, {0.6, 0.5, 0.5}});
    CenterSet cs;
    cs.centers = {{0.5, 0.5, 0.5}};
    const NeighborTable t = knn_separated(c, cs, 4, {0.5, 0.5});
    CHECK(t.indices == std::vector<std::uint32_t>{0, 1, 2, 3});
    // Pure spatial weighting ignores time: points 0 and 1 sit on the center.
    const NeighborTable s = knn_separated(c, cs, 2, {1.0, 0.0});
    CHECK(s.indices == std::vector<std::uint32_t>{0, 1});
  }

  TEST_CASE("rows are padded with the nearest point when K exceeds the cloud") {
    const STCloud c = cloud_of({{0.9, 0.9, 0.9}, {0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}});
    CenterSet cs;
    cs.centers = {{0.0, 0.0, 0.0}};
    for (KnnMethod m : {KnnMethod::Exhaustive, KnnMethod::Grid}) {
      const NeighborTable t = knn_separated(c, cs, 5, {0.5, 0.5}, m);
      CHECK(t.indices == std::vector<std::uint32_t>{1, 2, 0, 1, 1});
    }
  }

  TEST_CASE("scaling both weights by a power of two keeps the neighbors") {
    Rng rng(14);
    const STCloud cloud = oracle::random_cloud(rng, 300);
    const CenterSet cs = oracle::random_centers(rng, 8);
    for (DomainWeights w : kDefaultDomainWeights) {
      const NeighborTable base = knn_separated(cloud, cs, 16, w);
      for (double s : {0.25, 2.0, 8.0}) {
        CHECK(knn_separated(cloud, cs, 16, {w.alpha * s, w.beta * s}) == base);
      }
    }
  }

  TEST_CASE("k-NN argument errors") {
    const STCloud empty;
    const CenterSet cs = uniform_centers({1, 1, 1});
    CHECK_ERROR_CODE(knn_separated(empty, cs, 4, {0.5, 0.5}), ErrorCode::EmptyCloud);
    const STCloud one = cloud_of({{0.1, 0.1, 0.1}});
    CHECK_ERROR_CODE(knn_separated(one, cs, 0, {0.5, 0.5}), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(knn_separated(one, cs, 1, {0.0, 0.0}), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(knn_separated(one, cs, 1, {-1.0, 0.5}), ErrorCode::ConfigError);
  }

  TEST_CASE("replacement swaps far neighbors for the nearest point") {
    const STCloud c = cloud_of({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.9}, {0.0, 0.0, 0.5}, {0.5, 0.55, 0.5}});
    CenterSet cs;
    cs.centers = {{0.5, 0.5, 0.5}};
    NeighborTable t{1, 4, {0, 1, 2, 3}};
    // dT of point 1 is 0.16 >= 0.1; dS of point 2 is 0.5 < 0.8 so it stays for the spatial config.
    CHECK(apply_replacement(c, cs, t, {0.8, 0.1}).indices ==
          std::vector<std::uint32_t>{0, 0, 2, 3});
    // With alpha = 0.1 point 2 (dS = 0.5) is replaced too.
    CHECK(apply_replacement(c, cs, t, {0.1, 0.8}).indices ==
          std::vector<std::uint32_t>{0, 1, 0, 3});
  }

  TEST_CASE("replacement matches the oracle and is idempotent") {
    Rng rng(15);
    for (int trial = 0; trial < 30; ++trial) {
      const STCloud cloud = oracle::random_cloud(rng, 1 + uniform_index(rng, 400), trial % 2 ? 5 : 0);
      const CenterSet cs = oracle::random_centers(rng, 1 + uniform_index(rng, 12));
      const std::size_t k = 1 + uniform_index(rng, 48);
      for (DomainWeights w : kDefaultDomainWeights) {
        const NeighborTable t = knn_separated(cloud, cs, k, w);
        const NeighborTable r = apply_replacement(cloud, cs, t, w);
        CHECK(r == oracle::replace(cloud, cs, t, w));
        CHECK(apply_replacement(cloud, cs, r, w) == r);
      }
    }
  }

  TEST_CASE("replacement rejects inconsistent tables") {
    const STCloud c = cloud_of({{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}});
    const CenterSet cs = uniform_centers({1, 1, 1});
    CHECK_ERROR_CODE(apply_replacement(c, cs, NeighborTable{1, 2, {0, 2}}, {0.5, 0.5}),
                     ErrorCode::InconsistentTable);
    CHECK_ERROR_CODE(apply_replacement(c, cs, NeighborTable{2, 1, {0, 1}}, {0.5, 0.5}),
                     ErrorCode::InconsistentTable);
  }

  TEST_CASE("neighbor tables do not depend on the thread count") {
    Rng rng(16);
    const STCloud cloud = oracle::random_cloud(rng, 3000);
    const CenterSet cs = uniform_centers({6, 6, 3});
    for (DomainWeights w : kDefaultDomainWeights) {
      const NeighborTable one = knn_separated(cloud, cs, 32, w, KnnMethod::Grid, 1);
      CHECK(knn_separated(cloud, cs, 32, w, KnnMethod::Grid, 4) == one);
      CHECK(apply_replacement(cloud, cs, one, w, 3) == apply_replacement(cloud, cs, one, w, 1));
    }
  }

  TEST_CASE("NBR1 round trip of a real table") {
    Rng rng(17);
    const STCloud cloud = oracle::random_cloud(rng, 100);
    const NeighborTable t = knn_separated(cloud, uniform_centers({2, 2, 2}), 10, {0.5, 0.5});
    std::stringstream ss;
    write_nbr1(ss, t);
    CHECK(read_nbr1(ss) == t);
  }
}
