#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "ep2t/events.hpp"
#include "ep2t/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ep2t;

namespace {

std::vector<RawEvent> ramp_events(std::size_t n) {
  std::vector<RawEvent> ev;
  for (std::size_t i = 0; i < n; ++i) {
    ev.push_back({static_cast<std::int32_t>(i % 7), static_cast<std::int32_t>(i % 11),
                  1e-6 * static_cast<double>(i), static_cast<std::int8_t>(i % 2 ? 1 : -1)});
  }
  return ev;
}

ImageSequence flat_sequence(int H, int W, std::vector<std::pair<double, double>> t_and_value) {
  ImageSequence seq;
  seq.geom = {H, W};
  for (auto [t, v] : t_and_value) {
    seq.frames.push_back({t, std::vector<double>(static_cast<std::size_t>(H) * W, v)});
  }
  return seq;
}

}  // namespace

TEST_SUITE("events") {
  TEST_CASE("fixed-count windows") {
    EventStream s(ramp_events(25000), {7, 11});
    const EventWindow w = s.window_fen(20000);
    REQUIRE(w.size() == 20000);
    CHECK(w.events.front().t == 0.0);
    CHECK(w.events.back() == ramp_events(20000).back());
    CHECK(s.remaining() == 5000);

    EventStream one(ramp_events(3), {7, 11});
    const EventWindow w1 = one.window_fen(1);
    REQUIRE(w1.size() == 1);
    CHECK(w1.events[0] == ramp_events(1)[0]);
    CHECK_ERROR_CODE(one.window_fen(5), ErrorCode::InsufficientEvents);
  }

  TEST_CASE("consecutive fixed-count windows reconstruct the stream prefix") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t total = 1 + uniform_index(rng, 500);
      const auto ev = ramp_events(total);
      EventStream s(ev, {7, 11});
      std::vector<RawEvent> joined;
      while (true) {
        const std::size_t n = 1 + uniform_index(rng, 40);
        if (s.remaining() < n) break;
        const EventWindow w = s.window_fen(n);
        joined.insert(joined.end(), w.events.begin(), w.events.end());
      }
      REQUIRE(joined.size() <= ev.size());
      CHECK(std::equal(joined.begin(), joined.end(), ev.begin()));
    }
  }

  TEST_CASE("fixed-interval windows are half-open") {
    std::vector<RawEvent> ev{{0, 0, 0.01, 1}, {0, 1, 0.04, -1}, {1, 0, 0.06, 1}};
    EventStream s(ev, {2, 2});
    const EventWindow a = s.window_fit(0.05);
    REQUIRE(a.size() == 2);
    CHECK(a.events[0].t == 0.01);
    CHECK(a.events[1].t == 0.04);
    const EventWindow b = s.window_fit(0.05);
    REQUIRE(b.size() == 1);
    CHECK(b.events[0].t == 0.06);
    CHECK(s.window_fit(0.05).empty());
    CHECK_ERROR_CODE(s.window_fit(0.0), ErrorCode::InvalidInterval);
    CHECK_ERROR_CODE(s.window_fit(-1.0), ErrorCode::InvalidInterval);

    std::vector<RawEvent> edge{{0, 0, 0.05, 1}};
    EventStream e(edge, {1, 1});
    CHECK(e.window_fit(0.05).empty());
    CHECK(e.window_fit(0.05).size() == 1);
  }

  TEST_CASE("sampling without replacement keeps order and is reproducible") {
    Rng rng(1);
    const EventWindow win = oracle::random_window(rng, 20000, 260, 346);
    const EventWindow a = sample_events(win, 8192, 7);
    const EventWindow b = sample_events(win, 8192, 7);
    REQUIRE(a.size() == 8192);
    CHECK(a.events == b.events);
    const auto idx = sample_indices(win.size(), 8192, 7);
    CHECK(std::adjacent_find(idx.begin(), idx.end(), std::greater_equal<>()) == idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i) CHECK_FALSE(!(a.events[i] == win.events[idx[i]]));
    CHECK_FALSE(sample_events(win, 8192, 8).events == a.events);

    const EventWindow all = sample_events(win, win.size(), 99);
    CHECK(all.events == win.events);
  }

  TEST_CASE("sampling with replacement when the window is short") {
    Rng rng(2);
    const EventWindow win = oracle::random_window(rng, 10, 4, 4);
    const auto idx = sample_indices(10, 20, 5);
    REQUIRE(idx.size() == 20);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    std::map<std::size_t, int> mult;
    for (auto i : idx) {
      CHECK(i < 10);
      ++mult[i];
    }
    int total = 0;
    for (auto& kv : mult) total += kv.second;
    CHECK(total == 20);
    CHECK(sample_events(win, 20, 5).size() == 20);
    CHECK_ERROR_CODE(sample_events(EventWindow{{}, {4, 4}}, 3, 0), ErrorCode::EmptyWindow);
  }

  TEST_CASE("sampling without replacement is uniform over indices") {
    const std::size_t size = 50, n = 15, trials = 4000;
    std::vector<int> hits(size, 0);
    for (std::size_t s = 0; s < trials; ++s) {
      for (auto i : sample_indices(size, n, s)) ++hits[i];
    }
    const double expected = static_cast<double>(trials * n) / size;  // 1200
    for (int h : hits) CHECK(std::abs(h - expected) < 5.0 * std::sqrt(expected));
  }

  TEST_CASE("normalization examples") {
    EventWindow win;
    win.geom = {260, 346};
    win.events = {{0, 0, 2.0, 1}, {130, 173, 3.0, 1}, {259, 345, 4.0, -1}};
    const STCloud c = normalize(win);
    REQUIRE(c.size() == 3);
    CHECK(c.points[1].h == 0.5);
    CHECK(c.points[1].w == 0.5);
    CHECK(c.points[1].t == 0.5);
    CHECK(c.points[1].p == 1);
    CHECK(c.points[2].h == 259.0 / 260.0);
    CHECK(c.points[2].w == 345.0 / 346.0);
    CHECK(c.points[2].t == 1.0);
    CHECK(c.points[2].p == -1);
    CHECK(c.t_min == 2.0);
    CHECK(c.t_max == 4.0);

    EventWindow flat;
    flat.geom = {4, 4};
    flat.events = {{1, 1, 0.3, 1}, {2, 2, 0.3, -1}};
    for (const auto& p : normalize(flat).points) CHECK(p.t == 0.0);
    CHECK_ERROR_CODE(normalize(EventWindow{{}, {4, 4}}), ErrorCode::EmptyWindow);
  }

  TEST_CASE("normalization stays in the unit cube and preserves time order") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const int H = 1 + static_cast<int>(uniform_index(rng, 300));
      const int W = 1 + static_cast<int>(uniform_index(rng, 300));
      const EventWindow win = oracle::random_window(rng, 1 + uniform_index(rng, 2000), H, W);
      const STCloud c = normalize(win);
      for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& p = c.points[i];
        REQUIRE(p.h >= 0.0);
        REQUIRE(p.h < 1.0);
        REQUIRE(p.w >= 0.0);
        REQUIRE(p.w < 1.0);
        REQUIRE(p.t >= 0.0);
        REQUIRE(p.t <= 1.0);
        REQUIRE((p.p == 1 || p.p == -1));
        if (i > 0) REQUIRE(c.points[i - 1].t <= p.t);
      }
    }
  }

  TEST_CASE("event validation") {
    std::vector<RawEvent> ok{{0, 0, 0.0, 1}, {1, 1, 0.0, -1}};
    CHECK_NOTHROW(validate_events(ok, {2, 2}));
    std::vector<RawEvent> oob{{2, 0, 0.0, 1}};
    CHECK_ERROR_CODE(validate_events(oob, {2, 2}), ErrorCode::ParseError);
    std::vector<RawEvent> pol{{0, 0, 0.0, 0}};
    CHECK_ERROR_CODE(validate_events(pol, {2, 2}), ErrorCode::ParseError);
    std::vector<RawEvent> neg{{0, 0, -1.0, 1}};
    CHECK_ERROR_CODE(validate_events(neg, {2, 2}), ErrorCode::ParseError);
    std::vector<RawEvent> order{{0, 0, 1.0, 1}, {0, 0, 0.5, 1}};
    CHECK_ERROR_CODE(validate_events(order, {2, 2}), ErrorCode::ParseError);
  }

  TEST_CASE("simulator examples") {
    CHECK(simulate_events(flat_sequence(3, 3, {{0.0, 5.0}, {1.0, 5.0}, {2.0, 5.0}}), {0.2})
              .empty());

    ImageSequence step = flat_sequence(1, 1, {{0.0, 1.0}, {1.0, 2.0}});
    const EventWindow up = simulate_events(step, {0.2});
    REQUIRE(up.size() == 3);
    for (const auto& e : up.events) CHECK(e.p == 1);
    // Crossings of log(2) * frac = 0.2, 0.4, 0.6 along the linear ramp.
    for (int i = 0; i < 3; ++i) {
      CHECK(up.events[i].t == doctest::Approx(0.2 * (i + 1) / std::log(2.0)).epsilon(1e-12));
    }

    const EventWindow down = simulate_events(flat_sequence(1, 1, {{0.0, 1.0}, {1.0, 0.5}}), {0.5});
    REQUIRE(down.size() == 1);
    CHECK(down.events[0].p == -1);

    CHECK_ERROR_CODE(simulate_events(flat_sequence(1, 1, {{0.0, 1.0}, {1.0, 0.0}}), {0.2}),
                     ErrorCode::NonPositiveIntensity);
    CHECK_ERROR_CODE(simulate_events(flat_sequence(1, 1, {{0.0, 1.0}}), {0.2}),
                     ErrorCode::ConfigError);
    CHECK_ERROR_CODE(simulate_events(flat_sequence(1, 1, {{0.0, 1.0}, {0.0, 2.0}}), {0.2}),
                     ErrorCode::ConfigError);
  }

  TEST_CASE("simulator output order breaks time ties by pixel") {
    ImageSequence seq = flat_sequence(2, 3, {{0.0, 1.0}, {1.0, 2.0}});
    const EventWindow ev = simulate_events(seq, {0.2});
    REQUIRE(ev.size() == 18);
    for (std::size_t i = 1; i < ev.size(); ++i) {
      const auto& a = ev.events[i - 1];
      const auto& b = ev.events[i];
      CHECK((a.t < b.t || (a.t == b.t && (a.h < b.h || (a.h == b.h && a.w <= b.w)))));
    }
  }
}

TEST_SUITE("events") {
  TEST_CASE("simulated events match the interpolated signal") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      const ImageSequence seq = oracle::random_sequence(rng, 4, 5, 2 + uniform_index(rng, 6));
      const double tau = 0.05 + 0.4 * uniform_unit(rng);
      const EventWindow ev = simulate_events(seq, {tau});
      const auto audit = oracle::audit_simulation(seq, tau, ev);
      CHECK(audit.below_threshold == 0);
      CHECK(audit.missed == 0);
      CHECK_NOTHROW(validate_events(ev.events, ev.geom));
    }
  }
}
