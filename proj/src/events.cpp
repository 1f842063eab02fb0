#include "ep2t/events.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "ep2t/error.hpp"
#include "ep2t/rng.hpp"

namespace ep2t {

bool event_order_less(const RawEvent& a, const RawEvent& b) {
  return std::tie(a.t, a.h, a.w, a.p) < std::tie(b.t, b.h, b.w, b.p);
}

void validate_events(std::span<const RawEvent> events, SensorGeometry geom) {
  if (geom.height < 1 || geom.width < 1) {
    throw Error(ErrorCode::ParseError, "sensor geometry must be at least 1x1");
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    const RawEvent& e = events[i];
    if (e.h < 0 || e.h >= geom.height || e.w < 0 || e.w >= geom.width) {
      throw Error(ErrorCode::ParseError, "event " + std::to_string(i) + " outside sensor bounds");
    }
    if (e.p != 1 && e.p != -1) {
      throw Error(ErrorCode::ParseError, "event " + std::to_string(i) + " has polarity " +
                                             std::to_string(int(e.p)));
    }
    if (!(e.t >= 0.0) || !std::isfinite(e.t)) {
      throw Error(ErrorCode::ParseError, "event " + std::to_string(i) + " has invalid timestamp");
    }
    if (i > 0 && e.t < events[i - 1].t) {
      throw Error(ErrorCode::ParseError, "event " + std::to_string(i) + " breaks timestamp order");
    }
  }
}

EventStream::EventStream(std::vector<RawEvent> events, SensorGeometry geom, double start_time)
    : events_(std::move(events)), geom_(geom), cursor_time_(start_time) {}

EventWindow EventStream::window_fen(std::size_t n) {
  if (remaining() < n) {
    throw Error(ErrorCode::InsufficientEvents, "requested " + std::to_string(n) +
                                                   " events, " + std::to_string(remaining()) +
                                                   " remain");
  }
  EventWindow out;
  out.geom = geom_;
  const auto first = events_.begin() + static_cast<std::ptrdiff_t>(cursor_);
  out.events.assign(first, first + static_cast<std::ptrdiff_t>(n));
  cursor_ += n;
  if (n > 0) cursor_time_ = std::max(cursor_time_, out.events.back().t);
  return out;
}

EventWindow EventStream::window_fit(double dt) {
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::InvalidInterval, "interval must be positive");
  }
  const double begin = cursor_time_;
  const double end = begin + dt;
  while (cursor_ < events_.size() && events_[cursor_].t < begin) ++cursor_;
  std::size_t last = cursor_;
  while (last < events_.size() && events_[last].t < end) ++last;

  EventWindow out;
  out.geom = geom_;
  out.events.assign(events_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                    events_.begin() + static_cast<std::ptrdiff_t>(last));
  cursor_ = last;
  cursor_time_ = end;
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t window_size, std::size_t n,
                                        std::uint64_t seed) {
  if (window_size == 0) throw Error(ErrorCode::EmptyWindow, "cannot sample an empty window");
  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  if (window_size >= n) {
    // Selection sampling (Knuth, Algorithm S): each index is kept with
    // probability needed / left, which yields a uniform n-subset in order.
    std::size_t needed = n;
    for (std::size_t i = 0; i < window_size && needed > 0; ++i) {
      const std::size_t left = window_size - i;
      if (needed == left || uniform_index(rng, left) < needed) {
        picked.push_back(i);
        --needed;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) picked.push_back(uniform_index(rng, window_size));
    std::sort(picked.begin(), picked.end());
  }
  return picked;
}

EventWindow sample_events(const EventWindow& window, std::size_t n, std::uint64_t seed) {
  EventWindow out;
  out.geom = window.geom;
  out.events.reserve(n);
  for (std::size_t i : sample_indices(window.size(), n, seed)) out.events.push_back(window.events[i]);
  return out;
}

STCloud normalize(const EventWindow& window) {
  if (window.empty()) throw Error(ErrorCode::EmptyWindow, "cannot normalize an empty window");
  STCloud cloud;
  cloud.source_geom = window.geom;
  cloud.t_min = window.events.front().t;
  cloud.t_max = window.events.front().t;
  for (const RawEvent& e : window.events) {
    cloud.t_min = std::min(cloud.t_min, e.t);
    cloud.t_max = std::max(cloud.t_max, e.t);
  }
  const double span = cloud.t_max - cloud.t_min;
  const double height = window.geom.height;
  const double width = window.geom.width;
  cloud.points.reserve(window.size());
  for (const RawEvent& e : window.events) {
    NormalizedEvent n;
    n.h = e.h / height;
    n.w = e.w / width;
    n.t = span > 0.0 ? (e.t - cloud.t_min) / span : 0.0;
    n.p = e.p;
    cloud.points.push_back(n);
  }
  return cloud;
}

EventWindow simulate_events(const ImageSequence& seq, const SimParams& params) {
  if (!(params.threshold > 0.0)) {
    throw Error(ErrorCode::ConfigError, "threshold must be positive");
  }
  if (seq.frames.size() < 2) {
    throw Error(ErrorCode::ConfigError, "simulation needs at least two frames");
  }
  const auto pixels = static_cast<std::size_t>(seq.geom.height) * seq.geom.width;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const Frame& frame = seq.frames[f];
    if (frame.intensity.size() != pixels) {
      throw Error(ErrorCode::ShapeMismatch, "frame " + std::to_string(f) + " has wrong size");
    }
    if (f > 0 && !(frame.t > seq.frames[f - 1].t)) {
      throw Error(ErrorCode::ConfigError, "frame timestamps must strictly increase");
    }
    for (double v : frame.intensity) {
      if (!(v > 0.0)) {
        throw Error(ErrorCode::NonPositiveIntensity,
                    "frame " + std::to_string(f) + " has a non-positive intensity");
      }
    }
  }

  const double tau = params.threshold;
  EventWindow out;
  out.geom = seq.geom;
  for (std::size_t px = 0; px < pixels; ++px) {
    const auto h = static_cast<std::int32_t>(px / seq.geom.width);
    const auto w = static_cast<std::int32_t>(px % seq.geom.width);
    double reference = std::log(seq.frames[0].intensity[px]);
    for (std::size_t f = 0; f + 1 < seq.frames.size(); ++f) {
      const double l0 = std::log(seq.frames[f].intensity[px]);
      const double l1 = std::log(seq.frames[f + 1].intensity[px]);
      const double t0 = seq.frames[f].t;
      const double dt = seq.frames[f + 1].t - t0;
      if (l1 == l0) continue;
      const double slope = l1 - l0;
      if (slope > 0.0) {
        while (reference + tau <= l1) {
          reference += tau;
          const double frac = std::clamp((reference - l0) / slope, 0.0, 1.0);
          out.events.push_back({h, w, t0 + frac * dt, 1});
        }
      } else {
        while (reference - tau >= l1) {
          reference -= tau;
          const double frac = std::clamp((reference - l0) / slope, 0.0, 1.0);
          out.events.push_back({h, w, t0 + frac * dt, -1});
        }
      }
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(), event_order_less);
  return out;
}

}  // namespace ep2t
