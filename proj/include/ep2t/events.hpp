#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ep2t {

struct SensorGeometry {
  int height = 0;
  int width = 0;
};

/// One sensor event: pixel (h, w), timestamp in seconds, polarity +1/-1.
struct RawEvent {
  std::int32_t h = 0;
  std::int32_t w = 0;
  double t = 0.0;
  std::int8_t p = 1;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

/// Ordering used wherever simultaneous events must be sequenced.
bool event_order_less(const RawEvent& a, const RawEvent& b);

/// Throws ParseError describing the first event that breaks sensor bounds,
/// polarity, non-negative time or timestamp ordering.
void validate_events(std::span<const RawEvent> events, SensorGeometry geom);

struct EventWindow {
  std::vector<RawEvent> events;
  SensorGeometry geom;

  bool empty() const { return events.empty(); }
  std::size_t size() const { return events.size(); }
  double t_min() const { return events.front().t; }
  double t_max() const { return events.back().t; }
};

/// Sequential reader over a timestamp-sorted event sequence.
///
/// Fixed-count (FEN) and fixed-interval (FIT) windows share one cursor: FEN
/// advances it by the event count, FIT by the interval and skips any event
/// earlier than the current cursor time.
class EventStream {
public:
  EventStream(std::vector<RawEvent> events, SensorGeometry geom, double start_time = 0.0);

  /// Next n consecutive events. Throws InsufficientEvents when fewer remain.
  EventWindow window_fen(std::size_t n);

  /// All events with t in [cursor_time, cursor_time + dt). Empty windows are legal.
  EventWindow window_fit(double dt);

  std::size_t remaining() const { return events_.size() - cursor_; }
  std::size_t cursor() const { return cursor_; }
  double cursor_time() const { return cursor_time_; }
  SensorGeometry geometry() const { return geom_; }

private:
  std::vector<RawEvent> events_;
  SensorGeometry geom_;
  std::size_t cursor_ = 0;
  double cursor_time_ = 0.0;
};

/// Seeded subsample to exactly n events. Without replacement (selection
/// sampling, order preserved) when the window is large enough, otherwise with
/// replacement; drawn indices are emitted in ascending source order.
EventWindow sample_events(const EventWindow& window, std::size_t n, std::uint64_t seed);

/// Source indices chosen by sample_events, ascending.
std::vector<std::size_t> sample_indices(std::size_t window_size, std::size_t n,
                                        std::uint64_t seed);

struct NormalizedEvent {
  double h = 0.0;
  double w = 0.0;
  double t = 0.0;
  std::int8_t p = 1;
};

/// Events mapped into the unit cube: (h/H, w/W, (t - t_min)/(t_max - t_min), p).
struct STCloud {
  std::vector<NormalizedEvent> points;
  SensorGeometry source_geom;
  double t_min = 0.0;
  double t_max = 0.0;

  std::size_t size() const { return points.size(); }
};

/// Point i of the result comes from event i of the window. A zero time span
/// maps every timestamp to 0.
STCloud normalize(const EventWindow& window);

struct Frame {
  double t = 0.0;
  std::vector<double> intensity;  ///< row-major H x W, strictly positive
};

struct ImageSequence {
  std::vector<Frame> frames;
  SensorGeometry geom;
};

struct SimParams {
  double threshold = 0.2;  ///< log-intensity contrast threshold
};

/// Ideal event-camera model over a frame sequence.
///
/// Log intensity is interpolated linearly between frames. Each pixel keeps a
/// reference level (initially the first frame) and fires whenever the signal
/// reaches reference +/- threshold; the event time is the exact crossing time
/// and the reference moves by one threshold step. Output is sorted by
/// (t, h, w, p).
EventWindow simulate_events(const ImageSequence& seq, const SimParams& params);

}  // namespace ep2t
