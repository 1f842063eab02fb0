#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ep2t/events.hpp"

namespace ep2t {

// EVT1 layout (little-endian):
//   "EVT1" | u16 H | u16 W | u64 count | count x (u16 h, u16 w, f64 t, i8 p, 3 pad)
inline constexpr std::size_t kEvt1HeaderBytes = 16;
inline constexpr std::size_t kEvt1RecordBytes = 16;

void write_evt1(std::ostream& out, const EventWindow& events);
EventWindow read_evt1(std::istream& in);

/// CSV with header `h,w,t,p`. The sensor size is not part of the format, so
/// it is passed in explicitly (or inferred as max index + 1 when zero).
void write_events_csv(std::ostream& out, const EventWindow& events);
EventWindow read_events_csv(std::istream& in, SensorGeometry geom = {});

/// Dispatches on the leading magic bytes; anything not starting with "EVT1"
/// is parsed as CSV.
EventWindow load_events(const std::filesystem::path& path, SensorGeometry csv_geom = {});
void save_events(const std::filesystem::path& path, const EventWindow& events);

/// Binary (P5) or ASCII (P2) graymap, 8 or 16 bit. Pixel values are returned
/// as doubles plus `offset`.
struct GrayImage {
  SensorGeometry geom;
  std::vector<double> pixels;
};
GrayImage read_pgm(const std::filesystem::path& path, double offset = 0.0);
void write_pgm(const std::filesystem::path& path, SensorGeometry geom,
               const std::vector<std::uint16_t>& pixels, int max_value = 255);

/// Frames are the `.pgm` files of `frame_dir` in lexicographic order, paired
/// with one f64 timestamp per line of `timestamps_file`.
ImageSequence load_image_sequence(const std::filesystem::path& frame_dir,
                                  const std::filesystem::path& timestamps_file,
                                  double intensity_offset = 0.0);

}  // namespace ep2t
