#include "ep2t/event_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ep2t/binary.hpp"
#include "ep2t/error.hpp"

namespace ep2t {

namespace fs = std::filesystem;

void write_evt1(std::ostream& out, const EventWindow& events) {
  binary::put_magic(out, "EVT1");
  binary::put(out, static_cast<std::uint16_t>(events.geom.height));
  binary::put(out, static_cast<std::uint16_t>(events.geom.width));
  binary::put(out, static_cast<std::uint64_t>(events.size()));
  const char pad[3] = {0, 0, 0};
  for (const RawEvent& e : events.events) {
    binary::put(out, static_cast<std::uint16_t>(e.h));
    binary::put(out, static_cast<std::uint16_t>(e.w));
    binary::put(out, e.t);
    binary::put(out, e.p);
    out.write(pad, 3);
  }
}

EventWindow read_evt1(std::istream& in) {
  binary::Reader reader(in);
  reader.expect_magic("EVT1");
  EventWindow out;
  out.geom.height = reader.get<std::uint16_t>("sensor height");
  out.geom.width = reader.get<std::uint16_t>("sensor width");
  const auto count = reader.get<std::uint64_t>("event count");
  out.events.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  char pad[3];
  for (std::uint64_t i = 0; i < count; ++i) {
    RawEvent e;
    e.h = reader.get<std::uint16_t>("event h");
    e.w = reader.get<std::uint16_t>("event w");
    e.t = reader.get<double>("event t");
    e.p = reader.get<std::int8_t>("event p");
    reader.read(pad, 3, "record padding");
    out.events.push_back(e);
  }
  validate_events(out.events, out.geom);
  return out;
}

void write_events_csv(std::ostream& out, const EventWindow& events) {
  out << "h,w,t,p\n";
  char buf[64];
  for (const RawEvent& e : events.events) {
    // Shortest round-trip representation keeps CSV lossless.
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), e.t);
    out << e.h << ',' << e.w << ',' << std::string_view(buf, end - buf) << ',' << int(e.p)
        << '\n';
  }
}

namespace {

template <typename T>
T parse_field(std::string_view text, std::size_t line, const char* name) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": bad " + name + " field '" +
                    std::string(text) + "'");
  }
  return value;
}

}  // namespace

EventWindow read_events_csv(std::istream& in, SensorGeometry geom) {
  EventWindow out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty CSV input");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "h,w,t,p") throw Error(ErrorCode::ParseError, "CSV header must be 'h,w,t,p'");
  int max_h = -1;
  int max_w = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::string_view rest(line);
    std::string_view fields[4];
    for (int f = 0; f < 4; ++f) {
      const auto comma = rest.find(',');
      if ((f < 3) == (comma == std::string_view::npos)) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line_no) + ": expected 4 fields");
      }
      fields[f] = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    RawEvent e;
    e.h = parse_field<std::int32_t>(fields[0], line_no, "h");
    e.w = parse_field<std::int32_t>(fields[1], line_no, "w");
    e.t = parse_field<double>(fields[2], line_no, "t");
    e.p = static_cast<std::int8_t>(parse_field<int>(fields[3], line_no, "p"));
    max_h = std::max(max_h, e.h);
    max_w = std::max(max_w, e.w);
    out.events.push_back(e);
  }
  out.geom = geom;
  if (out.geom.height <= 0) out.geom.height = std::max(1, max_h + 1);
  if (out.geom.width <= 0) out.geom.width = std::max(1, max_w + 1);
  validate_events(out.events, out.geom);
  return out;
}

EventWindow load_events(const fs::path& path, SensorGeometry csv_geom) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  const bool is_evt1 = in.gcount() == 4 && std::string_view(magic, 4) == "EVT1";
  in.clear();
  in.seekg(0);
  return is_evt1 ? read_evt1(in) : read_events_csv(in, csv_geom);
}

void save_events(const fs::path& path, const EventWindow& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  if (path.extension() == ".csv") {
    write_events_csv(out, events);
  } else {
    write_evt1(out, events);
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

namespace {

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string token;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  return token;
}

}  // namespace

GrayImage read_pgm(const fs::path& path, double offset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::string magic = pgm_token(in);
  if (magic != "P5" && magic != "P2") {
    throw Error(ErrorCode::ParseError, path.string() + " is not a PGM file");
  }
  GrayImage img;
  try {
    img.geom.width = std::stoi(pgm_token(in));
    img.geom.height = std::stoi(pgm_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, path.string() + ": bad PGM header");
  }
  const int max_value = std::stoi(pgm_token(in));
  if (img.geom.width < 1 || img.geom.height < 1 || max_value < 1 || max_value > 65535) {
    throw Error(ErrorCode::ParseError, path.string() + ": bad PGM header");
  }
  const auto n = static_cast<std::size_t>(img.geom.width) * img.geom.height;
  img.pixels.resize(n);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      int v;
      if (!(in >> v)) throw Error(ErrorCode::ParseError, path.string() + ": truncated pixels");
      img.pixels[i] = v + offset;
    }
    return img;
  }
  in.get();  // single whitespace after maxval
  const std::size_t bytes_per = max_value > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error(ErrorCode::ParseError, path.string() + ": truncated pixels");
  }
  for (std::size_t i = 0; i < n; ++i) {
    // 16-bit PGM samples are big-endian.
    const int v = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    img.pixels[i] = v + offset;
  }
  return img;
}

void write_pgm(const fs::path& path, SensorGeometry geom, const std::vector<std::uint16_t>& pixels,
               int max_value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "P5\n" << geom.width << ' ' << geom.height << '\n' << max_value << '\n';
  for (std::uint16_t v : pixels) {
    if (max_value > 255) out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
}

ImageSequence load_image_sequence(const fs::path& frame_dir, const fs::path& timestamps_file,
                                  double intensity_offset) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(frame_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::ifstream ts(timestamps_file);
  if (!ts) throw Error(ErrorCode::IoError, "cannot open " + timestamps_file.string());
  std::vector<double> stamps;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ts, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    stamps.push_back(parse_field<double>(line, line_no, "timestamp"));
  }
  if (stamps.size() != files.size()) {
    throw Error(ErrorCode::ParseError, std::to_string(files.size()) + " frames but " +
                                           std::to_string(stamps.size()) + " timestamps");
  }

  ImageSequence seq;
  for (std::size_t i = 0; i < files.size(); ++i) {
    GrayImage img = read_pgm(files[i], intensity_offset);
    if (i == 0) {
      seq.geom = img.geom;
    } else if (img.geom.height != seq.geom.height || img.geom.width != seq.geom.width) {
      throw Error(ErrorCode::ShapeMismatch, files[i].string() + " differs in size");
    }
    seq.frames.push_back({stamps[i], std::move(img.pixels)});
  }
  return seq;
}

}  // namespace ep2t
