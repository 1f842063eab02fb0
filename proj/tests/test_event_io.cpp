#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ep2t/event_io.hpp"
#include "ep2t/sampling.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ep2t;

TEST_SUITE("event_io") {
  TEST_CASE("EVT1 round trip and layout") {
    Rng rng(4);
    const EventWindow win = oracle::random_window(rng, 500, 260, 346);
    std::stringstream ss;
    write_evt1(ss, win);
    const std::string bytes = ss.str();
    CHECK(bytes.size() == kEvt1HeaderBytes + 500 * kEvt1RecordBytes);
    CHECK(bytes.substr(0, 4) == "EVT1");
    const EventWindow back = read_evt1(ss);
    CHECK(back.events == win.events);
    CHECK(back.geom.height == 260);
    CHECK(back.geom.width == 346);
  }

  TEST_CASE("truncated EVT1 names the byte offset") {
    Rng rng(5);
    const EventWindow win = oracle::random_window(rng, 10, 8, 8);
    std::stringstream ss;
    write_evt1(ss, win);
    const std::string cut = ss.str().substr(0, kEvt1HeaderBytes + 3 * kEvt1RecordBytes + 5);
    std::stringstream in(cut);
    try {
      read_evt1(in);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      CHECK(std::string(e.what()).find("byte offset " + std::to_string(cut.size())) !=
            std::string::npos);
    }
    std::stringstream bad("EVX1");
    CHECK_ERROR_CODE(read_evt1(bad), ErrorCode::ParseError);
  }

  TEST_CASE("EVT1 rejects unsorted records") {
    EventWindow win;
    win.geom = {4, 4};
    win.events = {{0, 0, 1.0, 1}, {0, 0, 0.5, 1}};
    std::stringstream ss;
    write_evt1(ss, win);
    CHECK_ERROR_CODE(read_evt1(ss), ErrorCode::ParseError);
  }

  TEST_CASE("CSV round trip is lossless") {
    Rng rng(6);
    const EventWindow win = oracle::random_window(rng, 300, 20, 30);
    std::stringstream ss;
    write_events_csv(ss, win);
    CHECK(ss.str().rfind("h,w,t,p\n", 0) == 0);
    const EventWindow back = read_events_csv(ss, {20, 30});
    CHECK(back.events == win.events);
  }

  TEST_CASE("CSV infers the sensor size and rejects malformed lines") {
    std::stringstream ss("h,w,t,p\n1,2,0.5,1\n3,0,0.75,-1\n");
    const EventWindow w = read_events_csv(ss);
    CHECK(w.geom.height == 4);
    CHECK(w.geom.width == 3);
    std::stringstream bad_header("x,y,t,p\n");
    CHECK_ERROR_CODE(read_events_csv(bad_header), ErrorCode::ParseError);
    std::stringstream bad_field("h,w,t,p\n1,2,abc,1\n");
    CHECK_ERROR_CODE(read_events_csv(bad_field), ErrorCode::ParseError);
    std::stringstream few("h,w,t,p\n1,2,0.5\n");
    CHECK_ERROR_CODE(read_events_csv(few), ErrorCode::ParseError);
    std::stringstream pol("h,w,t,p\n1,2,0.5,0\n");
    CHECK_ERROR_CODE(read_events_csv(pol), ErrorCode::ParseError);
  }

  TEST_CASE("load and save dispatch on content") {
    TempDir dir("evio");
    Rng rng(7);
    const EventWindow win = oracle::random_window(rng, 50, 9, 9);
    save_events(dir.path / "a.evt", win);
    save_events(dir.path / "a.csv", win);
    CHECK(load_events(dir.path / "a.evt").events == win.events);
    CHECK(load_events(dir.path / "a.csv", {9, 9}).events == win.events);
    CHECK_ERROR_CODE(load_events(dir.path / "missing.evt"), ErrorCode::IoError);
  }

  TEST_CASE("PGM frames and image sequences") {
    TempDir dir("pgm");
    const SensorGeometry g{2, 3};
    write_pgm(dir.path / "f0.pgm", g, {1, 2, 3, 4, 5, 6});
    write_pgm(dir.path / "f1.pgm", g, {100, 200, 300, 400, 500, 600}, 1000);
    const GrayImage a = read_pgm(dir.path / "f0.pgm", 0.5);
    CHECK(a.geom.height == 2);
    CHECK(a.geom.width == 3);
    CHECK(a.pixels == std::vector<double>{1.5, 2.5, 3.5, 4.5, 5.5, 6.5});
    CHECK(read_pgm(dir.path / "f1.pgm").pixels[5] == 600.0);
    {
      std::ofstream ts(dir.path / "stamps.txt");
      ts << "0.0\n0.25\n";
    }
    const ImageSequence seq = load_image_sequence(dir.path, dir.path / "stamps.txt", 1.0);
    REQUIRE(seq.frames.size() == 2);
    CHECK(seq.frames[1].t == 0.25);
    CHECK(seq.frames[0].intensity[0] == 2.0);
    {
      std::ofstream ts(dir.path / "short.txt");
      ts << "0.0\n";
    }
    CHECK_ERROR_CODE(load_image_sequence(dir.path, dir.path / "short.txt"), ErrorCode::ParseError);
  }

  TEST_CASE("NBR1 round trip") {
    NeighborTable t{3, 2, {0, 1, 2, 2, 5, 4}};
    std::stringstream ss;
    write_nbr1(ss, t);
    CHECK(ss.str().size() == 12 + 6 * 4);
    CHECK(read_nbr1(ss) == t);
    std::stringstream cut(ss.str().substr(0, 15));
    CHECK_ERROR_CODE(read_nbr1(cut), ErrorCode::ParseError);
  }
}
