#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "gss/manifests.hpp"
#include "gss/wav.hpp"
#include "test_util.hpp"

using namespace gss;
using namespace gss::manifests;

namespace {
const std::string kData = testutil::data_dir();
const std::string kDir = testutil::temp_dir("manifests");
}  // namespace

// ============================================================================
// Recordings manifest
// ============================================================================

TEST_CASE("recordings golden file loads with stacked sources") {
  const auto recs = load_recordings(kData + "/recordings_golden.jsonl");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].id == "meet01");
  CHECK(recs[0].sources.size() == 2);
  CHECK(recs[0].sources[0].channels == std::vector<int>{0, 1});
  CHECK(recs[0].channel_count() == 3);  // 2 + 1 stacked
  CHECK(recs[0].sample_rate == 16000);
  CHECK(recs[0].duration == doctest::Approx(120.5));
  CHECK(recs[0].num_samples() == 1928000);
  CHECK(recs[1].channel_count() == 4);
}

TEST_CASE("recordings serialization round trips") {
  const auto recs = load_recordings(kData + "/recordings_golden.jsonl");
  const std::string path = kDir + "/recordings_echo.jsonl";
  save_recordings(path, recs);
  const auto again = load_recordings(path);
  REQUIRE(again.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    CHECK(again[i].id == recs[i].id);
    CHECK(again[i].duration == doctest::Approx(recs[i].duration));
    CHECK(again[i].sources.size() == recs[i].sources.size());
  }
}

TEST_CASE("recordings loader rejects bad manifests") {
  CHECK_THROWS_AS(load_recordings(kData + "/recordings_dup.jsonl"), ParseError);
  CHECK_THROWS_AS(load_recordings(kData + "/missing.jsonl"), IoError);

  // malformed JSON carries path:line context
  try {
    load_recordings(kData + "/segments_broken.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("segments_broken.jsonl:1") !=
          std::string::npos);
  }
}

// ============================================================================
// Segments manifest (JSONL)
// ============================================================================

TEST_CASE("segments golden file loads in order") {
  int skipped = -1;
  const auto segs = load_segments(kData + "/segments_golden.jsonl",
                                  SegmentFormat::kJsonl, &skipped);
  REQUIRE(segs.size() == 4);
  CHECK(skipped == 0);
  CHECK(segs[0].id == "meet01-alice-0000");
  CHECK(segs[0].recording_id == "meet01");
  CHECK(segs[0].speaker == "alice");
  CHECK(segs[0].start == doctest::Approx(1.5));
  CHECK(segs[0].duration == doctest::Approx(4.25));
  CHECK(segs[0].end() == doctest::Approx(5.75));
  CHECK(segs[3].speaker == "carol");
}

TEST_CASE("gzipped segments load identically") {
  const auto plain =
      load_segments(kData + "/segments_golden.jsonl", SegmentFormat::kJsonl);
  const auto gz =
      load_segments(kData + "/segments_golden.jsonl.gz", SegmentFormat::kJsonl);
  REQUIRE(gz.size() == plain.size());
  for (size_t i = 0; i < plain.size(); ++i) {
    CHECK(gz[i].id == plain[i].id);
    CHECK(gz[i].start == doctest::Approx(plain[i].start));
  }

  // writing through the gz path round trips too
  const std::string path = kDir + "/echo.jsonl.gz";
  save_segments(path, plain);
  const auto again = load_segments(path, SegmentFormat::kJsonl);
  CHECK(again.size() == plain.size());
}

TEST_CASE("zero or negative duration segments are skipped with a count") {
  int skipped = 0;
  const auto segs = load_segments(kData + "/segments_zero_duration.jsonl",
                                  SegmentFormat::kJsonl, &skipped);
  CHECK(segs.size() == 2);
  CHECK(skipped == 2);
  CHECK(segs[0].id == "meet01-alice-0000");
  CHECK(segs[1].id == "meet01-bob-0001");
}

// ============================================================================
// Segments manifest (RTTM)
// ============================================================================

TEST_CASE("RTTM golden file maps fields and synthesizes ids") {
  int skipped = 0;
  const auto segs = load_segments(kData + "/segments_golden.rttm",
                                  SegmentFormat::kRttm, &skipped);
  REQUIRE(segs.size() == 4);  // one zero-duration line dropped
  CHECK(skipped == 1);

  CHECK(segs[0].recording_id == "meet01");
  CHECK(segs[0].speaker == "alice");
  CHECK(segs[0].start == doctest::Approx(1.5));
  CHECK(segs[0].duration == doctest::Approx(4.25));
  // per-(recording, speaker) counters
  CHECK(segs[0].id == "meet01-alice-0000");
  CHECK(segs[1].id == "meet01-bob-0000");
  CHECK(segs[2].id == "meet01-alice-0001");
  CHECK(segs[3].id == "meet02-carol-0000");
}

TEST_CASE("malformed RTTM lines raise ParseError with location") {
  try {
    load_segments(kData + "/segments_malformed.rttm", SegmentFormat::kRttm);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK_THROWS_AS(
      load_segments(kData + "/segments_badnum.rttm", SegmentFormat::kRttm),
      ParseError);
}

// ============================================================================
// Cross validation
// ============================================================================

TEST_CASE("validate flags unknown recordings, duplicates and overruns") {
  const auto recs = load_recordings(kData + "/recordings_golden.jsonl");
  auto segs =
      load_segments(kData + "/segments_golden.jsonl", SegmentFormat::kJsonl);
  CHECK(validate(recs, segs).empty());

  auto broken = segs;
  broken.push_back({"dup", "meet01", "alice", 1.0, 1.0});
  broken.push_back({"dup", "meet01", "alice", 2.0, 1.0});
  broken.push_back({"x1", "nope", "alice", 1.0, 1.0});
  broken.push_back({"x2", "meet02", "carol", 60.0, 10.0});  // past the end
  broken.push_back({"x3", "meet01", "bob", -0.5, 1.0});
  const auto problems = validate(recs, broken);
  CHECK(problems.size() == 4);
}

// ============================================================================
// Activity construction
// ============================================================================

TEST_CASE("activity grid samples segment membership at frame centers") {
  // alice [8000, 24000), bob [12000, 20000) in samples at 16 kHz
  std::vector<Segment> segs = {{"a0", "rec", "alice", 0.5, 1.0},
                               {"b0", "rec", "bob", 0.75, 0.5}};
  const std::vector<int64_t> centers = {0, 8000, 12000, 19999, 20000, 23999,
                                        24000};
  const auto act = build_activity_at(segs, centers, 16000, "alice", true);

  // classes sorted, noise appended last
  REQUIRE(act.classes == std::vector<std::string>{"alice", "bob", "noise"});
  CHECK(act.target_index == 0);
  CHECK(act.noise_index == 2);
  CHECK(act.frames == 7);

  const uint8_t alice_want[] = {0, 1, 1, 1, 1, 1, 0};
  const uint8_t bob_want[] = {0, 0, 1, 1, 0, 0, 0};
  for (int64_t t = 0; t < 7; ++t) {
    CAPTURE(t);
    CHECK(act.at(t, 0) == alice_want[t]);
    CHECK(act.at(t, 1) == bob_want[t]);
    CHECK(act.at(t, 2) == 1);  // noise is always on
  }
}

TEST_CASE("activity without a noise class lists speakers only") {
  std::vector<Segment> segs = {{"a0", "rec", "zed", 0.0, 1.0},
                               {"b0", "rec", "amy", 0.5, 1.0}};
  const std::vector<int64_t> centers = {4000, 12000};
  const auto act = build_activity_at(segs, centers, 16000, "zed", false);
  CHECK(act.classes == std::vector<std::string>{"amy", "zed"});
  CHECK(act.noise_index == -1);
  CHECK(act.target_index == 1);
}

TEST_CASE("a target with no active frame raises EmptyTargetError") {
  std::vector<Segment> segs = {{"a0", "rec", "alice", 0.5, 1.0}};
  const std::vector<int64_t> centers = {100000, 200000};
  CHECK_THROWS_AS(build_activity_at(segs, centers, 16000, "alice", true),
                  EmptyTargetError);
}

TEST_CASE("build_activity covers a frame range using the stft grid") {
  std::vector<Segment> segs = {{"a0", "rec", "alice", 0.0, 1.0}};
  stft::StftConfig cfg;
  const auto act = build_activity(segs, 0, 10, "alice", cfg, true);
  CHECK(act.frames == 10);
  // frame 0 center 0 is inside [0, 16000)
  CHECK(act.at(0, act.target_index) == 1);
}

// ============================================================================
// Audio loading across stacked sources
// ============================================================================

TEST_CASE("load_audio stacks sources and honors channel subsets") {
  // source A: 2 channels of constants 1 and 2; source B: 1 channel ramp
  const int sr = 8000;
  stft::RealSignal a;
  a.sample_rate = sr;
  a.channels = {std::vector<float>(800, 1.0f), std::vector<float>(800, 2.0f)};
  stft::RealSignal b;
  b.sample_rate = sr;
  std::vector<float> ramp(800);
  for (size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<float>(i);
  b.channels = {ramp};
  wav::write(kDir + "/srcA.wav", a);
  wav::write(kDir + "/srcB.wav", b);

  Recording rec;
  rec.id = "r";
  rec.sample_rate = sr;
  rec.duration = 0.1;
  rec.sources = {{kDir + "/srcA.wav", {0, 1}}, {kDir + "/srcB.wav", {0}}};

  const auto full = load_audio(rec, 100, 50);
  REQUIRE(full.num_channels() == 3);
  REQUIRE(full.num_samples() == 50);
  CHECK(full.channels[0][0] == doctest::Approx(1.0));
  CHECK(full.channels[1][0] == doctest::Approx(2.0));
  CHECK(full.channels[2][0] == doctest::Approx(100.0));

  const auto subset = load_audio(rec, 0, 10, {2, 0});
  REQUIRE(subset.num_channels() == 2);
  CHECK(subset.channels[0][5] == doctest::Approx(5.0));  // ramp first
  CHECK(subset.channels[1][5] == doctest::Approx(1.0));

  CHECK_THROWS_AS(load_audio(rec, 0, 10, {3}), ConfigError);

  Recording bad = rec;
  bad.sample_rate = 16000;
  CHECK_THROWS_AS(load_audio(bad, 0, 10), ConfigError);
}
