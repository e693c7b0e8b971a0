#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "gss/cli.hpp"
#include "test_util.hpp"

using namespace gss;

namespace {

int run(std::initializer_list<std::string> args) {
  std::vector<std::string> held = {"gss"};
  held.insert(held.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : held) argv.push_back(a.c_str());
  return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

struct Fixture {
  std::string dir;
  synthbench::FixturePaths paths;
  synthbench::GeneratedMixture mix;
};

Fixture make_fixture(const std::string& tag, int channels = 2) {
  Fixture fx;
  fx.dir = testutil::temp_dir(tag);
  synthbench::MixtureSpec spec;
  spec.duration = 8.0;
  spec.channels = channels;
  spec.seed = 13;
  spec.speakers = {{"spk0", {{0.5, 3.0}}}, {"spk1", {{4.0, 3.0}}}};
  fx.mix = synthbench::generate(spec);
  fx.paths = synthbench::save_fixture(fx.mix, fx.dir, "rec0");
  return fx;
}

}  // namespace

// ============================================================================
// Argument handling
// ============================================================================

TEST_CASE("help exits cleanly, bad usage exits 2") {
  CHECK(run({"--help"}) == cli::kExitOk);
  CHECK(run({"enhance", "--help"}) == cli::kExitOk);
  CHECK(run({}) == cli::kExitUsage);
  CHECK(run({"frobnicate"}) == cli::kExitUsage);
  CHECK(run({"enhance"}) == cli::kExitUsage);  // missing positionals
  CHECK(run({"enhance", "a.jsonl", "b.jsonl", "--bogus-flag"}) ==
        cli::kExitUsage);
  CHECK(run({"enhance", "a.jsonl", "b.jsonl", "--segment-format", "xml"}) ==
        cli::kExitUsage);
}

TEST_CASE("missing manifests exit 2 and name the path") {
  const std::string dir = testutil::temp_dir("cli_missing");
  write_file(dir + "/present.jsonl", "");
  CHECK(run({"enhance", dir + "/absent.jsonl", dir + "/present.jsonl"}) ==
        cli::kExitUsage);
  CHECK(run({"enhance", dir + "/present.jsonl", dir + "/absent.jsonl"}) ==
        cli::kExitUsage);
  CHECK(run({"validate-manifests", dir + "/absent.jsonl",
             dir + "/present.jsonl"}) == cli::kExitUsage);
  CHECK(run({"trim-to-segments", dir + "/absent.jsonl", "--out",
             dir + "/out.jsonl"}) == cli::kExitUsage);
  CHECK(run({"bench", dir + "/absent.json"}) == cli::kExitUsage);
  std::filesystem::remove_all(dir);
}

// ============================================================================
// validate-manifests
// ============================================================================

TEST_CASE("validate-manifests distinguishes clean from broken inputs") {
  const Fixture fx = make_fixture("cli_validate");
  CHECK(run({"validate-manifests", fx.paths.recordings, fx.paths.segments}) ==
        cli::kExitOk);

  const std::string bad = fx.dir + "/bad_segments.jsonl";
  write_file(bad,
             R"({"id": "x", "recording_id": "ghost", "start": 0.0, )"
             R"("duration": 1.0, "speaker": "spk0"})"
             "\n");
  CHECK(run({"validate-manifests", fx.paths.recordings, bad}) ==
        cli::kExitFailure);
  std::filesystem::remove_all(fx.dir);
}

// ============================================================================
// trim-to-segments
// ============================================================================

TEST_CASE("trim-to-segments expands supervision arrays") {
  const std::string dir = testutil::temp_dir("cli_trim");
  const std::string cuts = dir + "/cuts.jsonl";
  write_file(cuts, R"({"id": "meet01", "start": 0.0, "duration": 60.0, )"
                   R"("supervisions": [)"
                   R"({"speaker": "alice", "start": 1.0, "duration": 2.0}, )"
                   R"({"speaker": "bob", "start": 4.0, "duration": 1.5}, )"
                   R"({"speaker": "alice", "start": 7.0, "duration": 0.5}]})"
                   "\n");
  const std::string out = dir + "/segments.jsonl";
  REQUIRE(run({"trim-to-segments", cuts, "--out", out}) == cli::kExitOk);

  int skipped = 0;
  const auto segs =
      manifests::load_segments(out, manifests::SegmentFormat::kJsonl, &skipped);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].id == "meet01-alice-0000");
  CHECK(segs[0].recording_id == "meet01");
  CHECK(segs[0].speaker == "alice");
  CHECK(segs[0].start == 1.0);
  CHECK(segs[1].id == "meet01-bob-0000");
  CHECK(segs[2].id == "meet01-alice-0001");

  // running the output through again is a fixed point
  const std::string out2 = dir + "/segments2.jsonl";
  REQUIRE(run({"trim-to-segments", out, "--out", out2}) == cli::kExitOk);
  CHECK(read_file(out2) == read_file(out));
  std::filesystem::remove_all(dir);
}

TEST_CASE("trim-to-segments handles empty supervision lists") {
  const std::string dir = testutil::temp_dir("cli_trim_empty");
  const std::string cuts = dir + "/cuts.jsonl";
  write_file(cuts,
             R"({"id": "meet01", "duration": 60.0, "supervisions": []})"
             "\n");
  const std::string out = dir + "/segments.jsonl";
  CHECK(run({"trim-to-segments", cuts, "--out", out}) == cli::kExitOk);
  CHECK(read_file(out).empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("trim-to-segments cross-checks recording ids") {
  const Fixture fx = make_fixture("cli_trim_check");
  const std::string cuts = fx.dir + "/cuts.jsonl";
  write_file(cuts, R"({"id": "ghost", "supervisions": )"
                   R"([{"speaker": "a", "start": 0.0, "duration": 1.0}]})"
                   "\n");
  CHECK(run({"trim-to-segments", cuts, "--out", fx.dir + "/out.jsonl",
             "--recordings", fx.paths.recordings}) == cli::kExitFailure);

  const std::string good = fx.dir + "/good_cuts.jsonl";
  write_file(good, R"({"id": "rec0", "supervisions": )"
                   R"([{"speaker": "a", "start": 0.0, "duration": 1.0}]})"
                   "\n");
  CHECK(run({"trim-to-segments", good, "--out", fx.dir + "/out.jsonl",
             "--recordings", fx.paths.recordings}) == cli::kExitOk);

  const std::string nameless = fx.dir + "/nameless.jsonl";
  write_file(nameless, R"({"start": 0.0, "duration": 1.0})"
                       "\n");
  CHECK(run({"trim-to-segments", nameless, "--out", fx.dir + "/out.jsonl"}) ==
        cli::kExitFailure);
  std::filesystem::remove_all(fx.dir);
}

// ============================================================================
// enhance
// ============================================================================

TEST_CASE("enhance writes outputs and echoes every flag") {
  const Fixture fx = make_fixture("cli_enhance", 3);
  const std::string out_dir = fx.dir + "/out";
  const int code =
      run({"enhance", fx.paths.recordings, fx.paths.segments,
           "--out-dir", out_dir,
           "--segment-format", "jsonl",
           "--max-batch-duration", "30",
           "--context-duration", "1.5",
           "--bss-iterations", "2",
           "--no-wpe",
           "--channels", "0,2",
           "--one-per-batch",
           "--workers", "1",
           "--queue-capacity", "3",
           "--seed", "7"});
  REQUIRE(code == cli::kExitOk);

  CHECK(std::filesystem::exists(out_dir + "/rec0-spk0-0000500_0003500.wav"));
  CHECK(std::filesystem::exists(out_dir + "/rec0-spk1-0004000_0007000.wav"));
  const auto summary = nlohmann::json::parse(read_file(out_dir + "/summary.json"));
  const auto& echo = summary.at("config");
  CHECK(echo.at("max-batch-duration") == 30.0);
  CHECK(echo.at("context-duration") == 1.5);
  CHECK(echo.at("bss-iterations") == 2);
  CHECK(echo.at("no-wpe") == true);
  CHECK(echo.at("no-noise-class") == false);
  CHECK(echo.at("channels") == std::vector<int>{0, 2});
  CHECK(echo.at("one-per-batch") == true);
  CHECK(echo.at("workers") == 1);
  CHECK(echo.at("queue-capacity") == 3);
  CHECK(echo.at("seed") == 7);
  CHECK(echo.at("out-dir") == out_dir);
  CHECK(echo.at("recordings") == fx.paths.recordings);
  CHECK(echo.at("segments") == fx.paths.segments);
  CHECK(echo.at("segment-format") == "jsonl");
  CHECK(summary.at("segments_written") == 2);
  std::filesystem::remove_all(fx.dir);
}

TEST_CASE("enhance exits 1 when segments fail") {
  const Fixture fx = make_fixture("cli_enhance_fail");
  // a second recording whose audio file does not exist
  const std::string recordings = fx.dir + "/recordings2.jsonl";
  write_file(recordings,
             read_file(fx.paths.recordings) +
                 R"({"id": "broken", "sample_rate": 16000, "duration": 8.0, )"
                 R"("sources": [{"path": ")" +
                 fx.dir + R"(/missing.wav", "channels": [0, 1]}]})"
                 "\n");
  const std::string segments = fx.dir + "/segments2.jsonl";
  write_file(segments,
             read_file(fx.paths.segments) +
                 R"({"id": "broken-0", "recording_id": "broken", )"
                 R"("start": 1.0, "duration": 2.0, "speaker": "spk0"})"
                 "\n");
  const int code = run({"enhance", recordings, segments,
                        "--out-dir", fx.dir + "/out",
                        "--context-duration", "1",
                        "--bss-iterations", "2"});
  CHECK(code == cli::kExitFailure);
  const auto summary =
      nlohmann::json::parse(read_file(fx.dir + "/out/summary.json"));
  CHECK(summary.at("segments_written") == 2);
  CHECK(summary.at("failures").size() == 1);
  std::filesystem::remove_all(fx.dir);
}

// ============================================================================
// bench
// ============================================================================

TEST_CASE("bench sweeps the grid and writes a CSV") {
  const std::string dir = testutil::temp_dir("cli_bench");
  synthbench::MixtureSpec spec;
  spec.duration = 8.0;
  spec.channels = 2;
  spec.seed = 13;
  spec.speakers = {{"spk0", {{0.5, 3.0}}}, {"spk1", {{4.0, 3.0}}}};
  const std::string spec_path = dir + "/spec.json";
  write_file(spec_path, spec.to_json().dump());

  const int code = run({"bench", spec_path,
                        "--out-dir", dir + "/bench",
                        "--contexts", "1",
                        "--iterations", "2",
                        "--channels", "2"});
  REQUIRE(code == cli::kExitOk);

  const std::string csv = read_file(dir + "/bench/results.csv");
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "context_s,bss_iterations,channels,speaker,input_si_sdr_db,"
        "enhanced_si_sdr_db,improvement_db");
  int rows = 0;
  std::string row;
  while (std::getline(lines, row)) {
    if (row.empty()) continue;
    CHECK(row.rfind("1,2,2,spk", 0) == 0);
    ++rows;
  }
  CHECK(rows == 2);

  write_file(dir + "/broken.json", "{ not json");
  CHECK(run({"bench", dir + "/broken.json"}) == cli::kExitUsage);
  write_file(dir + "/empty_speakers.json",
             R"({"duration": 4.0, "speakers": []})");
  CHECK(run({"bench", dir + "/empty_speakers.json"}) == cli::kExitUsage);
  std::filesystem::remove_all(dir);
}
