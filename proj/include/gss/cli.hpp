#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gss/common.hpp"
#include "gss/manifests.hpp"
#include "gss/scheduler.hpp"
#include "gss/synthbench.hpp"
#include "gss/wav.hpp"

namespace gss::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline bool require_file(const std::string& path) {
  if (std::filesystem::exists(path)) return true;
  std::fprintf(stderr, "gss: manifest not found: %s\n", path.c_str());
  return false;
}

inline manifests::SegmentFormat pick_format(const std::string& path,
                                            const std::string& requested) {
  if (requested == "jsonl") return manifests::SegmentFormat::kJsonl;
  if (requested == "rttm") return manifests::SegmentFormat::kRttm;
  std::string p = path;
  if (manifests::has_suffix(p, ".gz")) p = p.substr(0, p.size() - 3);
  return manifests::has_suffix(p, ".rttm") ? manifests::SegmentFormat::kRttm
                                           : manifests::SegmentFormat::kJsonl;
}

}  // namespace detail

struct EnhanceOptions {
  std::string recordings_path;
  std::string segments_path;
  std::string segment_format = "auto";
  std::string out_dir = "gss-out";
  double max_batch_duration = 50.0;
  double context_duration = 15.0;
  int bss_iterations = 20;
  bool no_wpe = false;
  bool no_noise_class = false;
  std::vector<int> channels;
  bool one_per_batch = false;
  int workers = 0;
  int queue_capacity = 2;
  uint64_t seed = 0;

  scheduler::PipelineConfig pipeline() const {
    scheduler::PipelineConfig cfg;
    cfg.max_batch_duration = max_batch_duration;
    cfg.context_duration = context_duration;
    cfg.bss_iterations = bss_iterations;
    cfg.enable_wpe = !no_wpe;
    cfg.noise_class = !no_noise_class;
    cfg.channels = channels;
    cfg.mode = one_per_batch ? scheduler::BatchMode::kOnePerBatch
                             : scheduler::BatchMode::kSuperSegment;
    cfg.workers = workers;
    cfg.queue_capacity = queue_capacity;
    cfg.seed = seed;
    cfg.out_dir = out_dir;
    cfg.extra_echo = {{"recordings", recordings_path},
                      {"segments", segments_path},
                      {"segment-format", segment_format}};
    return cfg;
  }
};

inline int cmd_enhance(const EnhanceOptions& opt) {
  if (!detail::require_file(opt.recordings_path) ||
      !detail::require_file(opt.segments_path)) {
    return kExitUsage;
  }
  try {
    const auto recordings = manifests::load_recordings(opt.recordings_path);
    int skipped = 0;
    const auto segments = manifests::load_segments(
        opt.segments_path,
        detail::pick_format(opt.segments_path, opt.segment_format), &skipped);
    if (skipped > 0) {
      log::warn("skipped %d zero-duration segment(s)", skipped);
    }
    const scheduler::RunSummary summary =
        scheduler::run_pipeline(recordings, segments, opt.pipeline());
    std::printf("wrote %lld segment(s), %d failure(s), summary at %s/summary.json\n",
                static_cast<long long>(
                    summary.json["segments_written"].get<int64_t>()),
                summary.failed_segments, opt.out_dir.c_str());
    return summary.failed_segments == 0 ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gss: enhance failed: %s\n", e.what());
    return kExitFailure;
  }
}

struct TrimOptions {
  std::string cuts_path;
  std::string out_path;
  std::string recordings_path;  // optional cross-check
};

/// Expands recording-level cut lines (objects carrying a "supervisions"
/// array) into one segment line per supervision. Lines that already look
/// like segments pass through, so the command is a fixed point on its own
/// output.
inline int cmd_trim_to_segments(const TrimOptions& opt) {
  if (!detail::require_file(opt.cuts_path)) return kExitUsage;
  if (!opt.recordings_path.empty() &&
      !detail::require_file(opt.recordings_path)) {
    return kExitUsage;
  }
  try {
    std::set<std::string> known_recordings;
    if (!opt.recordings_path.empty()) {
      for (const auto& r : manifests::load_recordings(opt.recordings_path)) {
        known_recordings.insert(r.id);
      }
    }
    std::vector<manifests::Segment> out;
    std::map<std::pair<std::string, std::string>, int> counters;
    manifests::detail::for_each_jsonl(
        opt.cuts_path, [&](const nlohmann::json& j, long line) {
          std::string rec_id;
          if (j.contains("recording_id")) {
            rec_id = j.at("recording_id").get<std::string>();
          } else if (j.contains("id") && j.contains("supervisions")) {
            rec_id = j.at("id").get<std::string>();
          }
          if (rec_id.empty()) {
            throw ParseError(strformat(
                "%s:%ld: cut has no recording_id", opt.cuts_path.c_str(), line));
          }
          if (!known_recordings.empty() && !known_recordings.count(rec_id)) {
            throw ConfigError(strformat("%s:%ld: unknown recording_id '%s'",
                                        opt.cuts_path.c_str(), line,
                                        rec_id.c_str()));
          }
          if (!j.contains("supervisions")) {
            manifests::Segment s;
            s.id = j.at("id").get<std::string>();
            s.recording_id = rec_id;
            s.speaker = j.at("speaker").get<std::string>();
            s.start = j.at("start").get<double>();
            s.duration = j.at("duration").get<double>();
            out.push_back(std::move(s));
            return;
          }
          for (const auto& sup : j.at("supervisions")) {
            manifests::Segment s;
            s.recording_id = rec_id;
            s.speaker = sup.at("speaker").get<std::string>();
            s.start = sup.at("start").get<double>();
            s.duration = sup.at("duration").get<double>();
            if (sup.contains("id")) {
              s.id = sup.at("id").get<std::string>();
            } else {
              const auto key = std::make_pair(rec_id, s.speaker);
              s.id = strformat("%s-%s-%04d", rec_id.c_str(), s.speaker.c_str(),
                               counters[key]++);
            }
            out.push_back(std::move(s));
          }
        });
    manifests::save_segments(opt.out_path, out);
    std::printf("wrote %zu segment(s) to %s\n", out.size(),
                opt.out_path.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gss: trim-to-segments failed: %s\n", e.what());
    return kExitFailure;
  }
}

struct ValidateOptions {
  std::string recordings_path;
  std::string segments_path;
  std::string segment_format = "auto";
};

inline int cmd_validate_manifests(const ValidateOptions& opt) {
  if (!detail::require_file(opt.recordings_path) ||
      !detail::require_file(opt.segments_path)) {
    return kExitUsage;
  }
  try {
    const auto recordings = manifests::load_recordings(opt.recordings_path);
    int skipped = 0;
    const auto segments = manifests::load_segments(
        opt.segments_path,
        detail::pick_format(opt.segments_path, opt.segment_format), &skipped);
    const auto problems = manifests::validate(recordings, segments);
    for (const auto& p : problems) {
      std::fprintf(stderr, "problem: %s\n", p.c_str());
    }
    std::printf("%zu recording(s), %zu segment(s), %d skipped, %zu problem(s)\n",
                recordings.size(), segments.size(), skipped, problems.size());
    return problems.empty() ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gss: validate-manifests failed: %s\n", e.what());
    return kExitFailure;
  }
}

struct BenchOptions {
  std::string spec_path;
  std::string out_dir = "gss-bench";
  std::vector<double> contexts = {5.0, 10.0, 15.0, 20.0};
  std::vector<int> iterations = {1, 5, 10, 20};
  std::vector<int> channels;  // counts to sweep; empty = all available
  bool no_wpe = false;
  double max_batch_duration = 50.0;
};

/// Generates the mixture described by a spec JSON, sweeps the requested
/// parameter grid through the pipeline and reports per-speaker SI-SDR rows.
inline int cmd_bench(const BenchOptions& opt) {
  if (!std::filesystem::exists(opt.spec_path)) {
    std::fprintf(stderr, "gss: spec not found: %s\n", opt.spec_path.c_str());
    return kExitUsage;
  }
  synthbench::MixtureSpec spec;
  try {
    spec = synthbench::MixtureSpec::from_json(
        nlohmann::json::parse(manifests::read_text(opt.spec_path)));
    spec.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gss: bad mixture spec: %s\n", e.what());
    return kExitUsage;
  }
  try {
    const synthbench::GeneratedMixture mix = synthbench::generate(spec);
    const std::string fixture_dir = opt.out_dir + "/fixture";
    const manifests::Recording rec =
        synthbench::save_fixture(mix, fixture_dir, "bench0").recording;
    std::vector<manifests::Segment> segments = mix.segments;
    for (auto& s : segments) s.recording_id = rec.id;

    std::vector<int> channel_counts = opt.channels;
    if (channel_counts.empty()) channel_counts = {spec.channels};

    std::ostringstream csv;
    csv << "context_s,bss_iterations,channels,speaker,input_si_sdr_db,"
           "enhanced_si_sdr_db,improvement_db\n";
    for (const double ctx : opt.contexts) {
      for (const int iters : opt.iterations) {
        for (const int m : channel_counts) {
          if (m < 1 || m > spec.channels) {
            throw ConfigError(strformat("channel count %d outside 1..%d", m,
                                        spec.channels));
          }
          scheduler::PipelineConfig cfg;
          cfg.max_batch_duration = opt.max_batch_duration;
          cfg.context_duration = ctx;
          cfg.bss_iterations = iters;
          cfg.enable_wpe = !opt.no_wpe;
          for (int c = 0; c < m; ++c) cfg.channels.push_back(c);
          cfg.out_dir = strformat("%s/run_ctx%g_it%d_ch%d", opt.out_dir.c_str(),
                                  ctx, iters, m);
          const scheduler::RunSummary summary =
              scheduler::run_pipeline({rec}, segments, cfg);
          if (summary.failed_segments > 0) {
            throw Error(strformat("%d segment(s) failed in %s",
                                  summary.failed_segments,
                                  cfg.out_dir.c_str()));
          }
          for (size_t k = 0; k < mix.speaker_names.size(); ++k) {
            const std::string& speaker = mix.speaker_names[k];
            std::vector<manifests::Segment> spk;
            for (const auto& s : segments) {
              if (s.speaker == speaker) spk.push_back(s);
            }
            std::sort(spk.begin(), spk.end(), [](const auto& a, const auto& b) {
              return a.start < b.start;
            });
            std::vector<float> est;
            for (const auto& s : spk) {
              const auto piece = wav::read(
                  cfg.out_dir + "/" + scheduler::detail::output_name(s));
              est.insert(est.end(), piece.channels[0].begin(),
                         piece.channels[0].end());
            }
            const std::vector<float> ref = synthbench::concat_spans(
                mix.dry[k], mix.segments, speaker, spec.sample_rate);
            const double enhanced = synthbench::si_sdr_best_shift(est, ref);
            double input = -1e30;
            for (int c = 0; c < m; ++c) {
              const std::vector<float> ch = synthbench::concat_spans(
                  mix.mixture.channels[c], mix.segments, speaker,
                  spec.sample_rate);
              input = std::max(input, synthbench::si_sdr_best_shift(ch, ref));
            }
            csv << strformat("%g,%d,%d,%s,%.4f,%.4f,%.4f\n", ctx, iters, m,
                             speaker.c_str(), input, enhanced,
                             enhanced - input);
          }
        }
      }
    }
    manifests::write_text(opt.out_dir + "/results.csv", csv.str());
    std::printf("wrote %s/results.csv\n", opt.out_dir.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gss: bench failed: %s\n", e.what());
    return kExitFailure;
  }
}

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Guided source separation: WPE + guided CACGMM masks + MVDR"};
  app.require_subcommand(1);
  app.footer("Set GSS_LOG=debug|info|warn|error to control log verbosity.");

  EnhanceOptions en;
  auto* enhance = app.add_subcommand(
      "enhance", "Separate every manifest segment into a mono WAV");
  enhance->add_option("recordings", en.recordings_path, "Recordings JSONL")
      ->required();
  enhance->add_option("segments", en.segments_path, "Segments JSONL or RTTM")
      ->required();
  enhance->add_option("--out-dir", en.out_dir, "Output directory");
  enhance
      ->add_option("--segment-format", en.segment_format,
                   "Segment manifest format")
      ->check(CLI::IsMember({"auto", "jsonl", "rttm"}));
  enhance->add_option("--max-batch-duration", en.max_batch_duration,
                      "Per-batch speech budget in seconds");
  enhance->add_option("--context-duration", en.context_duration,
                      "Context seconds on each side of a batch");
  enhance->add_option("--bss-iterations", en.bss_iterations,
                      "EM iterations for mask estimation");
  enhance->add_flag("--no-wpe", en.no_wpe, "Skip dereverberation");
  enhance->add_flag("--no-noise-class", en.no_noise_class,
                    "Model only the listed speakers");
  enhance
      ->add_option("--channels", en.channels,
                   "Comma-separated stacked-channel subset, e.g. 0,1")
      ->delimiter(',');
  enhance->add_flag("--one-per-batch", en.one_per_batch,
                    "Process each segment in its own batch");
  enhance->add_option("--workers", en.workers, "Data-loader threads");
  enhance->add_option("--queue-capacity", en.queue_capacity,
                      "Loader prefetch depth");
  enhance->add_option("--seed", en.seed, "Echoed into the summary");

  TrimOptions tr;
  auto* trim = app.add_subcommand(
      "trim-to-segments", "Expand recording-level cuts into segment lines");
  trim->add_option("cuts", tr.cuts_path, "Cuts JSONL")->required();
  trim->add_option("--out", tr.out_path, "Segments JSONL to write")->required();
  trim->add_option("--recordings", tr.recordings_path,
                   "Optional recordings manifest to check ids against");

  ValidateOptions va;
  auto* validate = app.add_subcommand("validate-manifests",
                                      "Cross-check recordings and segments");
  validate->add_option("recordings", va.recordings_path, "Recordings JSONL")
      ->required();
  validate->add_option("segments", va.segments_path, "Segments JSONL or RTTM")
      ->required();
  validate
      ->add_option("--segment-format", va.segment_format,
                   "Segment manifest format")
      ->check(CLI::IsMember({"auto", "jsonl", "rttm"}));

  BenchOptions be;
  auto* bench = app.add_subcommand(
      "bench", "Sweep pipeline parameters over a synthetic mixture");
  bench->add_option("spec", be.spec_path, "Mixture spec JSON")->required();
  bench->add_option("--out-dir", be.out_dir, "Output directory");
  bench->add_option("--contexts", be.contexts, "Context durations to sweep")
      ->delimiter(',');
  bench->add_option("--iterations", be.iterations, "EM iteration counts")
      ->delimiter(',');
  bench->add_option("--channels", be.channels, "Channel counts to sweep")
      ->delimiter(',');
  bench->add_flag("--no-wpe", be.no_wpe, "Skip dereverberation");
  bench->add_option("--max-batch-duration", be.max_batch_duration,
                    "Per-batch speech budget in seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (enhance->parsed()) return cmd_enhance(en);
  if (trim->parsed()) return cmd_trim_to_segments(tr);
  if (validate->parsed()) return cmd_validate_manifests(va);
  if (bench->parsed()) return cmd_bench(be);
  return kExitUsage;
}

}  // namespace gss::cli
