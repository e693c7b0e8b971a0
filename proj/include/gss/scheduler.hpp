#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gss/beamform.hpp"
#include "gss/cacgmm.hpp"
#include "gss/common.hpp"
#include "gss/manifests.hpp"
#include "gss/numerics.hpp"
#include "gss/stft.hpp"
#include "gss/wav.hpp"
#include "gss/wpe.hpp"

namespace gss::scheduler {

enum class BatchMode { kSuperSegment, kOnePerBatch };

struct PipelineConfig {
  double max_batch_duration = 50.0;
  double context_duration = 15.0;
  int bss_iterations = 20;
  bool enable_wpe = true;
  bool noise_class = true;
  std::vector<int> channels;  // stacked-channel subset; empty = all
  BatchMode mode = BatchMode::kSuperSegment;
  int workers = 0;        // data-loader threads; 0 = fully synchronous
  int queue_capacity = 2; // prefetch depth of the loader→compute queue
  uint64_t seed = 0;      // echoed into the summary; the pipeline is deterministic
  std::string out_dir = ".";
  wpe::WpeConfig wpe;
  stft::StftConfig stft;
  // extra key/value pairs the caller wants echoed into the summary (the CLI
  // adds its manifest paths here so every flag survives into the report)
  std::vector<std::pair<std::string, std::string>> extra_echo;

  void validate() const {
    if (max_batch_duration <= 0 || context_duration < 0) {
      throw ConfigError("scheduler: durations must be positive");
    }
    if (bss_iterations < 1) throw ConfigError("scheduler: bss_iterations must be >= 1");
    if (workers < 0 || queue_capacity < 1) {
      throw ConfigError("scheduler: workers >= 0 and queue_capacity >= 1 required");
    }
    wpe.validate();
    stft.validate();
  }

  /// Flag-style echo of every config knob, embedded in the run summary.
  nlohmann::ordered_json echo() const {
    nlohmann::ordered_json j;
    j["max-batch-duration"] = max_batch_duration;
    j["context-duration"] = context_duration;
    j["bss-iterations"] = bss_iterations;
    j["no-wpe"] = !enable_wpe;
    j["no-noise-class"] = !noise_class;
    j["channels"] = channels;
    j["one-per-batch"] = mode == BatchMode::kOnePerBatch;
    j["workers"] = workers;
    j["queue-capacity"] = queue_capacity;
    j["seed"] = seed;
    j["out-dir"] = out_dir;
    j["wpe-taps"] = wpe.taps;
    j["wpe-delay"] = wpe.delay;
    j["wpe-iterations"] = wpe.iterations;
    j["fft-size"] = stft.fft_size;
    j["shift"] = stft.shift;
    for (const auto& [key, value] : extra_echo) j[key] = value;
    return j;
  }
};

/// One planned batch: same-recording, same-speaker segments to be
/// concatenated along time with a single shared context window.
struct BatchPlan {
  std::string recording_id;
  std::string speaker;
  std::vector<manifests::Segment> parts;  // temporal order

  double total_duration() const {
    double d = 0;
    for (const auto& p : parts) d += p.duration;
    return d;
  }
};

/// Groups segments by (recording, speaker) in first-appearance order, fills
/// batches greedily in temporal order up to the duration cap, then emits
/// round-robin across groups. Oversized segments become singleton batches.
inline std::vector<BatchPlan> plan_batches(
    const std::vector<manifests::Segment>& segments, double max_batch_duration,
    BatchMode mode) {
  std::vector<std::pair<std::string, std::string>> group_order;
  std::map<std::pair<std::string, std::string>, std::vector<manifests::Segment>>
      groups;
  for (const auto& s : segments) {
    const auto key = std::make_pair(s.recording_id, s.speaker);
    auto [it, inserted] = groups.emplace(key, std::vector<manifests::Segment>());
    if (inserted) group_order.push_back(key);
    it->second.push_back(s);
  }

  std::vector<std::vector<BatchPlan>> per_group;
  for (const auto& key : group_order) {
    auto& segs = groups[key];
    std::sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
      return a.start != b.start ? a.start < b.start : a.id < b.id;
    });
    std::vector<BatchPlan> buckets;
    for (const auto& s : segs) {
      if (mode == BatchMode::kOnePerBatch) {
        buckets.push_back({key.first, key.second, {s}});
        continue;
      }
      if (s.duration > max_batch_duration) {
        log::warn("segment '%s' (%.1f s) exceeds max batch duration %.1f s, "
                  "keeping it as its own batch",
                  s.id.c_str(), s.duration, max_batch_duration);
        buckets.push_back({key.first, key.second, {s}});
        continue;
      }
      if (!buckets.empty() && buckets.back().parts.size() == 1 &&
          buckets.back().parts[0].duration > max_batch_duration) {
        // previous bucket is an oversized singleton; never append to it
        buckets.push_back({key.first, key.second, {s}});
        continue;
      }
      if (buckets.empty() ||
          buckets.back().total_duration() + s.duration > max_batch_duration) {
        buckets.push_back({key.first, key.second, {}});
      }
      buckets.back().parts.push_back(s);
    }
    per_group.push_back(std::move(buckets));
  }

  std::vector<BatchPlan> plans;
  for (size_t round = 0;; ++round) {
    bool any = false;
    for (auto& buckets : per_group) {
      if (round < buckets.size()) {
        plans.push_back(std::move(buckets[round]));
        any = true;
      }
    }
    if (!any) break;
  }
  return plans;
}

/// A loaded batch: concatenated audio spans (left context + parts with gaps
/// removed + right context), the source-coordinate center of every STFT
/// frame, and the activity matrix over those frames.
struct SuperSegment {
  std::string recording_id;
  std::string speaker;
  struct Part {
    manifests::Segment segment;
    int64_t sample_begin = 0;  // within assembled audio
    int64_t sample_end = 0;
  };
  std::vector<Part> parts;
  double context_left = 0.0;
  double context_right = 0.0;
  stft::RealSignal audio;
  std::vector<int64_t> frame_centers;  // source-coordinate sample positions
  manifests::ActivityMatrix activity;
  int64_t batch_index = 0;
};

/// Reads audio and builds activities for one plan. `all_segments` must hold
/// every segment of the plan's recording (any speaker) so cross-speaker
/// activity is correct inside context windows.
inline SuperSegment assemble(const BatchPlan& plan,
                             const manifests::Recording& rec,
                             const std::vector<manifests::Segment>& all_segments,
                             const PipelineConfig& cfg) {
  SuperSegment ss;
  ss.recording_id = plan.recording_id;
  ss.speaker = plan.speaker;
  const int sr = rec.sample_rate;
  const int64_t rec_samples = rec.num_samples();

  // Source-time span list: [left context][part 0][part 1]…[right context]
  std::vector<std::pair<int64_t, int64_t>> spans;
  const int64_t first_start =
      static_cast<int64_t>(std::llround(plan.parts.front().start * sr));
  const int64_t ctx_samples =
      static_cast<int64_t>(std::llround(cfg.context_duration * sr));
  const int64_t left_begin = std::max<int64_t>(0, first_start - ctx_samples);
  if (left_begin < first_start) spans.emplace_back(left_begin, first_start);
  ss.context_left = static_cast<double>(first_start - left_begin) / sr;

  std::vector<std::pair<size_t, std::pair<int64_t, int64_t>>> part_spans;
  for (const auto& seg : plan.parts) {
    const int64_t s0 = static_cast<int64_t>(std::llround(seg.start * sr));
    const int64_t s1 = std::min<int64_t>(
        rec_samples, static_cast<int64_t>(std::llround(seg.end() * sr)));
    if (s1 <= s0) {
      throw ShapeError(strformat("segment '%s' maps to an empty sample range",
                                 seg.id.c_str()));
    }
    part_spans.emplace_back(spans.size(), std::make_pair(s0, s1));
    spans.emplace_back(s0, s1);
  }
  const int64_t last_end = spans.back().second;
  const int64_t right_end = std::min(rec_samples, last_end + ctx_samples);
  if (right_end > last_end) spans.emplace_back(last_end, right_end);
  ss.context_right = static_cast<double>(right_end - last_end) / sr;

  // Read and concatenate the spans.
  ss.audio.sample_rate = sr;
  int64_t total = 0;
  for (const auto& [b, e] : spans) total += e - b;
  std::vector<int64_t> span_offsets;  // assembled offset of each span
  {
    int64_t off = 0;
    for (const auto& [b, e] : spans) {
      span_offsets.push_back(off);
      off += e - b;
    }
  }
  for (size_t i = 0; i < spans.size(); ++i) {
    const auto [b, e] = spans[i];
    stft::RealSignal piece = manifests::load_audio(rec, b, e - b, cfg.channels);
    if (ss.audio.channels.empty()) {
      ss.audio.channels.assign(piece.num_channels(),
                               std::vector<float>(total, 0.0f));
    }
    for (int c = 0; c < piece.num_channels(); ++c) {
      std::copy(piece.channels[c].begin(), piece.channels[c].end(),
                ss.audio.channels[c].begin() + span_offsets[i]);
    }
  }
  for (size_t p = 0; p < plan.parts.size(); ++p) {
    SuperSegment::Part part;
    part.segment = plan.parts[p];
    part.sample_begin = span_offsets[part_spans[p].first];
    part.sample_end =
        part.sample_begin + (part_spans[p].second.second - part_spans[p].second.first);
    ss.parts.push_back(std::move(part));
  }

  // Map assembled frame centers back to source time for activity lookup.
  const int64_t t_count = stft::frame_count(total, cfg.stft);
  ss.frame_centers.resize(t_count);
  for (int64_t t = 0; t < t_count; ++t) {
    int64_t c = std::min(stft::frame_center(t, cfg.stft), total - 1);
    size_t s = 0;
    while (s + 1 < spans.size() &&
           c >= span_offsets[s] + (spans[s].second - spans[s].first)) {
      ++s;
    }
    ss.frame_centers[t] = spans[s].first + (c - span_offsets[s]);
  }

  std::vector<manifests::Segment> rec_segments;
  for (const auto& s : all_segments) {
    if (s.recording_id == plan.recording_id) rec_segments.push_back(s);
  }
  ss.activity = manifests::build_activity_at(rec_segments, ss.frame_centers, sr,
                                             plan.speaker, cfg.noise_class);
  return ss;
}

struct SegmentOutput {
  std::string segment_id;
  std::string path;
  stft::RealSignal audio;  // mono
};

struct EnhancementResult {
  std::vector<SegmentOutput> outputs;
  double ll_final = 0.0;
  int64_t zeroed_bins = 0;
  int ref_channel = 0;
  int64_t frames = 0;
  double stft_seconds = 0.0;
  double wpe_seconds = 0.0;
  double mask_seconds = 0.0;
  double beamform_seconds = 0.0;
  double istft_seconds = 0.0;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

inline std::string output_name(const manifests::Segment& seg) {
  const long long start_ms = std::llround(seg.start * 1000.0);
  const long long end_ms = std::llround(seg.end() * 1000.0);
  return strformat("%s-%s-%07lld_%07lld.wav", seg.recording_id.c_str(),
                   seg.speaker.c_str(), start_ms, end_ms);
}

}  // namespace detail

/// Runs the enhancement stages on one assembled batch and cuts per-segment
/// mono waveforms (context discarded).
inline EnhancementResult enhance_batch(const SuperSegment& ss,
                                       const PipelineConfig& cfg) {
  EnhancementResult result;
  auto t0 = std::chrono::steady_clock::now();
  stft::SpectrogramTensor tensor = stft::analyze(ss.audio, cfg.stft);
  result.frames = tensor.num_frames;
  result.stft_seconds = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (cfg.enable_wpe) {
    tensor = wpe::dereverberate(tensor, cfg.wpe);
  }
  result.wpe_seconds = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  cacgmm::EmResult em;
  {
    const stft::SpectrogramTensor normalized = wpe::unit_normalize(tensor);
    em = cacgmm::em_fit(normalized, ss.activity, cfg.bss_iterations);
  }
  result.ll_final = em.likelihood_trace.back();
  result.mask_seconds = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  // Covariances and filtering use the dereverbed (unnormalized) tensor; the
  // unit-norm view only drives mask estimation.
  beamform::BeamformerStats stats = beamform::accumulate_stats(
      tensor, em.posteriors, ss.activity.target_index);
  result.ref_channel = beamform::select_reference(stats);
  beamform::BeamformerFilter filter = beamform::mvdr(stats, result.ref_channel);
  result.zeroed_bins = filter.zeroed_bins;
  stft::SpectrogramTensor enhanced = beamform::apply(filter, tensor);
  result.beamform_seconds = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  stft::RealSignal wave = stft::synthesize(enhanced);
  result.istft_seconds = detail::seconds_since(t0);

  const auto& mono = wave.channels[0];
  for (const auto& part : ss.parts) {
    SegmentOutput out;
    out.segment_id = part.segment.id;
    out.path = cfg.out_dir + "/" + detail::output_name(part.segment);
    out.audio.sample_rate = ss.audio.sample_rate;
    const int64_t hi =
        std::min<int64_t>(part.sample_end, static_cast<int64_t>(mono.size()));
    out.audio.channels.emplace_back(mono.begin() + part.sample_begin,
                                    mono.begin() + hi);
    result.outputs.push_back(std::move(out));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Producer/consumer plumbing
// ---------------------------------------------------------------------------

namespace detail {

struct LoadedBatch {
  int64_t index = 0;
  std::optional<SuperSegment> batch;  // empty on load failure
  std::string error;
  double load_seconds = 0.0;
};

// Bounded queue that hands batches to the consumer in plan order regardless
// of which worker finished first; this is what makes worker count invisible
// in the output.
class OrderedBatchQueue {
 public:
  explicit OrderedBatchQueue(int64_t capacity) : capacity_(capacity) {}

  void put(LoadedBatch&& item) {
    std::unique_lock<std::mutex> lock(mu_);
    const int64_t idx = item.index;
    space_.wait(lock, [&] { return idx < next_ + capacity_; });
    ready_.emplace(idx, std::move(item));
    available_.notify_all();
  }

  LoadedBatch take() {
    std::unique_lock<std::mutex> lock(mu_);
    available_.wait(lock, [&] { return ready_.count(next_) > 0; });
    LoadedBatch item = std::move(ready_.at(next_));
    ready_.erase(next_);
    ++next_;
    space_.notify_all();
    return item;
  }

 private:
  const int64_t capacity_;
  std::mutex mu_;
  std::condition_variable space_;
  std::condition_variable available_;
  std::map<int64_t, LoadedBatch> ready_;
  int64_t next_ = 0;
};

}  // namespace detail

struct RunSummary {
  nlohmann::ordered_json json;
  int failed_segments = 0;
};

/// Full pipeline: plan → (workers) assemble → enhance → write, with a JSON
/// summary. Results are byte-identical for any worker count.
inline RunSummary run_pipeline(const std::vector<manifests::Recording>& recordings,
                               const std::vector<manifests::Segment>& segments,
                               const PipelineConfig& cfg) {
  cfg.validate();
  const auto wall0 = std::chrono::steady_clock::now();
  {
    const auto problems = manifests::validate(recordings, segments);
    if (!problems.empty()) {
      std::string joined;
      for (const auto& p : problems) joined += "\n  " + p;
      throw ConfigError("manifest validation failed:" + joined);
    }
  }
  std::filesystem::create_directories(cfg.out_dir);
  std::map<std::string, const manifests::Recording*> rec_by_id;
  for (const auto& r : recordings) rec_by_id[r.id] = &r;

  const BatchMode mode = cfg.mode;
  std::vector<BatchPlan> plans =
      plan_batches(segments, cfg.max_batch_duration, mode);

  numerics::PlanCache::instance().reset();

  nlohmann::ordered_json summary;
  summary["config"] = cfg.echo();
  summary["num_recordings"] = recordings.size();
  summary["num_segments"] = segments.size();
  summary["num_batches"] = plans.size();

  auto failures = nlohmann::ordered_json::array();
  auto outputs = nlohmann::ordered_json::array();
  auto batches = nlohmann::ordered_json::array();
  int segments_written = 0;
  int failed_segments = 0;
  double load_s = 0, stft_s = 0, wpe_s = 0, mask_s = 0, beam_s = 0, istft_s = 0,
         write_s = 0;
  double processed_audio_seconds = 0.0;

  auto load_one = [&](int64_t i) {
    detail::LoadedBatch item;
    item.index = i;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto* rec = rec_by_id.at(plans[i].recording_id);
      item.batch = assemble(plans[i], *rec, segments, cfg);
      item.batch->batch_index = i;
    } catch (const std::exception& e) {
      item.batch.reset();
      item.error = e.what();
    }
    item.load_seconds = detail::seconds_since(t0);
    return item;
  };

  // Writer worker: a single thread keeps file output off the compute path
  // while preserving enqueue order for failure reporting.
  std::mutex write_mu;
  std::vector<std::pair<std::string, std::string>> write_failures;
  std::vector<std::pair<SegmentOutput, int64_t>> write_queue;
  std::condition_variable write_cv;
  bool write_done = false;
  std::thread writer;
  auto do_write = [&](const SegmentOutput& out) {
    try {
      wav::write(out.path, out.audio);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(write_mu);
      write_failures.emplace_back(out.segment_id, e.what());
    }
  };
  if (cfg.workers > 0) {
    writer = std::thread([&] {
      std::unique_lock<std::mutex> lock(write_mu);
      for (;;) {
        write_cv.wait(lock, [&] { return write_done || !write_queue.empty(); });
        if (write_queue.empty()) {
          if (write_done) return;
          continue;
        }
        auto [out, idx] = std::move(write_queue.front());
        write_queue.erase(write_queue.begin());
        lock.unlock();
        const auto t0 = std::chrono::steady_clock::now();
        do_write(out);
        lock.lock();
        write_s += detail::seconds_since(t0);
      }
    });
  }

  auto consume = [&](detail::LoadedBatch item) {
    load_s += item.load_seconds;
    const BatchPlan& plan = plans[item.index];
    if (!item.batch) {
      for (const auto& part : plan.parts) {
        nlohmann::ordered_json f;
        f["segment_id"] = part.id;
        f["batch"] = item.index;
        f["error"] = item.error;
        failures.push_back(std::move(f));
        ++failed_segments;
      }
      return;
    }
    try {
      EnhancementResult result = enhance_batch(*item.batch, cfg);
      stft_s += result.stft_seconds;
      wpe_s += result.wpe_seconds;
      mask_s += result.mask_seconds;
      beam_s += result.beamform_seconds;
      istft_s += result.istft_seconds;
      processed_audio_seconds +=
          static_cast<double>(item.batch->audio.num_samples()) /
          item.batch->audio.sample_rate;

      nlohmann::ordered_json bj;
      bj["batch"] = item.index;
      bj["speaker"] = item.batch->speaker;
      bj["frames"] = result.frames;
      bj["segments"] = item.batch->parts.size();
      bj["ref_channel"] = result.ref_channel;
      bj["zeroed_bins"] = result.zeroed_bins;
      bj["log_likelihood"] = result.ll_final;
      batches.push_back(std::move(bj));

      for (auto& out : result.outputs) {
        nlohmann::ordered_json oj;
        oj["segment_id"] = out.segment_id;
        oj["path"] = out.path;
        oj["samples"] = out.audio.num_samples();
        outputs.push_back(std::move(oj));
        ++segments_written;
        if (cfg.workers > 0) {
          std::lock_guard<std::mutex> lock(write_mu);
          write_queue.emplace_back(std::move(out), item.index);
          write_cv.notify_one();
        } else {
          const auto t0 = std::chrono::steady_clock::now();
          do_write(out);
          write_s += detail::seconds_since(t0);
        }
      }
    } catch (const std::exception& e) {
      // pooled statistics make the whole batch fail together
      for (const auto& part : plan.parts) {
        nlohmann::ordered_json f;
        f["segment_id"] = part.id;
        f["batch"] = item.index;
        f["error"] = e.what();
        failures.push_back(std::move(f));
        ++failed_segments;
      }
    }
  };

  if (cfg.workers == 0) {
    for (int64_t i = 0; i < static_cast<int64_t>(plans.size()); ++i) {
      consume(load_one(i));
    }
  } else {
    detail::OrderedBatchQueue queue(cfg.queue_capacity);
    std::atomic<int64_t> next_plan{0};
    std::vector<std::thread> loaders;
    for (int w = 0; w < cfg.workers; ++w) {
      loaders.emplace_back([&] {
        for (;;) {
          const int64_t i = next_plan.fetch_add(1);
          if (i >= static_cast<int64_t>(plans.size())) return;
          queue.put(load_one(i));
        }
      });
    }
    for (int64_t i = 0; i < static_cast<int64_t>(plans.size()); ++i) {
      consume(queue.take());
    }
    for (auto& t : loaders) t.join();
  }

  if (writer.joinable()) {
    {
      std::lock_guard<std::mutex> lock(write_mu);
      write_done = true;
      write_cv.notify_all();
    }
    writer.join();
  }
  for (const auto& [segment_id, error] : write_failures) {
    nlohmann::ordered_json f;
    f["segment_id"] = segment_id;
    f["error"] = "write failed: " + error;
    failures.push_back(std::move(f));
    ++failed_segments;
    --segments_written;
  }

  const auto cache_stats = numerics::PlanCache::instance().stats();
  summary["segments_written"] = segments_written;
  summary["failures"] = std::move(failures);
  summary["batches"] = std::move(batches);
  summary["outputs"] = std::move(outputs);
  summary["plan_cache"] = {{"entries", cache_stats.entries},
                           {"computed", cache_stats.computed},
                           {"hits", cache_stats.hits}};
  summary["stage_seconds"] = {
      {"load", load_s},         {"stft", stft_s},   {"wpe", wpe_s},
      {"mask", mask_s},         {"beamform", beam_s}, {"istft", istft_s},
      {"write", write_s},
      {"total", detail::seconds_since(wall0)}};
  summary["processed_audio_seconds"] = processed_audio_seconds;

  RunSummary out;
  out.json = std::move(summary);
  out.failed_segments = failed_segments;
  manifests::write_text(cfg.out_dir + "/summary.json", out.json.dump(2) + "\n");
  return out;
}

}  // namespace gss::scheduler
