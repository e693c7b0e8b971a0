#pragma once

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gss/common.hpp"
#include "gss/stft.hpp"
#include "gss/wav.hpp"

namespace gss::manifests {

struct Source {
  std::string path;
  std::vector<int> channels;
};

struct Recording {
  std::string id;
  std::vector<Source> sources;
  int sample_rate = 0;
  double duration = 0.0;

  int channel_count() const {
    int m = 0;
    for (const auto& s : sources) m += static_cast<int>(s.channels.size());
    return m;
  }
  int64_t num_samples() const {
    return static_cast<int64_t>(std::llround(duration * sample_rate));
  }
};

struct Segment {
  std::string id;
  std::string recording_id;
  std::string speaker;
  double start = 0.0;
  double duration = 0.0;

  double end() const { return start + duration; }
};

enum class SegmentFormat { kJsonl, kRttm };

/// Frame-level class activity over a span of STFT frames. Classes are the
/// recording's speakers in sorted order, plus one trailing noise class when
/// enabled; the noise row is all ones.
struct ActivityMatrix {
  int64_t frames = 0;
  std::vector<std::string> classes;
  int target_index = -1;
  int noise_index = -1;  // -1 when the noise class is disabled
  std::vector<uint8_t> grid;  // frames × classes, frame-major

  int num_classes() const { return static_cast<int>(classes.size()); }
  uint8_t at(int64_t t, int k) const { return grid[t * classes.size() + k]; }
  void set(int64_t t, int k, uint8_t v) { grid[t * classes.size() + k] = v; }
};

// ---------------------------------------------------------------------------
// File reading (gzip-transparent by extension)
// ---------------------------------------------------------------------------

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string read_text(const std::string& path) {
  if (has_suffix(path, ".gz")) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw IoError("cannot open file: " + path);
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0) out.append(buf, n);
    const bool bad = n < 0;
    gzclose(gz);
    if (bad) throw IoError("gzip read failed: " + path);
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& content) {
  if (has_suffix(path, ".gz")) {
    gzFile gz = gzopen(path.c_str(), "wb");
    if (!gz) throw IoError("cannot create file: " + path);
    const int n = gzwrite(gz, content.data(), static_cast<unsigned>(content.size()));
    gzclose(gz);
    if (n != static_cast<int>(content.size())) {
      throw IoError("gzip write failed: " + path);
    }
    return;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot create file: " + path);
  os << content;
  if (!os) throw IoError("write failed: " + path);
}

namespace detail {

// Applies fn to every non-blank line, reporting parse failures with the
// 1-based line number.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(strformat("%s:%ld: invalid JSON: %s", path.c_str(),
                                 line_no, e.what()));
    }
    try {
      fn(j, line_no);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(strformat("%s:%ld: %s", path.c_str(), line_no, e.what()));
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Recording manifests
// ---------------------------------------------------------------------------

inline std::vector<Recording> load_recordings(const std::string& path) {
  std::vector<Recording> out;
  std::set<std::string> seen;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, long line_no) {
    Recording r;
    r.id = j.at("id").get<std::string>();
    r.sample_rate = j.at("sample_rate").get<int>();
    r.duration = j.at("duration").get<double>();
    for (const auto& s : j.at("sources")) {
      Source src;
      src.path = s.at("path").get<std::string>();
      src.channels = s.at("channels").get<std::vector<int>>();
      r.sources.push_back(std::move(src));
    }
    if (!seen.insert(r.id).second) {
      throw ParseError(strformat("%s:%ld: duplicate recording id '%s'",
                                 path.c_str(), line_no, r.id.c_str()));
    }
    if (r.duration <= 0.0) {
      throw ParseError(strformat("%s:%ld: recording '%s' has duration %g",
                                 path.c_str(), line_no, r.id.c_str(),
                                 r.duration));
    }
    if (r.sample_rate <= 0) {
      throw ParseError(strformat("%s:%ld: recording '%s' has sample_rate %d",
                                 path.c_str(), line_no, r.id.c_str(),
                                 r.sample_rate));
    }
    for (const auto& src : r.sources) {
      std::set<int> uniq(src.channels.begin(), src.channels.end());
      if (uniq.size() != src.channels.size()) {
        throw ParseError(strformat("%s:%ld: recording '%s' repeats a channel index",
                                   path.c_str(), line_no, r.id.c_str()));
      }
    }
    if (r.channel_count() < 1) {
      throw ParseError(strformat("%s:%ld: recording '%s' has no channels",
                                 path.c_str(), line_no, r.id.c_str()));
    }
    out.push_back(std::move(r));
  });
  return out;
}

inline nlohmann::ordered_json to_json(const Recording& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["sources"] = nlohmann::ordered_json::array();
  for (const auto& s : r.sources) {
    nlohmann::ordered_json js;
    js["path"] = s.path;
    js["channels"] = s.channels;
    j["sources"].push_back(std::move(js));
  }
  j["sample_rate"] = r.sample_rate;
  j["duration"] = r.duration;
  return j;
}

inline std::string serialize_recordings(const std::vector<Recording>& recs) {
  std::string out;
  for (const auto& r : recs) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void save_recordings(const std::string& path,
                            const std::vector<Recording>& recs) {
  write_text(path, serialize_recordings(recs));
}

// ---------------------------------------------------------------------------
// Segment manifests (JSONL and RTTM)
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const Segment& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["recording_id"] = s.recording_id;
  j["speaker"] = s.speaker;
  j["start"] = s.start;
  j["duration"] = s.duration;
  return j;
}

inline std::string serialize_segments(const std::vector<Segment>& segs) {
  std::string out;
  for (const auto& s : segs) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline void save_segments(const std::string& path,
                          const std::vector<Segment>& segs) {
  write_text(path, serialize_segments(segs));
}

namespace detail {

inline std::vector<Segment> load_segments_jsonl(const std::string& path,
                                                int* skipped) {
  std::vector<Segment> out;
  for_each_jsonl(path, [&](const nlohmann::json& j, long line_no) {
    Segment s;
    s.id = j.at("id").get<std::string>();
    s.recording_id = j.at("recording_id").get<std::string>();
    s.speaker = j.at("speaker").get<std::string>();
    s.start = j.at("start").get<double>();
    s.duration = j.at("duration").get<double>();
    if (s.duration <= 0.0) {
      log::warn("%s:%ld: skipping segment '%s' with duration %g", path.c_str(),
                line_no, s.id.c_str(), s.duration);
      if (skipped) ++*skipped;
      return;
    }
    out.push_back(std::move(s));
  });
  return out;
}

inline std::vector<Segment> load_segments_rttm(const std::string& path,
                                               int* skipped) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  std::vector<Segment> out;
  std::map<std::pair<std::string, std::string>, int> counters;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string tok;
    while (ls >> tok) fields.push_back(tok);
    if (fields.empty() || fields[0] != "SPEAKER") continue;  // other record types are legal
    if (fields.size() < 9) {
      throw ParseError(strformat("%s:%ld: RTTM SPEAKER line has %zu fields, need 9+",
                                 path.c_str(), line_no, fields.size()));
    }
    Segment s;
    s.recording_id = fields[1];
    s.speaker = fields[7];
    try {
      size_t used = 0;
      s.start = std::stod(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument(fields[3]);
      s.duration = std::stod(fields[4], &used);
      if (used != fields[4].size()) throw std::invalid_argument(fields[4]);
    } catch (const std::exception&) {
      throw ParseError(strformat("%s:%ld: RTTM line has non-numeric start/duration",
                                 path.c_str(), line_no));
    }
    if (s.duration <= 0.0) {
      log::warn("%s:%ld: skipping RTTM line with duration %g", path.c_str(),
                line_no, s.duration);
      if (skipped) ++*skipped;
      continue;
    }
    const int n = counters[{s.recording_id, s.speaker}]++;
    s.id = strformat("%s-%s-%04d", s.recording_id.c_str(), s.speaker.c_str(), n);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Loads segments, skipping non-positive-duration entries with a warning.
/// Pass `skipped` to observe how many lines were dropped.
inline std::vector<Segment> load_segments(const std::string& path,
                                          SegmentFormat format,
                                          int* skipped = nullptr) {
  if (skipped) *skipped = 0;
  return format == SegmentFormat::kJsonl
             ? detail::load_segments_jsonl(path, skipped)
             : detail::load_segments_rttm(path, skipped);
}

/// Cross-manifest validation; returns human-readable problems (empty = OK).
inline std::vector<std::string> validate(const std::vector<Recording>& recordings,
                                         const std::vector<Segment>& segments) {
  std::vector<std::string> problems;
  std::map<std::string, const Recording*> by_id;
  for (const auto& r : recordings) by_id[r.id] = &r;
  std::set<std::string> seg_ids;
  for (const auto& s : segments) {
    if (!seg_ids.insert(s.id).second) {
      problems.push_back("duplicate segment id '" + s.id + "'");
    }
    auto it = by_id.find(s.recording_id);
    if (it == by_id.end()) {
      problems.push_back(strformat("segment '%s' references unknown recording '%s'",
                                   s.id.c_str(), s.recording_id.c_str()));
      continue;
    }
    if (s.start < 0.0) {
      problems.push_back(strformat("segment '%s' starts at %g", s.id.c_str(),
                                   s.start));
    }
    if (s.end() > it->second->duration + 1e-6) {
      problems.push_back(strformat(
          "segment '%s' ends at %g, past recording end %g", s.id.c_str(),
          s.end(), it->second->duration));
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Activity construction
// ---------------------------------------------------------------------------

constexpr const char* kNoiseClassLabel = "noise";

/// Activity over explicit frame-center positions (source-time samples).
/// Used directly for assembled super-segments whose frames are not
/// contiguous in the recording.
inline ActivityMatrix build_activity_at(
    const std::vector<Segment>& segments,
    const std::vector<int64_t>& frame_center_samples, int sample_rate,
    const std::string& target, bool noise_class) {
  ActivityMatrix act;
  act.frames = static_cast<int64_t>(frame_center_samples.size());
  std::set<std::string> speakers;
  for (const auto& s : segments) speakers.insert(s.speaker);
  speakers.insert(target);
  act.classes.assign(speakers.begin(), speakers.end());
  act.target_index = static_cast<int>(
      std::find(act.classes.begin(), act.classes.end(), target) -
      act.classes.begin());
  if (noise_class) {
    act.noise_index = static_cast<int>(act.classes.size());
    act.classes.push_back(kNoiseClassLabel);
  }
  act.grid.assign(act.frames * act.classes.size(), 0);

  for (const auto& seg : segments) {
    const int k = static_cast<int>(
        std::find(act.classes.begin(), act.classes.end(), seg.speaker) -
        act.classes.begin());
    const double lo = seg.start * sample_rate;
    const double hi = seg.end() * sample_rate;
    for (int64_t t = 0; t < act.frames; ++t) {
      const double c = static_cast<double>(frame_center_samples[t]);
      if (c >= lo && c < hi) act.set(t, k, 1);
    }
  }
  if (act.noise_index >= 0) {
    for (int64_t t = 0; t < act.frames; ++t) act.set(t, act.noise_index, 1);
  }
  bool target_active = false;
  for (int64_t t = 0; t < act.frames && !target_active; ++t) {
    target_active = act.at(t, act.target_index) != 0;
  }
  if (!target_active) {
    throw EmptyTargetError(strformat(
        "speaker '%s' has no active frame in the window", target.c_str()));
  }
  return act;
}

/// Activity for a contiguous frame span [frame_begin, frame_end) of the
/// recording-global STFT grid; a_{t,k} = 1 iff frame t's center sample lies
/// inside one of speaker k's segments.
inline ActivityMatrix build_activity(const std::vector<Segment>& segments,
                                     int64_t frame_begin, int64_t frame_end,
                                     const std::string& target,
                                     const stft::StftConfig& cfg,
                                     bool noise_class) {
  if (frame_end < frame_begin) {
    throw ShapeError("build_activity: frame window is inverted");
  }
  std::vector<int64_t> centers(frame_end - frame_begin);
  for (int64_t t = 0; t < frame_end - frame_begin; ++t) {
    centers[t] = stft::frame_center(frame_begin + t, cfg);
  }
  return build_activity_at(segments, centers, cfg.sample_rate, target,
                           noise_class);
}

// ---------------------------------------------------------------------------
// Audio loading (multi-source channel stacking)
// ---------------------------------------------------------------------------

/// Reads [start_sample, start_sample + count) across all sources of a
/// recording, stacking channels in source order. `channel_subset` selects
/// stacked indices (empty = all).
inline stft::RealSignal load_audio(const Recording& rec, int64_t start_sample,
                                   int64_t count,
                                   const std::vector<int>& channel_subset = {}) {
  stft::RealSignal all;
  all.sample_rate = rec.sample_rate;
  for (const auto& src : rec.sources) {
    stft::RealSignal part = wav::read(src.path, start_sample, count);
    if (part.sample_rate != rec.sample_rate) {
      throw ConfigError(strformat("recording '%s': %s is %d Hz, manifest says %d",
                                  rec.id.c_str(), src.path.c_str(),
                                  part.sample_rate, rec.sample_rate));
    }
    if (part.num_samples() < count) {
      throw IoError(strformat("recording '%s': %s has %lld samples at offset %lld, need %lld",
                              rec.id.c_str(), src.path.c_str(),
                              (long long)part.num_samples(),
                              (long long)start_sample, (long long)count));
    }
    for (int c : src.channels) {
      if (c < 0 || c >= part.num_channels()) {
        throw ConfigError(strformat("recording '%s': %s has no channel %d",
                                    rec.id.c_str(), src.path.c_str(), c));
      }
      all.channels.push_back(std::move(part.channels[c]));
    }
  }
  if (channel_subset.empty()) return all;
  stft::RealSignal out;
  out.sample_rate = all.sample_rate;
  for (int c : channel_subset) {
    if (c < 0 || c >= all.num_channels()) {
      throw ConfigError(strformat("channel subset index %d out of range [0, %d)",
                                  c, all.num_channels()));
    }
    out.channels.push_back(std::move(all.channels[c]));
  }
  return out;
}

}  // namespace gss::manifests
