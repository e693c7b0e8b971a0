#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gss/common.hpp"
#include "gss/stft.hpp"

namespace gss::wav {

struct WavInfo {
  int channels = 0;
  int sample_rate = 0;
  int bits_per_sample = 0;
  int format = 0;  // 1 = PCM, 3 = IEEE float
  int64_t num_frames = 0;
  int64_t data_offset = 0;
  int64_t data_bytes = 0;
};

namespace detail {

inline uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline void write_u32(std::ostream& os, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u16(std::ostream& os, uint16_t v) {
  const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace detail

inline WavInfo info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  uint8_t header[12];
  if (!in.read(reinterpret_cast<char*>(header), 12) ||
      std::memcmp(header, "RIFF", 4) != 0 ||
      std::memcmp(header + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file: " + path);
  }
  WavInfo wi;
  bool have_fmt = false;
  while (true) {
    uint8_t chunk[8];
    if (!in.read(reinterpret_cast<char*>(chunk), 8)) break;
    const uint32_t size = detail::read_u32(chunk + 4);
    const int64_t body = in.tellg();
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      std::vector<uint8_t> fmt(size);
      if (size < 16 || !in.read(reinterpret_cast<char*>(fmt.data()), size)) {
        throw ParseError("truncated fmt chunk: " + path);
      }
      wi.format = detail::read_u16(fmt.data());
      wi.channels = detail::read_u16(fmt.data() + 2);
      wi.sample_rate = static_cast<int>(detail::read_u32(fmt.data() + 4));
      wi.bits_per_sample = detail::read_u16(fmt.data() + 14);
      if (wi.format == 0xFFFE) {  // extensible: subformat GUID leads with the tag
        if (size < 40) throw ParseError("truncated extensible fmt: " + path);
        wi.format = detail::read_u16(fmt.data() + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      wi.data_offset = body;
      wi.data_bytes = size;
      break;
    } else {
      in.seekg(body + size + (size & 1));
    }
  }
  if (!have_fmt || wi.data_offset == 0) {
    throw ParseError("wav missing fmt or data chunk: " + path);
  }
  if (wi.channels < 1 || wi.bits_per_sample < 1) {
    throw ParseError("wav has invalid fmt fields: " + path);
  }
  const bool supported =
      (wi.format == 1 && (wi.bits_per_sample == 16 || wi.bits_per_sample == 24)) ||
      (wi.format == 3 && wi.bits_per_sample == 32);
  if (!supported) {
    throw ParseError(strformat("unsupported wav encoding (format %d, %d bit): %s",
                               wi.format, wi.bits_per_sample, path.c_str()));
  }
  const int64_t block = static_cast<int64_t>(wi.channels) * wi.bits_per_sample / 8;
  wi.num_frames = wi.data_bytes / block;
  return wi;
}

/// Reads [start_frame, start_frame + max_frames) as float channels; pass
/// max_frames < 0 for the remainder of the file.
inline stft::RealSignal read(const std::string& path, int64_t start_frame = 0,
                             int64_t max_frames = -1) {
  const WavInfo wi = info(path);
  if (start_frame < 0 || start_frame > wi.num_frames) {
    throw IoError(strformat("wav read window starts at %lld of %lld frames: %s",
                            (long long)start_frame, (long long)wi.num_frames,
                            path.c_str()));
  }
  int64_t count = wi.num_frames - start_frame;
  if (max_frames >= 0) count = std::min<int64_t>(count, max_frames);

  const int bytes_per_sample = wi.bits_per_sample / 8;
  const int64_t block = static_cast<int64_t>(wi.channels) * bytes_per_sample;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  in.seekg(wi.data_offset + start_frame * block);
  std::vector<uint8_t> raw(static_cast<size_t>(count * block));
  if (!in.read(reinterpret_cast<char*>(raw.data()), raw.size())) {
    throw IoError("short read from wav data: " + path);
  }

  stft::RealSignal out;
  out.sample_rate = wi.sample_rate;
  out.channels.assign(wi.channels, std::vector<float>(count));
  const uint8_t* p = raw.data();
  for (int64_t t = 0; t < count; ++t) {
    for (int c = 0; c < wi.channels; ++c) {
      float v = 0.0f;
      if (wi.format == 3) {
        std::memcpy(&v, p, 4);
      } else if (wi.bits_per_sample == 16) {
        const int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
        v = static_cast<float>(s) / 32768.0f;
      } else {  // 24-bit PCM
        int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = static_cast<float>(s) / 8388608.0f;
      }
      out.channels[c][t] = v;
      p += bytes_per_sample;
    }
  }
  return out;
}

/// Writes IEEE float32 WAV, channels interleaved.
inline void write(const std::string& path, const stft::RealSignal& signal) {
  const int channels = signal.num_channels();
  const int64_t frames = signal.num_samples();
  if (channels < 1) throw ShapeError("wav.write: no channels");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot create wav file: " + path);

  const uint32_t data_bytes = static_cast<uint32_t>(frames * channels * 4);
  os.write("RIFF", 4);
  detail::write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::write_u32(os, 16);
  detail::write_u16(os, 3);  // IEEE float
  detail::write_u16(os, static_cast<uint16_t>(channels));
  detail::write_u32(os, static_cast<uint32_t>(signal.sample_rate));
  detail::write_u32(os, static_cast<uint32_t>(signal.sample_rate) * channels * 4);
  detail::write_u16(os, static_cast<uint16_t>(channels * 4));
  detail::write_u16(os, 32);
  os.write("data", 4);
  detail::write_u32(os, data_bytes);
  std::vector<float> row(channels);
  for (int64_t t = 0; t < frames; ++t) {
    for (int c = 0; c < channels; ++c) row[c] = signal.channels[c][t];
    os.write(reinterpret_cast<const char*>(row.data()), channels * 4);
  }
  if (!os) throw IoError("failed writing wav data: " + path);
}

}  // namespace gss::wav
