// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal RIFF/WAVE reader and writer. Reads PCM16 and IEEE float32
// (including WAVE_FORMAT_EXTENSIBLE wrappers of either), up to 16 channels.
// Writes interleaved float32 with the fact chunk required for non-PCM data.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "beamkit/errors.hpp"

namespace beamkit {

static_assert(std::endian::native == std::endian::little,
              "wav i/o assumes a little-endian host");

struct AudioBuffer {
  double sample_rate = 0.0;
  std::vector<std::vector<double>> samples;  // [channel][frame]

  int channels() const { return static_cast<int>(samples.size()); }
  std::size_t frames() const {
    return samples.empty() ? 0 : samples.front().size();
  }
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

inline std::uint16_t read_u16(const unsigned char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

inline void put_u32(std::string& s, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

inline void put_u16(std::string& s, std::uint16_t v) {
  char b[2];
  std::memcpy(b, &v, 2);
  s.append(b, 2);
}

}  // namespace detail

inline AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 12 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw FileError(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const unsigned char* hdr = raw.data() + pos;
    std::uint32_t len = detail::read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + len > raw.size())
      throw FileError(path + ": truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16) throw FileError(path + ": short fmt chunk");
      const unsigned char* f = raw.data() + body;
      format = detail::read_u16(f);
      channels = detail::read_u16(f + 2);
      rate = detail::read_u32(f + 4);
      bits = detail::read_u16(f + 14);
      if (format == 0xFFFE) {  // extensible: subformat GUID leads with the tag
        if (len < 40) throw FileError(path + ": short extensible fmt chunk");
        format = detail::read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw FileError(path + ": missing fmt chunk");
  if (data_off == 0) throw FileError(path + ": missing data chunk");
  if (channels < 1 || channels > 16)
    throw FileError(path + ": unsupported channel count");
  if (rate == 0) throw FileError(path + ": bad sample rate");

  std::size_t bytes_per_sample;
  if (format == 1 && bits == 16) {
    bytes_per_sample = 2;
  } else if (format == 3 && bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw FileError(path + ": unsupported sample format (want PCM16 or float32)");
  }

  const std::size_t stride = bytes_per_sample * channels;
  const std::size_t nframes = data_len / stride;
  AudioBuffer buf;
  buf.sample_rate = rate;
  buf.samples.assign(channels, std::vector<double>(nframes));
  const unsigned char* d = raw.data() + data_off;
  for (std::size_t i = 0; i < nframes; ++i) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = d + i * stride + std::size_t(c) * bytes_per_sample;
      if (bytes_per_sample == 2) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        buf.samples[std::size_t(c)][i] = v / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        buf.samples[std::size_t(c)][i] = v;
      }
    }
  }
  return buf;
}

inline void write_wav_float32(const std::string& path, const AudioBuffer& buf) {
  const int channels = buf.channels();
  if (channels < 1 || channels > 16)
    throw FileError(path + ": unsupported channel count");
  const std::size_t nframes = buf.frames();
  for (const auto& ch : buf.samples)
    if (ch.size() != nframes) throw FileError(path + ": ragged channel lengths");
  if (!(buf.sample_rate > 0.0)) throw FileError(path + ": bad sample rate");

  const std::uint32_t rate = static_cast<std::uint32_t>(buf.sample_rate);
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(nframes * std::size_t(channels) * 4);

  std::string out;
  out.reserve(58 + data_len);
  out.append("RIFF");
  detail::put_u32(out, 4 + 8 + 16 + 8 + 4 + 8 + data_len);
  out.append("WAVE");
  out.append("fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, 3);  // IEEE float
  detail::put_u16(out, static_cast<std::uint16_t>(channels));
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * channels * 4);
  detail::put_u16(out, static_cast<std::uint16_t>(channels * 4));
  detail::put_u16(out, 32);
  out.append("fact");
  detail::put_u32(out, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(nframes));
  out.append("data");
  detail::put_u32(out, data_len);
  for (std::size_t i = 0; i < nframes; ++i) {
    for (int c = 0; c < channels; ++c) {
      const float v = static_cast<float>(buf.samples[std::size_t(c)][i]);
      char b[4];
      std::memcpy(b, &v, 4);
      out.append(b, 4);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot create " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FileError("write failed: " + path);
}

}  // namespace beamkit
