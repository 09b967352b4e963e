// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Mask file format (see docs/mask_format.md):
//   line 1   UTF-8 JSON header, newline-terminated:
//            {"channels":C,"frames":L,"bins":K,"quantity":"speech"|"noise",
//             "layout":"frame-major"}
//   payload  C * L * K raw little-endian float32 values in [0, 1],
//            channel-major, then frame-major within each channel.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "beamkit/errors.hpp"
#include "beamkit/masks.hpp"

namespace beamkit {

static_assert(std::endian::native == std::endian::little,
              "mask payload I/O assumes a little-endian host");

struct MaskFile {
  int channels = 0;
  int frames = 0;
  int bins = 0;
  std::string quantity;        // "speech" or "noise"
  std::vector<float> values;   // channel-major, frame-major within channel
};

inline void write_mask_file(const std::string& path, const MaskFile& mf) {
  if (mf.values.size() !=
      std::size_t(mf.channels) * std::size_t(mf.frames) * std::size_t(mf.bins))
    throw std::invalid_argument("write_mask_file: payload size mismatch");
  if (mf.quantity != "speech" && mf.quantity != "noise")
    throw std::invalid_argument("write_mask_file: bad quantity");
  nlohmann::json header = {{"channels", mf.channels},
                           {"frames", mf.frames},
                           {"bins", mf.bins},
                           {"quantity", mf.quantity},
                           {"layout", "frame-major"}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open mask file for writing: " + path);
  const std::string head = header.dump();
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(mf.values.data()),
            static_cast<std::streamsize>(mf.values.size() * sizeof(float)));
  if (!out) throw FileError("failed writing mask file: " + path);
}

inline MaskFile read_mask_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open mask file: " + path);
  std::string head;
  if (!std::getline(in, head))
    throw FileError("mask file missing header line: " + path);

  MaskFile mf;
  try {
    const nlohmann::json j = nlohmann::json::parse(head);
    mf.channels = j.at("channels").get<int>();
    mf.frames = j.at("frames").get<int>();
    mf.bins = j.at("bins").get<int>();
    mf.quantity = j.at("quantity").get<std::string>();
    if (j.at("layout").get<std::string>() != "frame-major")
      throw FileError("mask file has unsupported layout: " + path);
  } catch (const nlohmann::json::exception& e) {
    throw FileError("malformed mask header in " + path + ": " + e.what());
  }
  if (mf.channels < 1 || mf.channels > kMaxChannels || mf.frames < 1 ||
      mf.bins < 1)
    throw FileError("mask header dimensions out of range: " + path);
  if (mf.quantity != "speech" && mf.quantity != "noise")
    throw FileError("mask header quantity must be speech or noise: " + path);

  const std::size_t count =
      std::size_t(mf.channels) * std::size_t(mf.frames) * std::size_t(mf.bins);
  mf.values.resize(count);
  in.read(reinterpret_cast<char*>(mf.values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
    throw FileError("mask payload truncated: " + path);
  for (const float v : mf.values)
    if (!(v >= 0.0f && v <= 1.0f))
      throw FileError("mask value outside [0, 1] in " + path);
  return mf;
}

// Extracts channel c of a mask file as a frames x bins plane.
inline std::vector<double> mask_file_channel(const MaskFile& mf, int c) {
  const std::size_t plane = std::size_t(mf.frames) * std::size_t(mf.bins);
  std::vector<double> out(plane);
  for (std::size_t i = 0; i < plane; ++i)
    out[i] = static_cast<double>(mf.values[std::size_t(c) * plane + i]);
  return out;
}

}  // namespace beamkit
