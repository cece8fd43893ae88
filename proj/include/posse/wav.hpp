// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "posse/dsp.hpp"
#include "posse/errors.hpp"

namespace posse {
namespace wav {

// Minimal RIFF/WAVE I/O. Accepted input: mono, 16 kHz, 16-bit PCM or 32-bit
// IEEE float. Anything else is rejected with a descriptive error; resampling
// is out of scope.

enum class Format { pcm16, float32 };

namespace detail {

inline void put_u32(std::vector<std::uint8_t> &b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_u16(std::vector<std::uint8_t> &b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

inline void put_tag(std::vector<std::uint8_t> &b, const char *tag) {
  b.insert(b.end(), tag, tag + 4);
}

inline std::uint32_t get_u32(const std::uint8_t *p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t get_u16(const std::uint8_t *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

struct Info {
  Eigen::Index n_samples = 0;
  Format format = Format::pcm16;
};

// Header-only scan; validates format/rate/channels without decoding samples.
inline Info probe(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("wav: cannot open " + path);
  std::uint8_t head[12];
  in.read(reinterpret_cast<char *>(head), 12);
  if (in.gcount() != 12 || std::memcmp(head, "RIFF", 4) != 0 ||
      std::memcmp(head + 8, "WAVE", 4) != 0)
    throw IoError("wav: " + path + " is not a RIFF/WAVE file");

  std::uint16_t fmt_code = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0, data_len = 0;
  bool saw_fmt = false, saw_data = false;
  while (true) {
    std::uint8_t ch[8];
    in.read(reinterpret_cast<char *>(ch), 8);
    if (in.gcount() != 8) break;
    const std::uint32_t chunk_len = detail::get_u32(ch + 4);
    if (std::memcmp(ch, "fmt ", 4) == 0 && chunk_len >= 16) {
      std::uint8_t body[16];
      in.read(reinterpret_cast<char *>(body), 16);
      if (in.gcount() != 16) throw IoError("wav: malformed fmt chunk in " + path);
      fmt_code = detail::get_u16(body);
      channels = detail::get_u16(body + 2);
      rate = detail::get_u32(body + 4);
      bits = detail::get_u16(body + 14);
      in.seekg(static_cast<std::streamoff>(chunk_len - 16 + (chunk_len & 1)), std::ios::cur);
      saw_fmt = true;
    } else if (std::memcmp(ch, "data", 4) == 0) {
      data_len = chunk_len;
      saw_data = true;
      in.seekg(static_cast<std::streamoff>(chunk_len + (chunk_len & 1)), std::ios::cur);
    } else {
      in.seekg(static_cast<std::streamoff>(chunk_len + (chunk_len & 1)), std::ios::cur);
    }
    if (!in) break;
  }
  if (!saw_fmt || !saw_data) throw IoError("wav: missing fmt/data chunk in " + path);
  if (channels != 1)
    throw UserError("wav: " + path + " has " + std::to_string(channels) +
                    " channels; expected mono");
  if (rate != static_cast<std::uint32_t>(kSampleRate))
    throw UserError("wav: " + path + " sample rate is " + std::to_string(rate) +
                    " Hz; expected 16000 Hz (resampling not supported)");
  Info info;
  if (fmt_code == 1 && bits == 16) {
    info.format = Format::pcm16;
    info.n_samples = static_cast<Eigen::Index>(data_len / 2);
  } else if (fmt_code == 3 && bits == 32) {
    info.format = Format::float32;
    info.n_samples = static_cast<Eigen::Index>(data_len / 4);
  } else {
    throw UserError("wav: " + path + " format code " + std::to_string(fmt_code) + "/" +
                    std::to_string(bits) + "-bit unsupported; use 16-bit PCM or 32-bit float");
  }
  return info;
}

inline Waveform read(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("wav: cannot open " + path);
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw IoError("wav: " + path + " is not a RIFF/WAVE file");

  std::uint16_t fmt_code = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t *data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const char *tag = reinterpret_cast<const char *>(raw.data() + pos);
    const std::uint32_t chunk_len = detail::get_u32(raw.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_len > raw.size()) throw IoError("wav: truncated chunk in " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw IoError("wav: malformed fmt chunk in " + path);
      fmt_code = detail::get_u16(raw.data() + body);
      channels = detail::get_u16(raw.data() + body + 2);
      rate = detail::get_u32(raw.data() + body + 4);
      bits = detail::get_u16(raw.data() + body + 14);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = raw.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (data == nullptr) throw IoError("wav: no data chunk in " + path);
  if (channels != 1)
    throw UserError("wav: " + path + " has " + std::to_string(channels) +
                    " channels; expected mono");
  if (rate != static_cast<std::uint32_t>(kSampleRate))
    throw UserError("wav: " + path + " sample rate is " + std::to_string(rate) +
                    " Hz; expected 16000 Hz (resampling not supported)");

  Eigen::VectorXd samples;
  if (fmt_code == 1 && bits == 16) {
    const Eigen::Index n = static_cast<Eigen::Index>(data_len / 2);
    samples.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto u = static_cast<std::int16_t>(detail::get_u16(data + 2 * i));
      samples[i] = static_cast<double>(u) / 32768.0;
    }
  } else if (fmt_code == 3 && bits == 32) {
    const Eigen::Index n = static_cast<Eigen::Index>(data_len / 4);
    samples.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::uint32_t u = detail::get_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      samples[i] = static_cast<double>(f);
    }
  } else {
    throw UserError("wav: " + path + " format code " + std::to_string(fmt_code) + "/" +
                    std::to_string(bits) + "-bit unsupported; use 16-bit PCM or 32-bit float");
  }
  return Waveform(std::move(samples));
}

inline void write(const std::string &path, const Waveform &x, Format fmt = Format::pcm16) {
  if (x.sample_rate != kSampleRate)
    throw UserError("wav: refusing to write sample rate " + std::to_string(x.sample_rate));
  const auto n = static_cast<std::uint32_t>(x.size());
  const std::uint16_t bytes_per = (fmt == Format::pcm16) ? 2 : 4;
  const std::uint32_t data_len = n * bytes_per;

  std::vector<std::uint8_t> out;
  out.reserve(64 + data_len);
  detail::put_tag(out, "RIFF");
  // fact chunk (12 bytes) is required for non-PCM formats
  const std::uint32_t extra = (fmt == Format::float32) ? 12u : 0u;
  detail::put_u32(out, 4 + 24 + extra + 8 + data_len);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, fmt == Format::pcm16 ? 1 : 3);
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<std::uint32_t>(kSampleRate));
  detail::put_u32(out, static_cast<std::uint32_t>(kSampleRate) * bytes_per);
  detail::put_u16(out, bytes_per);
  detail::put_u16(out, static_cast<std::uint16_t>(8 * bytes_per));
  if (fmt == Format::float32) {
    detail::put_tag(out, "fact");
    detail::put_u32(out, 4);
    detail::put_u32(out, n);
  }
  detail::put_tag(out, "data");
  detail::put_u32(out, data_len);

  if (fmt == Format::pcm16) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      // symmetric with the reader's 1/32768 scaling
      const long q = std::lrint(std::max(-1.0, std::min(1.0, x.samples[i])) * 32768.0);
      const auto clamped = static_cast<std::int16_t>(std::max(-32768L, std::min(32767L, q)));
      detail::put_u16(out, static_cast<std::uint16_t>(clamped));
    }
  } else {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const auto f = static_cast<float>(x.samples[i]);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      detail::put_u32(out, u);
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("wav: cannot write " + path);
  os.write(reinterpret_cast<const char *>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("wav: short write to " + path);
}

}  // namespace wav
}  // namespace posse
