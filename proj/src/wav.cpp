#include "vqtt/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace vqtt {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void write_u32(std::ofstream& f, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& f, uint16_t v) {
  const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open WAV file: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path.string());
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t len = read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + len > bytes.size()) throw IoError("truncated WAV chunk in " + path.string());
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw IoError("malformed fmt chunk in " + path.string());
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible && len >= 40) {
        format = read_u16(bytes.data() + body + 24);  // sub-format GUID leading bytes
      }
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!data || channels == 0 || rate == 0) {
    throw IoError("missing fmt/data chunk in " + path.string());
  }

  std::vector<double> mono;
  if (format == kFormatPcm && bits == 16) {
    const size_t n = data_len / (2 * channels);
    mono.resize(n);
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (unsigned c = 0; c < channels; ++c) {
        int16_t s;
        std::memcpy(&s, data + (i * channels + c) * 2, 2);
        acc += static_cast<double>(s) / 32768.0;
      }
      mono[i] = acc / channels;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const size_t n = data_len / (4 * channels);
    mono.resize(n);
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (unsigned c = 0; c < channels; ++c) {
        float s;
        std::memcpy(&s, data + (i * channels + c) * 4, 4);
        acc += static_cast<double>(s);
      }
      mono[i] = acc / channels;
    }
  } else {
    throw IoError("unsupported WAV encoding (want 16-bit PCM or 32-bit float): " +
                  path.string());
  }

  Waveform w;
  w.sample_rate = kSampleRate;
  w.samples = (static_cast<int>(rate) == kSampleRate)
                  ? std::move(mono)
                  : resample_to_rate(mono, static_cast<int>(rate), kSampleRate);
  return w;
}

void save_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write WAV file: " + path.string());
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  write_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_u32(f, 16);
  write_u16(f, kFormatPcm);
  write_u16(f, 1);
  write_u32(f, static_cast<uint32_t>(w.sample_rate));
  write_u32(f, static_cast<uint32_t>(w.sample_rate) * 2);
  write_u16(f, 2);
  write_u16(f, 16);
  f.write("data", 4);
  write_u32(f, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    const double v = std::clamp(w.samples[i], -1.0, 1.0);
    const int16_t s = static_cast<int16_t>(std::lrint(v * 32767.0));
    write_u16(f, static_cast<uint16_t>(s));
  }
  if (!f) throw IoError("short write: " + path.string());
}

std::vector<double> resample(const std::vector<double>& in, double rate_factor) {
  if (in.empty()) return {};
  if (rate_factor <= 0.0) throw ConfigError("resample rate factor must be > 0");
  if (rate_factor == 1.0) return in;

  const size_t out_len =
      std::max<size_t>(1, static_cast<size_t>(std::floor(in.size() / rate_factor)));
  // Lowpass cutoff at the narrower of the two Nyquists.
  const double cutoff = std::min(1.0, 1.0 / rate_factor) * 0.945;
  const int half_taps = 24;
  std::vector<double> out(out_len);
  const auto n_in = static_cast<long>(in.size());
  for (size_t i = 0; i < out_len; ++i) {
    const double center = i * rate_factor;
    const long k0 = static_cast<long>(std::floor(center)) - half_taps + 1;
    const long k1 = static_cast<long>(std::floor(center)) + half_taps;
    double acc = 0.0, norm = 0.0;
    for (long k = k0; k <= k1; ++k) {
      const double t = (k - center) * cutoff;
      const double sinc = (std::abs(t) < 1e-12) ? 1.0 : std::sin(M_PI * t) / (M_PI * t);
      const double win = 0.5 + 0.5 * std::cos(M_PI * (k - center) / half_taps);
      const double tap = sinc * win;
      norm += tap;
      if (k >= 0 && k < n_in) acc += in[static_cast<size_t>(k)] * tap;
    }
    out[i] = (norm > 1e-12) ? acc / norm : 0.0;
  }
  return out;
}

std::vector<double> resample_to_rate(const std::vector<double>& in, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ConfigError("sample rates must be positive");
  return resample(in, static_cast<double>(from_rate) / to_rate);
}

}  // namespace vqtt
