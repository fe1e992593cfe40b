#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace rgd {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

/// Locale-independent, fixed-format rendering so reruns are byte-identical.
inline std::string fmt_num(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// C99 hex-float rendering; exact round trip.
inline std::string fmt_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Provenance line every CSV starts with.
inline void write_csv_preamble(std::ostream& os, std::uint64_t config_hash, const std::vector<std::uint64_t>& seeds) {
  os << "# rgd-toolkit " << kToolkitVersion << " config=" << hex64(config_hash) << " seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << '\n';
}

}  // namespace rgd
