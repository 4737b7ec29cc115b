#include "uaopf/common.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

namespace uaopf {

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_));
  return std::string(buf);
}

std::uint64_t hash_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file for hashing: " + path);
  Fnv1a h;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.value();
}

std::string format_double(double v) {
  // %.17g always round-trips; prefer the shorter %.15g / %.16g when they do.
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return std::string(buf);
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("bad floating point literal: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace uaopf
