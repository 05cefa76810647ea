#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spikedrive/spikedrive.hpp"

namespace spikedrive::testing {

/// Integer matrix with entries uniform in [lo, hi].
inline IntMatrix random_ints(std::size_t rows, std::size_t cols, std::int64_t lo, std::int64_t hi, Rng& rng) {
  IntMatrix m(rows, cols);
  for (auto& v : m.values()) v = lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  return m;
}

/// Counts matrix with every entry drawn from the full alphabet of the polarity.
inline SpikeCountMatrix random_counts(std::size_t rows, std::size_t cols, int bits, EncodingScheme scheme, Rng& rng) {
  const auto d = static_cast<std::int64_t>(unfold_length(bits, scheme));
  const std::int64_t lo = scheme == EncodingScheme::AsymBinary ? 0 : -d;
  SpikeCountMatrix c;
  c.counts = random_ints(rows, cols, lo, d, rng);
  c.polarity = polarity_of(scheme);
  c.d_steps = static_cast<std::uint32_t>(d);
  return c;
}

/// The `cost` arguments recorded in a golden file's leading comment: a `# cost ...` line plus
/// any `#   --flag value` continuation lines. The golden file itself is appended.
inline std::vector<std::string> golden_args(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> args;
  std::string line;
  bool started = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] != '#') break;
    std::string body = line.substr(1);
    const auto first = body.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    body = body.substr(first);
    if (!started && body.rfind("cost ", 0) != 0) continue;
    if (started && body.rfind("--", 0) != 0) break;
    started = true;
    std::istringstream words(body);
    for (std::string w; words >> w;) args.push_back(w);
  }
  if (started) {
    args.push_back("--golden");
    args.push_back(path);
  }
  return args;
}

}  // namespace spikedrive::testing
