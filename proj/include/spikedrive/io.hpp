#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "codec.hpp"
#include "error.hpp"
#include "matrix.hpp"

namespace spikedrive::io {

// Little-endian primitives, byte by byte so the format does not depend on the host.
namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  std::array<char, sizeof(U)> b{};
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), b.size());
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  static_assert(std::is_unsigned_v<U>);
  std::array<unsigned char, sizeof(U)> b{};
  is.read(reinterpret_cast<char*>(b.data()), b.size());
  require(is.gcount() == static_cast<std::streamsize>(b.size()), ErrorCode::ParseError,
          std::string("truncated input while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof v);
  put_le(os, bits);
}

inline double get_f64(std::istream& is, const char* what) {
  const auto bits = get_le<std::uint64_t>(is, what);
  double v = 0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void expect_end(std::istream& is, const char* what) {
  require(is.peek() == std::char_traits<char>::eof(), ErrorCode::ParseError,
          std::string("trailing bytes after ") + what);
}

}  // namespace detail

inline constexpr std::array<char, 4> kTensorMagic = {'S', 'D', 'L', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;

enum class DType : std::uint8_t { Real64 = 0, Int32 = 1, Int8 = 2 };

inline std::size_t dtype_size(DType d) noexcept {
  switch (d) {
    case DType::Real64: return 8;
    case DType::Int32: return 4;
    case DType::Int8: return 1;
  }
  return 0;
}

/// An n-dimensional tensor as stored on disk. Real tensors fill `reals`, integer ones `ints`.
struct TensorFile {
  DType dtype = DType::Real64;
  std::vector<std::uint64_t> dims;
  std::vector<double> reals;
  std::vector<std::int64_t> ints;

  std::uint64_t elements() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) {
      require(d == 0 || n <= std::numeric_limits<std::uint64_t>::max() / d, ErrorCode::ParseError,
              "tensor dims overflow");
      n *= d;
    }
    return n;
  }

  static TensorFile from(const RealMatrix& m) {
    return {DType::Real64, {m.rows(), m.cols()}, {m.values().begin(), m.values().end()}, {}};
  }

  static TensorFile from(const IntMatrix& m, DType dtype = DType::Int32) {
    require(dtype != DType::Real64, ErrorCode::InvalidArgument, "integer tensors need an integer dtype");
    return {dtype, {m.rows(), m.cols()}, {}, {m.values().begin(), m.values().end()}};
  }

  /// Rank 1 reads as a single row; rank 2 as rows x cols.
  std::pair<std::size_t, std::size_t> matrix_shape() const {
    require(dims.size() == 1 || dims.size() == 2, ErrorCode::ShapeMismatch,
            "expected a rank-1 or rank-2 tensor, got rank " + std::to_string(dims.size()));
    return dims.size() == 1 ? std::pair<std::size_t, std::size_t>{1, dims[0]}
                            : std::pair<std::size_t, std::size_t>{dims[0], dims[1]};
  }

  RealMatrix to_real() const {
    const auto [r, c] = matrix_shape();
    if (dtype == DType::Real64) return RealMatrix(r, c, reals);
    std::vector<double> v(ints.begin(), ints.end());
    return RealMatrix(r, c, std::move(v));
  }

  IntMatrix to_int() const {
    require(dtype != DType::Real64, ErrorCode::InvalidArgument, "tensor holds reals, not integers");
    const auto [r, c] = matrix_shape();
    return IntMatrix(r, c, ints);
  }
};

inline void write_tensor(std::ostream& os, const TensorFile& t) {
  require(t.dims.size() <= 255, ErrorCode::InvalidArgument, "tensor rank above 255");
  const std::uint64_t n = t.elements();
  const std::size_t have = t.dtype == DType::Real64 ? t.reals.size() : t.ints.size();
  require(have == n, ErrorCode::ShapeMismatch, "tensor payload does not match its dims");
  os.write(kTensorMagic.data(), kTensorMagic.size());
  detail::put_le<std::uint16_t>(os, kTensorVersion);
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
  for (std::uint64_t d : t.dims) detail::put_le<std::uint64_t>(os, d);
  switch (t.dtype) {
    case DType::Real64:
      for (double v : t.reals) detail::put_f64(os, v);
      break;
    case DType::Int32:
      for (std::int64_t v : t.ints) {
        require(v >= INT32_MIN && v <= INT32_MAX, ErrorCode::OutOfRange, "value does not fit int32");
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
      }
      break;
    case DType::Int8:
      for (std::int64_t v : t.ints) {
        require(v >= INT8_MIN && v <= INT8_MAX, ErrorCode::OutOfRange, "value does not fit int8");
        detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(static_cast<std::int8_t>(v)));
      }
      break;
  }
  require(os.good(), ErrorCode::ParseError, "tensor write failed");
}

inline TensorFile read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  require(is.gcount() == 4 && magic == kTensorMagic, ErrorCode::ParseError, "not a tensor file (bad magic)");
  const auto version = detail::get_le<std::uint16_t>(is, "version");
  require(version == kTensorVersion, ErrorCode::ParseError, "unsupported tensor version " + std::to_string(version));
  const auto code = detail::get_le<std::uint8_t>(is, "dtype");
  require(code <= 2, ErrorCode::ParseError, "unknown tensor dtype " + std::to_string(code));
  TensorFile t;
  t.dtype = static_cast<DType>(code);
  const auto rank = detail::get_le<std::uint8_t>(is, "rank");
  for (std::uint8_t i = 0; i < rank; ++i) t.dims.push_back(detail::get_le<std::uint64_t>(is, "dims"));
  const std::uint64_t n = t.elements();
  // Refuse to allocate past what the stream can hold.
  const auto here = is.tellg();
  if (here != std::streampos(-1)) {
    is.seekg(0, std::ios::end);
    const auto end = is.tellg();
    is.seekg(here);
    require(static_cast<std::uint64_t>(end - here) >= n * dtype_size(t.dtype), ErrorCode::ParseError,
            "truncated tensor payload");
  }
  switch (t.dtype) {
    case DType::Real64:
      t.reals.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) t.reals.push_back(detail::get_f64(is, "payload"));
      break;
    case DType::Int32:
      t.ints.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i)
        t.ints.push_back(static_cast<std::int32_t>(detail::get_le<std::uint32_t>(is, "payload")));
      break;
    case DType::Int8:
      t.ints.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i)
        t.ints.push_back(static_cast<std::int8_t>(detail::get_le<std::uint8_t>(is, "payload")));
      break;
  }
  detail::expect_end(is, "tensor payload");
  return t;
}

inline void write_train(std::ostream& os, const SpikeTrain& train) {
  require(train.steps.size() == std::size_t{train.T} * train.d_steps, ErrorCode::ShapeMismatch,
          "train step table is inconsistent with T x D");
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(train.polarity));
  detail::put_le<std::uint32_t>(os, train.T);
  detail::put_le<std::uint32_t>(os, train.d_steps);
  detail::put_le<std::uint64_t>(os, train.rows);
  detail::put_le<std::uint64_t>(os, train.cols);
  for (const SpikeStep& s : train.steps) {
    detail::put_le<std::uint64_t>(os, s.size());
    for (std::uint64_t i : s.index) detail::put_le<std::uint64_t>(os, i);
    if (train.polarity == Polarity::Ternary)
      for (std::int8_t v : s.sign) detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(v));
  }
  require(os.good(), ErrorCode::ParseError, "spike train write failed");
}

/// Parses and validates a spike train: indices in range and strictly increasing per step,
/// signs in {-1, +1}.
inline SpikeTrain read_train(std::istream& is) {
  SpikeTrain train;
  const auto pol = detail::get_le<std::uint8_t>(is, "polarity");
  require(pol <= 1, ErrorCode::ParseError, "unknown polarity code " + std::to_string(pol));
  train.polarity = static_cast<Polarity>(pol);
  train.T = detail::get_le<std::uint32_t>(is, "T");
  train.d_steps = detail::get_le<std::uint32_t>(is, "D_steps");
  train.rows = detail::get_le<std::uint64_t>(is, "rows");
  train.cols = detail::get_le<std::uint64_t>(is, "cols");
  require(train.T >= 1 && train.d_steps >= 1, ErrorCode::ParseError, "T and D_steps must be positive");
  const std::uint64_t elements = train.rows * train.cols;
  require(train.cols == 0 || elements / train.cols == train.rows, ErrorCode::ParseError, "train dims overflow");
  train.steps.resize(std::size_t{train.T} * train.d_steps);
  for (SpikeStep& s : train.steps) {
    const auto n = detail::get_le<std::uint64_t>(is, "event count");
    require(n <= elements, ErrorCode::ParseError, "step holds more events than elements");
    s.index.reserve(n);
    for (std::uint64_t e = 0; e < n; ++e) {
      const auto i = detail::get_le<std::uint64_t>(is, "event index");
      require(i < elements, ErrorCode::ParseError, "event index out of range");
      require(s.index.empty() || s.index.back() < i, ErrorCode::ParseError, "event indices must increase");
      s.index.push_back(i);
    }
    if (train.polarity == Polarity::Ternary) {
      s.sign.reserve(n);
      for (std::uint64_t e = 0; e < n; ++e) {
        const auto v = static_cast<std::int8_t>(detail::get_le<std::uint8_t>(is, "event sign"));
        require(v == 1 || v == -1, ErrorCode::ParseError, "ternary sign must be +1 or -1");
        s.sign.push_back(v);
      }
    }
  }
  detail::expect_end(is, "spike train");
  return train;
}

/// Whole-file helpers. Writes go through a buffer so a failed serialization leaves no file.
template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
  std::ostringstream buf(std::ios::binary);
  fn(buf);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::ParseError, "cannot open '" + path + "' for writing");
  const std::string bytes = buf.str();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorCode::ParseError, "write to '" + path + "' failed");
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::ParseError, "cannot open '" + path + "'");
  return f;
}

inline TensorFile load_tensor(const std::string& path) {
  auto f = open_input(path);
  return read_tensor(f);
}

inline void save_tensor(const std::string& path, const TensorFile& t) {
  write_file(path, [&](std::ostream& os) { write_tensor(os, t); });
}

inline SpikeTrain load_train(const std::string& path) {
  auto f = open_input(path);
  return read_train(f);
}

inline void save_train(const std::string& path, const SpikeTrain& t) {
  write_file(path, [&](std::ostream& os) { write_train(os, t); });
}

}  // namespace spikedrive::io
