#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ipd/error.hpp"
#include "ipd/matrix.hpp"
#include "ipd/records.hpp"

namespace ipd {

// IPMX layout (all integers little-endian):
//   bytes 0-3   magic "IPMX"
//   byte  4     version (1)
//   byte  5     dtype (1 = f32, 2 = f64)
//   bytes 6-13  rows (u64)
//   bytes 14-21 cols (u64)
//   then rows * cols row-major values.
enum class IpmxDtype : std::uint8_t { F32 = 1, F64 = 2 };

inline constexpr std::array<char, 4> kIpmxMagic{'I', 'P', 'M', 'X'};
inline constexpr std::uint8_t kIpmxVersion = 1;
inline constexpr std::size_t kIpmxHeaderSize = 22;

namespace detail {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xff));
    }
    return out;
  } else {
    return v;
  }
}

template <typename U>
void put_le(std::string& buf, U v) {
  v = to_little(v);
  char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  buf.append(bytes, sizeof(U));
}

template <typename U>
U get_le(const char* p) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  return to_little(v);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::FileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

inline std::string slurp(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Nonblank lines of a text file.
inline std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(start, nl - start));
    if (!line.empty()) lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// printf("%.17g") equivalent; 17 significant digits round-trip any double.
inline std::string format_g17(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline void write_ipmx(const Matrix& m, const std::filesystem::path& path,
                       IpmxDtype dtype = IpmxDtype::F64) {
  std::string header;
  header.append(kIpmxMagic.data(), kIpmxMagic.size());
  header.push_back(static_cast<char>(kIpmxVersion));
  header.push_back(static_cast<char>(dtype));
  detail::put_le<std::uint64_t>(header, m.rows());
  detail::put_le<std::uint64_t>(header, m.cols());

  auto out = detail::open_output(path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  constexpr std::size_t kBatch = 1 << 16;
  std::string buf;
  const auto values = m.data();
  for (std::size_t start = 0; start < values.size(); start += kBatch) {
    buf.clear();
    const std::size_t end = std::min(values.size(), start + kBatch);
    for (std::size_t i = start; i < end; ++i) {
      if (dtype == IpmxDtype::F64) {
        detail::put_le(buf, std::bit_cast<std::uint64_t>(values[i]));
      } else {
        detail::put_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
      }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

/// Reads an IPMX file; f32 payloads are widened to f64.
inline Matrix read_ipmx(const std::filesystem::path& path) {
  const std::string bytes = detail::slurp(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kIpmxMagic.data(), 4) != 0) {
    throw Error(ErrorCode::BadMagic, path.string());
  }
  if (bytes.size() < kIpmxHeaderSize) throw Error(ErrorCode::Truncated, "header of " + path.string());
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kIpmxVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "version " + std::to_string(version));
  }
  const auto dtype = static_cast<std::uint8_t>(bytes[5]);
  if (dtype != 1 && dtype != 2) throw Error(ErrorCode::UnsupportedDtype, "dtype " + std::to_string(dtype));
  const auto rows = detail::get_le<std::uint64_t>(bytes.data() + 6);
  const auto cols = detail::get_le<std::uint64_t>(bytes.data() + 14);
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::InvalidDimensions, std::to_string(rows) + " x " + std::to_string(cols));
  }
  const std::size_t width = dtype == 2 ? 8 : 4;
  const std::size_t available = bytes.size() - kIpmxHeaderSize;
  if (cols > std::numeric_limits<std::uint64_t>::max() / rows ||
      rows * cols > std::numeric_limits<std::uint64_t>::max() / width) {
    throw Error(ErrorCode::InvalidDimensions, "dimensions overflow");
  }
  const std::uint64_t need = rows * cols * width;
  if (available < need) {
    throw Error(ErrorCode::Truncated, "payload has " + std::to_string(available) + " of " +
                                          std::to_string(need) + " bytes");
  }
  if (available > need) throw Error(ErrorCode::TrailingData, path.string());

  std::vector<double> data(rows * cols);
  const char* p = bytes.data() + kIpmxHeaderSize;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = dtype == 2 ? std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 8 * i))
                         : static_cast<double>(std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i)));
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::NonFinite, "element " + std::to_string(i) + " of " + path.string());
    }
  }
  return Matrix(rows, cols, std::move(data));
}

/// Reads `index,label` CSV; labels are returned in file order.
inline std::vector<Label> read_labels_csv(const std::filesystem::path& path) {
  const std::string text = detail::slurp(path);
  const auto lines = detail::lines_of(text);
  if (lines.empty()) throw Error(ErrorCode::MissingHeader, path.string() + " is empty");
  const auto header = detail::split_csv(lines[0]);
  if (header.size() != 2 || header[0] != "index" || header[1] != "label") {
    throw Error(ErrorCode::MissingHeader, "expected 'index,label' in " + path.string());
  }
  std::vector<Label> labels;
  std::set<std::int64_t> seen;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = detail::split_csv(lines[li]);
    const std::string where = path.string() + " line " + std::to_string(li + 1);
    if (fields.size() != 2) throw Error(ErrorCode::MalformedRow, where);
    const auto index = detail::parse_number<std::int64_t>(fields[0]);
    if (!index || *index < 0) throw Error(ErrorCode::MalformedRow, where + ": bad index");
    if (!seen.insert(*index).second) {
      throw Error(ErrorCode::DuplicateIndex, where + ": index " + std::to_string(*index));
    }
    const auto label = detail::parse_number<std::int64_t>(fields[1]);
    if (!label) throw Error(ErrorCode::NonIntegerLabel, where + ": '" + std::string(fields[1]) + "'");
    if (*label < 0) throw Error(ErrorCode::NegativeLabel, where + ": " + std::to_string(*label));
    labels.push_back(*label);
  }
  return labels;
}

inline void write_labels_csv(std::span<const Label> labels, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

/// Reads `dataset,N,d_data,k_f,loss[,d_repr][,extra...]`. Extra columns are
/// kept as string tags; an empty d_repr cell leaves d_repr unset.
inline std::vector<ScalingRecord> read_scaling_csv(const std::filesystem::path& path) {
  const std::string text = detail::slurp(path);
  const auto lines = detail::lines_of(text);
  if (lines.empty()) throw Error(ErrorCode::MissingHeader, path.string() + " is empty");
  const auto header = detail::split_csv(lines[0]);
  constexpr std::array<std::string_view, 5> required{"dataset", "N", "d_data", "k_f", "loss"};
  if (header.size() < required.size() || !std::equal(required.begin(), required.end(), header.begin())) {
    throw Error(ErrorCode::MissingHeader, "expected 'dataset,N,d_data,k_f,loss[,d_repr]' in " +
                                              path.string());
  }
  const bool has_repr = header.size() > 5 && header[5] == "d_repr";
  const std::size_t first_tag = has_repr ? 6 : 5;

  std::vector<ScalingRecord> records;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = detail::split_csv(lines[li]);
    const std::string where = path.string() + " line " + std::to_string(li + 1);
    if (f.size() != header.size()) throw Error(ErrorCode::MalformedRow, where);
    auto positive = [&](std::string_view cell, const char* name) {
      const auto v = detail::parse_number<double>(cell);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedRow, where + ": " + name + " '" + std::string(cell) + "'");
      }
      if (!(*v > 0.0)) throw Error(ErrorCode::NonPositiveField, where + ": " + name);
      return *v;
    };
    ScalingRecord r;
    r.dataset_id = std::string(f[0]);
    const auto n = detail::parse_number<std::int64_t>(f[1]);
    if (!n) throw Error(ErrorCode::MalformedRow, where + ": N '" + std::string(f[1]) + "'");
    if (*n <= 0) throw Error(ErrorCode::NonPositiveField, where + ": N");
    r.train_size = static_cast<std::uint64_t>(*n);
    r.d_data = positive(f[2], "d_data");
    r.k_f = positive(f[3], "k_f");
    r.loss = positive(f[4], "loss");
    if (has_repr && !f[5].empty()) r.d_repr = positive(f[5], "d_repr");
    for (std::size_t c = first_tag; c < header.size(); ++c) {
      r.tags.emplace(std::string(header[c]), std::string(f[c]));
    }
    records.push_back(std::move(r));
  }
  return records;
}

/// Inverse of read_scaling_csv. All records must share the same tag columns.
inline void write_scaling_csv(std::span<const ScalingRecord> records,
                              const std::filesystem::path& path) {
  const bool has_repr =
      std::any_of(records.begin(), records.end(), [](const auto& r) { return r.d_repr.has_value(); });
  std::vector<std::string> tag_cols;
  if (!records.empty()) {
    for (const auto& [k, v] : records.front().tags) tag_cols.push_back(k);
  }
  auto out = detail::open_output(path);
  out << "dataset,N,d_data,k_f,loss";
  if (has_repr) out << ",d_repr";
  for (const auto& c : tag_cols) out << ',' << c;
  out << '\n';
  for (const auto& r : records) {
    out << r.dataset_id << ',' << r.train_size << ',' << format_g17(r.d_data) << ','
        << format_g17(r.k_f) << ',' << format_g17(r.loss);
    if (has_repr) out << ',' << (r.d_repr ? format_g17(*r.d_repr) : std::string());
    for (const auto& c : tag_cols) {
      const auto it = r.tags.find(c);
      if (it == r.tags.end()) throw Error(ErrorCode::InvalidArgument, "record lacks tag " + c);
      out << ',' << it->second;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

struct ImageDims {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
};

struct Image {
  Matrix pixels;  // 1 x (height * width * channels), channel-interleaved
  ImageDims dims;
};

/// Binary 8-bit PGM (P5) or PPM (P6).
inline Image read_image_pnm(const std::filesystem::path& path) {
  const std::string bytes = detail::slurp(path);
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw Error(ErrorCode::UnsupportedVariant, path.string() + " is not a PNM file");
  }
  if (bytes[1] != '5' && bytes[1] != '6') {
    throw Error(ErrorCode::UnsupportedVariant, std::string("P") + bytes[1] + " in " + path.string());
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;

  std::size_t pos = 2;
  auto next_field = [&]() -> std::uint64_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const auto v = detail::parse_number<std::uint64_t>(std::string_view(bytes).substr(start, pos - start));
    if (!v) throw Error(ErrorCode::Truncated, "malformed PNM header in " + path.string());
    return *v;
  };
  const auto width = next_field();
  const auto height = next_field();
  const auto maxval = next_field();
  if (width == 0 || height == 0) throw Error(ErrorCode::InvalidDimensions, path.string());
  if (maxval != 255) throw Error(ErrorCode::UnsupportedMaxval, "maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorCode::Truncated, "PNM header not terminated in " + path.string());
  }
  ++pos;
  const std::size_t count = width * height * channels;
  if (bytes.size() - pos < count) throw Error(ErrorCode::Truncated, "pixel data in " + path.string());
  std::vector<double> px(count);
  for (std::size_t i = 0; i < count; ++i) px[i] = static_cast<unsigned char>(bytes[pos + i]);
  return {Matrix(1, count, std::move(px)), {height, width, channels}};
}

/// Area-averaging (box filter) resize of a channel-interleaved image row.
///
/// Output pixel (oy, ox) averages the source region
/// [oy*H/th, (oy+1)*H/th) x [ox*W/tw, (ox+1)*W/tw) weighted by overlap. In units
/// of 1/th (rows) and 1/tw (columns) every overlap is an integer, so weights are
/// exact and a constant image stays exactly constant.
inline Matrix box_resize(const Image& image, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) {
    throw Error(ErrorCode::InvalidArgument, "target dimensions must be positive");
  }
  const auto [h, w, c] = image.dims;
  if (h * w * c != image.pixels.cols() || image.pixels.rows() != 1) {
    throw Error(ErrorCode::InvalidDimensions, "image row does not match its dimensions");
  }
  // weights[o] = list of (source index, integer overlap) for one axis
  auto axis_weights = [](std::size_t src, std::size_t dst) {
    std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> out(dst);
    for (std::size_t o = 0; o < dst; ++o) {
      const std::uint64_t lo = o * src, hi = (o + 1) * src;  // in units of 1/dst source pixels
      for (std::size_t s = lo / dst; s < src && s * dst < hi; ++s) {
        const std::uint64_t overlap = std::min<std::uint64_t>(hi, (s + 1) * dst) -
                                      std::max<std::uint64_t>(lo, s * dst);
        if (overlap > 0) out[o].emplace_back(s, overlap);
      }
    }
    return out;
  };
  const auto wy = axis_weights(h, target_h);
  const auto wx = axis_weights(w, target_w);
  const double denom = static_cast<double>(h) * static_cast<double>(w);
  const auto src = image.pixels.data();
  Matrix out(1, target_h * target_w * c);
  for (std::size_t oy = 0; oy < target_h; ++oy) {
    for (std::size_t ox = 0; ox < target_w; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (const auto& [sy, ay] : wy[oy]) {
          for (const auto& [sx, ax] : wx[ox]) {
            acc += static_cast<double>(ay * ax) * src[(sy * w + sx) * c + ch];
          }
        }
        out(0, (oy * target_w + ox) * c + ch) = acc / denom;
      }
    }
  }
  return out;
}

/// Box-filter resize, then per-image min/max mapping to [0, 1]. A constant
/// image maps to all zeros.
inline Matrix preprocess(const Image& image, std::size_t target_h, std::size_t target_w) {
  Matrix out = box_resize(image, target_h, target_w);
  auto v = out.data();
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double lo = *mn, hi = *mx;
  if (!(hi > lo)) {
    std::fill(v.begin(), v.end(), 0.0);
    return out;
  }
  for (auto& x : v) x = (x - lo) / (hi - lo);
  return out;
}

}  // namespace ipd
