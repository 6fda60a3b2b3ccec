#include "rcaiunet/rten.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace rca {

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> buf{};
  std::memcpy(buf.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  os.write(buf.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<char, sizeof(T)> buf{};
  if (!is.read(buf.data(), sizeof(T))) throw FormatError("RTEN: truncated stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

}  // namespace

void write_rten(std::ostream& os, const Tensor& t) {
  os.write("RTEN", 4);
  put_le<std::uint8_t>(os, kRtenVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype()));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
  if (t.dtype() == DType::F32) {
    for (double v : t.data()) put_le<float>(os, static_cast<float>(v));
  } else {
    for (double v : t.data()) put_le<double>(os, v);
  }
  if (!os) throw IoError("RTEN: write failed");
}

Tensor read_rten(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RTEN", 4) != 0) throw FormatError("RTEN: bad magic");
  const auto version = get_le<std::uint8_t>(is);
  if (version != kRtenVersion) throw FormatError("RTEN: unsupported version " + std::to_string(version));
  const auto dtype_raw = get_le<std::uint8_t>(is);
  if (dtype_raw > 1) throw FormatError("RTEN: unknown dtype " + std::to_string(dtype_raw));
  const auto dtype = static_cast<DType>(dtype_raw);
  const auto rank = get_le<std::uint8_t>(is);
  if (rank == 0) throw FormatError("RTEN: rank 0");
  Shape shape(rank);
  for (auto& d : shape) {
    d = static_cast<std::size_t>(get_le<std::uint64_t>(is));
    if (d == 0) throw FormatError("RTEN: zero dimension");
  }
  std::vector<double> data(shape_numel(shape));
  if (dtype == DType::F32) {
    for (auto& v : data) v = static_cast<double>(get_le<float>(is));
  } else {
    for (auto& v : data) v = get_le<double>(is);
  }
  return Tensor(std::move(shape), std::move(data), dtype);
}

void save_rten(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_rten(os, t);
}

Tensor load_rten(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_rten(is);
}

void write_named(std::ostream& os, const std::string& name, const Tensor& t) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_rten(os, t);
}

std::vector<NamedTensor> read_named_all(std::istream& is) {
  std::vector<NamedTensor> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("named archive: truncated name");
    out.emplace_back(std::move(name), read_rten(is));
  }
  return out;
}

}  // namespace rca
