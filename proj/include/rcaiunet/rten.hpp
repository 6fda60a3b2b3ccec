#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rcaiunet/tensor.hpp"

namespace rca {

// RTEN record: "RTEN", u8 version (1), u8 dtype (0 = f32, 1 = f64), u8 rank,
// rank x u64 LE dims, then the raw LE scalars in row-major order.
inline constexpr std::uint8_t kRtenVersion = 1;

void write_rten(std::ostream& os, const Tensor& t);
Tensor read_rten(std::istream& is);

void save_rten(const std::filesystem::path& path, const Tensor& t);
Tensor load_rten(const std::filesystem::path& path);

using NamedTensor = std::pair<std::string, Tensor>;

// Named archive entry: u32 LE name length, UTF-8 name, then one RTEN record.
void write_named(std::ostream& os, const std::string& name, const Tensor& t);

/// Reads named entries until end of stream.
std::vector<NamedTensor> read_named_all(std::istream& is);

}  // namespace rca
