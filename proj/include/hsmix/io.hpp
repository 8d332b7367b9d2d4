#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hsmix/core.hpp"

namespace hsmix {

using json = nlohmann::json;

// Shortest round-trip-safe text form, identical across runs.
std::string fmt_double(double x);

json to_json_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
Eigen::VectorXd vector_from_json(const json& j, int expected_dim = -1);

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T read_le(std::istream& is) {
  std::array<char, sizeof(T)> bytes{};
  is.read(bytes.data(), sizeof(T));
  if (!is) throw InvalidInput("binary read: truncated input");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

// Rows: species,x1..xd,v1..vd with a header line.
void write_configuration_csv(std::ostream& os, const Configuration& z);
Configuration read_configuration_csv(std::istream& is);

// Header: uint64 d, N_A, N_B; then per particle (A block first) d positions, d velocities.
void write_configuration_binary(std::ostream& os, const Configuration& z);
Configuration read_configuration_binary(std::istream& is);

json configuration_to_json(const Configuration& z);
Configuration configuration_from_json(const json& j);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace hsmix
