#include "iclkit/tensor.hpp"

#include <Eigen/Core>
#include <limits>

namespace iclkit {

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::F32: return "f32";
    case DType::F16: return "f16";
    case DType::U8: return "u8";
  }
  return "invalid";
}

DType dtype_from_name(std::string_view name) {
  if (name == "f32") return DType::F32;
  if (name == "f16") return DType::F16;
  if (name == "u8") return DType::U8;
  throw FormatError("unknown dtype name '" + std::string(name) + "'");
}

bool is_valid_dtype_code(std::uint8_t code) { return code >= 1 && code <= 3; }

std::size_t dtype_width(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F16: return 2;
    case DType::U8: return 1;
  }
  throw FormatError("unsupported dtype");
}

std::uint64_t element_count(const Shape& shape) {
  std::uint64_t n = 1;
  for (auto extent : shape) {
    if (extent != 0 && n > std::numeric_limits<std::uint64_t>::max() / extent) {
      throw FormatError("tensor extent product overflows 64 bits");
    }
    n *= extent;
  }
  return n;
}

std::uint16_t float_to_half_bits(float value) {
  return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(value));
}

float half_bits_to_float(std::uint16_t bits) {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

}  // namespace iclkit
