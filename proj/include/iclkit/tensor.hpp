#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclkit/errors.hpp"

namespace iclkit {

// On-disk scalar codes. F32 and F16 carry attention maps and embeddings;
// U8 carries 0/1 mask matrices.
enum class DType : std::uint8_t { F32 = 1, F16 = 2, U8 = 3 };

using Shape = std::vector<std::uint64_t>;

std::string_view dtype_name(DType dtype);
DType dtype_from_name(std::string_view name);
bool is_valid_dtype_code(std::uint8_t code);
std::size_t dtype_width(DType dtype);

// Product of extents. Throws FormatError if it does not fit in 64 bits.
std::uint64_t element_count(const Shape& shape);

// IEEE 754 binary16 conversions, round-to-nearest-even on narrowing.
std::uint16_t float_to_half_bits(float value);
float half_bits_to_float(std::uint16_t bits);

// Dense row-major n-d array. `dtype` records the storage precision used in
// the container; values are held in memory as `Scalar` (f16 is widened).
template <typename Scalar>
class BasicTensor {
 public:
  using scalar_type = Scalar;

  BasicTensor() : dtype_(DType::F32), data_(1, Scalar(0)) {}
  BasicTensor(DType dtype, Shape shape, std::vector<Scalar> data)
      : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {
    if (!is_valid_dtype_code(static_cast<std::uint8_t>(dtype_))) {
      throw FormatError("unsupported dtype code " + std::to_string(static_cast<int>(dtype_)));
    }
    if (element_count(shape_) != data_.size()) {
      throw FormatError("tensor data has " + std::to_string(data_.size()) +
                        " scalars but shape requires " + std::to_string(element_count(shape_)));
    }
  }

  static BasicTensor zeros(DType dtype, Shape shape) {
    const auto n = element_count(shape);
    return BasicTensor(dtype, std::move(shape), std::vector<Scalar>(n, Scalar(0)));
  }

  DType dtype() const { return dtype_; }
  void set_dtype(DType dtype) { dtype_ = dtype; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::uint64_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<const Scalar> data() const { return data_; }
  std::span<Scalar> data() { return data_; }

  template <typename... Index>
  std::size_t offset(Index... index) const {
    static_assert(sizeof...(Index) > 0);
    const std::uint64_t idx[] = {static_cast<std::uint64_t>(index)...};
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < sizeof...(Index); ++axis) {
      flat = flat * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(idx[axis]);
    }
    return flat;
  }

  template <typename... Index>
  Scalar operator()(Index... index) const {
    return data_[offset(index...)];
  }
  template <typename... Index>
  Scalar& operator()(Index... index) {
    return data_[offset(index...)];
  }

  template <typename To>
  BasicTensor<To> cast() const {
    std::vector<To> out(data_.begin(), data_.end());
    return BasicTensor<To>(dtype_, shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  DType dtype_;
  Shape shape_;
  std::vector<Scalar> data_;
};

using Tensor = BasicTensor<float>;

}  // namespace iclkit
