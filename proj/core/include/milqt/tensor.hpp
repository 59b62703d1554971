#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace milqt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

// Row-major dense tensor of 64-bit reals. Values are immutable after
// construction; only the gradient slot is written later (by Tape::
// accumulate_leaf_grads and Tensor::zero_grad). Copies share storage, so a
// parameter held by a model and the same parameter seen by the optimizer
// alias one value buffer and one gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor ones(Shape shape);
  static Tensor scalar(double value);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows,
                          bool requires_grad = false);

  bool defined() const { return values_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const;
  std::size_t extent(std::size_t axis) const;

  const std::vector<double>& values() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  // Rank-2 accessor.
  double at(std::size_t row, std::size_t col) const;
  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  bool has_grad() const { return grad_ != nullptr; }
  const std::vector<double>& grad() const;
  void zero_grad();
  void accumulate_grad(std::span<const double> delta);

  // Stable identity of the value buffer; used by Tape to recognize inputs.
  const void* storage_key() const { return values_.get(); }

  // Deep copy with no gradient tracking; breaks any tape linkage.
  Tensor detach() const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> values_;
  bool requires_grad_ = false;
  std::shared_ptr<std::vector<double>> grad_;
};

// Textual tensor format. First line is "shape: d1 d2 ... dn"; the values
// follow in row-major order, one row of the last axis per line, written as
// shortest round-trip decimals. Example for a 2x3 tensor:
//   shape: 2 3
//   1 0.5 0
//   0 0.5 1
std::string tensor_to_text(const Tensor& t);
Tensor tensor_from_text(std::string_view text);

// Several tensors in one file, blocks separated by a single blank line.
std::string tensor_blocks_to_text(std::span<const Tensor> tensors);
std::vector<Tensor> tensor_blocks_from_text(std::string_view text);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace milqt
