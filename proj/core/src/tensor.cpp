#include "milqt/tensor.hpp"

#include <sstream>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor extent must be positive, got " + shape_str(shape_));
  }
  if (values.size() != shape_size(shape_)) {
    throw ShapeError("tensor " + shape_str(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(values.size()));
  }
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
  if (requires_grad_) {
    // Allocate the gradient slot eagerly so copies made before the first
    // backward still share it.
    grad_ = std::make_shared<std::vector<double>>(values_->size(), 0.0);
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_size(shape), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows,
                         bool requires_grad) {
  if (rows.empty()) throw ShapeError("from_rows: no rows");
  std::size_t cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(flat), requires_grad);
}

std::size_t Tensor::size() const { return values_ ? values_->size() : 0; }

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

const std::vector<double>& Tensor::values() const {
  if (!values_) throw ContractError("tensor is empty");
  return *values_;
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) needs rank 2, got " + shape_str(shape_));
  if (row >= shape_[0] || col >= shape_[1]) {
    throw ShapeError("index out of range for " + shape_str(shape_));
  }
  return values()[row * shape_[1] + col];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape_));
  return values()[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) throw ContractError("tensor has no gradient slot");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> delta) {
  if (!requires_grad_) throw ContractError("accumulate_grad on a tensor without requires_grad");
  if (delta.size() != size()) throw ShapeError("gradient size mismatch");
  for (std::size_t i = 0; i < delta.size(); ++i) (*grad_)[i] += delta[i];
}

Tensor Tensor::detach() const {
  if (!values_) return Tensor();
  return Tensor(shape_, *values_, false);
}

std::string tensor_to_text(const Tensor& t) {
  if (!t.defined()) throw ContractError("cannot serialize an empty tensor");
  std::string out = "shape:";
  for (std::size_t d : t.shape()) {
    out += ' ';
    out += std::to_string(d);
  }
  out += '\n';
  std::size_t row_len = t.shape().back();
  const auto& v = t.values();
  for (std::size_t i = 0; i < v.size(); i += row_len) {
    for (std::size_t j = 0; j < row_len; ++j) {
      if (j) out += ' ';
      out += fmt_double(v[i + j]);
    }
    out += '\n';
  }
  return out;
}

Tensor tensor_from_text(std::string_view text) {
  std::vector<std::string> lines = split(text, '\n');
  std::size_t ln = 0;
  while (ln < lines.size() && trim(lines[ln]).empty()) ++ln;
  if (ln == lines.size()) throw ParseError("empty tensor text");
  std::string_view header = trim(lines[ln]);
  if (header.substr(0, 6) != "shape:") {
    throw ParseError("tensor text must start with 'shape:'", ln + 1);
  }
  Shape shape;
  for (const auto& tok : split_ws(header.substr(6))) shape.push_back(parse_size(tok));
  if (shape.empty()) throw ParseError("tensor shape has no extents", ln + 1);
  std::size_t need = shape_size(shape);
  std::vector<double> values;
  values.reserve(need);
  for (++ln; ln < lines.size(); ++ln) {
    for (const auto& tok : split_ws(lines[ln])) {
      if (values.size() == need) throw ParseError("too many tensor values", ln + 1);
      values.push_back(parse_double(tok));
    }
  }
  if (values.size() != need) {
    throw ParseError("tensor " + shape_str(shape) + " needs " + std::to_string(need) +
                     " values, got " + std::to_string(values.size()));
  }
  return Tensor(std::move(shape), std::move(values));
}

std::string tensor_blocks_to_text(std::span<const Tensor> tensors) {
  std::string out;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (i) out += '\n';
    out += tensor_to_text(tensors[i]);
  }
  return out;
}

std::vector<Tensor> tensor_blocks_from_text(std::string_view text) {
  std::vector<Tensor> out;
  std::vector<std::string> lines = split(text, '\n');
  std::string block;
  auto flush = [&] {
    if (!trim(block).empty()) out.push_back(tensor_from_text(block));
    block.clear();
  };
  for (const auto& line : lines) {
    if (trim(line).empty()) {
      flush();
    } else {
      block += line;
      block += '\n';
    }
  }
  flush();
  return out;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file(path, tensor_to_text(t));
}

Tensor load_tensor(const std::filesystem::path& path) {
  return tensor_from_text(read_file(path));
}

}  // namespace milqt
