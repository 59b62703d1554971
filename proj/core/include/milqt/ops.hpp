#pragma once

#include <optional>
#include <span>

#include "milqt/tape.hpp"
#include "milqt/tensor.hpp"

namespace milqt {

// Inputs to log() are clamped to at least this value; the clamped region
// backpropagates a zero gradient.
inline constexpr double kLogFloor = 1e-12;

enum class Ewise { Mul, Add };
enum class Act { Sigmoid, Tanh, Relu, SoftmaxLastDim, Log };
enum class Red { Sum, Mean };

// [m x k] * [k x n] -> [m x n]. Both operands must be rank 2.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// Elementwise combine. Shapes must match exactly, except that a
// single-element tensor broadcasts against any shape.
Tensor ewise(Tape& tape, const Tensor& a, const Tensor& b, Ewise op);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor activation(Tape& tape, const Tensor& x, Act act);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh_act(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
// Softmax over the last axis, numerically stabilized; rank-1 input is one row.
Tensor softmax_lastdim(Tape& tape, const Tensor& x);
Tensor log_clamped(Tape& tape, const Tensor& x);

// Reduce all elements (axis empty) to a [1] scalar, or collapse one axis.
Tensor reduce(Tape& tape, const Tensor& x, Red op, std::optional<std::size_t> axis = {});

// scale * x + shift, elementwise with scalar constants.
Tensor affine(Tape& tape, const Tensor& x, double scale, double shift);

// Same data, new shape of equal size.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// Select rows of a rank-2 tensor. A row index of -1 yields a zero row and
// routes no gradient; other indexes scatter-add their gradient back.
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const int> rows);

// Stack J rank-1 tensors of equal length n into an [n x J] matrix.
Tensor stack_cols(Tape& tape, std::span<const Tensor> cols);

// Shape adapters for the rank-2-only matmul.
Tensor as_col(Tape& tape, const Tensor& x);  // [n] -> [n x 1]
Tensor as_row(Tape& tape, const Tensor& x);  // [n] -> [1 x n]
Tensor squeeze(Tape& tape, const Tensor& x);  // drop all size-1 axes -> [n]

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);  // [n],[n] -> [1]

}  // namespace milqt
