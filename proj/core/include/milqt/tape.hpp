#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "milqt/tensor.hpp"

namespace milqt {

// Records the forward graph for one reverse sweep. Usage: build tensors
// through the ops in ops.hpp (all take a Tape&), call backward(loss) once,
// then accumulate_leaf_grads() to add adjoints into the grad slots of every
// requires_grad tensor that participated.
//
// A tape is confined to one thread. Node ids grow in creation order, which
// is also a topological order, so the reverse sweep visits each node at most
// once. Tensors are recognized by value-buffer identity, so a parameter can
// be reused across many tapes (one per batch) without re-registration.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Node id of an operand: its producing node, a leaf enrolled on first
  // sight if the tensor wants gradients, or -1 for a plain constant.
  int input_id(const Tensor& t);

  // Registers an op result. inputs are the operand ids from input_id.
  int add_node(Tensor out, std::vector<int> inputs, BackwardFn back);

  // Adjoint buffer of a node; nullptr for constants (id < 0). Marks the
  // node as reachable so the reverse sweep will process it.
  double* grad_buf(int id);

  void backward(const Tensor& loss);
  void accumulate_leaf_grads();

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t backward_visit_count() const { return visits_; }
  bool backward_run() const { return backward_done_; }
  std::span<const double> adjoint(int id) const;

 private:
  struct Node {
    std::vector<int> inputs;
    Tensor out;
    BackwardFn back;  // empty for leaves
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> adj_;
  std::vector<char> touched_;
  std::unordered_map<const void*, int> index_;
  std::vector<std::pair<int, Tensor>> leaves_;
  bool backward_done_ = false;
  std::size_t visits_ = 0;
};

}  // namespace milqt
