#include "milqt/tape.hpp"

#include "milqt/error.hpp"

namespace milqt {

int Tape::input_id(const Tensor& t) {
  if (!t.defined()) throw ContractError("undefined tensor used as an operand");
  auto it = index_.find(t.storage_key());
  if (it != index_.end()) return it->second;
  if (!t.requires_grad()) return -1;
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{{}, t, nullptr});
  index_.emplace(t.storage_key(), id);
  leaves_.emplace_back(id, t);
  return id;
}

int Tape::add_node(Tensor out, std::vector<int> inputs, BackwardFn back) {
  if (backward_done_) throw ContractError("tape is finalized; backward already ran");
  auto [it, inserted] = index_.emplace(out.storage_key(), static_cast<int>(nodes_.size()));
  if (!inserted) throw ContractError("op result aliases an existing tape tensor");
  (void)it;
  nodes_.push_back(Node{std::move(inputs), std::move(out), std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

double* Tape::grad_buf(int id) {
  if (id < 0) return nullptr;
  auto& buf = adj_[static_cast<std::size_t>(id)];
  if (buf.empty()) buf.assign(nodes_[static_cast<std::size_t>(id)].out.size(), 0.0);
  touched_[static_cast<std::size_t>(id)] = 1;
  return buf.data();
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) throw ContractError("backward already ran on this tape");
  if (loss.size() != 1) {
    throw ContractError("backward root must be a scalar, got " + shape_str(loss.shape()));
  }
  auto it = index_.find(loss.storage_key());
  if (it == index_.end()) throw ContractError("backward root was not produced on this tape");
  int root = it->second;
  adj_.assign(nodes_.size(), {});
  touched_.assign(nodes_.size(), 0);
  *grad_buf(root) = 1.0;
  visits_ = 0;
  for (int id = root; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!touched_[static_cast<std::size_t>(id)] || !node.back) continue;
    node.back(*this, adj_[static_cast<std::size_t>(id)]);
    ++visits_;
  }
  backward_done_ = true;
}

void Tape::accumulate_leaf_grads() {
  if (!backward_done_) throw ContractError("accumulate_leaf_grads before backward");
  for (auto& [id, tensor] : leaves_) {
    if (touched_[static_cast<std::size_t>(id)]) {
      tensor.accumulate_grad(adj_[static_cast<std::size_t>(id)]);
    }
  }
}

std::span<const double> Tape::adjoint(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= adj_.size()) return {};
  return adj_[static_cast<std::size_t>(id)];
}

}  // namespace milqt
