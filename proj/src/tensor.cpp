#include "cbm/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace cbm::ad {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

const std::vector<int>& Tensor::shape() const { return tape_->shape_of(id_); }
const std::vector<double>& Tensor::value() const { return tape_->value_of(id_); }
std::vector<double>& Tensor::value() { return tape_->value_of(id_); }
const std::vector<double>& Tensor::grad() const { return tape_->grad_of(id_); }
bool Tensor::requires_grad() const { return tape_->node_requires_grad(id_); }
std::int64_t Tensor::size() const { return shape_numel(shape()); }

double Tensor::scalar() const {
  if (size() != 1) throw std::runtime_error("Tensor::scalar: tensor has " + std::to_string(size()) + " elements");
  return value()[0];
}

int Tape::make_node(std::vector<int> shape, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
  }
  Node n;
  n.value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  if (requires_grad) n.grad.assign(n.value.size(), 0.0);
  n.requires_grad = requires_grad;
  n.shape = std::move(shape);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::push_record(std::function<void(Tape&)> fn) { records_.push_back(std::move(fn)); }

std::vector<double>& Tape::grad_of(int id) {
  if (!nodes_[id].requires_grad)
    throw std::runtime_error("gradient requested for a tensor with requires_grad=false");
  return nodes_[id].grad;
}

Tensor Tape::leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("leaf: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  int id = make_node(std::move(shape), requires_grad);
  nodes_[id].value = std::move(data);
  return Tensor(this, id);
}

Tensor Tape::constant(std::vector<int> shape, std::vector<double> data) {
  return leaf(std::move(shape), std::move(data), false);
}

Tensor Tape::zeros(std::vector<int> shape, bool requires_grad) {
  int id = make_node(std::move(shape), requires_grad);
  return Tensor(this, id);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss lives on a different tape");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw std::runtime_error("backward: loss does not depend on any differentiable leaf");
  if (backward_done_)
    throw std::runtime_error("backward: gradients already populated; call reset_grads() first");
  backward_done_ = true;
  grad_of(loss.id())[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)(*this);
}

void Tape::reset_grads() {
  for (Node& n : nodes_) {
    if (n.requires_grad) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
  backward_done_ = false;
}

void Tape::note_chain_steps(int steps) {
  if (steps > max_chain_steps_) max_chain_steps_ = steps;
}

}  // namespace cbm::ad
