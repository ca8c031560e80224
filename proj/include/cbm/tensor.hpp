#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cbm::ad {

class Tape;

// Handle to a node owned by a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  const std::vector<int>& shape() const;
  const std::vector<double>& value() const;
  std::vector<double>& value();
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  std::int64_t size() const;
  double scalar() const;  // value of a single-element tensor
  bool defined() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Append-only reverse-mode tape. Nodes are appended in forward order, which
// is a topological order of the graph; backward replays the records once in
// strict reverse. Gradients accumulate with += and must be reset explicitly
// before a second backward pass.
class Tape {
 public:
  Tensor leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad);
  Tensor constant(std::vector<int> shape, std::vector<double> data);
  Tensor zeros(std::vector<int> shape, bool requires_grad = false);

  void backward(const Tensor& loss);
  void reset_grads();
  bool backward_done() const { return backward_done_; }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_records() const { return records_.size(); }

  // When recording is off, ops still compute values but append no backward
  // records (inference mode).
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  // Longest temporal chain (in unrolled steps) seen by this tape; maintained
  // by unroll_clip and used to verify that training never builds graphs
  // deeper than the longest sampled clip.
  void note_chain_steps(int steps);
  int max_chain_steps() const { return max_chain_steps_; }

  // --- internals shared with the op implementations ---
  int make_node(std::vector<int> shape, bool requires_grad);
  void push_record(std::function<void(Tape&)> fn);
  std::vector<double>& value_of(int id) { return nodes_[id].value; }
  const std::vector<double>& value_of(int id) const { return nodes_[id].value; }
  std::vector<double>& grad_of(int id);
  const std::vector<int>& shape_of(int id) const { return nodes_[id].shape; }
  bool node_requires_grad(int id) const { return nodes_[id].requires_grad; }
  Tensor handle(int id) { return Tensor(this, id); }

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated only when requires_grad
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::function<void(Tape&)>> records_;
  bool backward_done_ = false;
  bool recording_ = true;
  int max_chain_steps_ = 0;
};

}  // namespace cbm::ad
