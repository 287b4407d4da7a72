#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace scenario_rag::ad {

using Matrix = Eigen::MatrixXd;

struct Var {
  std::size_t id = 0;
};

// Wengert list over dense matrices. Nodes are appended in evaluation order,
// so reverse iteration is a valid topological order for backward().
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var variable(Matrix value);
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of the last backward() root with respect to v; zeros if v did
  // not influence the root.
  Matrix grad(Var v) const;

  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Appends a node. `fn` is dropped when no input requires a gradient.
  Var record(Matrix value, bool requires_grad, Backward fn);

  const Matrix& output_grad(std::size_t self) const { return nodes_[self].grad; }
  void accumulate(Var v, const Matrix& g);

  // Hash of the sign pattern of every ReLU input seen so far. Two evaluations
  // with equal signatures lie in the same linear region of the network.
  void note_kinks(const Matrix& pre_activation);
  std::uint64_t kink_signature() const { return kink_signature_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
};

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
// a (r x c) + row (1 x c) broadcast over rows.
Var add_row(Tape& t, Var a, Var row);
// a (r x c) * row (1 x c) elementwise, broadcast over rows.
Var mul_row(Tape& t, Var a, Var row);
Var scale(Tape& t, Var a, double s);
// Elementwise product with a constant mask.
Var mask(Tape& t, Var a, const Matrix& m);
Var relu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var transpose(Tape& t, Var a);
Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Tape& t, Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var concat_rows(Tape& t, std::span<const Var> parts);
// 1 x c -> n x c.
Var repeat_rows(Tape& t, Var row, Eigen::Index n);
// r x c -> 1 x c.
Var mean_rows(Tape& t, Var a);
// Means of consecutive row blocks [start, start + count) -> blocks x c.
Var segment_mean_rows(Tape& t, Var a, std::span<const std::pair<Eigen::Index, Eigen::Index>> segments);
Var sum(Tape& t, Var a);
// (x - column means) / sqrt(v + floor), v the mean squared centred entry.
Var batch_standardize(Tape& t, Var x, double floor);
Var softmax_rows(Tape& t, Var a);

// Sparse typed message passing: out[dst] += coeff * y[src, r*width:(r+1)*width]
// for each entry; y holds the per-relation projections side by side.
struct Message {
  Eigen::Index dst = 0;
  Eigen::Index src = 0;
  Eigen::Index relation = 0;
  double coeff = 0.0;
};
Var relational_aggregate(Tape& t, Var y, std::span<const Message> messages, Eigen::Index width);

}  // namespace scenario_rag::ad
