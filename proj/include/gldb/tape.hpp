#ifndef GLDB_TAPE_HPP
#define GLDB_TAPE_HPP

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace gldb {

// Reverse-mode autodiff over dense matrices. Nodes are created in topological
// order by construction; backward() replays them in reverse.
class Tape {
 public:
  int push(Eigen::MatrixXd value, std::function<void(Tape&)> backward = nullptr);
  void set_backward(int i, std::function<void(Tape&)> backward) {
    nodes_[static_cast<std::size_t>(i)].backward = std::move(backward);
  }

  const Eigen::MatrixXd& val(int i) const { return nodes_[static_cast<std::size_t>(i)].value; }
  Eigen::MatrixXd& grad(int i) { return nodes_[static_cast<std::size_t>(i)].grad; }

  // Seeds d(loss)/d(loss)=1 and accumulates gradients into every node.
  void backward(int loss_node);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    std::function<void(Tape&)> backward;
  };
  std::vector<Node> nodes_;
};

struct Var {
  Tape* tape = nullptr;
  int idx = -1;

  const Eigen::MatrixXd& val() const { return tape->val(idx); }
  Eigen::MatrixXd& grad() const { return tape->grad(idx); }
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

Var leaf(Tape& t, Eigen::MatrixXd value);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);
Var add_rowvec(Var a, Var bias);        // bias: 1 x cols, broadcast over rows
Var elu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(Var a, Var b);
Var gather_rows(Var a, std::vector<int> rows);

// Multi-head GAT building block for one head: given per-node features z
// (N x d_head) and the split attention vector a = [a_left; a_right], computes
// softmax-normalized attention over each node's neighbor list (self loop
// included by the caller) and returns the attention-weighted neighbor sum.
Var gat_attention(Var z, Var attn_left, Var attn_right,
                  const std::vector<std::vector<int>>& neighbors, double leaky_slope);

// Scale by sigmoid-gated scalar: (1-s)*a + s*b with s = sigmoid(alpha), alpha 1x1.
Var gated_fuse(Var a, Var b, Var alpha);

// Class-balanced BCE on logits; positives weighted by (#neg/#pos) when both
// classes are present. Returns a 1x1 loss node (mean over samples).
Var balanced_bce_logits(Var logits, const std::vector<int>& labels);

// Value-level balanced BCE over probabilities, log clamped at 1e-12.
double balanced_bce(const std::vector<double>& scores, const std::vector<int>& labels);

double positive_class_weight(const std::vector<int>& labels);

}  // namespace gldb

#endif  // GLDB_TAPE_HPP
