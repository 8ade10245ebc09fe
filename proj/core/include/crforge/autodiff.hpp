#ifndef CRFORGE_AUTODIFF_HPP_
#define CRFORGE_AUTODIFF_HPP_

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace crforge::ad {

// Trainable tensor with persistent gradient storage. Gradients accumulate
// across backward passes until zero_grad.
struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Parameter(std::string parameter_name, Eigen::MatrixXd initial)
      : name(std::move(parameter_name)),
        value(std::move(initial)),
        grad(Eigen::MatrixXd::Zero(value.rows(), value.cols())) {}
};

struct Node {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;  // empty until touched by backward
  bool needs_grad = false;
  Parameter* bound_param = nullptr;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() == 0) grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  }
};

class Tape;

// Lightweight handle to a node owned by a Tape.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, Node* node) : tape_(tape), node_(node) {}

  const Eigen::MatrixXd& val() const { return node_->value; }
  const Eigen::MatrixXd& grad() const { return node_->grad; }
  Node* node() const { return node_; }
  Tape* tape() const { return tape_; }
  bool defined() const { return node_ != nullptr; }
  double scalar() const { return node_->value(0, 0); }

 private:
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

// Per-step computation graph. Creation order is a valid topological order,
// so backward is a single reverse sweep. Parameters live outside the tape;
// leaf nodes snapshot their values and route gradients back on backward.
class Tape {
 public:
  Value constant(Eigen::MatrixXd v);
  // Gradient-tracked leaf not bound to a Parameter (used by gradient checks
  // and the losses' embedding inputs).
  Value input(Eigen::MatrixXd v);
  Value param(Parameter& p);

  // Detached copy: same value, no gradient path.
  Value detach(const Value& x) { return constant(x.val()); }

  void backward(const Value& scalar_root);

  Node* make_node(Eigen::MatrixXd value, bool needs_grad);
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- elementwise / structural ops ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value cmul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value add_scalar(const Value& a, double s);
Value relu(const Value& a);
Value abs(const Value& a);
Value square(const Value& a);
Value hinge(const Value& a);  // max(a, 0); subgradient 0 at 0
Value log_sigmoid(const Value& a);
Value sum_all(const Value& a);
Value mean_all(const Value& a);
Value sum_rows(const Value& a);     // (B,D) -> (B,1)
Value rowwise_dot(const Value& a, const Value& b);  // (B,D),(B,D) -> (B,1)
Value hconcat(const Value& a, const Value& b);
Value matmul(const Value& a, const Value& b);
Value l2_normalize_rows(const Value& a);
Value select_rows(const Value& a, const std::vector<int>& rows);

// ---- neural-net ops ----
// x: (B, in), weight: (out, in), bias: (1, out) -> (B, out)
Value linear(const Value& x, const Value& weight, const Value& bias);

// x rows hold images laid out channel-major: idx = c*h*w + y*w + x.
// weight: (out_c, in_c*k*k), bias: (1, out_c).
Value conv2d(const Value& x, const Value& weight, const Value& bias, int in_c, int h, int w,
             int out_c, int k, int stride, int pad);

// (B, C*H*W) -> (B, C)
Value global_avg_pool(const Value& x, int channels, int h, int w);

// ---- loss heads ----
// Mean over rows of softmax cross-entropy against integer targets.
Value softmax_ce_index(const Value& logits, const std::vector<int>& targets);
// Mean over rows of -sum_k P(b,k) * log softmax(logits)(b,k); P is constant.
Value ce_with_target_rows(const Value& logits, const Eigen::MatrixXd& target_probs);

}  // namespace crforge::ad

#endif  // CRFORGE_AUTODIFF_HPP_
