#include "crforge/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "crforge/errors.hpp"

namespace crforge::ad {
namespace {

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.val().rows() != b.val().rows() || a.val().cols() != b.val().cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

Tape* common_tape(const Value& a, const Value& b) {
  if (a.tape() != b.tape()) throw std::logic_error("operands belong to different tapes");
  return a.tape();
}

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    Eigen::ArrayXd e = (logits.row(r).array() - m).exp();
    probs.row(r) = (e / e.sum()).matrix();
  }
  return probs;
}

}  // namespace

Node* Tape::make_node(Eigen::MatrixXd value, bool needs_grad) {
  nodes_.push_back(std::make_unique<Node>());
  Node* n = nodes_.back().get();
  n->value = std::move(value);
  n->needs_grad = needs_grad;
  return n;
}

Value Tape::constant(Eigen::MatrixXd v) { return Value(this, make_node(std::move(v), false)); }

Value Tape::input(Eigen::MatrixXd v) { return Value(this, make_node(std::move(v), true)); }

Value Tape::param(Parameter& p) {
  Node* n = make_node(p.value, true);
  n->bound_param = &p;
  n->backprop = [](Node& self) { self.bound_param->grad += self.grad; };
  return Value(this, n);
}

void Tape::backward(const Value& scalar_root) {
  Node* root = scalar_root.node();
  if (root->value.rows() != 1 || root->value.cols() != 1) {
    throw std::logic_error("backward root must be a scalar");
  }
  // Each pass starts from a clean slate of node gradients; parameters keep
  // accumulating across passes through their leaf backprop.
  for (auto& n : nodes_) n->grad.resize(0, 0);
  root->ensure_grad();
  root->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() != 0 && n.backprop) n.backprop(n);
  }
}

namespace {

// Registers a node whose backprop pushes into up to two inputs.
template <typename Fwd, typename Back>
Value unary_op(const Value& a, Fwd&& fwd, Back&& back) {
  Tape* t = a.tape();
  Node* in = a.node();
  Node* n = t->make_node(fwd(in->value), in->needs_grad);
  if (in->needs_grad) {
    n->backprop = [in, back](Node& self) {
      in->ensure_grad();
      back(self, *in);
    };
  }
  return Value(t, n);
}

}  // namespace

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  Tape* t = common_tape(a, b);
  Node *na = a.node(), *nb = b.node();
  Node* n = t->make_node(na->value + nb->value, na->needs_grad || nb->needs_grad);
  n->backprop = [na, nb](Node& self) {
    if (na->needs_grad) {
      na->ensure_grad();
      na->grad += self.grad;
    }
    if (nb->needs_grad) {
      nb->ensure_grad();
      nb->grad += self.grad;
    }
  };
  return Value(t, n);
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  Tape* t = common_tape(a, b);
  Node *na = a.node(), *nb = b.node();
  Node* n = t->make_node(na->value - nb->value, na->needs_grad || nb->needs_grad);
  n->backprop = [na, nb](Node& self) {
    if (na->needs_grad) {
      na->ensure_grad();
      na->grad += self.grad;
    }
    if (nb->needs_grad) {
      nb->ensure_grad();
      nb->grad -= self.grad;
    }
  };
  return Value(t, n);
}

Value cmul(const Value& a, const Value& b) {
  check_same_shape(a, b, "cmul");
  Tape* t = common_tape(a, b);
  Node *na = a.node(), *nb = b.node();
  Node* n = t->make_node(na->value.cwiseProduct(nb->value), na->needs_grad || nb->needs_grad);
  n->backprop = [na, nb](Node& self) {
    if (na->needs_grad) {
      na->ensure_grad();
      na->grad += self.grad.cwiseProduct(nb->value);
    }
    if (nb->needs_grad) {
      nb->ensure_grad();
      nb->grad += self.grad.cwiseProduct(na->value);
    }
  };
  return Value(t, n);
}

Value scale(const Value& a, double s) {
  return unary_op(
      a, [s](const Eigen::MatrixXd& v) { return (v * s).eval(); },
      [s](Node& self, Node& in) { in.grad += self.grad * s; });
}

Value add_scalar(const Value& a, double s) {
  return unary_op(
      a, [s](const Eigen::MatrixXd& v) { return (v.array() + s).matrix().eval(); },
      [](Node& self, Node& in) { in.grad += self.grad; });
}

Value relu(const Value& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return v.cwiseMax(0.0).eval(); },
      [](Node& self, Node& in) {
        in.grad += self.grad.cwiseProduct(
            (in.value.array() > 0.0).cast<double>().matrix());
      });
}

Value abs(const Value& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return v.cwiseAbs().eval(); },
      [](Node& self, Node& in) {
        in.grad += self.grad.cwiseProduct(in.value.array().sign().matrix());
      });
}

Value square(const Value& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return v.cwiseProduct(v).eval(); },
      [](Node& self, Node& in) { in.grad += 2.0 * self.grad.cwiseProduct(in.value); });
}

Value hinge(const Value& a) { return relu(a); }

Value log_sigmoid(const Value& a) {
  // log sigma(x) = -softplus(-x), computed branch-wise for stability.
  auto fwd = [](const Eigen::MatrixXd& v) {
    Eigen::MatrixXd out(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double x = v(i);
      out(i) = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
    }
    return out;
  };
  return unary_op(a, fwd, [](Node& self, Node& in) {
    // d/dx log sigma(x) = sigma(-x)
    Eigen::MatrixXd d(in.value.rows(), in.value.cols());
    for (Eigen::Index i = 0; i < in.value.size(); ++i) {
      const double x = in.value(i);
      d(i) = x >= 0.0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
    }
    in.grad += self.grad.cwiseProduct(d);
  });
}

Value sum_all(const Value& a) {
  return unary_op(
      a,
      [](const Eigen::MatrixXd& v) {
        Eigen::MatrixXd s(1, 1);
        s(0, 0) = v.sum();
        return s;
      },
      [](Node& self, Node& in) {
        in.grad.array() += self.grad(0, 0);
      });
}

Value mean_all(const Value& a) {
  const double inv = 1.0 / static_cast<double>(a.val().size());
  return scale(sum_all(a), inv);
}

Value sum_rows(const Value& a) {
  return unary_op(
      a, [](const Eigen::MatrixXd& v) { return v.rowwise().sum().eval(); },
      [](Node& self, Node& in) {
        in.grad += self.grad * Eigen::RowVectorXd::Ones(in.value.cols());
      });
}

Value rowwise_dot(const Value& a, const Value& b) { return sum_rows(cmul(a, b)); }

Value hconcat(const Value& a, const Value& b) {
  if (a.val().rows() != b.val().rows()) throw std::invalid_argument("hconcat: row mismatch");
  Tape* t = common_tape(a, b);
  Node *na = a.node(), *nb = b.node();
  Eigen::MatrixXd v(na->value.rows(), na->value.cols() + nb->value.cols());
  v << na->value, nb->value;
  Node* n = t->make_node(std::move(v), na->needs_grad || nb->needs_grad);
  const Eigen::Index ca = na->value.cols(), cb = nb->value.cols();
  n->backprop = [na, nb, ca, cb](Node& self) {
    if (na->needs_grad) {
      na->ensure_grad();
      na->grad += self.grad.leftCols(ca);
    }
    if (nb->needs_grad) {
      nb->ensure_grad();
      nb->grad += self.grad.rightCols(cb);
    }
  };
  return Value(t, n);
}

Value matmul(const Value& a, const Value& b) {
  if (a.val().cols() != b.val().rows()) throw std::invalid_argument("matmul: inner dim mismatch");
  Tape* t = common_tape(a, b);
  Node *na = a.node(), *nb = b.node();
  Node* n = t->make_node(na->value * nb->value, na->needs_grad || nb->needs_grad);
  n->backprop = [na, nb](Node& self) {
    if (na->needs_grad) {
      na->ensure_grad();
      na->grad += self.grad * nb->value.transpose();
    }
    if (nb->needs_grad) {
      nb->ensure_grad();
      nb->grad += na->value.transpose() * self.grad;
    }
  };
  return Value(t, n);
}

Value l2_normalize_rows(const Value& a) {
  Node* in = a.node();
  Eigen::MatrixXd out(in->value.rows(), in->value.cols());
  Eigen::VectorXd norms(in->value.rows());
  for (Eigen::Index r = 0; r < in->value.rows(); ++r) {
    const double nrm = in->value.row(r).norm();
    if (nrm == 0.0) throw DegenerateInput("l2_normalize_rows: zero row");
    norms(r) = nrm;
    out.row(r) = in->value.row(r) / nrm;
  }
  Tape* t = a.tape();
  Node* n = t->make_node(std::move(out), in->needs_grad);
  if (in->needs_grad) {
    n->backprop = [in, norms](Node& self) {
      in->ensure_grad();
      for (Eigen::Index r = 0; r < in->value.rows(); ++r) {
        const Eigen::RowVectorXd y = self.value.row(r);
        const Eigen::RowVectorXd dy = self.grad.row(r);
        in->grad.row(r) += (dy - y * y.dot(dy)) / norms(r);
      }
    };
  }
  return Value(t, n);
}

Value select_rows(const Value& a, const std::vector<int>& rows) {
  Node* in = a.node();
  Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), in->value.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= in->value.rows()) {
      throw std::invalid_argument("select_rows: index out of range");
    }
    v.row(static_cast<Eigen::Index>(i)) = in->value.row(rows[i]);
  }
  Tape* t = a.tape();
  Node* n = t->make_node(std::move(v), in->needs_grad);
  if (in->needs_grad) {
    n->backprop = [in, rows](Node& self) {
      in->ensure_grad();
      for (size_t i = 0; i < rows.size(); ++i) {
        in->grad.row(rows[i]) += self.grad.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return Value(t, n);
}

Value linear(const Value& x, const Value& weight, const Value& bias) {
  if (x.val().cols() != weight.val().cols()) {
    throw std::invalid_argument("linear: input dim does not match weight");
  }
  Tape* t = x.tape();
  Node *nx = x.node(), *nw = weight.node(), *nb = bias.node();
  Eigen::MatrixXd out = nx->value * nw->value.transpose();
  out.rowwise() += nb->value.row(0);
  Node* n = t->make_node(std::move(out), nx->needs_grad || nw->needs_grad || nb->needs_grad);
  n->backprop = [nx, nw, nb](Node& self) {
    if (nx->needs_grad) {
      nx->ensure_grad();
      nx->grad += self.grad * nw->value;
    }
    if (nw->needs_grad) {
      nw->ensure_grad();
      nw->grad += self.grad.transpose() * nx->value;
    }
    if (nb->needs_grad) {
      nb->ensure_grad();
      nb->grad.row(0) += self.grad.colwise().sum();
    }
  };
  return Value(t, n);
}

namespace {

// Gathers conv patches of one sample row into (in_c*k*k, oh*ow).
void im2col(const Eigen::RowVectorXd& row, int in_c, int h, int w, int k, int stride, int pad,
            int oh, int ow, Eigen::MatrixXd& patches) {
  patches.setZero();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int col = oy * ow + ox;
      for (int c = 0; c < in_c; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int y = oy * stride + ky - pad;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int x = ox * stride + kx - pad;
            if (x < 0 || x >= w) continue;
            patches(c * k * k + ky * k + kx, col) = row(c * h * w + y * w + x);
          }
        }
      }
    }
  }
}

void col2im_accumulate(const Eigen::MatrixXd& dpatches, int in_c, int h, int w, int k, int stride,
                       int pad, int oh, int ow, Eigen::Ref<Eigen::MatrixXd> grad, int grad_row) {
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int col = oy * ow + ox;
      for (int c = 0; c < in_c; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int y = oy * stride + ky - pad;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int x = ox * stride + kx - pad;
            if (x < 0 || x >= w) continue;
            grad(grad_row, c * h * w + y * w + x) += dpatches(c * k * k + ky * k + kx, col);
          }
        }
      }
    }
  }
}

}  // namespace

Value conv2d(const Value& x, const Value& weight, const Value& bias, int in_c, int h, int w,
             int out_c, int k, int stride, int pad) {
  Tape* t = x.tape();
  Node *nx = x.node(), *nw = weight.node(), *nb = bias.node();
  if (nx->value.cols() != static_cast<Eigen::Index>(in_c) * h * w) {
    throw std::invalid_argument("conv2d: input row size does not match (c,h,w)");
  }
  if (nw->value.rows() != out_c || nw->value.cols() != static_cast<Eigen::Index>(in_c) * k * k) {
    throw std::invalid_argument("conv2d: weight shape mismatch");
  }
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  const Eigen::Index batch = nx->value.rows();

  Eigen::MatrixXd out(batch, static_cast<Eigen::Index>(out_c) * oh * ow);
  Eigen::MatrixXd patches(static_cast<Eigen::Index>(in_c) * k * k, static_cast<Eigen::Index>(oh) * ow);
  for (Eigen::Index b = 0; b < batch; ++b) {
    im2col(nx->value.row(b), in_c, h, w, k, stride, pad, oh, ow, patches);
    Eigen::MatrixXd o = nw->value * patches;  // (out_c, oh*ow)
    for (int c = 0; c < out_c; ++c) {
      out.row(b).segment(static_cast<Eigen::Index>(c) * oh * ow, oh * ow) =
          o.row(c).array() + nb->value(0, c);
    }
  }

  Node* n = t->make_node(std::move(out), nx->needs_grad || nw->needs_grad || nb->needs_grad);
  n->backprop = [nx, nw, nb, in_c, h, w, out_c, k, stride, pad, oh, ow](Node& self) {
    const Eigen::Index batch = nx->value.rows();
    Eigen::MatrixXd patches(static_cast<Eigen::Index>(in_c) * k * k,
                            static_cast<Eigen::Index>(oh) * ow);
    if (nx->needs_grad) nx->ensure_grad();
    if (nw->needs_grad) nw->ensure_grad();
    if (nb->needs_grad) nb->ensure_grad();
    for (Eigen::Index b = 0; b < batch; ++b) {
      // (out_c, oh*ow) view of this sample's output gradient.
      Eigen::MatrixXd dout(out_c, oh * ow);
      for (int c = 0; c < out_c; ++c) {
        dout.row(c) = self.grad.row(b).segment(static_cast<Eigen::Index>(c) * oh * ow, oh * ow);
      }
      if (nw->needs_grad || nx->needs_grad) {
        im2col(nx->value.row(b), in_c, h, w, k, stride, pad, oh, ow, patches);
      }
      if (nw->needs_grad) nw->grad += dout * patches.transpose();
      if (nb->needs_grad) nb->grad.row(0) += dout.rowwise().sum().transpose();
      if (nx->needs_grad) {
        Eigen::MatrixXd dpatches = nw->value.transpose() * dout;
        col2im_accumulate(dpatches, in_c, h, w, k, stride, pad, oh, ow, nx->grad,
                          static_cast<int>(b));
      }
    }
  };
  return Value(t, n);
}

Value global_avg_pool(const Value& x, int channels, int h, int w) {
  Node* in = x.node();
  if (in->value.cols() != static_cast<Eigen::Index>(channels) * h * w) {
    throw std::invalid_argument("global_avg_pool: input row size mismatch");
  }
  Tape* t = x.tape();
  const Eigen::Index batch = in->value.rows();
  const int hw = h * w;
  Eigen::MatrixXd out(batch, channels);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      out(b, c) = in->value.row(b).segment(static_cast<Eigen::Index>(c) * hw, hw).mean();
    }
  }
  Node* n = t->make_node(std::move(out), in->needs_grad);
  if (in->needs_grad) {
    n->backprop = [in, channels, hw](Node& self) {
      in->ensure_grad();
      const double inv = 1.0 / hw;
      for (Eigen::Index b = 0; b < in->value.rows(); ++b) {
        for (int c = 0; c < channels; ++c) {
          in->grad.row(b).segment(static_cast<Eigen::Index>(c) * hw, hw).array() +=
              self.grad(b, c) * inv;
        }
      }
    };
  }
  return Value(t, n);
}

Value softmax_ce_index(const Value& logits, const std::vector<int>& targets) {
  Node* in = logits.node();
  const Eigen::Index batch = in->value.rows();
  if (static_cast<Eigen::Index>(targets.size()) != batch) {
    throw std::invalid_argument("softmax_ce_index: target count mismatch");
  }
  Eigen::MatrixXd probs = row_softmax(in->value);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const double m = in->value.row(r).maxCoeff();
    const double lse = std::log((in->value.row(r).array() - m).exp().sum()) + m;
    loss += lse - in->value(r, targets[r]);
  }
  loss /= static_cast<double>(batch);

  Tape* t = logits.tape();
  Eigen::MatrixXd lv(1, 1);
  lv(0, 0) = loss;
  Node* n = t->make_node(std::move(lv), in->needs_grad);
  if (in->needs_grad) {
    n->backprop = [in, probs, targets](Node& self) {
      in->ensure_grad();
      const double g = self.grad(0, 0) / static_cast<double>(in->value.rows());
      Eigen::MatrixXd d = probs;
      for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, targets[r]) -= 1.0;
      in->grad += g * d;
    };
  }
  return Value(t, n);
}

Value ce_with_target_rows(const Value& logits, const Eigen::MatrixXd& target_probs) {
  Node* in = logits.node();
  if (in->value.rows() != target_probs.rows() || in->value.cols() != target_probs.cols()) {
    throw std::invalid_argument("ce_with_target_rows: shape mismatch");
  }
  const Eigen::Index batch = in->value.rows();
  Eigen::MatrixXd probs = row_softmax(in->value);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const double m = in->value.row(r).maxCoeff();
    const double lse = std::log((in->value.row(r).array() - m).exp().sum()) + m;
    // -sum_k P log softmax = sum_k P * (lse - logit)
    loss += (target_probs.row(r).array() * (lse - in->value.row(r).array())).sum();
  }
  loss /= static_cast<double>(batch);

  Tape* t = logits.tape();
  Eigen::MatrixXd lv(1, 1);
  lv(0, 0) = loss;
  Node* n = t->make_node(std::move(lv), in->needs_grad);
  if (in->needs_grad) {
    n->backprop = [in, probs, target_probs](Node& self) {
      in->ensure_grad();
      const double g = self.grad(0, 0) / static_cast<double>(in->value.rows());
      // Rows of target_probs sum to 1, so d logits = softmax - P.
      in->grad += g * (probs - target_probs);
    };
  }
  return Value(t, n);
}

}  // namespace crforge::ad
