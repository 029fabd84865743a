#include <memory>
#include "gldb/tape.hpp"

#include <cmath>

#include "gldb/util.hpp"

namespace gldb {

int Tape::push(Eigen::MatrixXd value, std::function<void(Tape&)> backward) {
  nodes_.push_back(Node{std::move(value), Eigen::MatrixXd(), std::move(backward)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(int loss_node) {
  for (auto& n : nodes_) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  auto& loss = nodes_[static_cast<std::size_t>(loss_node)];
  if (loss.value.size() != 1) throw_internal("TapeError", "loss node must be scalar");
  loss.grad(0, 0) = 1.0;
  for (int i = loss_node; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward) n.backward(*this);
  }
}

Var leaf(Tape& t, Eigen::MatrixXd value) { return Var{&t, t.push(std::move(value))}; }

namespace {

Var node(Tape& t, Eigen::MatrixXd value) { return Var{&t, t.push(std::move(value))}; }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  Var out = node(t, a.val() * b.val());
  t.set_backward(out.idx, [a, b, out](Tape& tp) {
    const Eigen::MatrixXd& g = tp.grad(out.idx);
    tp.grad(a.idx).noalias() += g * b.val().transpose();
    tp.grad(b.idx).noalias() += a.val().transpose() * g;
  });
  return out;
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  Var out = node(t, a.val() + b.val());
  t.set_backward(out.idx, [a, b, out](Tape& tp) {
    tp.grad(a.idx) += tp.grad(out.idx);
    tp.grad(b.idx) += tp.grad(out.idx);
  });
  return out;
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  Var out = node(t, a.val() - b.val());
  t.set_backward(out.idx, [a, b, out](Tape& tp) {
    tp.grad(a.idx) += tp.grad(out.idx);
    tp.grad(b.idx) -= tp.grad(out.idx);
  });
  return out;
}

Var cmul(Var a, Var b) {
  Tape& t = *a.tape;
  Var out = node(t, a.val().cwiseProduct(b.val()));
  t.set_backward(out.idx, [a, b, out](Tape& tp) {
    tp.grad(a.idx) += tp.grad(out.idx).cwiseProduct(b.val());
    tp.grad(b.idx) += tp.grad(out.idx).cwiseProduct(a.val());
  });
  return out;
}

Var add_rowvec(Var a, Var bias) {
  Tape& t = *a.tape;
  Eigen::MatrixXd v = a.val();
  v.rowwise() += Eigen::RowVectorXd(bias.val().row(0));
  Var out = node(t, std::move(v));
  t.set_backward(out.idx, [a, bias, out](Tape& tp) {
    tp.grad(a.idx) += tp.grad(out.idx);
    tp.grad(bias.idx).row(0) += tp.grad(out.idx).colwise().sum();
  });
  return out;
}

Var elu(Var a) {
  Tape& t = *a.tape;
  Eigen::MatrixXd v = a.val().unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); });
  Var out = node(t, std::move(v));
  t.set_backward(out.idx, [a, out](Tape& tp) {
    // d/dx elu = 1 for x>0, exp(x) = elu(x)+1 otherwise
    const Eigen::MatrixXd& y = tp.val(out.idx);
    tp.grad(a.idx) += tp.grad(out.idx).cwiseProduct(
        y.unaryExpr([](double yy) { return yy > 0 ? 1.0 : yy + 1.0; }));
  });
  return out;
}

Var leaky_relu(Var a, double slope) {
  Tape& t = *a.tape;
  Eigen::MatrixXd v = a.val().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  Var out = node(t, std::move(v));
  t.set_backward(out.idx, [a, out, slope](Tape& tp) {
    const Eigen::MatrixXd& x = tp.val(a.idx);
    tp.grad(a.idx) += tp.grad(out.idx).cwiseProduct(
        x.unaryExpr([slope](double xx) { return xx > 0 ? 1.0 : slope; }));
  });
  return out;
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Eigen::MatrixXd v = a.val().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  Var out = node(t, std::move(v));
  t.set_backward(out.idx, [a, out](Tape& tp) {
    const Eigen::MatrixXd& s = tp.val(out.idx);
    tp.grad(a.idx) += tp.grad(out.idx).cwiseProduct(
        s.cwiseProduct(Eigen::MatrixXd::Ones(s.rows(), s.cols()) - s));
  });
  return out;
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw_internal("TapeError", "concat_cols of nothing");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Eigen::MatrixXd v(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.val();
    at += p.cols();
  }
  Var out = node(t, std::move(v));
  std::vector<Var> captured = parts;
  t.set_backward(out.idx, [captured, out](Tape& tp) {
    Eigen::Index at = 0;
    for (const auto& p : captured) {
      tp.grad(p.idx) += tp.grad(out.idx).middleCols(at, p.cols());
      at += p.cols();
    }
  });
  return out;
}

Var concat_rows(Var a, Var b) {
  Tape& t = *a.tape;
  Eigen::MatrixXd v(a.rows() + b.rows(), a.cols());
  v.topRows(a.rows()) = a.val();
  v.bottomRows(b.rows()) = b.val();
  Var out = node(t, std::move(v));
  t.set_backward(out.idx, [a, b, out](Tape& tp) {
    tp.grad(a.idx) += tp.grad(out.idx).topRows(a.rows());
    tp.grad(b.idx) += tp.grad(out.idx).bottomRows(b.rows());
  });
  return out;
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape& t = *a.tape;
  Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a.val().row(rows[i]);
  Var out = node(t, std::move(v));
  t.set_backward(out.idx, [a, out, rows = std::move(rows)](Tape& tp) {
    const Eigen::MatrixXd& g = tp.grad(out.idx);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      tp.grad(a.idx).row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
  return out;
}

Var gat_attention(Var z, Var attn_left, Var attn_right,
                  const std::vector<std::vector<int>>& neighbors, double leaky_slope) {
  Tape& t = *z.tape;
  const Eigen::MatrixXd& Z = z.val();
  const Eigen::Index n = Z.rows();
  if (static_cast<std::size_t>(n) != neighbors.size()) {
    throw_internal("TapeError", "neighbor list size mismatch");
  }
  Eigen::VectorXd s = Z * attn_left.val().col(0);
  Eigen::VectorXd r = Z * attn_right.val().col(0);

  auto weights = std::make_shared<std::vector<std::vector<double>>>(neighbors.size());
  auto pre_pos = std::make_shared<std::vector<std::vector<bool>>>(neighbors.size());
  Eigen::MatrixXd out_val = Eigen::MatrixXd::Zero(n, Z.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) throw_internal("TapeError", "node without neighbors (missing self loop)");
    std::vector<double> logits(nb.size());
    auto& pos = (*pre_pos)[static_cast<std::size_t>(i)];
    pos.resize(nb.size());
    double max_logit = -1e300;
    for (std::size_t k = 0; k < nb.size(); ++k) {
      double pre = s[i] + r[nb[k]];
      pos[k] = pre > 0;
      logits[k] = pre > 0 ? pre : leaky_slope * pre;
      max_logit = std::max(max_logit, logits[k]);
    }
    auto& w = (*weights)[static_cast<std::size_t>(i)];
    w.resize(nb.size());
    double denom = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) {
      w[k] = std::exp(logits[k] - max_logit);
      denom += w[k];
    }
    for (std::size_t k = 0; k < nb.size(); ++k) {
      w[k] /= denom;
      out_val.row(i) += w[k] * Z.row(nb[k]);
    }
  }

  Var out = node(t, std::move(out_val));
  t.set_backward(out.idx, [z, attn_left, attn_right, out, weights, pre_pos, leaky_slope,
                           nbs = neighbors](Tape& tp) {
    const Eigen::MatrixXd& Z = tp.val(z.idx);
    const Eigen::MatrixXd& Y = tp.val(out.idx);
    const Eigen::MatrixXd& G = tp.grad(out.idx);
    const Eigen::Index n = Z.rows();
    Eigen::MatrixXd dZ = Eigen::MatrixXd::Zero(n, Z.cols());
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd dr = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& nb = nbs[static_cast<std::size_t>(i)];
      const auto& w = (*weights)[static_cast<std::size_t>(i)];
      const auto& pos = (*pre_pos)[static_cast<std::size_t>(i)];
      // sum_k w_ik * (G_i . Z_k) equals G_i . out_i
      double g_dot_out = G.row(i).dot(Y.row(i));
      for (std::size_t k = 0; k < nb.size(); ++k) {
        int j = nb[k];
        double dw = G.row(i).dot(Z.row(j));
        dZ.row(j) += w[k] * G.row(i);
        double dl = w[k] * (dw - g_dot_out);
        double dpre = dl * (pos[k] ? 1.0 : leaky_slope);
        ds[i] += dpre;
        dr[j] += dpre;
      }
    }
    dZ.noalias() += ds * attn_left.val().col(0).transpose();
    dZ.noalias() += dr * attn_right.val().col(0).transpose();
    tp.grad(z.idx) += dZ;
    tp.grad(attn_left.idx).col(0).noalias() += Z.transpose() * ds;
    tp.grad(attn_right.idx).col(0).noalias() += Z.transpose() * dr;
  });
  return out;
}

Var gated_fuse(Var a, Var b, Var alpha) {
  Tape& t = *a.tape;
  double x = alpha.val()(0, 0);
  double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  Var out = node(t, (1.0 - s) * a.val() + s * b.val());
  t.set_backward(out.idx, [a, b, alpha, out, s](Tape& tp) {
    const Eigen::MatrixXd& g = tp.grad(out.idx);
    tp.grad(a.idx) += (1.0 - s) * g;
    tp.grad(b.idx) += s * g;
    double dalpha = s * (1.0 - s) * (g.cwiseProduct(tp.val(b.idx) - tp.val(a.idx))).sum();
    tp.grad(alpha.idx)(0, 0) += dalpha;
  });
  return out;
}

double positive_class_weight(const std::vector<int>& labels) {
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1 ? 1 : 0;
  std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return 1.0;
  return static_cast<double>(neg) / static_cast<double>(pos);
}

Var balanced_bce_logits(Var logits, const std::vector<int>& labels) {
  Tape& t = *logits.tape;
  const Eigen::MatrixXd& z = logits.val();
  if (static_cast<std::size_t>(z.rows()) != labels.size() || z.cols() != 1) {
    throw_internal("TapeError", "logits must be K x 1 matching labels");
  }
  if (labels.empty()) throw_data("EmptyBatch", "balanced BCE over empty batch");
  double w_pos = positive_class_weight(labels);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double zi = z(static_cast<Eigen::Index>(i), 0);
    double y = labels[i];
    // stable softplus form of -y log(sigmoid) - (1-y) log(1-sigmoid)
    double term = std::max(zi, 0.0) - y * zi + std::log1p(std::exp(-std::abs(zi)));
    total += (y == 1 ? w_pos : 1.0) * term;
  }
  double k = static_cast<double>(labels.size());
  Eigen::MatrixXd loss(1, 1);
  loss(0, 0) = total / k;
  Var out = node(t, std::move(loss));
  t.set_backward(out.idx, [logits, out, labels, w_pos, k](Tape& tp) {
    double g = tp.grad(out.idx)(0, 0);
    const Eigen::MatrixXd& z = tp.val(logits.idx);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      double zi = z(static_cast<Eigen::Index>(i), 0);
      double s = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
      double w = labels[i] == 1 ? w_pos : 1.0;
      tp.grad(logits.idx)(static_cast<Eigen::Index>(i), 0) += g * w * (s - labels[i]) / k;
    }
  });
  return out;
}

double balanced_bce(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw_data("LengthMismatch", "scores and labels differ in length");
  }
  if (scores.empty()) throw_data("EmptyBatch", "balanced BCE over empty batch");
  double w_pos = positive_class_weight(labels);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double s = scores[i];
    double term = labels[i] == 1 ? -std::log(std::max(s, 1e-12))
                                 : -std::log(std::max(1.0 - s, 1e-12));
    total += (labels[i] == 1 ? w_pos : 1.0) * term;
  }
  return total / static_cast<double>(scores.size());
}

}  // namespace gldb
