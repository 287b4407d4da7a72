#include "scenario_rag/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "scenario_rag/error.hpp"

namespace scenario_rag::ad {

namespace {

void require_shape(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

}  // namespace

Var Tape::variable(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::record(Matrix value, bool requires_grad, Backward fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  require_shape(nodes_[root.id].value.size() == 1, "backward() needs a scalar root");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

void Tape::note_kinks(const Matrix& pre_activation) {
  std::uint64_t h = kink_signature_;
  for (Eigen::Index i = 0; i < pre_activation.size(); ++i) {
    h ^= pre_activation.data()[i] > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x2545f4914f6cdd1dULL;
    h *= 0x100000001b3ULL;
  }
  kink_signature_ = h;
}

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require_shape(av.cols() == bv.rows(), "matmul inner dimensions differ");
  Matrix out;
  out.noalias() = av * bv;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b), [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.output_grad(self);
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

Var add(Tape& t, Var a, Var b) {
  require_shape(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(),
                "add shapes differ");
  return t.record(t.value(a) + t.value(b), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& tp, std::size_t self) {
                    tp.accumulate(a, tp.output_grad(self));
                    tp.accumulate(b, tp.output_grad(self));
                  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  require_shape(rv.rows() == 1 && rv.cols() == av.cols(), "add_row needs a matching row vector");
  Matrix out = av.rowwise() + rv.row(0);
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(row),
                  [a, row](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.output_grad(self);
                    tp.accumulate(a, g);
                    if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
                  });
}

Var mul_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  require_shape(rv.rows() == 1 && rv.cols() == av.cols(), "mul_row needs a matching row vector");
  Matrix out = av.array().rowwise() * rv.row(0).array();
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(row),
                  [a, row](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.output_grad(self);
                    const Matrix& rv = tp.value(row);
                    tp.accumulate(a, g.array().rowwise() * rv.row(0).array());
                    if (tp.requires_grad(row)) tp.accumulate(row, g.cwiseProduct(tp.value(a)).colwise().sum());
                  });
}

Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, t.requires_grad(a),
                  [a, s](Tape& tp, std::size_t self) { tp.accumulate(a, tp.output_grad(self) * s); });
}

Var mask(Tape& t, Var a, const Matrix& m) {
  require_shape(t.value(a).rows() == m.rows() && t.value(a).cols() == m.cols(), "mask shape differs");
  return t.record(t.value(a).cwiseProduct(m), t.requires_grad(a), [a, m](Tape& tp, std::size_t self) {
    tp.accumulate(a, tp.output_grad(self).cwiseProduct(m));
  });
}

Var relu(Tape& t, Var a) {
  t.note_kinks(t.value(a));
  return t.record(t.value(a).cwiseMax(0.0), t.requires_grad(a), [a](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(a);
    Matrix g = tp.output_grad(self);
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (!(x.data()[i] > 0.0)) g.data()[i] = 0.0;
    tp.accumulate(a, g);
  });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(Var{self});
    tp.accumulate(a, tp.output_grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var transpose(Tape& t, Var a) {
  return t.record(t.value(a).transpose(), t.requires_grad(a),
                  [a](Tape& tp, std::size_t self) { tp.accumulate(a, tp.output_grad(self).transpose()); });
}

Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = t.value(a);
  require_shape(start >= 0 && count >= 0 && start + count <= av.cols(), "slice_cols out of range");
  return t.record(av.middleCols(start, count), t.requires_grad(a), [a, start, count](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(a);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = tp.output_grad(self);
    tp.accumulate(a, g);
  });
}

Var slice_rows(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = t.value(a);
  require_shape(start >= 0 && count >= 0 && start + count <= av.rows(), "slice_rows out of range");
  return t.record(av.middleRows(start, count), t.requires_grad(a), [a, start, count](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(a);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleRows(start, count) = tp.output_grad(self);
    tp.accumulate(a, g);
  });
}

Var batch_standardize(Tape& t, Var x, double floor) {
  const Matrix& xv = t.value(x);
  require_shape(xv.rows() >= 1 && xv.cols() >= 1, "batch_standardize of an empty matrix");
  const Eigen::RowVectorXd mu = xv.colwise().mean();
  const Matrix c = xv.rowwise() - mu;
  const double v = c.squaredNorm() / static_cast<double>(c.size());
  const double r = 1.0 / std::sqrt(v + floor);
  return t.record(c * r, t.requires_grad(x), [x, c, v, r, floor](Tape& tp, std::size_t self) {
    const Matrix& g = tp.output_grad(self);
    const double dr = g.cwiseProduct(c).sum();
    const double dv = dr * -0.5 * std::pow(v + floor, -1.5);
    const Matrix dc = g * r + c * (dv * 2.0 / static_cast<double>(c.size()));
    const Eigen::RowVectorXd mean = dc.colwise().mean();
    tp.accumulate(x, dc.rowwise() - mean);
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  require_shape(!parts.empty(), "concat_cols of nothing");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    require_shape(t.value(p).rows() == rows, "concat_cols row counts differ");
    cols += t.value(p).cols();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), rg, [inputs](Tape& tp, std::size_t self) {
    const Matrix& g = tp.output_grad(self);
    Eigen::Index offset = 0;
    for (Var p : inputs) {
      const Eigen::Index c = tp.value(p).cols();
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(offset, c));
      offset += c;
    }
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  require_shape(!parts.empty(), "concat_rows of nothing");
  const Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (Var p : parts) {
    require_shape(t.value(p).cols() == cols, "concat_rows column counts differ");
    rows += t.value(p).rows();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, t.value(p).rows()) = t.value(p);
    at += t.value(p).rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), rg, [inputs](Tape& tp, std::size_t self) {
    const Matrix& g = tp.output_grad(self);
    Eigen::Index offset = 0;
    for (Var p : inputs) {
      const Eigen::Index r = tp.value(p).rows();
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(offset, r));
      offset += r;
    }
  });
}

Var repeat_rows(Tape& t, Var row, Eigen::Index n) {
  require_shape(t.value(row).rows() == 1, "repeat_rows needs a row vector");
  Matrix out = t.value(row).replicate(n, 1);
  return t.record(std::move(out), t.requires_grad(row),
                  [row](Tape& tp, std::size_t self) { tp.accumulate(row, tp.output_grad(self).colwise().sum()); });
}

Var mean_rows(Tape& t, Var a) {
  const Eigen::Index rows = t.value(a).rows();
  require_shape(rows > 0, "mean_rows of an empty matrix");
  Matrix out = t.value(a).colwise().mean();
  return t.record(std::move(out), t.requires_grad(a), [a, rows](Tape& tp, std::size_t self) {
    tp.accumulate(a, tp.output_grad(self).replicate(rows, 1) / static_cast<double>(rows));
  });
}

Var segment_mean_rows(Tape& t, Var a, std::span<const std::pair<Eigen::Index, Eigen::Index>> segments) {
  const Matrix& av = t.value(a);
  Matrix out(static_cast<Eigen::Index>(segments.size()), av.cols());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto [start, count] = segments[s];
    require_shape(count > 0 && start >= 0 && start + count <= av.rows(), "segment out of range");
    out.row(static_cast<Eigen::Index>(s)) = av.middleRows(start, count).colwise().mean();
  }
  std::vector<std::pair<Eigen::Index, Eigen::Index>> segs(segments.begin(), segments.end());
  return t.record(std::move(out), t.requires_grad(a), [a, segs](Tape& tp, std::size_t self) {
    const Matrix& g = tp.output_grad(self);
    Matrix ga = Matrix::Zero(tp.value(a).rows(), tp.value(a).cols());
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const auto [start, count] = segs[s];
      ga.middleRows(start, count).rowwise() += g.row(static_cast<Eigen::Index>(s)) / static_cast<double>(count);
    }
    tp.accumulate(a, ga);
  });
}

Var sum(Tape& t, Var a) {
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, Matrix::Constant(x.rows(), x.cols(), tp.output_grad(self)(0, 0)));
  });
}

Var softmax_rows(Tape& t, Var a) {
  Matrix y = t.value(a);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return t.record(std::move(y), t.requires_grad(a), [a](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(Var{self});
    const Matrix& g = tp.output_grad(self);
    Matrix ga(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      ga.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    tp.accumulate(a, ga);
  });
}

Var relational_aggregate(Tape& t, Var y, std::span<const Message> messages, Eigen::Index width) {
  const Matrix& yv = t.value(y);
  Matrix out = Matrix::Zero(yv.rows(), width);
  for (const auto& m : messages) {
    require_shape(m.dst < yv.rows() && m.src < yv.rows() && (m.relation + 1) * width <= yv.cols(),
                  "message index out of range");
    out.row(m.dst) += m.coeff * yv.block(m.src, m.relation * width, 1, width);
  }
  std::vector<Message> msgs(messages.begin(), messages.end());
  return t.record(std::move(out), t.requires_grad(y), [y, msgs, width](Tape& tp, std::size_t self) {
    const Matrix& g = tp.output_grad(self);
    Matrix gy = Matrix::Zero(tp.value(y).rows(), tp.value(y).cols());
    for (const auto& m : msgs) gy.block(m.src, m.relation * width, 1, width) += m.coeff * g.row(m.dst);
    tp.accumulate(y, gy);
  });
}

}  // namespace scenario_rag::ad
