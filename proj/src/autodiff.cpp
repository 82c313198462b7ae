#include "satomil/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "satomil/error.hpp"

namespace satomil::ad {

// ---- Tensor -------------------------------------------------------------

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

// ---- Var / Tape ---------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant " + value.shape_string());
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite input " + value.shape_string());
  Node n;
  n.grad = Tensor(value.rows(), value.cols());
  n.value = std::move(value);
  n.requires_grad = true;
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' is not finite");
  if (!track_params_) return constant(p.value);
  Node n;
  n.value = p.value;
  n.grad = Tensor(p.value.rows(), p.value.cols());
  n.requires_grad = true;
  n.leaf = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  if (!value.all_finite()) throw NumericError("operation produced non-finite values");
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [this](std::size_t p) { return nodes_[p].requires_grad; });
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::grad(std::size_t id) const {
  static const Tensor empty;
  const Node& n = nodes_[id];
  return n.requires_grad ? n.grad : empty;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ContractError("backward: root belongs to another tape");
  const std::size_t rid = root.id();
  if (nodes_[rid].value.size() != 1) {
    throw ContractError("backward: root must be scalar, got " + nodes_[rid].value.shape_string());
  }
  if (!nodes_[rid].requires_grad) return;

  for (std::size_t i = 0; i <= rid; ++i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (!n.leaf || n.param != nullptr) {
      if (n.grad.same_shape(n.value)) {
        n.grad.fill(0.0);
      }
    }
  }
  grad_buffer(rid)[0] += 1.0;

  for (std::size_t i = rid + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.leaf || !n.backward) continue;
    if (!n.grad.same_shape(n.value)) continue;  // never reached from root
    n.backward(*this, i);
  }

  for (std::size_t i = 0; i <= rid; ++i) {
    Node& n = nodes_[i];
    if (n.param == nullptr) continue;
    if (!n.param->grad.same_shape(n.value)) n.param->grad = Tensor(n.value.rows(), n.value.cols());
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

// ---- operations ---------------------------------------------------------

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("operands are recorded on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

// Both helpers return by reference into the tape; call them only while no
// nodes are being appended (i.e. inside backward).
Tensor* grad_if(Tape& t, std::size_t id) {
  return t.requires_grad(id) ? &t.grad_buffer(id) : nullptr;
}

// out += a * b, where a is [m x k] and b is [k x n].
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
  }
}

// out += a * b^T, a [m x n], b [k x n] -> [m x k]
void gemm_abt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += a(i, p) * b(j, p);
      out(i, j) += s;
    }
  }
}

// out += a^T * b, a [m x k], b [m x n] -> [k x n]
void gemm_atb_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(p, j) += av * b(i, j);
    }
  }
}

double clamped_sigmoid(double z) {
  z = std::clamp(z, -40.0, 40.0);
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + av.shape_string() + " x " +
                         bv.shape_string());
  }
  Tensor out(av.rows(), bv.cols());
  gemm_acc(av, bv, out);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = grad_if(tp, ia)) gemm_abt_acc(g, tp.value(ib), *ga);
    if (Tensor* gb = grad_if(tp, ib)) gemm_atb_acc(tp.value(ia), g, *gb);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(j, i);
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    for (std::size_t id : {ia, ib}) {
      if (Tensor* gp = grad_if(tp, id)) {
        auto d = gp->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
    }
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = same_tape(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row: bias " + bv.shape_string() + " does not fit " +
                         av.shape_string());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = grad_if(tp, ia)) {
      auto d = ga->data();
      const auto gd = g.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
    }
    if (Tensor* gb = grad_if(tp, ib)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gb)[j] += g(i, j);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    if (Tensor* ga = grad_if(tp, ia)) {
      const auto bd = tp.value(ib).data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bd[i];
    }
    if (Tensor* gb = grad_if(tp, ib)) {
      const auto ad = tp.value(ia).data();
      auto d = gb->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * ad[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, s](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    auto d = tp.grad_buffer(ia).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * g[i];
  });
}

Var pointwise(Var x, Pointwise kind) {
  Tape& t = *x.tape();
  Tensor out = x.value();
  for (double& v : out.data()) {
    switch (kind) {
      case Pointwise::Relu: v = v > 0.0 ? v : 0.0; break;
      case Pointwise::Sigmoid: v = clamped_sigmoid(v); break;
      case Pointwise::Tanh: v = std::tanh(v); break;
    }
  }
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [ix, kind](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const auto y = tp.value(self).data();
    const auto xv = tp.value(ix).data();
    auto d = tp.grad_buffer(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      switch (kind) {
        case Pointwise::Relu: d[i] += xv[i] > 0.0 ? g[i] : 0.0; break;
        case Pointwise::Sigmoid:
          // flat outside the clamp window
          if (std::abs(xv[i]) < 40.0) d[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
        case Pointwise::Tanh: d[i] += g[i] * (1.0 - y[i] * y[i]); break;
      }
    }
  });
}

Var relu(Var x) { return pointwise(x, Pointwise::Relu); }
Var sigmoid(Var x) { return pointwise(x, Pointwise::Sigmoid); }
Var tanh(Var x) { return pointwise(x, Pointwise::Tanh); }

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape(x, gain);
  same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (d == 0) throw DimensionError("layer_norm: zero-width rows");
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  if (gv.rows() != 1 || gv.cols() != d || !bv.same_shape(gv)) {
    throw DimensionError("layer_norm: affine params must be [1x" + std::to_string(d) + "]");
  }

  Tensor normed(n, d);
  std::vector<double> inv_std(n);
  Tensor out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      normed(i, j) = (xv(i, j) - mean) * inv_std[i];
      out(i, j) = gv[j] * normed(i, j) + bv[j];
    }
  }

  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, normed = std::move(normed), inv_std = std::move(inv_std)](
                      Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& gv = tp.value(ig);
                    const std::size_t n = g.rows(), d = g.cols();
                    if (Tensor* gg = grad_if(tp, ig)) {
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) (*gg)[j] += g(i, j) * normed(i, j);
                    }
                    if (Tensor* gb = grad_if(tp, ib)) {
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) (*gb)[j] += g(i, j);
                    }
                    if (Tensor* gx = grad_if(tp, ix)) {
                      for (std::size_t i = 0; i < n; ++i) {
                        double mean_dn = 0.0, mean_dn_n = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dn = g(i, j) * gv[j];
                          mean_dn += dn;
                          mean_dn_n += dn * normed(i, j);
                        }
                        mean_dn /= static_cast<double>(d);
                        mean_dn_n /= static_cast<double>(d);
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dn = g(i, j) * gv[j];
                          (*gx)(i, j) += inv_std[i] * (dn - mean_dn - normed(i, j) * mean_dn_n);
                        }
                      }
                    }
                  });
}

Var masked_softmax(Var logits, const Tensor& mask, MaskApply mode) {
  Tape& t = *logits.tape();
  const Tensor& z = logits.value();
  require_same_shape(z, mask, "masked_softmax");
  const std::size_t n = z.rows(), m = z.cols();

  // `soft` holds the normalized distribution the gradient is taken through;
  // for PostSoftmax it spans the whole row, for PreSoftmax only allowed entries.
  Tensor soft(n, m);
  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask(i, j) != 0.0) any = true;
      if (mode == MaskApply::PostSoftmax || mask(i, j) != 0.0) hi = std::max(hi, z(i, j));
    }
    if (!any) {
      throw ContractError("masked_softmax: row " + std::to_string(i) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (mode == MaskApply::PreSoftmax && mask(i, j) == 0.0) continue;
      soft(i, j) = std::exp(z(i, j) - hi);
      total += soft(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) {
      soft(i, j) /= total;
      out(i, j) = mask(i, j) != 0.0 ? soft(i, j) : 0.0;
    }
  }

  const std::size_t iz = logits.id();
  return t.record(std::move(out), {iz},
                  [iz, soft = std::move(soft), mask](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& gz = tp.grad_buffer(iz);
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        dot += mask(i, j) * g(i, j) * soft(i, j);
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        gz(i, j) += soft(i, j) * (mask(i, j) * g(i, j) - dot);
                    }
                  });
}

Var softmax_rows(Var logits) {
  return masked_softmax(logits, Tensor(logits.rows(), logits.cols(), 1.0));
}

Var concat_rows(Var top, Var bottom) {
  Tape& t = same_tape(top, bottom);
  const Tensor& a = top.value();
  const Tensor& b = bottom.value();
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column counts differ " + a.shape_string() + " / " +
                         b.shape_string());
  }
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  const std::size_t ia = top.id(), ib = bottom.id(), split = a.size();
  return t.record(Tensor(a.rows() + b.rows(), a.cols(), std::move(data)), {ia, ib},
                  [ia, ib, split](Tape& tp, std::size_t self) {
                    const auto g = tp.grad(self).data();
                    if (Tensor* ga = grad_if(tp, ia)) {
                      auto d = ga->data();
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
                    }
                    if (Tensor* gb = grad_if(tp, ib)) {
                      auto d = gb->data();
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[split + i];
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (begin > end || end > av.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") outside " + av.shape_string());
  }
  const std::size_t c = av.cols();
  std::vector<double> data(av.data().begin() + begin * c, av.data().begin() + end * c);
  const std::size_t ia = a.id(), offset = begin * c;
  return t.record(Tensor(end - begin, c, std::move(data)), {ia},
                  [ia, offset](Tape& tp, std::size_t self) {
                    const auto g = tp.grad(self).data();
                    auto d = tp.grad_buffer(ia).data();
                    for (std::size_t i = 0; i < g.size(); ++i) d[offset + i] += g[i];
                  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (av.rows() == 0) throw DimensionError("mean_rows: no rows");
  Tensor out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out[j] += av(i, j);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (double& v : out.data()) v *= inv;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, inv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g[j] * inv;
  });
}

Var max_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (av.rows() == 0) throw DimensionError("max_rows: no rows");
  Tensor out(1, av.cols());
  std::vector<std::size_t> argmax(av.cols(), 0);
  for (std::size_t j = 0; j < av.cols(); ++j) {
    out[j] = av(0, j);
    for (std::size_t i = 1; i < av.rows(); ++i) {
      if (av(i, j) > out[j]) {
        out[j] = av(i, j);
        argmax[j] = i;
      }
    }
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia},
                  [ia, argmax = std::move(argmax)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& ga = tp.grad_buffer(ia);
                    for (std::size_t j = 0; j < argmax.size(); ++j) ga(argmax[j], j) += g[j];
                  });
}

Var sum_cols(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out[i] += av(i, j);
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g[i];
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.record(Tensor(1, 1, s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (double& v : tp.grad_buffer(ia).data()) v += g;
  });
}

Var softmax_cross_entropy(Var logits, std::size_t target) {
  Tape& t = *logits.tape();
  const Tensor& z = logits.value();
  if (z.rows() != 1) throw DimensionError("softmax_cross_entropy: expects one logit row");
  if (target >= z.cols()) {
    throw ContractError("softmax_cross_entropy: target " + std::to_string(target) +
                        " outside " + std::to_string(z.cols()) + " classes");
  }
  const double hi = *std::max_element(z.data().begin(), z.data().end());
  double total = 0.0;
  for (double v : z.data()) total += std::exp(v - hi);
  const double log_norm = hi + std::log(total);
  Tensor probs(1, z.cols());
  for (std::size_t j = 0; j < z.cols(); ++j) probs[j] = std::exp(z[j] - log_norm);

  const std::size_t iz = logits.id();
  return t.record(Tensor(1, 1, log_norm - z[target]), {iz},
                  [iz, target, probs = std::move(probs)](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0];
                    Tensor& gz = tp.grad_buffer(iz);
                    for (std::size_t j = 0; j < gz.cols(); ++j)
                      gz[j] += g * (probs[j] - (j == target ? 1.0 : 0.0));
                  });
}

// ---- gradient checking --------------------------------------------------

double evaluate(const ScalarGraph& f) {
  Tape tape;
  const Var root = f(tape);
  if (root.value().size() != 1) throw ContractError("evaluate: graph is not scalar");
  const double v = root.value()[0];
  if (!std::isfinite(v)) throw NumericError("evaluate: non-finite function value");
  return v;
}

double grad_check(const ScalarGraph& f, const ParamList& params, double step) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    const Var root = f(tape);
    if (!std::isfinite(root.value()[0])) throw NumericError("grad_check: non-finite value");
    tape.backward(root);
  }

  double worst = 0.0;
  for (Parameter* p : params) {
    auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(f);
      values[i] = saved - step;
      const double down = evaluate(f);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace satomil::ad
