#include "chanmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace chanmt::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("autodiff: operands live on different tapes");
  }
}

void require_shape(bool ok, const char* op) {
  if (!ok) {
    throw ContractError(std::string("autodiff: shape mismatch in ") + op);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("autodiff: item() on a non-scalar variable");
  }
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Matrix value) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
  if (grad_sink != nullptr && (grad_sink->rows() != value.rows() || grad_sink->cols() != value.cols())) {
    throw ContractError("autodiff: gradient sink shape differs from parameter shape");
  }
  Node node;
  node.external = &value;
  node.requires_grad = grad_sink != nullptr;
  node.sink = grad_sink;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external != nullptr ? *n.external : n.owned;
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_ready) {
    const Matrix& v = n.external != nullptr ? *n.external : n.owned;
    n.grad = Matrix::Zero(v.rows(), v.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) {
      throw ContractError("autodiff: input recorded on a different tape");
    }
    needs = needs || requires_grad(in.id());
  }
  Node node;
  node.owned = std::move(value);
  node.requires_grad = needs;
  if (needs) {
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) {
    throw ContractError("autodiff: loss was not produced on this tape");
  }
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("autodiff: backward requires a scalar (1 x 1) loss");
  }
  if (backward_done_) {
    throw ContractError("autodiff: backward already ran on this tape");
  }
  backward_done_ = true;
  if (!requires_grad(loss.id())) {
    return;
  }
  grad_ref(loss.id())(0, 0) = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad_ready && n.backward) {
      n.backward(*this, id);
    }
  }
  for (Node& n : nodes_) {
    if (n.sink != nullptr && n.grad_ready) {
      *n.sink += n.grad;
    }
  }
}

bool Tape::has_grad(Var v) const {
  return v.tape() == this && nodes_[static_cast<std::size_t>(v.id())].grad_ready;
}

const Matrix& Tape::grad(Var v) const {
  if (!has_grad(v)) {
    throw ContractError("autodiff: variable has no gradient");
  }
  return nodes_[static_cast<std::size_t>(v.id())].grad;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernel {

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& bias) {
  Matrix out(x.rows(), w.cols());
  out.noalias() = x * w;
  out.rowwise() += bias.row(0);
  return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps) {
  Matrix out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mean).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + eps);
    out.row(r) = ((x.row(r).array() - mean) * inv * gain.row(0).array() + bias.row(0).array()).matrix();
  }
  return out;
}

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const double m = a.row(r).maxCoeff();
    out.row(r) = (a.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix log_softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const double m = a.row(r).maxCoeff();
    const double lse = m + std::log((a.row(r).array() - m).exp().sum());
    out.row(r) = (a.row(r).array() - lse).matrix();
  }
  return out;
}

Matrix multihead_attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads, bool causal,
                           Index offset) {
  const Index dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(q.rows(), v.cols());
  Matrix scores(q.rows(), k.rows());
  for (int h = 0; h < heads; ++h) {
    scores.noalias() = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    scores *= scale;
    for (Index i = 0; i < scores.rows(); ++i) {
      const Index limit = causal ? std::min<Index>(k.rows(), i + offset + 1) : k.rows();
      auto row = scores.row(i);
      const double m = row.head(limit).maxCoeff();
      row.head(limit) = (row.head(limit).array() - m).exp().matrix();
      row.head(limit) /= row.head(limit).sum();
      row.tail(k.rows() - limit).setZero();
    }
    out.middleCols(h * dh, dh).noalias() = scores * v.middleCols(h * dh, dh);
  }
  return out;
}

}  // namespace kernel

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw NumericInputError("log_softmax: empty input");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) {
      throw NumericInputError("log_softmax: non-finite input");
    }
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (double z : logits) {
    acc += std::exp(z - m);
  }
  const double lse = m + std::log(acc);
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), [lse](double z) { return z - lse; });
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul");
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const Var in[] = {a, b};
  return a.tape()->record(std::move(out), in, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.cols(), "matmul_nt");
  Matrix out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  const Var in[] = {a, b};
  return a.tape()->record(std::move(out), in, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib);
    if (t.requires_grad(ib)) t.grad_ref(ib).noalias() += g.transpose() * t.value(ia);
  });
}

Var affine(Var x, Var w, Var bias) {
  require_same_tape(x, w);
  require_same_tape(x, bias);
  require_shape(x.cols() == w.rows() && bias.rows() == 1 && bias.cols() == w.cols(), "affine");
  Matrix out = kernel::affine(x.value(), w.value(), bias.value());
  const Var in[] = {x, w, bias};
  return x.tape()->record(std::move(out), in,
                          [ix = x.id(), iw = w.id(), ib = bias.id()](Tape& t, int self) {
                            const Matrix& g = t.grad_ref(self);
                            if (t.requires_grad(ix)) t.grad_ref(ix).noalias() += g * t.value(iw).transpose();
                            if (t.requires_grad(iw)) t.grad_ref(iw).noalias() += t.value(ix).transpose() * g;
                            if (t.requires_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                          });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Matrix out = a.value() + b.value();
  const Var in[] = {a, b};
  return a.tape()->record(std::move(out), in, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia) += g;
    if (t.requires_grad(ib)) t.grad_ref(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Matrix out = a.value() - b.value();
  const Var in[] = {a, b};
  return a.tape()->record(std::move(out), in, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia) += g;
    if (t.requires_grad(ib)) t.grad_ref(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  const Var in[] = {a, b};
  return a.tape()->record(std::move(out), in, [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var scale(Var a, double factor) {
  Matrix out = a.value() * factor;
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [ia = a.id(), factor](Tape& t, int self) {
    t.grad_ref(ia) += t.grad_ref(self) * factor;
  });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  const Var in[] = {a, row};
  return a.tape()->record(std::move(out), in, [ia = a.id(), ir = row.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia) += g;
    if (t.requires_grad(ir)) t.grad_ref(ir) += g.colwise().sum();
  });
}

Var relu(Var a) {
  Matrix out = kernel::relu(a.value());
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [ia = a.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    t.grad_ref(ia) += (t.value(ia).array() > 0.0).select(g, 0.0).matrix();
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  require_shape(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
                "layer_norm");
  Matrix out = kernel::layer_norm(x.value(), gain.value(), bias.value(), eps);
  const Var in[] = {x, gain, bias};
  return x.tape()->record(
      std::move(out), in, [ix = x.id(), ig = gain.id(), ib = bias.id(), eps](Tape& t, int self) {
        const Matrix& g = t.grad_ref(self);
        const Matrix& xv = t.value(ix);
        const Matrix& gv = t.value(ig);
        const double n = static_cast<double>(xv.cols());
        Matrix xhat(xv.rows(), xv.cols());
        Eigen::VectorXd inv(xv.rows());
        for (Index r = 0; r < xv.rows(); ++r) {
          const double mean = xv.row(r).sum() / n;
          const double var = (xv.row(r).array() - mean).square().sum() / n;
          inv(r) = 1.0 / std::sqrt(var + eps);
          xhat.row(r) = ((xv.row(r).array() - mean) * inv(r)).matrix();
        }
        if (t.requires_grad(ig)) t.grad_ref(ig) += g.cwiseProduct(xhat).colwise().sum();
        if (t.requires_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
        if (t.requires_grad(ix)) {
          Matrix& gx = t.grad_ref(ix);
          for (Index r = 0; r < xv.rows(); ++r) {
            const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gv.row(0));
            const double m1 = dxhat.sum() / n;
            const double m2 = dxhat.cwiseProduct(xhat.row(r)).sum() / n;
            gx.row(r) += (inv(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2)).matrix();
          }
        }
      });
}

Var softmax_rows(Var a) {
  Matrix out = kernel::softmax_rows(a.value());
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [ia = a.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix& y = t.value(self);
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    t.grad_ref(ia) += (y.array() * (g.colwise() - dots).array()).matrix();
  });
}

Var log_softmax_rows(Var a) {
  Matrix out = kernel::log_softmax_rows(a.value());
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [ia = a.id()](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    const Matrix p = t.value(self).array().exp().matrix();
    const Eigen::VectorXd sums = g.rowwise().sum();
    t.grad_ref(ia) += g - (p.array().colwise() * sums.array()).matrix();
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [ia = a.id()](Tape& t, int self) {
    t.grad_ref(ia).array() += t.grad_ref(self)(0, 0);
  });
}

Var pick(Var a, std::span<const int> ids) {
  require_shape(static_cast<Index>(ids.size()) == a.rows(), "pick");
  Matrix out(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    const int c = ids[static_cast<std::size_t>(i)];
    if (c < 0 || c >= a.cols()) {
      throw ContractError("autodiff: pick index out of range");
    }
    out(i, 0) = a.value()(i, c);
  }
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in,
                          [ia = a.id(), cols = std::vector<int>(ids.begin(), ids.end())](Tape& t, int self) {
                            const Matrix& g = t.grad_ref(self);
                            Matrix& ga = t.grad_ref(ia);
                            for (std::size_t i = 0; i < cols.size(); ++i) {
                              ga(static_cast<Index>(i), cols[i]) += g(static_cast<Index>(i), 0);
                            }
                          });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw ContractError("autodiff: gather index out of range");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  const Var in[] = {table};
  return table.tape()->record(std::move(out), in,
                              [it = table.id(), rows = std::vector<int>(ids.begin(), ids.end())](Tape& t, int self) {
                                const Matrix& g = t.grad_ref(self);
                                Matrix& gt = t.grad_ref(it);
                                for (std::size_t i = 0; i < rows.size(); ++i) {
                                  gt.row(rows[i]) += g.row(static_cast<Index>(i));
                                }
                              });
}

Var slice_rows(Var a, Index start, Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  Matrix out = a.value().middleRows(start, count);
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [ia = a.id(), start, count](Tape& t, int self) {
    t.grad_ref(ia).middleRows(start, count) += t.grad_ref(self);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) {
    throw ContractError("autodiff: concat_rows of nothing");
  }
  Index rows = 0;
  const Index cols = parts[0].cols();
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    require_shape(p.cols() == cols, "concat_rows");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    ids.push_back(p.id());
  }
  return parts[0].tape()->record(std::move(out), parts, [ids](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    Index off = 0;
    for (int id : ids) {
      const Index n = t.value(id).rows();
      if (t.requires_grad(id)) t.grad_ref(id) += g.middleRows(off, n);
      off += n;
    }
  });
}

Var multihead_attention(Var q, Var k, Var v, int heads, bool causal) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  require_shape(heads > 0 && q.cols() == k.cols() && k.rows() == v.rows() && q.cols() % heads == 0 &&
                    v.cols() % heads == 0,
                "multihead_attention");
  Matrix out = kernel::multihead_attention(q.value(), k.value(), v.value(), heads, causal);
  const Var in[] = {q, k, v};
  return q.tape()->record(
      std::move(out), in, [iq = q.id(), ik = k.id(), iv = v.id(), heads, causal](Tape& t, int self) {
        const Matrix& g = t.grad_ref(self);
        const Matrix& qv = t.value(iq);
        const Matrix& kv = t.value(ik);
        const Matrix& vv = t.value(iv);
        const Index dh = qv.cols() / heads;
        const Index dv = vv.cols() / heads;
        const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
        const bool gq = t.requires_grad(iq);
        const bool gk = t.requires_grad(ik);
        const bool gv = t.requires_grad(iv);
        Matrix p(qv.rows(), kv.rows());
        for (int h = 0; h < heads; ++h) {
          p.noalias() = qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose();
          p *= sc;
          for (Index i = 0; i < p.rows(); ++i) {
            const Index limit = causal ? std::min<Index>(kv.rows(), i + 1) : kv.rows();
            auto row = p.row(i);
            const double m = row.head(limit).maxCoeff();
            row.head(limit) = (row.head(limit).array() - m).exp().matrix();
            row.head(limit) /= row.head(limit).sum();
            row.tail(kv.rows() - limit).setZero();
          }
          const auto go = g.middleCols(h * dv, dv);
          if (gv) t.grad_ref(iv).middleCols(h * dv, dv).noalias() += p.transpose() * go;
          if (gq || gk) {
            Matrix dp = go * vv.middleCols(h * dv, dv).transpose();
            const Eigen::VectorXd dots = dp.cwiseProduct(p).rowwise().sum();
            Matrix ds = (p.array() * (dp.colwise() - dots).array()).matrix() * sc;
            if (gq) t.grad_ref(iq).middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
            if (gk) t.grad_ref(ik).middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
          }
        }
      });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) {
    return a;
  }
  if (rate >= 1.0) {
    throw ContractError("autodiff: dropout rate must be below 1");
  }
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  const double s = 1.0 / (1.0 - rate);
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = keep(rng) ? s : 0.0;
  }
  Matrix out = a.value().cwiseProduct(mask);
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [ia = a.id(), mask = std::move(mask)](Tape& t, int self) {
    t.grad_ref(ia) += t.grad_ref(self).cwiseProduct(mask);
  });
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::create(const std::vector<Matrix>& params, const AdamOptions& options) {
  if (!(options.learning_rate > 0.0) || !(options.beta1 > 0.0 && options.beta1 < 1.0) ||
      !(options.beta2 > 0.0 && options.beta2 < 1.0) || !(options.epsilon > 0.0) || options.weight_decay < 0.0) {
    throw ConfigError("adam: invalid optimizer options");
  }
  AdamState s;
  s.first_moment = zeros_like(params);
  s.second_moment = zeros_like(params);
  s.learning_rate = options.learning_rate;
  s.beta1 = options.beta1;
  s.beta2 = options.beta2;
  s.epsilon = options.epsilon;
  s.weight_decay = options.weight_decay;
  return s;
}

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ContractError("adam: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto r = params[i].rows();
    const auto c = params[i].cols();
    if (grads[i].rows() != r || grads[i].cols() != c || state.first_moment[i].rows() != r ||
        state.first_moment[i].cols() != c || state.second_moment[i].rows() != r ||
        state.second_moment[i].cols() != c) {
      throw ContractError("adam: shape mismatch at parameter " + std::to_string(i));
    }
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].array();
    auto m = state.first_moment[i].array();
    auto v = state.second_moment[i].array();
    const Eigen::ArrayXXd g = grads[i].array() + state.weight_decay * p;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    p -= state.learning_rate * (m / c1) / ((v / c2).sqrt() + state.epsilon);
  }
}

std::vector<Matrix> zeros_like(const std::vector<Matrix>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Matrix& p : params) {
    out.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return out;
}

}  // namespace chanmt::ad
