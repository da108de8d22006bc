#include "alcr/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace alcr::autodiff {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

// Every op records its output node first and then installs a backprop closure
// that looks up its own output gradient by node id. TapeOps is the one friend
// with access to the node storage so the closures stay terse.
struct TapeOps {
  static void install(Tape& t, int id, std::function<void(Tape&, const Tensor&)> fn) {
    t.nodes_[static_cast<std::size_t>(id)].backprop = [id, fn](Tape& tp) {
      fn(tp, tp.nodes_[static_cast<std::size_t>(id)].grad);
    };
  }
  static int make(Tape& t, Tensor value, bool needs_grad) {
    return t.new_node(std::move(value), needs_grad, nullptr);
  }
  static Tensor& grad_of(Tape& t, int id) { return t.grad_ref(id); }
  static const Tensor& value_of(Tape& t, int id) { return t.value_of(id); }
  static bool needs(Tape& t, int id) { return t.needs(id); }
};

namespace {

void accumulate_scaled(const Tensor& src, double c, Tensor& dst) {
  for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}

}  // namespace

#define ALCR_NODE(out_tensor, needs_expr) \
  int self_id = TapeOps::make(*this, std::move(out_tensor), (needs_expr))

int Tape::new_node(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::node(Var v) {
  require(v.tape == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
          "Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  require(v.tape == const_cast<Tape*>(this) && v.id >= 0 &&
              v.id < static_cast<int>(nodes_.size()),
          "Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::leaf(const Tensor& value, const std::string& name) {
  value.check_finite("leaf");
  int id = new_node(value, value.requires_grad(), nullptr);
  nodes_.back().leaf_index = static_cast<int>(leaf_names_.size());
  leaf_names_.push_back(name);
  leaf_ids_.push_back(id);
  return as_var(id);
}

Var Tape::constant(Tensor value) {
  value.check_finite("constant");
  return as_var(new_node(std::move(value), false, nullptr));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const { return node(v).grad; }

void Tape::clear() {
  nodes_.clear();
  leaf_names_.clear();
  leaf_ids_.clear();
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.same_shape(tb), "add: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  out.check_finite("add");
  int ia = a.id, ib = b.id;
  ALCR_NODE(out, needs(ia) || needs(ib));
  TapeOps::install(*this, self_id, [ia, ib](Tape& t, const Tensor& g) {
    if (TapeOps::needs(t, ia)) accumulate_scaled(g, 1.0, TapeOps::grad_of(t, ia));
    if (TapeOps::needs(t, ib)) accumulate_scaled(g, 1.0, TapeOps::grad_of(t, ib));
  });
  return as_var(self_id);
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.same_shape(tb), "mul: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  out.check_finite("mul");
  int ia = a.id, ib = b.id;
  ALCR_NODE(out, needs(ia) || needs(ib));
  TapeOps::install(*this, self_id, [ia, ib](Tape& t, const Tensor& g) {
    if (TapeOps::needs(t, ia)) {
      const Tensor& vb = TapeOps::value_of(t, ib);
      Tensor& da = TapeOps::grad_of(t, ia);
      for (std::int64_t i = 0; i < da.size(); ++i) da[i] += g[i] * vb[i];
    }
    if (TapeOps::needs(t, ib)) {
      const Tensor& va = TapeOps::value_of(t, ia);
      Tensor& db = TapeOps::grad_of(t, ib);
      for (std::int64_t i = 0; i < db.size(); ++i) db[i] += g[i] * va[i];
    }
  });
  return as_var(self_id);
}

Var Tape::add_row(Var m, Var row) {
  const Tensor& tm = node(m).value;
  const Tensor& tr = node(row).value;
  require(tm.rank() == 2 && tr.rank() == 1 && tm.cols() == static_cast<int>(tr.size()),
          "add_row: shape mismatch");
  Tensor out = tm;
  int rows = tm.rows(), cols = tm.cols();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) += tr[c];
  out.check_finite("add_row");
  int im = m.id, ir = row.id;
  ALCR_NODE(out, needs(im) || needs(ir));
  TapeOps::install(*this, self_id, [im, ir, rows, cols](Tape& t, const Tensor& g) {
    if (TapeOps::needs(t, im)) accumulate_scaled(g, 1.0, TapeOps::grad_of(t, im));
    if (TapeOps::needs(t, ir)) {
      Tensor& dr = TapeOps::grad_of(t, ir);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) dr[c] += g.at(r, c);
    }
  });
  return as_var(self_id);
}

Var Tape::affine(Var v, double a, double b) {
  Tensor out = node(v).value;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a * out[i] + b;
  out.check_finite("affine");
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  TapeOps::install(*this, self_id, [iv, a](Tape& t, const Tensor& g) {
    if (TapeOps::needs(t, iv)) accumulate_scaled(g, a, TapeOps::grad_of(t, iv));
  });
  return as_var(self_id);
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.rank() == 2 && tb.rank() == 2, "matmul: rank-2 tensors required");
  int m = trans_a ? ta.cols() : ta.rows();
  int k = trans_a ? ta.rows() : ta.cols();
  int k2 = trans_b ? tb.cols() : tb.rows();
  int n = trans_b ? tb.rows() : tb.cols();
  require(k == k2, "matmul: inner dimension mismatch");
  Tensor out({m, n});
  matmul_into(ta, tb, trans_a, trans_b, false, out);
  out.check_finite("matmul");
  int ia = a.id, ib = b.id;
  ALCR_NODE(out, needs(ia) || needs(ib));
  TapeOps::install(
      *this, self_id, [ia, ib, trans_a, trans_b](Tape& t, const Tensor& g) {
        const Tensor& va = TapeOps::value_of(t, ia);
        const Tensor& vb = TapeOps::value_of(t, ib);
        if (TapeOps::needs(t, ia)) {
          Tensor& da = TapeOps::grad_of(t, ia);
          if (!trans_a)
            matmul_into(g, vb, false, !trans_b, true, da);
          else
            matmul_into(vb, g, trans_b, true, true, da);
        }
        if (TapeOps::needs(t, ib)) {
          Tensor& db = TapeOps::grad_of(t, ib);
          if (!trans_b)
            matmul_into(va, g, !trans_a, false, true, db);
          else
            matmul_into(g, va, true, trans_a, true, db);
        }
      });
  return as_var(self_id);
}

Var Tape::concat(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.rank() == 1 && tb.rank() == 1, "concat: rank-1 tensors required");
  int na = static_cast<int>(ta.size()), nb = static_cast<int>(tb.size());
  Tensor out({na + nb});
  std::copy(ta.raw(), ta.raw() + na, out.raw());
  std::copy(tb.raw(), tb.raw() + nb, out.raw() + na);
  int ia = a.id, ib = b.id;
  ALCR_NODE(out, needs(ia) || needs(ib));
  TapeOps::install(*this, self_id, [ia, ib, na, nb](Tape& t, const Tensor& g) {
    if (TapeOps::needs(t, ia)) {
      Tensor& da = TapeOps::grad_of(t, ia);
      for (int i = 0; i < na; ++i) da[i] += g[i];
    }
    if (TapeOps::needs(t, ib)) {
      Tensor& db = TapeOps::grad_of(t, ib);
      for (int i = 0; i < nb; ++i) db[i] += g[na + i];
    }
  });
  return as_var(self_id);
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows: empty input");
  int cols = static_cast<int>(node(rows[0]).value.size());
  Tensor out({static_cast<int>(rows.size()), cols});
  bool ng = false;
  std::vector<int> ids(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& tr = node(rows[r]).value;
    require(tr.rank() == 1 && static_cast<int>(tr.size()) == cols,
            "stack_rows: row shape mismatch");
    std::copy(tr.raw(), tr.raw() + cols, out.raw() + r * cols);
    ids[r] = rows[r].id;
    ng = ng || needs(ids[r]);
  }
  ALCR_NODE(out, ng);
  TapeOps::install(*this, self_id, [ids, cols](Tape& t, const Tensor& g) {
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!TapeOps::needs(t, ids[r])) continue;
      Tensor& dr = TapeOps::grad_of(t, ids[r]);
      const double* gr = g.raw() + r * cols;
      for (int c = 0; c < cols; ++c) dr[c] += gr[c];
    }
  });
  return as_var(self_id);
}

Var Tape::slice_row(Var m, int row) {
  const Tensor& tm = node(m).value;
  require(tm.rank() == 2 && row >= 0 && row < tm.rows(), "slice_row: out of range");
  int cols = tm.cols();
  Tensor out({cols});
  std::copy(tm.raw() + static_cast<std::size_t>(row) * cols,
            tm.raw() + static_cast<std::size_t>(row + 1) * cols, out.raw());
  int im = m.id;
  ALCR_NODE(out, needs(im));
  TapeOps::install(*this, self_id, [im, row, cols](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, im)) return;
    Tensor& dm = TapeOps::grad_of(t, im);
    for (int c = 0; c < cols; ++c) dm.at(row, c) += g[c];
  });
  return as_var(self_id);
}

Var Tape::slice_range(Var v, int begin, int end) {
  const Tensor& tv = node(v).value;
  require(tv.rank() == 1 && begin >= 0 && end <= static_cast<int>(tv.size()) &&
              begin < end,
          "slice_range: bad range");
  Tensor out({end - begin});
  std::copy(tv.raw() + begin, tv.raw() + end, out.raw());
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  TapeOps::install(*this, self_id, [iv, begin, end](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    Tensor& dv = TapeOps::grad_of(t, iv);
    for (int i = begin; i < end; ++i) dv[i] += g[i - begin];
  });
  return as_var(self_id);
}

Var Tape::reshape(Var v, std::vector<int> shape) {
  const Tensor& tv = node(v).value;
  require(shape_numel(shape) == tv.size(), "reshape: element count mismatch");
  Tensor out(std::move(shape), std::vector<double>(tv.raw(), tv.raw() + tv.size()));
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  TapeOps::install(*this, self_id, [iv](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    Tensor& dv = TapeOps::grad_of(t, iv);
    for (std::int64_t i = 0; i < dv.size(); ++i) dv[i] += g[i];
  });
  return as_var(self_id);
}

Var Tape::tanh_op(Var v) {
  Tensor out = node(v).value;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  int out_id = self_id;
  TapeOps::install(*this, self_id, [iv, out_id](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    const Tensor& y = TapeOps::value_of(t, out_id);
    Tensor& dv = TapeOps::grad_of(t, iv);
    for (std::int64_t i = 0; i < dv.size(); ++i) dv[i] += g[i] * (1.0 - y[i] * y[i]);
  });
  return as_var(self_id);
}

Var Tape::sigmoid_op(Var v) {
  Tensor out = node(v).value;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  int out_id = self_id;
  TapeOps::install(*this, self_id, [iv, out_id](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    const Tensor& y = TapeOps::value_of(t, out_id);
    Tensor& dv = TapeOps::grad_of(t, iv);
    for (std::int64_t i = 0; i < dv.size(); ++i) dv[i] += g[i] * y[i] * (1.0 - y[i]);
  });
  return as_var(self_id);
}

Var Tape::log_op(Var v) {
  const Tensor& tv = node(v).value;
  Tensor out = tv;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  out.check_finite("log");
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  TapeOps::install(*this, self_id, [iv](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    const Tensor& x = TapeOps::value_of(t, iv);
    Tensor& dv = TapeOps::grad_of(t, iv);
    for (std::int64_t i = 0; i < dv.size(); ++i) dv[i] += g[i] / x[i];
  });
  return as_var(self_id);
}

Var Tape::softmax(Var v) {
  const Tensor& tv = node(v).value;
  require(tv.rank() == 1, "softmax: rank-1 tensor required");
  Tensor out = tv;
  double mx = *std::max_element(out.raw(), out.raw() + out.size());
  double z = 0.0;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(out[i] - mx);
    z += out[i];
  }
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] /= z;
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  int out_id = self_id;
  TapeOps::install(*this, self_id, [iv, out_id](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    const Tensor& y = TapeOps::value_of(t, out_id);
    Tensor& dv = TapeOps::grad_of(t, iv);
    double dot = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
    for (std::int64_t i = 0; i < y.size(); ++i) dv[i] += y[i] * (g[i] - dot);
  });
  return as_var(self_id);
}

Var Tape::log_softmax(Var v) {
  const Tensor& tv = node(v).value;
  require(tv.rank() == 1 || tv.rank() == 2, "log_softmax: rank 1 or 2 required");
  int rows = tv.rank() == 2 ? tv.rows() : 1;
  int cols = tv.rank() == 2 ? tv.cols() : static_cast<int>(tv.size());
  Tensor out = tv;
  for (int r = 0; r < rows; ++r) {
    double* row = out.raw() + static_cast<std::size_t>(r) * cols;
    double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    double lz = mx + std::log(z);
    for (int c = 0; c < cols; ++c) row[c] -= lz;
  }
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  int out_id = self_id;
  TapeOps::install(*this, self_id, [iv, out_id, rows, cols](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    const Tensor& y = TapeOps::value_of(t, out_id);
    Tensor& dv = TapeOps::grad_of(t, iv);
    for (int r = 0; r < rows; ++r) {
      const double* gr = g.raw() + static_cast<std::size_t>(r) * cols;
      const double* yr = y.raw() + static_cast<std::size_t>(r) * cols;
      double* dr = dv.raw() + static_cast<std::size_t>(r) * cols;
      double gs = 0.0;
      for (int c = 0; c < cols; ++c) gs += gr[c];
      for (int c = 0; c < cols; ++c) dr[c] += gr[c] - std::exp(yr[c]) * gs;
    }
  });
  return as_var(self_id);
}

Var Tape::embedding(Var table, const std::vector<int>& ids) {
  const Tensor& tt = node(table).value;
  require(tt.rank() == 2, "embedding: table must be rank 2");
  int vocab = tt.rows(), dim = tt.cols();
  for (int id : ids)
    require(id >= 0 && id < vocab, "embedding: token id out of range");
  Tensor out({static_cast<int>(ids.size()), dim});
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy(tt.raw() + static_cast<std::size_t>(ids[r]) * dim,
              tt.raw() + static_cast<std::size_t>(ids[r] + 1) * dim,
              out.raw() + r * dim);
  int it = table.id;
  ALCR_NODE(out, needs(it));
  TapeOps::install(*this, self_id, [it, ids, dim](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, it)) return;
    Tensor& dt = TapeOps::grad_of(t, it);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      double* drow = dt.raw() + static_cast<std::size_t>(ids[r]) * dim;
      const double* grow = g.raw() + r * dim;
      for (int c = 0; c < dim; ++c) drow[c] += grow[c];
    }
  });
  return as_var(self_id);
}

Var Tape::nll(Var logp, const std::vector<int>& targets) {
  const Tensor& tl = node(logp).value;
  int rows, cols;
  if (tl.rank() == 2) {
    rows = tl.rows();
    cols = tl.cols();
  } else {
    require(tl.rank() == 1, "nll: rank 1 or 2 required");
    rows = 1;
    cols = static_cast<int>(tl.size());
  }
  require(static_cast<int>(targets.size()) == rows, "nll: one target per row required");
  double s = 0.0;
  for (int r = 0; r < rows; ++r) {
    require(targets[r] >= 0 && targets[r] < cols, "nll: target id out of range");
    s -= tl[static_cast<std::int64_t>(r) * cols + targets[r]];
  }
  Tensor out = Tensor::scalar(s);
  int il = logp.id;
  ALCR_NODE(out, needs(il));
  TapeOps::install(*this, self_id, [il, targets, cols](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, il)) return;
    Tensor& dl = TapeOps::grad_of(t, il);
    double gv = g[0];
    for (std::size_t r = 0; r < targets.size(); ++r)
      dl[static_cast<std::int64_t>(r) * cols + targets[r]] -= gv;
  });
  return as_var(self_id);
}

Var Tape::sum(Var v) {
  const Tensor& tv = node(v).value;
  double s = 0.0;
  for (std::int64_t i = 0; i < tv.size(); ++i) s += tv[i];
  Tensor out = Tensor::scalar(s);
  int iv = v.id;
  ALCR_NODE(out, needs(iv));
  TapeOps::install(*this, self_id, [iv](Tape& t, const Tensor& g) {
    if (!TapeOps::needs(t, iv)) return;
    Tensor& dv = TapeOps::grad_of(t, iv);
    double gv = g[0];
    for (std::int64_t i = 0; i < dv.size(); ++i) dv[i] += gv;
  });
  return as_var(self_id);
}

Var Tape::conv1d(Var signal, Var kernel) {
  const Tensor& x = node(signal).value;
  const Tensor& w = node(kernel).value;
  require(x.rank() == 1 && w.rank() == 2, "conv1d: signal rank 1, kernel rank 2");
  int n = static_cast<int>(x.size());
  int channels = w.rows(), width = w.cols();
  int half = width / 2;
  Tensor out({n, channels});
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int k = 0; k < width; ++k) {
        int src = t + k - half;
        if (src >= 0 && src < n) s += w.at(c, k) * x[src];
      }
      out.at(t, c) = s;
    }
  }
  int ix = signal.id, iw = kernel.id;
  ALCR_NODE(out, needs(ix) || needs(iw));
  TapeOps::install(
      *this, self_id, [ix, iw, n, channels, width, half](Tape& t, const Tensor& g) {
        const Tensor& x = TapeOps::value_of(t, ix);
        const Tensor& w = TapeOps::value_of(t, iw);
        if (TapeOps::needs(t, ix)) {
          Tensor& dx = TapeOps::grad_of(t, ix);
          for (int ti = 0; ti < n; ++ti)
            for (int c = 0; c < channels; ++c) {
              double gv = g.at(ti, c);
              for (int k = 0; k < width; ++k) {
                int src = ti + k - half;
                if (src >= 0 && src < n) dx[src] += gv * w.at(c, k);
              }
            }
        }
        if (TapeOps::needs(t, iw)) {
          Tensor& dw = TapeOps::grad_of(t, iw);
          for (int ti = 0; ti < n; ++ti)
            for (int c = 0; c < channels; ++c) {
              double gv = g.at(ti, c);
              for (int k = 0; k < width; ++k) {
                int src = ti + k - half;
                if (src >= 0 && src < n) dw.at(c, k) += gv * x[src];
              }
            }
        }
      });
  return as_var(self_id);
}

namespace {

// Activations stashed by the fused recurrent cells for their backward pass.
struct GruSaved {
  Tensor r, z, n, hg_n;
};

struct LstmSaved {
  Tensor i, f, g, o, c_tanh, c_prev;
};

}  // namespace

Var Tape::gru_step(Var x_gates, Var h_prev, Var w_rec, Var b_rec) {
  const Tensor& xg = node(x_gates).value;
  const Tensor& h = node(h_prev).value;
  const Tensor& wr = node(w_rec).value;
  const Tensor& br = node(b_rec).value;
  int hs = static_cast<int>(h.size());
  require(xg.rank() == 1 && static_cast<int>(xg.size()) == 3 * hs &&
              wr.rank() == 2 && wr.rows() == hs && wr.cols() == 3 * hs &&
              static_cast<int>(br.size()) == 3 * hs,
          "gru_step: shape mismatch");
  // hg = h_prev · W_rec + b_rec with gate layout [r|z|n].
  Tensor hg({1, 3 * hs});
  {
    Tensor hm({1, hs}, std::vector<double>(h.raw(), h.raw() + hs));
    matmul_into(hm, wr, false, false, false, hg);
    for (int i = 0; i < 3 * hs; ++i) hg[i] += br[i];
  }
  auto saved = std::make_shared<GruSaved>(
      GruSaved{Tensor({hs}), Tensor({hs}), Tensor({hs}), Tensor({hs})});
  Tensor out({hs});
  for (int i = 0; i < hs; ++i) {
    double r = 1.0 / (1.0 + std::exp(-(xg[i] + hg[i])));
    double z = 1.0 / (1.0 + std::exp(-(xg[hs + i] + hg[hs + i])));
    double hgn = hg[2 * hs + i];
    double n = std::tanh(xg[2 * hs + i] + r * hgn);
    saved->r[i] = r;
    saved->z[i] = z;
    saved->n[i] = n;
    saved->hg_n[i] = hgn;
    out[i] = (1.0 - z) * n + z * h[i];
  }
  out.check_finite("gru_step");
  int ix = x_gates.id, ih = h_prev.id, iw = w_rec.id, ib = b_rec.id;
  ALCR_NODE(out, needs(ix) || needs(ih) || needs(iw) || needs(ib));
  TapeOps::install(*this, self_id, [ix, ih, iw, ib, hs, saved](Tape& t,
                                                               const Tensor& g) {
    const Tensor& h = TapeOps::value_of(t, ih);
    const Tensor& wr = TapeOps::value_of(t, iw);
    // dpre holds pre-activation gradients; the x side sees them directly, the
    // h side sees the n gate additionally scaled by the reset gate.
    Tensor dpre({1, 3 * hs});
    Tensor dh_direct({hs});
    for (int i = 0; i < hs; ++i) {
      double r = saved->r[i], z = saved->z[i], n = saved->n[i];
      double gh = g[i];
      double dz = gh * (h[i] - n);
      double dn = gh * (1.0 - z);
      dh_direct[i] = gh * z;
      double dpre_n = dn * (1.0 - n * n);
      double dr = dpre_n * saved->hg_n[i];
      dpre[i] = dr * r * (1.0 - r);
      dpre[hs + i] = dz * z * (1.0 - z);
      dpre[2 * hs + i] = dpre_n;
    }
    if (TapeOps::needs(t, ix)) {
      Tensor& dx = TapeOps::grad_of(t, ix);
      for (int i = 0; i < 3 * hs; ++i) dx[i] += dpre[i];
    }
    Tensor dhg({1, 3 * hs});
    for (int i = 0; i < hs; ++i) {
      dhg[i] = dpre[i];
      dhg[hs + i] = dpre[hs + i];
      dhg[2 * hs + i] = dpre[2 * hs + i] * saved->r[i];
    }
    if (TapeOps::needs(t, ib)) {
      Tensor& db = TapeOps::grad_of(t, ib);
      for (int i = 0; i < 3 * hs; ++i) db[i] += dhg[i];
    }
    if (TapeOps::needs(t, iw)) {
      Tensor& dw = TapeOps::grad_of(t, iw);
      Tensor hm({hs, 1}, std::vector<double>(h.raw(), h.raw() + hs));
      matmul_into(hm, dhg, false, false, true, dw);
    }
    if (TapeOps::needs(t, ih)) {
      Tensor& dh = TapeOps::grad_of(t, ih);
      Tensor dhm({1, hs});
      matmul_into(dhg, wr, false, true, false, dhm);
      for (int i = 0; i < hs; ++i) dh[i] += dhm[i] + dh_direct[i];
    }
  });
  return as_var(self_id);
}

Var Tape::lstm_step(Var x_gates, Var hc_prev, Var w_rec, Var b_rec) {
  const Tensor& xg = node(x_gates).value;
  const Tensor& hc = node(hc_prev).value;
  const Tensor& wr = node(w_rec).value;
  const Tensor& br = node(b_rec).value;
  int hs = static_cast<int>(hc.size()) / 2;
  require(hs > 0 && static_cast<int>(hc.size()) == 2 * hs &&
              static_cast<int>(xg.size()) == 4 * hs && wr.rank() == 2 &&
              wr.rows() == hs && wr.cols() == 4 * hs &&
              static_cast<int>(br.size()) == 4 * hs,
          "lstm_step: shape mismatch");
  // Gate layout [i|f|g|o]; state layout [h|c].
  Tensor hg({1, 4 * hs});
  {
    Tensor hm({1, hs}, std::vector<double>(hc.raw(), hc.raw() + hs));
    matmul_into(hm, wr, false, false, false, hg);
    for (int i = 0; i < 4 * hs; ++i) hg[i] += br[i];
  }
  auto saved = std::make_shared<LstmSaved>(LstmSaved{Tensor({hs}), Tensor({hs}),
                                                     Tensor({hs}), Tensor({hs}),
                                                     Tensor({hs}), Tensor({hs})});
  Tensor out({2 * hs});
  for (int k = 0; k < hs; ++k) {
    double gi = 1.0 / (1.0 + std::exp(-(xg[k] + hg[k])));
    double gf = 1.0 / (1.0 + std::exp(-(xg[hs + k] + hg[hs + k])));
    double gg = std::tanh(xg[2 * hs + k] + hg[2 * hs + k]);
    double go = 1.0 / (1.0 + std::exp(-(xg[3 * hs + k] + hg[3 * hs + k])));
    double c_prev = hc[hs + k];
    double c_new = gf * c_prev + gi * gg;
    double th = std::tanh(c_new);
    saved->i[k] = gi;
    saved->f[k] = gf;
    saved->g[k] = gg;
    saved->o[k] = go;
    saved->c_tanh[k] = th;
    saved->c_prev[k] = c_prev;
    out[k] = go * th;
    out[hs + k] = c_new;
  }
  out.check_finite("lstm_step");
  int ix = x_gates.id, ih = hc_prev.id, iw = w_rec.id, ib = b_rec.id;
  ALCR_NODE(out, needs(ix) || needs(ih) || needs(iw) || needs(ib));
  TapeOps::install(*this, self_id, [ix, ih, iw, ib, hs, saved](Tape& t,
                                                               const Tensor& g) {
    const Tensor& hc = TapeOps::value_of(t, ih);
    const Tensor& wr = TapeOps::value_of(t, iw);
    Tensor dpre({1, 4 * hs});
    Tensor dc_prev({hs});
    for (int k = 0; k < hs; ++k) {
      double gi = saved->i[k], gf = saved->f[k], gg = saved->g[k], go = saved->o[k];
      double th = saved->c_tanh[k];
      double dh = g[k];
      double dc = g[hs + k] + dh * go * (1.0 - th * th);
      double d_o = dh * th;
      double d_i = dc * gg;
      double d_g = dc * gi;
      double d_f = dc * saved->c_prev[k];
      dc_prev[k] = dc * gf;
      dpre[k] = d_i * gi * (1.0 - gi);
      dpre[hs + k] = d_f * gf * (1.0 - gf);
      dpre[2 * hs + k] = d_g * (1.0 - gg * gg);
      dpre[3 * hs + k] = d_o * go * (1.0 - go);
    }
    if (TapeOps::needs(t, ix)) {
      Tensor& dx = TapeOps::grad_of(t, ix);
      for (int k = 0; k < 4 * hs; ++k) dx[k] += dpre[k];
    }
    if (TapeOps::needs(t, ib)) {
      Tensor& db = TapeOps::grad_of(t, ib);
      for (int k = 0; k < 4 * hs; ++k) db[k] += dpre[k];
    }
    if (TapeOps::needs(t, iw)) {
      Tensor& dw = TapeOps::grad_of(t, iw);
      Tensor hm({hs, 1}, std::vector<double>(hc.raw(), hc.raw() + hs));
      matmul_into(hm, dpre, false, false, true, dw);
    }
    if (TapeOps::needs(t, ih)) {
      Tensor& dh = TapeOps::grad_of(t, ih);
      Tensor dhm({1, hs});
      matmul_into(dpre, wr, false, true, false, dhm);
      for (int k = 0; k < hs; ++k) {
        dh[k] += dhm[k];
        dh[hs + k] += dc_prev[k];
      }
    }
  });
  return as_var(self_id);
}

#undef ALCR_NODE

Gradients Tape::backward(Var loss) {
  Node& ln = node(loss);
  if (ln.value.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  if (!ln.needs_grad)
    throw std::invalid_argument("backward: loss does not depend on any parameter");
  for (Node& n : nodes_)
    if (n.needs_grad) n.grad = Tensor::zeros_like(n.value);
  grad_ref(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || !n.backprop) continue;
    if (!n.grad.all_finite())
      throw std::runtime_error("backward: non-finite gradient during reverse pass");
    n.backprop(*this);
  }
  Gradients out;
  for (std::size_t k = 0; k < leaf_ids_.size(); ++k) {
    const Node& n = nodes_[static_cast<std::size_t>(leaf_ids_[k])];
    if (!n.needs_grad) continue;
    if (!n.grad.all_finite())
      throw std::runtime_error("backward: non-finite parameter gradient");
    out.by_name[leaf_names_[k]] = n.grad;
  }
  return out;
}

Var TapeParams::at(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw std::out_of_range("parameter not on tape: " + name);
  return it->second;
}

TapeParams watch_parameters(Tape& tape, const ParameterStore& params) {
  TapeParams tp;
  for (const auto& name : params.names())
    tp.vars[name] = tape.leaf(params.at(name), name);
  return tp;
}

}  // namespace alcr::autodiff
