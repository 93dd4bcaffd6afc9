#include "kgnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kgnn/error.hpp"

namespace kgnn {
namespace {

void require(bool ok, const char* op, const std::string& msg) {
  if (!ok) throw DimensionError(std::string(op) + ": " + msg);
}

void require_same(const char* op, const Var& a, const Var& b) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
  require(a.value().rank() == rank, op,
          "expected rank " + std::to_string(rank) + ", got " + shape_string(a.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  Tensor out = a.value();
  out += b.value();
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    if (b.requires_grad()) {
      Tensor gb(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
      tape.accumulate(b, gb);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
      tape.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
      tape.accumulate(b, gb);
    }
  });
}

Var scale(const Var& a, double s) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return a.tape().record("scale", std::move(out), {a}, [a, s](Tape& tape, const Tensor& g) {
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * s;
    tape.accumulate(a, ga);
  });
}

Var add_bias(const Var& x, const Var& bias) {
  require_rank("add_bias", x, 2);
  require_rank("add_bias", bias, 1);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require(bv.size() == xv.cols(), "add_bias", "bias length " + std::to_string(bv.size()) + " vs cols " +
                                                  std::to_string(xv.cols()));
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return x.tape().record("add_bias", std::move(out), {x, bias}, [x, bias](Tape& tape, const Tensor& g) {
    tape.accumulate(x, g);
    if (bias.requires_grad()) {
      Tensor gb(bias.shape());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
      tape.accumulate(bias, gb);
    }
  });
}

Var scale_rows(const Var& x, const Var& s) {
  require_rank("scale_rows", x, 2);
  require_rank("scale_rows", s, 1);
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  require(sv.size() == xv.rows(), "scale_rows", "scale length vs rows");
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] * sv[r];
  }
  return x.tape().record("scale_rows", std::move(out), {x, s}, [x, s](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    if (x.requires_grad()) {
      Tensor gx(xv.shape());
      for (std::size_t r = 0; r < xv.rows(); ++r) {
        for (std::size_t c = 0; c < xv.cols(); ++c) gx.at(r, c) = g.at(r, c) * sv[r];
      }
      tape.accumulate(x, gx);
    }
    if (s.requires_grad()) {
      Tensor gs(sv.shape());
      for (std::size_t r = 0; r < xv.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < xv.cols(); ++c) acc += g.at(r, c) * xv.at(r, c);
        gs[r] = acc;
      }
      tape.accumulate(s, gs);
    }
  });
}

Var matvec(const Var& m, const Var& v) {
  require_rank("matvec", m, 2);
  require_rank("matvec", v, 1);
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  require(mv.cols() == vv.size(), "matvec", shape_string(mv.shape()) + " x " + shape_string(vv.shape()));
  Tensor out({mv.rows()});
  for (std::size_t r = 0; r < mv.rows(); ++r) {
    auto row = mv.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * vv[c];
    out[r] = acc;
  }
  return m.tape().record("matvec", std::move(out), {m, v}, [m, v](Tape& tape, const Tensor& g) {
    const Tensor& mv = m.value();
    const Tensor& vv = v.value();
    if (m.requires_grad()) {
      Tensor gm(mv.shape());
      for (std::size_t r = 0; r < mv.rows(); ++r) {
        for (std::size_t c = 0; c < mv.cols(); ++c) gm.at(r, c) = g[r] * vv[c];
      }
      tape.accumulate(m, gm);
    }
    if (v.requires_grad()) {
      Tensor gv(vv.shape());
      for (std::size_t r = 0; r < mv.rows(); ++r) {
        for (std::size_t c = 0; c < mv.cols(); ++c) gv[c] += mv.at(r, c) * g[r];
      }
      tape.accumulate(v, gv);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  require(bv.rows() == k, "matmul", shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * bv.at(p, j);
    }
  }
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (a.requires_grad()) {
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * bv.at(p, j);
          ga.at(i, p) = acc;
        }
      }
      tape.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb(bv.shape());
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av.at(i, p);
          for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += aip * g.at(i, j);
        }
      }
      tape.accumulate(b, gb);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  require(bv.cols() == k, "matmul_nt", shape_string(av.shape()) + " x " + shape_string(bv.shape()) + "^T");
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto ar = av.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      auto br = bv.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out.at(i, j) = acc;
    }
  }
  return a.tape().record("matmul_nt", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (a.requires_grad()) {
      Tensor ga(av.shape());
      for (std::size_t i = 0; i < m; ++i) {
        auto gr = ga.row(i);
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g.at(i, j);
          if (gij == 0.0) continue;
          auto br = bv.row(j);
          for (std::size_t p = 0; p < k; ++p) gr[p] += gij * br[p];
        }
      }
      tape.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb(bv.shape());
      for (std::size_t i = 0; i < m; ++i) {
        auto ar = av.row(i);
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g.at(i, j);
          if (gij == 0.0) continue;
          auto gr = gb.row(j);
          for (std::size_t p = 0; p < k; ++p) gr[p] += gij * ar[p];
        }
      }
      tape.accumulate(b, gb);
    }
  });
}

Var transpose(const Var& a) {
  require_rank("transpose", a, 2);
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out.at(j, i) = av.at(i, j);
  }
  return a.tape().record("transpose", std::move(out), {a}, [a](Tape& tape, const Tensor& g) {
    Tensor ga(a.shape());
    for (std::size_t i = 0; i < ga.rows(); ++i) {
      for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) = g.at(j, i);
    }
    tape.accumulate(a, ga);
  });
}

Var concat(const std::vector<Var>& vectors) {
  require(!vectors.empty(), "concat", "no inputs");
  std::vector<double> out;
  for (const auto& v : vectors) {
    require_rank("concat", v, 1);
    out.insert(out.end(), v.value().storage().begin(), v.value().storage().end());
  }
  return vectors.front().tape().record("concat", Tensor::vector(std::move(out)), vectors,
                                       [vectors](Tape& tape, const Tensor& g) {
                                         std::size_t offset = 0;
                                         for (const auto& v : vectors) {
                                           const std::size_t n = v.value().size();
                                           if (v.requires_grad()) {
                                             Tensor gv({n});
                                             std::copy_n(g.storage().begin() + offset, n, gv.storage().begin());
                                             tape.accumulate(v, gv);
                                           }
                                           offset += n;
                                         }
                                       });
}

Var concat_cols(const std::vector<Var>& matrices) {
  require(!matrices.empty(), "concat_cols", "no inputs");
  const std::size_t rows = matrices.front().value().rows();
  std::size_t cols = 0;
  for (const auto& m : matrices) {
    require_rank("concat_cols", m, 2);
    require(m.value().rows() == rows, "concat_cols", "row count mismatch");
    cols += m.value().cols();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const auto& m : matrices) {
    const Tensor& mv = m.value();
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = mv.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + offset);
    }
    offset += mv.cols();
  }
  return matrices.front().tape().record(
      "concat_cols", std::move(out), matrices, [matrices](Tape& tape, const Tensor& g) {
        std::size_t offset = 0;
        for (const auto& m : matrices) {
          const std::size_t c = m.value().cols();
          if (m.requires_grad()) {
            Tensor gm(m.shape());
            for (std::size_t r = 0; r < gm.rows(); ++r) {
              auto src = g.row(r).subspan(offset, c);
              std::copy(src.begin(), src.end(), gm.row(r).begin());
            }
            tape.accumulate(m, gm);
          }
          offset += c;
        }
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.value().rank() == 1 || p.value().rank() == 2, "concat_rows", "rank must be 1 or 2");
    require(p.value().cols() == cols, "concat_rows", "column count mismatch");
    rows += p.value().rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.value().storage().begin(), p.value().storage().end());
  return parts.front().tape().record("concat_rows", Tensor::matrix(rows, cols, std::move(out)), parts,
                                     [parts](Tape& tape, const Tensor& g) {
                                       std::size_t offset = 0;
                                       for (const auto& p : parts) {
                                         const std::size_t n = p.value().size();
                                         if (p.requires_grad()) {
                                           Tensor gp(p.shape());
                                           std::copy_n(g.storage().begin() + offset, n, gp.storage().begin());
                                           tape.accumulate(p, gp);
                                         }
                                         offset += n;
                                       }
                                     });
}

Var stack_rows(const std::vector<Var>& vectors) {
  for (const auto& v : vectors) require_rank("stack_rows", v, 1);
  return concat_rows(vectors);
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", x, 2);
  const Tensor& xv = x.value();
  require(begin <= end && end <= xv.rows(), "slice_rows", "range out of bounds");
  const std::size_t cols = xv.cols();
  std::vector<double> out(xv.storage().begin() + begin * cols, xv.storage().begin() + end * cols);
  return x.tape().record("slice_rows", Tensor::matrix(end - begin, cols, std::move(out)), {x},
                         [x, begin, cols](Tape& tape, const Tensor& g) {
                           Tensor gx(x.shape());
                           std::copy(g.storage().begin(), g.storage().end(),
                                     gx.storage().begin() + begin * cols);
                           tape.accumulate(x, gx);
                         });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const Tensor& xv = x.value();
  require(begin <= end && end <= xv.cols(), "slice_cols", "range out of bounds");
  const std::size_t w = end - begin;
  Tensor out({xv.rows(), w});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r).subspan(begin, w);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return x.tape().record("slice_cols", std::move(out), {x}, [x, begin, w](Tape& tape, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      auto src = g.row(r);
      std::copy(src.begin(), src.end(), gx.row(r).begin() + begin);
    }
    tape.accumulate(x, gx);
  });
}

Var reshape(const Var& x, Tensor::Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    tape.accumulate(x, g.reshaped(x.shape()));
  });
}

Var gather_rows(const Var& m, std::span<const std::size_t> indices) {
  require_rank("gather_rows", m, 2);
  const Tensor& mv = m.value();
  const std::size_t cols = mv.cols();
  Tensor out({indices.size(), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= mv.rows()) {
      throw LookupError("gather_rows: row " + std::to_string(indices[i]) + " out of " +
                        std::to_string(mv.rows()));
    }
    auto src = mv.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return m.tape().record("gather_rows", std::move(out), {m}, [m, idx = std::move(idx)](Tape& tape, const Tensor& g) {
    Tensor gm(m.shape());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = g.row(i);
      auto dst = gm.row(idx[i]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    tape.accumulate(m, gm);
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().storage()) acc += v;
  return x.tape().record("sum", Tensor::scalar(acc), {x}, [x](Tape& tape, const Tensor& g) {
    tape.accumulate(x, Tensor(x.shape(), g.item()));
  });
}

Var sigmoid(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  const std::size_t self = x.tape().size();
  return x.tape().record("sigmoid", std::move(out), {x}, [x, self](Tape& tape, const Tensor& g) {
    const Tensor& yv = tape.value(self);
    Tensor gx(yv.shape());
    for (std::size_t i = 0; i < yv.size(); ++i) gx[i] = g[i] * yv[i] * (1.0 - yv[i]);
    tape.accumulate(x, gx);
  });
}

Var tanh(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
  const std::size_t self = x.tape().size();
  return x.tape().record("tanh", std::move(out), {x}, [x, self](Tape& tape, const Tensor& g) {
    const Tensor& yv = tape.value(self);
    Tensor gx(yv.shape());
    for (std::size_t i = 0; i < yv.size(); ++i) gx[i] = g[i] * (1.0 - yv[i] * yv[i]);
    tape.accumulate(x, gx);
  });
}

Var leaky_relu(const Var& x, double slope) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  return x.tape().record("leaky_relu", std::move(out), {x}, [x, slope](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = g[i] * (xv[i] > 0.0 ? 1.0 : slope);
    tape.accumulate(x, gx);
  });
}

Var hinge(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return x.tape().record("hinge", std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = xv[i] > 0.0 ? g[i] : 0.0;
    tape.accumulate(x, gx);
  });
}

Var segment_softmax(const Var& logits, std::span<const std::size_t> offsets) {
  require_rank("segment_softmax", logits, 1);
  const Tensor& lv = logits.value();
  require(!offsets.empty() && offsets.front() == 0 && offsets.back() == lv.size(), "segment_softmax",
          "offsets must start at 0 and end at the logit count");
  Tensor out(lv.shape());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t b = offsets[s], e = offsets[s + 1];
    require(b <= e, "segment_softmax", "offsets not monotone");
    if (b == e) continue;
    double mx = lv[b];
    for (std::size_t i = b; i < e; ++i) mx = std::max(mx, lv[i]);
    double z = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      out[i] = std::exp(lv[i] - mx);
      z += out[i];
    }
    for (std::size_t i = b; i < e; ++i) out[i] /= z;
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const std::size_t self = logits.tape().size();
  return logits.tape().record("softmax", std::move(out), {logits},
                              [logits, self, off = std::move(off)](Tape& tape, const Tensor& g) {
                                const Tensor& yv = tape.value(self);
                                Tensor gx(yv.shape());
                                for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                                  double inner = 0.0;
                                  for (std::size_t i = off[s]; i < off[s + 1]; ++i) inner += g[i] * yv[i];
                                  for (std::size_t i = off[s]; i < off[s + 1]; ++i) gx[i] = yv[i] * (g[i] - inner);
                                }
                                tape.accumulate(logits, gx);
                              });
}

Var softmax(const Var& logits) {
  require_rank("softmax", logits, 1);
  const std::size_t offsets[2] = {0, logits.value().size()};
  return segment_softmax(logits, offsets);
}

Var segment_weighted_sum(const Var& weights, const Var& x, std::span<const std::size_t> offsets) {
  require_rank("segment_weighted_sum", weights, 1);
  require_rank("segment_weighted_sum", x, 2);
  const Tensor& wv = weights.value();
  const Tensor& xv = x.value();
  require(wv.size() == xv.rows(), "segment_weighted_sum", "weight count vs rows");
  require(!offsets.empty() && offsets.front() == 0 && offsets.back() == wv.size(), "segment_weighted_sum",
          "offsets must start at 0 and end at the row count");
  const std::size_t segments = offsets.size() - 1;
  const std::size_t cols = xv.cols();
  Tensor out({segments, cols});
  for (std::size_t s = 0; s < segments; ++s) {
    auto dst = out.row(s);
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
      auto src = xv.row(i);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += wv[i] * src[c];
    }
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return weights.tape().record(
      "segment_weighted_sum", std::move(out), {weights, x},
      [weights, x, off = std::move(off)](Tape& tape, const Tensor& g) {
        const Tensor& wv = weights.value();
        const Tensor& xv = x.value();
        Tensor gw(wv.shape());
        Tensor gx(xv.shape());
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          auto gs = g.row(s);
          for (std::size_t i = off[s]; i < off[s + 1]; ++i) {
            auto xr = xv.row(i);
            auto gxr = gx.row(i);
            double acc = 0.0;
            for (std::size_t c = 0; c < gs.size(); ++c) {
              acc += gs[c] * xr[c];
              gxr[c] = wv[i] * gs[c];
            }
            gw[i] = acc;
          }
        }
        tape.accumulate(weights, gw);
        tape.accumulate(x, gx);
      });
}

Var l1_norm(const Var& v) {
  require_rank("l1_norm", v, 1);
  double acc = 0.0;
  for (double x : v.value().storage()) acc += std::abs(x);
  return v.tape().record("l1_norm", Tensor::scalar(acc), {v}, [v](Tape& tape, const Tensor& g) {
    const Tensor& vv = v.value();
    Tensor gv(vv.shape());
    for (std::size_t i = 0; i < vv.size(); ++i) gv[i] = g.item() * (vv[i] > 0.0 ? 1.0 : vv[i] < 0.0 ? -1.0 : 0.0);
    tape.accumulate(v, gv);
  });
}

Var l2_norm(const Var& v) {
  require_rank("l2_norm", v, 1);
  double acc = 0.0;
  for (double x : v.value().storage()) acc += x * x;
  const double n = std::sqrt(acc);
  return v.tape().record("l2_norm", Tensor::scalar(n), {v}, [v, n](Tape& tape, const Tensor& g) {
    const Tensor& vv = v.value();
    Tensor gv(vv.shape());
    if (n > 0.0) {
      for (std::size_t i = 0; i < vv.size(); ++i) gv[i] = g.item() * vv[i] / n;
    }
    tape.accumulate(v, gv);
  });
}

Var norm(const Var& v, Norm kind) { return kind == Norm::kL1 ? l1_norm(v) : l2_norm(v); }

Var row_norms(const Var& x, Norm kind) {
  require_rank("row_norms", x, 2);
  const Tensor& xv = x.value();
  Tensor out({xv.rows()});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double acc = 0.0;
    for (double e : xv.row(r)) acc += kind == Norm::kL1 ? std::abs(e) : e * e;
    out[r] = kind == Norm::kL1 ? acc : std::sqrt(acc);
  }
  const std::size_t self = x.tape().size();
  return x.tape().record("row_norms", std::move(out), {x}, [x, self, kind](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& yv = tape.value(self);
    Tensor gx(xv.shape());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      auto src = xv.row(r);
      auto dst = gx.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) {
        if (kind == Norm::kL1) {
          dst[c] = g[r] * (src[c] > 0.0 ? 1.0 : src[c] < 0.0 ? -1.0 : 0.0);
        } else if (yv[r] > 0.0) {
          dst[c] = g[r] * src[c] / yv[r];
        }
      }
    }
    tape.accumulate(x, gx);
  });
}

Var dot(const Var& a, const Var& b) {
  require_rank("dot", a, 1);
  require_same("dot", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value()[i] * b.value()[i];
  return a.tape().record("dot", Tensor::scalar(acc), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    const double s = g.item();
    if (a.requires_grad()) {
      Tensor ga = b.value();
      for (auto& e : ga.storage()) e *= s;
      tape.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb = a.value();
      for (auto& e : gb.storage()) e *= s;
      tape.accumulate(b, gb);
    }
  });
}

Var row_dot(const Var& a, const Var& b) {
  require_rank("row_dot", a, 2);
  require_same("row_dot", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({av.rows()});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto ar = av.row(r);
    auto br = bv.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < ar.size(); ++c) acc += ar[c] * br[c];
    out[r] = acc;
  }
  return a.tape().record("row_dot", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(av.shape());
      for (std::size_t r = 0; r < av.rows(); ++r) {
        for (std::size_t c = 0; c < av.cols(); ++c) ga.at(r, c) = g[r] * bv.at(r, c);
      }
      tape.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb(bv.shape());
      for (std::size_t r = 0; r < bv.rows(); ++r) {
        for (std::size_t c = 0; c < bv.cols(); ++c) gb.at(r, c) = g[r] * av.at(r, c);
      }
      tape.accumulate(b, gb);
    }
  });
}

LstmState lstm_cell(const Var& x, const Var& h_prev, const Var& c_prev, const Var& packed_weights) {
  const bool vector_mode = x.value().rank() == 1;
  auto as_rows = [&](const Var& v) { return vector_mode ? reshape(v, {1, v.value().size()}) : v; };
  const Var xm = as_rows(x);
  const Var hm = as_rows(h_prev);
  const Var cm = as_rows(c_prev);
  require_rank("lstm_cell", xm, 2);
  require_rank("lstm_cell", packed_weights, 2);
  const std::size_t batch = xm.value().rows();
  const std::size_t d_in = xm.value().cols();
  const std::size_t d = hm.value().cols();
  require(hm.value().rows() == batch && cm.value().shape() == hm.value().shape(), "lstm_cell",
          "state shape mismatch");
  require(packed_weights.value().rows() == 4 * d && packed_weights.value().cols() == d_in + d + 1, "lstm_cell",
          "packed weights " + shape_string(packed_weights.shape()) + " for d_in=" + std::to_string(d_in) +
              ", d=" + std::to_string(d));

  const Var w = slice_cols(packed_weights, 0, d_in + d);
  const Var b = reshape(slice_cols(packed_weights, d_in + d, d_in + d + 1), {4 * d});
  const Var gates = add_bias(matmul_nt(concat_cols({xm, hm}), w), b);
  const Var in_gate = sigmoid(slice_cols(gates, 0, d));
  const Var forget_gate = sigmoid(slice_cols(gates, d, 2 * d));
  const Var candidate = tanh(slice_cols(gates, 2 * d, 3 * d));
  const Var out_gate = sigmoid(slice_cols(gates, 3 * d, 4 * d));
  const Var c = add(mul(forget_gate, cm), mul(in_gate, candidate));
  const Var h = mul(out_gate, tanh(c));
  if (vector_mode) return {reshape(h, {d}), reshape(c, {d})};
  return {h, c};
}

}  // namespace kgnn
