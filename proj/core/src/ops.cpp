#include "tp3m/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tp3m {

namespace {

bool track(const Tensor& a) { return grad_enabled() && a.requires_grad; }
bool track(const Tensor& a, const Tensor& b) { return track(a) || track(b); }

Tensor make_out(std::vector<int> shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const Tensor&)> backward) {
  out.node = std::make_shared<TapeNode>();
  out.node->parents = std::move(parents);
  out.node->backward = std::move(backward);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a, b));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  check_finite(out, "add");
  if (out.requires_grad) {
    attach(out, {a, b}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t m = o.data->size();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < m; ++i) (*pb.grad)[i] += (*o.grad)[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a, b));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  check_finite(out, "sub");
  if (out.requires_grad) {
    attach(out, {a, b}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t m = o.data->size();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < m; ++i) (*pb.grad)[i] -= (*o.grad)[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a, b));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  check_finite(out, "mul");
  if (out.requires_grad) {
    attach(out, {a, b}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t m = o.data->size();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < m; ++i) (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a, b));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] / (*b.data)[i];
  check_finite(out, "div");
  if (out.requires_grad) {
    attach(out, {a, b}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = (*o.grad)[i];
        const double bv = (*pb.data)[i];
        if (pa.requires_grad) (*pa.grad)[i] += g / bv;
        if (pb.requires_grad) (*pb.grad)[i] -= g * (*pa.data)[i] / (bv * bv);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * s;
  check_finite(out, "scale");
  if (out.requires_grad) {
    attach(out, {a}, [s](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i] * s;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + s;
  check_finite(out, "add_scalar");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
    });
  }
  return out;
}

Tensor rsub_scalar(double s, const Tensor& a) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = s - (*a.data)[i];
  check_finite(out, "rsub_scalar");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] -= (*o.grad)[i];
    });
  }
  return out;
}

Tensor mul_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw std::runtime_error("mul_scalar_t: s must be a 1-element tensor");
  const std::size_t n = a.data->size();
  const double sv = (*s.data)[0];
  Tensor out = make_out(a.shape, track(a, s));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * sv;
  check_finite(out, "mul_scalar_t");
  if (out.requires_grad) {
    attach(out, {a, s}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& ps = o.node->parents[1];
      const std::size_t m = o.data->size();
      const double svb = (*ps.data)[0];
      for (std::size_t i = 0; i < m; ++i) {
        const double g = (*o.grad)[i];
        if (pa.requires_grad) (*pa.grad)[i] += g * svb;
        if (ps.requires_grad) (*ps.grad)[0] += g * (*pa.data)[i];
      }
    });
  }
  return out;
}

Tensor div_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw std::runtime_error("div_scalar_t: s must be a 1-element tensor");
  const std::size_t n = a.data->size();
  const double sv = (*s.data)[0];
  Tensor out = make_out(a.shape, track(a, s));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] / sv;
  check_finite(out, "div_scalar_t");
  if (out.requires_grad) {
    attach(out, {a, s}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& ps = o.node->parents[1];
      const std::size_t m = o.data->size();
      const double svb = (*ps.data)[0];
      for (std::size_t i = 0; i < m; ++i) {
        const double g = (*o.grad)[i];
        if (pa.requires_grad) (*pa.grad)[i] += g / svb;
        if (ps.requires_grad) (*ps.grad)[0] -= g * (*pa.data)[i] / (svb * svb);
      }
    });
  }
  return out;
}

Tensor tanh_t(const Tensor& a) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::tanh((*a.data)[i]);
  check_finite(out, "tanh");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) {
        const double y = (*o.data)[i];
        (*pa.grad)[i] += (*o.grad)[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (*a.data)[i];
    (*out.data)[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  check_finite(out, "sigmoid");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) {
        const double y = (*o.data)[i];
        (*pa.grad)[i] += (*o.grad)[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor log_t(const Tensor& a) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::log((*a.data)[i]);
  check_finite(out, "log");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i] / (*pa.data)[i];
    });
  }
  return out;
}

Tensor softplus(const Tensor& a) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (*a.data)[i];
    (*out.data)[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  check_finite(out, "softplus");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) {
        const double x = (*pa.data)[i];
        const double sig =
            x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        (*pa.grad)[i] += (*o.grad)[i] * sig;
      }
    });
  }
  return out;
}

Tensor sqrt_t(const Tensor& a) {
  const std::size_t n = a.data->size();
  Tensor out = make_out(a.shape, track(a));
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::sqrt((*a.data)[i]);
  check_finite(out, "sqrt");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) {
        const double y = (*o.data)[i];
        // Zero-safe: at y == 0 the contribution is dropped rather than Inf.
        if (y > 1e-150) (*pa.grad)[i] += (*o.grad)[i] * 0.5 / y;
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : *a.data) s += v;
  Tensor out = Tensor::from({s}, {1}, track(a));
  check_finite(out, "sum");
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const double g = (*o.grad)[0];
      const std::size_t m = pa.data->size();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : *a.data) s += v;
  Tensor out = Tensor::from({s * inv}, {1}, track(a));
  check_finite(out, "mean");
  if (out.requires_grad) {
    attach(out, {a}, [inv](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const double g = (*o.grad)[0] * inv;
      const std::size_t m = pa.data->size();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += g;
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
    throw std::runtime_error("matmul: incompatible shapes " + shape_str(a) + " x " + shape_str(b));
  }
  const int n = a.shape[0], k = a.shape[1], m = b.shape[1];
  Tensor out = make_out({n, m}, track(a, b));
  const double* ap = a.ptr();
  const double* bp = b.ptr();
  double* op = out.ptr();
  for (int i = 0; i < n; ++i) {
    double* orow = op + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ap[static_cast<std::size_t>(i) * k + kk];
      if (av == 0.0) continue;
      const double* brow = bp + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  check_finite(out, "matmul");
  if (out.requires_grad) {
    attach(out, {a, b}, [n, k, m](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const double* og = o.gptr();
      if (pa.requires_grad) {
        // dA = dC * B^T
        double* ag = pa.gptr();
        const double* bp2 = pb.ptr();
        for (int i = 0; i < n; ++i) {
          for (int kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* orow = og + static_cast<std::size_t>(i) * m;
            const double* brow = bp2 + static_cast<std::size_t>(kk) * m;
            for (int j = 0; j < m; ++j) acc += orow[j] * brow[j];
            ag[static_cast<std::size_t>(i) * k + kk] += acc;
          }
        }
      }
      if (pb.requires_grad) {
        // dB = A^T * dC
        double* bg = pb.gptr();
        const double* ap2 = pa.ptr();
        for (int kk = 0; kk < k; ++kk) {
          double* bgrow = bg + static_cast<std::size_t>(kk) * m;
          for (int i = 0; i < n; ++i) {
            const double av = ap2[static_cast<std::size_t>(i) * k + kk];
            if (av == 0.0) continue;
            const double* orow = og + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) bgrow[j] += av * orow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose2d(const Tensor& a) {
  if (a.shape.size() != 2) throw std::runtime_error("transpose2d: need 2-D tensor");
  const int n = a.shape[0], m = a.shape[1];
  Tensor out = make_out({m, n}, track(a));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(j, i) = a.at(i, j);
  if (out.requires_grad) {
    attach(out, {a}, [n, m](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          (*pa.grad)[static_cast<std::size_t>(i) * m + j] +=
              (*o.grad)[static_cast<std::size_t>(j) * n + i];
    });
  }
  return out;
}

Tensor bias_rows(const Tensor& x, const Tensor& b) {
  if (x.shape.size() != 2 || b.shape.size() != 1 || b.shape[0] != x.shape[1]) {
    throw std::runtime_error("bias_rows: shapes " + shape_str(x) + ", " + shape_str(b));
  }
  const int n = x.shape[0], d = x.shape[1];
  Tensor out = make_out(x.shape, track(x, b));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + b.at(j);
  check_finite(out, "bias_rows");
  if (out.requires_grad) {
    attach(out, {x, b}, [n, d](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
          const double g = (*o.grad)[static_cast<std::size_t>(i) * d + j];
          if (px.requires_grad) (*px.grad)[static_cast<std::size_t>(i) * d + j] += g;
          if (pb.requires_grad) (*pb.grad)[j] += g;
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return bias_rows(matmul(x, w), b);
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  Tensor out = make_out(new_shape, track(a));
  if (out.numel() != a.numel()) throw std::runtime_error("reshape: element count mismatch");
  *out.data = *a.data;
  if (out.requires_grad) {
    attach(out, {a}, [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const std::size_t m = o.data->size();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
    });
  }
  return out;
}

Tensor tokens_from_chw(const Tensor& a) {
  if (a.shape.size() != 3) throw std::runtime_error("tokens_from_chw: need {C,H,W}");
  const int c = a.shape[0], h = a.shape[1], w = a.shape[2];
  const int n = h * w;
  Tensor out = make_out({n, c}, track(a));
  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < n; ++p)
      (*out.data)[static_cast<std::size_t>(p) * c + ch] =
          (*a.data)[static_cast<std::size_t>(ch) * n + p];
  if (out.requires_grad) {
    attach(out, {a}, [c, n](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < n; ++p)
          (*pa.grad)[static_cast<std::size_t>(ch) * n + p] +=
              (*o.grad)[static_cast<std::size_t>(p) * c + ch];
    });
  }
  return out;
}

Tensor chw_from_tokens(const Tensor& a, int h, int w) {
  if (a.shape.size() != 2 || a.shape[0] != h * w)
    throw std::runtime_error("chw_from_tokens: token count does not match h*w");
  const int n = a.shape[0], c = a.shape[1];
  Tensor out = make_out({c, h, w}, track(a));
  for (int p = 0; p < n; ++p)
    for (int ch = 0; ch < c; ++ch)
      (*out.data)[static_cast<std::size_t>(ch) * n + p] =
          (*a.data)[static_cast<std::size_t>(p) * c + ch];
  if (out.requires_grad) {
    attach(out, {a}, [c, n](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      for (int p = 0; p < n; ++p)
        for (int ch = 0; ch < c; ++ch)
          (*pa.grad)[static_cast<std::size_t>(p) * c + ch] +=
              (*o.grad)[static_cast<std::size_t>(ch) * n + p];
    });
  }
  return out;
}

Tensor softmax(const Tensor& a, int axis) {
  if (a.shape.size() != 2) throw std::runtime_error("softmax: need 2-D tensor");
  if (axis != 0 && axis != 1) throw std::runtime_error("softmax: axis must be 0 or 1");
  const int n = a.shape[0], m = a.shape[1];
  if ((axis == 1 && m < 1) || (axis == 0 && n < 1)) throw std::runtime_error("softmax: empty axis");
  Tensor out = make_out(a.shape, track(a));
  const int outer = axis == 1 ? n : m;
  const int inner = axis == 1 ? m : n;
  const int ostr = axis == 1 ? m : 1;
  const int istr = axis == 1 ? 1 : m;
  const double* ap = a.ptr();
  double* op = out.ptr();
  for (int i = 0; i < outer; ++i) {
    const double* row = ap + static_cast<std::size_t>(i) * ostr;
    double* orow = op + static_cast<std::size_t>(i) * ostr;
    double mx = row[0];
    for (int j = 1; j < inner; ++j) mx = std::max(mx, row[static_cast<std::size_t>(j) * istr]);
    double s = 0.0;
    for (int j = 0; j < inner; ++j) {
      const double e = std::exp(row[static_cast<std::size_t>(j) * istr] - mx);
      orow[static_cast<std::size_t>(j) * istr] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < inner; ++j) orow[static_cast<std::size_t>(j) * istr] *= inv;
  }
  check_finite(out, "softmax");
  if (out.requires_grad) {
    attach(out, {a}, [outer, inner, ostr, istr](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const double* yp = o.ptr();
      const double* gp = o.gptr();
      double* ag = pa.gptr();
      for (int i = 0; i < outer; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * ostr;
        double dot = 0.0;
        for (int j = 0; j < inner; ++j) {
          const std::size_t idx = base + static_cast<std::size_t>(j) * istr;
          dot += gp[idx] * yp[idx];
        }
        for (int j = 0; j < inner; ++j) {
          const std::size_t idx = base + static_cast<std::size_t>(j) * istr;
          ag[idx] += yp[idx] * (gp[idx] - dot);
        }
      }
    });
  }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::vector<double>* weights_out) {
  if (q.shape.size() != 2 || k.shape.size() != 2 || v.shape.size() != 2)
    throw std::runtime_error("attention: need 2-D tensors");
  if (q.shape[1] != k.shape[1])
    throw std::runtime_error("attention: Q/K feature dim mismatch");
  if (k.shape[0] != v.shape[0])
    throw std::runtime_error("attention: K/V row count mismatch");
  if (k.shape[0] < 1) throw std::runtime_error("attention: need at least one key");
  check_finite(q, "attention(q)");
  check_finite(k, "attention(k)");
  check_finite(v, "attention(v)");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.shape[1]));
  Tensor scores = scale(matmul(q, transpose2d(k)), inv_sqrt_d);
  Tensor w = softmax(scores, 1);
  if (weights_out) *weights_out = *w.data;
  return matmul(w, v);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, int stride,
              int padding) {
  if (input.shape.size() != 3 || kernel.shape.size() != 4)
    throw std::runtime_error("conv2d: input must be {C,H,W}, kernel {Cout,Cin,kh,kw}");
  const int cin = input.shape[0], h = input.shape[1], w = input.shape[2];
  const int cout = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
  if (kernel.shape[1] != cin) throw std::runtime_error("conv2d: channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw std::runtime_error("conv2d: kernel dims must be odd");
  if (stride < 1) throw std::runtime_error("conv2d: stride must be >= 1");
  if (kh > h + 2 * padding || kw > w + 2 * padding)
    throw std::runtime_error("conv2d: kernel larger than padded input");
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != cout))
    throw std::runtime_error("conv2d: bias shape");

  const bool rg = track(input) || track(kernel) || (bias && track(*bias));
  Tensor out = make_out({cout, oh, ow}, rg);
  const double* ip = input.ptr();
  const double* kp = kernel.ptr();
  double* op = out.ptr();
  for (int oc = 0; oc < cout; ++oc) {
    const double bval = bias ? bias->at(oc) : 0.0;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bval;
        const int iy0 = oy * stride - padding;
        const int ix0 = ox * stride - padding;
        for (int ic = 0; ic < cin; ++ic) {
          const double* iplane = ip + static_cast<std::size_t>(ic) * h * w;
          const double* kplane =
              kp + (static_cast<std::size_t>(oc) * cin + ic) * kh * kw;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            const double* irow = iplane + static_cast<std::size_t>(iy) * w;
            const double* krow = kplane + static_cast<std::size_t>(ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= w) continue;
              acc += irow[ix] * krow[kx];
            }
          }
        }
        op[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
      }
    }
  }
  check_finite(out, "conv2d");
  if (out.requires_grad) {
    std::vector<Tensor> parents{input, kernel};
    if (bias) parents.push_back(*bias);
    const bool has_bias = bias != nullptr;
    attach(out, std::move(parents),
           [cin, h, w, cout, kh, kw, oh, ow, stride, padding, has_bias](const Tensor& o) {
             const Tensor& pin = o.node->parents[0];
             const Tensor& pk = o.node->parents[1];
             const double* og = o.gptr();
             const double* ip2 = pin.ptr();
             const double* kp2 = pk.ptr();
             for (int oc = 0; oc < cout; ++oc) {
               for (int oy = 0; oy < oh; ++oy) {
                 for (int ox = 0; ox < ow; ++ox) {
                   const double g = og[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
                   if (g == 0.0) continue;
                   const int iy0 = oy * stride - padding;
                   const int ix0 = ox * stride - padding;
                   for (int ic = 0; ic < cin; ++ic) {
                     const std::size_t ibase = static_cast<std::size_t>(ic) * h * w;
                     const std::size_t kbase =
                         (static_cast<std::size_t>(oc) * cin + ic) * kh * kw;
                     for (int ky = 0; ky < kh; ++ky) {
                       const int iy = iy0 + ky;
                       if (iy < 0 || iy >= h) continue;
                       for (int kx = 0; kx < kw; ++kx) {
                         const int ix = ix0 + kx;
                         if (ix < 0 || ix >= w) continue;
                         const std::size_t ii = ibase + static_cast<std::size_t>(iy) * w + ix;
                         const std::size_t ki = kbase + static_cast<std::size_t>(ky) * kw + kx;
                         if (pin.requires_grad) (*pin.grad)[ii] += g * kp2[ki];
                         if (pk.requires_grad) (*pk.grad)[ki] += g * ip2[ii];
                       }
                     }
                   }
                   if (has_bias) {
                     const Tensor& pb = o.node->parents[2];
                     if (pb.requires_grad) (*pb.grad)[oc] += g;
                   }
                 }
               }
             }
           });
  }
  return out;
}

Tensor conv2d_depthwise(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        int stride, int padding) {
  if (input.shape.size() != 3 || kernel.shape.size() != 3)
    throw std::runtime_error("conv2d_depthwise: input {C,H,W}, kernel {C,kh,kw}");
  const int c = input.shape[0], h = input.shape[1], w = input.shape[2];
  const int kh = kernel.shape[1], kw = kernel.shape[2];
  if (kernel.shape[0] != c) throw std::runtime_error("conv2d_depthwise: channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::runtime_error("conv2d_depthwise: kernel dims must be odd");
  if (stride < 1) throw std::runtime_error("conv2d_depthwise: stride must be >= 1");
  if (kh > h + 2 * padding || kw > w + 2 * padding)
    throw std::runtime_error("conv2d_depthwise: kernel larger than padded input");
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != c))
    throw std::runtime_error("conv2d_depthwise: bias shape");

  const bool rg = track(input) || track(kernel) || (bias && track(*bias));
  Tensor out = make_out({c, oh, ow}, rg);
  const double* ip = input.ptr();
  const double* kp = kernel.ptr();
  double* op = out.ptr();
  for (int ch = 0; ch < c; ++ch) {
    const double bval = bias ? bias->at(ch) : 0.0;
    const double* iplane = ip + static_cast<std::size_t>(ch) * h * w;
    const double* kplane = kp + static_cast<std::size_t>(ch) * kh * kw;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bval;
        const int iy0 = oy * stride - padding;
        const int ix0 = ox * stride - padding;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = iy0 + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ix0 + kx;
            if (ix < 0 || ix >= w) continue;
            acc += iplane[static_cast<std::size_t>(iy) * w + ix] *
                   kplane[static_cast<std::size_t>(ky) * kw + kx];
          }
        }
        op[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox] = acc;
      }
    }
  }
  check_finite(out, "conv2d_depthwise");
  if (out.requires_grad) {
    std::vector<Tensor> parents{input, kernel};
    if (bias) parents.push_back(*bias);
    const bool has_bias = bias != nullptr;
    attach(out, std::move(parents),
           [c, h, w, kh, kw, oh, ow, stride, padding, has_bias](const Tensor& o) {
             const Tensor& pin = o.node->parents[0];
             const Tensor& pk = o.node->parents[1];
             const double* og = o.gptr();
             const double* ip2 = pin.ptr();
             const double* kp2 = pk.ptr();
             for (int ch = 0; ch < c; ++ch) {
               const std::size_t ibase = static_cast<std::size_t>(ch) * h * w;
               const std::size_t kbase = static_cast<std::size_t>(ch) * kh * kw;
               for (int oy = 0; oy < oh; ++oy) {
                 for (int ox = 0; ox < ow; ++ox) {
                   const double g = og[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox];
                   if (g == 0.0) continue;
                   const int iy0 = oy * stride - padding;
                   const int ix0 = ox * stride - padding;
                   for (int ky = 0; ky < kh; ++ky) {
                     const int iy = iy0 + ky;
                     if (iy < 0 || iy >= h) continue;
                     for (int kx = 0; kx < kw; ++kx) {
                       const int ix = ix0 + kx;
                       if (ix < 0 || ix >= w) continue;
                       const std::size_t ii = ibase + static_cast<std::size_t>(iy) * w + ix;
                       const std::size_t ki = kbase + static_cast<std::size_t>(ky) * kw + kx;
                       if (pin.requires_grad) (*pin.grad)[ii] += g * kp2[ki];
                       if (pk.requires_grad) (*pk.grad)[ki] += g * ip2[ii];
                     }
                   }
                   if (has_bias) {
                     const Tensor& pb = o.node->parents[2];
                     if (pb.requires_grad) (*pb.grad)[ch] += g;
                   }
                 }
               }
             }
           });
  }
  return out;
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  if (input.shape.size() != 3) throw std::runtime_error("upsample_nearest: need {C,H,W}");
  if (factor < 1) throw std::runtime_error("upsample_nearest: factor must be >= 1");
  const int c = input.shape[0], h = input.shape[1], w = input.shape[2];
  const int oh = h * factor, ow = w * factor;
  Tensor out = make_out({c, oh, ow}, track(input));
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        out.at(ch, oy, ox) = input.at(ch, oy / factor, ox / factor);
  if (out.requires_grad) {
    attach(out, {input}, [c, h, w, factor, oh, ow](const Tensor& o) {
      const Tensor& pin = o.node->parents[0];
      for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            (*pin.grad)[(static_cast<std::size_t>(ch) * h + oy / factor) * w + ox / factor] +=
                (*o.grad)[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox];
    });
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  if (x.shape.size() != 2) throw std::runtime_error("l2_normalize_rows: need 2-D tensor");
  const int n = x.shape[0], d = x.shape[1];
  Tensor out = make_out(x.shape, track(x));
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = x.at(i, j);
      s += v * v;
    }
    norms[i] = std::max(std::sqrt(s), eps);
    for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) / norms[i];
  }
  check_finite(out, "l2_normalize_rows");
  if (out.requires_grad) {
    attach(out, {x}, [n, d, norms](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j)
          dot += (*o.grad)[static_cast<std::size_t>(i) * d + j] * o.at(i, j);
        for (int j = 0; j < d; ++j) {
          const double g = (*o.grad)[static_cast<std::size_t>(i) * d + j];
          (*px.grad)[static_cast<std::size_t>(i) * d + j] += (g - o.at(i, j) * dot) / norms[i];
        }
      }
    });
  }
  return out;
}

Tensor center_tokens(const Tensor& x) {
  if (x.shape.size() != 2) throw std::runtime_error("center_tokens: need 2-D tensor");
  const int n = x.shape[0], d = x.shape[1];
  Tensor out = make_out(x.shape, track(x));
  std::vector<double> mu(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mu[j] += x.at(i, j);
  for (int j = 0; j < d; ++j) mu[j] /= n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) - mu[j];
  check_finite(out, "center_tokens");
  if (out.requires_grad) {
    attach(out, {x}, [n, d](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      for (int j = 0; j < d; ++j) {
        double gmean = 0.0;
        for (int i = 0; i < n; ++i) gmean += (*o.grad)[static_cast<std::size_t>(i) * d + j];
        gmean /= n;
        for (int i = 0; i < n; ++i)
          (*px.grad)[static_cast<std::size_t>(i) * d + j] +=
              (*o.grad)[static_cast<std::size_t>(i) * d + j] - gmean;
      }
    });
  }
  return out;
}

Tensor gather_cells(const Tensor& m, const std::vector<std::pair<int, int>>& cells) {
  if (m.shape.size() != 2) throw std::runtime_error("gather_cells: need 2-D tensor");
  const int rows = m.shape[0], cols = m.shape[1];
  Tensor out = make_out({static_cast<int>(cells.size())}, track(m));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [r, c] = cells[i];
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw std::runtime_error("gather_cells: index out of range");
    (*out.data)[i] = m.at(r, c);
  }
  if (out.requires_grad) {
    attach(out, {m}, [cells, cols](const Tensor& o) {
      const Tensor& pm = o.node->parents[0];
      for (std::size_t i = 0; i < cells.size(); ++i) {
        (*pm.grad)[static_cast<std::size_t>(cells[i].first) * cols + cells[i].second] +=
            (*o.grad)[i];
      }
    });
  }
  return out;
}

}  // namespace tp3m
