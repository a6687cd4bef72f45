#include "mvam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mvam/error.hpp"

namespace mvam {

namespace {

using detail::Node;

// Grad buffer of input `i`, or nullptr when it takes no gradient.
std::vector<double>* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return &in.ensure_grad();
}

const std::vector<double>& input_data(const Node& self, std::size_t i) {
  return self.inputs[i]->data;
}

ShapeError mismatch(const char* op, const Tensor& a, const Tensor& b) {
  return ShapeError(std::string(op) + ": incompatible shapes " +
                    to_string(a.shape()) + " and " + to_string(b.shape()));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

void matmul_kernel(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Elementwise binary op with single-element broadcast on either side.
template <typename Fwd, typename DA, typename DB>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b,
                          Fwd fwd, DA da, DB db) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw mismatch(name, a, b);
  }
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = element_count(shape);
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  return Tensor::make_result(
      shape, std::move(out), {a, b},
      [a_scalar, b_scalar, n, da, db](Node& self) {
        const auto& x = input_data(self, 0);
        const auto& y = input_data(self, 1);
        auto* gx = input_grad(self, 0);
        auto* gy = input_grad(self, 1);
        for (std::size_t i = 0; i < n; ++i) {
          const double xv = x[a_scalar ? 0 : i];
          const double yv = y[b_scalar ? 0 : i];
          const double g = self.grad[i];
          if (gx) (*gx)[a_scalar ? 0 : i] += g * da(xv, yv);
          if (gy) (*gy)[b_scalar ? 0 : i] += g * db(xv, yv);
        }
      });
}

// Unary op whose derivative is a function of (input, output).
template <typename Fwd, typename Deriv>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Deriv deriv) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [deriv](Node& self) {
                               const auto& in = input_data(self, 0);
                               auto* g = input_grad(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < in.size(); ++i) {
                                 (*g)[i] += self.grad[i] *
                                            deriv(in[i], self.data[i]);
                               }
                             });
}

double apply_activation(double v, Activation kind) {
  switch (kind) {
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kIdentity:
      break;
  }
  return v;
}

// Derivative expressed through the activation's output.
double activation_slope(double out, Activation kind) {
  switch (kind) {
    case Activation::kTanh:
      return 1.0 - out * out;
    case Activation::kRelu:
      return out > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      break;
  }
  return 1.0;
}

// Clamped to the open interval so that saturated logits never yield an
// exact 0 or 1.
double stable_sigmoid(double v) {
  constexpr double kLow = std::numeric_limits<double>::denorm_min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double s;
  if (v >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-v));
  } else {
    const double e = std::exp(v);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kLow, kHigh);
}

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Summation summation) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw mismatch("matmul", a, b);
  std::vector<double> out(m * n, 0.0);
  if (summation == Summation::kSorted) {
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < k; ++p) terms[p] = av[i * k + p] * bv[p * n + j];
        out[i * n + j] = sorted_sum(terms);
      }
    }
  } else {
    matmul_kernel(a.data().data(), b.data().data(), out.data(), m, k, n);
  }
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        const auto& av = input_data(self, 0);
        const auto& bv = input_data(self, 1);
        const double* g = self.grad.data();
        if (auto* ga = input_grad(self, 0)) {
          // dA = dC * B^T
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                acc += g[i * n + j] * bv[p * n + j];
              }
              (*ga)[i * k + p] += acc;
            }
          }
        }
        if (auto* gb = input_grad(self, 1)) {
          // dB = A^T * dC
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double av_ip = av[i * k + p];
              if (av_ip == 0.0) continue;
              double* row = gb->data() + p * n;
              for (std::size_t j = 0; j < n; ++j) row[j] += av_ip * g[i * n + j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto av = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return Tensor::make_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto* g = input_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (bias.size() != c) throw mismatch("add_bias", x, bias);
  auto xv = x.data();
  auto bv = bias.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] + bv[j];
  }
  return Tensor::make_result({r, c}, std::move(out), {x, bias},
                             [r, c](Node& self) {
                               if (auto* gx = input_grad(self, 0)) {
                                 for (std::size_t i = 0; i < r * c; ++i) {
                                   (*gx)[i] += self.grad[i];
                                 }
                               }
                               if (auto* gb = input_grad(self, 1)) {
                                 for (std::size_t i = 0; i < r; ++i) {
                                   for (std::size_t j = 0; j < c; ++j) {
                                     (*gb)[j] += self.grad[i * c + j];
                                   }
                                 }
                               }
                             });
}

Tensor relu(const Tensor& x) { return activate(x, Activation::kRelu); }

Tensor tanh(const Tensor& x) { return activate(x, Activation::kTanh); }

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, stable_sigmoid, [](double, double out) { return out * (1.0 - out); });
}

Tensor activate(const Tensor& x, Activation kind) {
  if (kind == Activation::kIdentity) {
    return unary_elementwise(
        x, [](double v) { return v; }, [](double, double) { return 1.0; });
  }
  return unary_elementwise(
      x, [kind](double v) { return apply_activation(v, kind); },
      [kind](double, double out) { return activation_slope(out, kind); });
}

Tensor dropout(const Tensor& x, double p, std::uint64_t seed, bool train) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1), got " +
                      std::to_string(p));
  }
  if (!train || p == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(p);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factors(x.size());
  for (double& f : factors) f = drop(rng) ? 0.0 : keep_scale;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factors[i];
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [factors = std::move(factors)](Node& self) {
                               auto* g = input_grad(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < factors.size(); ++i) {
                                 (*g)[i] += self.grad[i] * factors[i];
                               }
                             });
}

Tensor softmax_rows(const Tensor& x, std::optional<Mask> mask, Summation summation) {
  require_rank("softmax_rows", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  const bool shared_mask = mask && mask->size() == c && r != 1;
  if (mask && !shared_mask && mask->size() != r * c) {
    throw ShapeError("softmax_rows: mask of " + std::to_string(mask->size()) +
                     " entries for input " + to_string(x.shape()));
  }
  auto keep = [&](std::size_t i, std::size_t j) {
    if (!mask) return true;
    return (*mask)[shared_mask ? j : i * c + j] != 0;
  };
  auto xv = x.data();
  std::vector<double> out(r * c, 0.0);
  std::vector<double> terms;
  for (std::size_t i = 0; i < r; ++i) {
    double row_max = -INFINITY;
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      if (keep(i, j)) {
        row_max = std::max(row_max, xv[i * c + j]);
        any = true;
      }
    }
    if (!any) {
      throw Error("softmax_rows: row " + std::to_string(i) +
                  " is fully masked");
    }
    double total = 0.0;
    terms.clear();
    for (std::size_t j = 0; j < c; ++j) {
      if (!keep(i, j)) continue;
      const double e = std::exp(xv[i * c + j] - row_max);
      out[i * c + j] = e;
      if (summation == Summation::kSorted) {
        terms.push_back(e);
      } else {
        total += e;
      }
    }
    if (summation == Summation::kSorted) total = sorted_sum(terms);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  // Masked outputs are exactly 0, so they drop out of the Jacobian below.
  return Tensor::make_result({r, c}, std::move(out), {x}, [r, c](Node& self) {
    auto* g = input_grad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        (*g)[i * c + j] += y[i * c + j] * (self.grad[i * c + j] - dot);
      }
    }
  });
}

namespace {

// Standardises groups of `count` elements laid out with `stride`; used for
// both row (layer) and column (batch) statistics.
Tensor normalize_groups(const char* name, const Tensor& x, const Tensor& gain,
                        const Tensor& bias, double eps, bool over_rows) {
  require_rank(name, x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (gain.size() != c) throw mismatch(name, x, gain);
  if (bias.size() != c) throw mismatch(name, x, bias);
  if (!(eps > 0.0)) throw ConfigError(std::string(name) + ": eps must be > 0");

  const std::size_t groups = over_rows ? r : c;
  const std::size_t count = over_rows ? c : r;
  auto index = [=](std::size_t group, std::size_t k) {
    return over_rows ? group * c + k : k * c + group;
  };
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<double> xhat(r * c);
  std::vector<double> inv_std(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double mean = 0.0;
    for (std::size_t k = 0; k < count; ++k) mean += xv[index(gi, k)];
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double d = xv[index(gi, k)] - mean;
      var += d * d;
    }
    var /= static_cast<double>(count);
    inv_std[gi] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < count; ++k) {
      xhat[index(gi, k)] = (xv[index(gi, k)] - mean) * inv_std[gi];
    }
  }
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return Tensor::make_result(
      {r, c}, std::move(out), {x, gain, bias},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv_in = input_data(self, 1);
        const double* g = self.grad.data();
        if (auto* ggain = input_grad(self, 1)) {
          for (std::size_t i = 0; i < r * c; ++i) {
            (*ggain)[i % c] += g[i] * xhat[i];
          }
        }
        if (auto* gbias = input_grad(self, 2)) {
          for (std::size_t i = 0; i < r * c; ++i) (*gbias)[i % c] += g[i];
        }
        auto* gx = input_grad(self, 0);
        if (!gx) return;
        const double inv_count = 1.0 / static_cast<double>(count);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          // dxhat = g * gain; dx = inv_std * (dxhat - mean(dxhat)
          //                                   - xhat * mean(dxhat * xhat))
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t k = 0; k < count; ++k) {
            const std::size_t idx = index(gi, k);
            const double d = g[idx] * gv_in[idx % c];
            mean_d += d;
            mean_dx += d * xhat[idx];
          }
          mean_d *= inv_count;
          mean_dx *= inv_count;
          for (std::size_t k = 0; k < count; ++k) {
            const std::size_t idx = index(gi, k);
            const double d = g[idx] * gv_in[idx % c];
            (*gx)[idx] += inv_std[gi] * (d - mean_d - xhat[idx] * mean_dx);
          }
        }
      });
}

}  // namespace

Tensor layer_normalize(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps) {
  if (x.rank() == 2 && x.dim(1) < 2) {
    throw ShapeError("layer_normalize: needs at least 2 features, got " +
                     to_string(x.shape()));
  }
  return normalize_groups("layer_normalize", x, gain, bias, eps, true);
}

Tensor batch_normalize(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps) {
  return normalize_groups("batch_normalize", x, gain, bias, eps, false);
}

Tensor conv1d_same(const Tensor& input, const Tensor& kernel,
                   const Tensor& bias, Activation activation) {
  require_rank("conv1d_same", input, 2);
  require_rank("conv1d_same", kernel, 3);
  const std::size_t d_in = input.dim(0), len = input.dim(1);
  const std::size_t k = kernel.dim(0), d_out = kernel.dim(2);
  if (kernel.dim(1) != d_in) throw mismatch("conv1d_same", input, kernel);
  if (bias.size() != d_out) throw mismatch("conv1d_same", kernel, bias);
  const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((k - 1) / 2);

  // Position-major copy of the input so the inner loops run contiguously.
  auto iv = input.data();
  std::vector<double> cols(len * d_in);
  for (std::size_t e = 0; e < d_in; ++e) {
    for (std::size_t n = 0; n < len; ++n) cols[n * d_in + e] = iv[e * len + n];
  }
  auto kv = kernel.data();
  auto bv = bias.data();
  std::vector<double> pre(len * d_out);  // position-major pre-activations
  for (std::size_t i = 0; i < len; ++i) {
    double* acc = pre.data() + i * d_out;
    std::copy(bv.begin(), bv.end(), acc);
    for (std::size_t t = 0; t < k; ++t) {
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i + t) - left;
      if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
      const double* x = cols.data() + static_cast<std::size_t>(pos) * d_in;
      const double* w = kv.data() + t * d_in * d_out;
      for (std::size_t e = 0; e < d_in; ++e) {
        const double xe = x[e];
        if (xe == 0.0) continue;
        const double* we = w + e * d_out;
        for (std::size_t c = 0; c < d_out; ++c) acc[c] += we[c] * xe;
      }
    }
  }
  std::vector<double> out(d_out * len);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t c = 0; c < d_out; ++c) {
      out[c * len + i] = apply_activation(pre[i * d_out + c], activation);
    }
  }
  return Tensor::make_result(
      {d_out, len}, std::move(out), {input, kernel, bias},
      [=, cols = std::move(cols)](Node& self) {
        const auto& kv_in = input_data(self, 1);
        // Gradient w.r.t. pre-activations, position-major.
        std::vector<double> dpre(len * d_out);
        for (std::size_t c = 0; c < d_out; ++c) {
          for (std::size_t i = 0; i < len; ++i) {
            dpre[i * d_out + c] =
                self.grad[c * len + i] *
                activation_slope(self.data[c * len + i], activation);
          }
        }
        auto* gin = input_grad(self, 0);
        auto* gk = input_grad(self, 1);
        if (auto* gb = input_grad(self, 2)) {
          for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t c = 0; c < d_out; ++c) (*gb)[c] += dpre[i * d_out + c];
          }
        }
        if (!gin && !gk) return;
        std::vector<double> dcols(gin ? len * d_in : 0, 0.0);
        for (std::size_t i = 0; i < len; ++i) {
          const double* dp = dpre.data() + i * d_out;
          for (std::size_t t = 0; t < k; ++t) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i + t) - left;
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
            const std::size_t upos = static_cast<std::size_t>(pos);
            const double* x = cols.data() + upos * d_in;
            const std::size_t woff = t * d_in * d_out;
            for (std::size_t e = 0; e < d_in; ++e) {
              if (gk) {
                const double xe = x[e];
                if (xe != 0.0) {
                  double* gw = gk->data() + woff + e * d_out;
                  for (std::size_t c = 0; c < d_out; ++c) gw[c] += dp[c] * xe;
                }
              }
              if (gin) {
                const double* w = kv_in.data() + woff + e * d_out;
                double acc = 0.0;
                for (std::size_t c = 0; c < d_out; ++c) acc += w[c] * dp[c];
                dcols[upos * d_in + e] += acc;
              }
            }
          }
        }
        if (gin) {
          for (std::size_t e = 0; e < d_in; ++e) {
            for (std::size_t n = 0; n < len; ++n) {
              (*gin)[e * len + n] += dcols[n * d_in + e];
            }
          }
        }
      });
}

Tensor embedding_columns(const Tensor& table, std::span<const std::int32_t> ids,
                         std::int32_t pad_id) {
  require_rank("embedding_columns", table, 2);
  if (ids.empty()) throw ShapeError("embedding_columns: empty id sequence");
  const std::size_t vocab = table.dim(0), d = table.dim(1), len = ids.size();
  auto tv = table.data();
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  std::vector<double> out(d * len, 0.0);
  for (std::size_t n = 0; n < len; ++n) {
    const std::int32_t id = idv[n];
    if (id == pad_id) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DataError("token id " + std::to_string(id) +
                      " outside embedding table of " + std::to_string(vocab) +
                      " rows");
    }
    const double* row = tv.data() + static_cast<std::size_t>(id) * d;
    for (std::size_t e = 0; e < d; ++e) out[e * len + n] = row[e];
  }
  return Tensor::make_result(
      {d, len}, std::move(out), {table},
      [d, len, pad_id, idv = std::move(idv)](Node& self) {
        auto* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t n = 0; n < len; ++n) {
          if (idv[n] == pad_id) continue;
          double* row = g->data() + static_cast<std::size_t>(idv[n]) * d;
          for (std::size_t e = 0; e < d; ++e) row[e] += self.grad[e * len + n];
        }
      });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_result({1}, {total}, {x}, [](Node& self) {
    auto* g = input_grad(self, 0);
    if (!g) return;
    for (double& v : *g) v += self.grad[0];
  });
}

Tensor sum_rows(const Tensor& x) {
  require_rank("sum_rows", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xv = x.data();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i] += xv[i * c + j];
  }
  return Tensor::make_result({r}, std::move(out), {x}, [r, c](Node& self) {
    auto* g = input_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i];
    }
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t c = rows[0].size();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (const Tensor& row : rows) {
    if (row.size() != c) throw mismatch("stack_rows", rows[0], row);
    auto v = row.data();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<Tensor> inputs(rows.begin(), rows.end());
  return Tensor::make_result({rows.size(), c}, std::move(out), std::move(inputs),
                             [c](Node& self) {
                               for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                                 auto* g = input_grad(self, i);
                                 if (!g) continue;
                                 for (std::size_t j = 0; j < c; ++j) {
                                   (*g)[j] += self.grad[i * c + j];
                                 }
                               }
                             });
}

Tensor binary_cross_entropy(const Tensor& p, const Tensor& truth,
                            double clamp) {
  if (p.shape() != truth.shape()) throw mismatch("binary_cross_entropy", p, truth);
  require_rank("binary_cross_entropy", p, 2);
  const std::size_t rows = p.dim(0);
  auto pv = p.data();
  auto yv = truth.data();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double q = std::clamp(pv[i], clamp, 1.0 - clamp);
    total -= yv[i] * std::log(q) + (1.0 - yv[i]) * std::log(1.0 - q);
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  return Tensor::make_result(
      {1}, {total * inv_rows}, {p, truth}, [clamp, inv_rows](Node& self) {
        const auto& pv_in = input_data(self, 0);
        const auto& yv_in = input_data(self, 1);
        const double g = self.grad[0] * inv_rows;
        if (auto* gp = input_grad(self, 0)) {
          for (std::size_t i = 0; i < pv_in.size(); ++i) {
            const double q = pv_in[i];
            if (q < clamp || q > 1.0 - clamp) continue;  // flat under the clamp
            (*gp)[i] += g * (-(yv_in[i] / q) + (1.0 - yv_in[i]) / (1.0 - q));
          }
        }
        if (auto* gy = input_grad(self, 1)) {
          for (std::size_t i = 0; i < pv_in.size(); ++i) {
            const double q = std::clamp(pv_in[i], clamp, 1.0 - clamp);
            (*gy)[i] += g * (std::log(1.0 - q) - std::log(q));
          }
        }
      });
}

}  // namespace mvam
