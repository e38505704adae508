#pragma once

#include <cmath>
#include <limits>

#include "vcomp/core.hpp"
#include "vcomp/tensor.hpp"

namespace vcomp {

template <typename T>
struct ParamView {
  T* param = nullptr;
  T* grad = nullptr;
  size_t size = 0;
};

// --- 3D convolution (cross-correlation) --------------------------------------

template <typename T>
struct Conv3d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 0;
  std::vector<T> w, b, gw, gb;  // w: [out][in][kz][ky][kx]

  Conv3d() = default;
  Conv3d(int in, int out, int kernel, int stride_, int pad_)
      : in_c(in), out_c(out), k(kernel), stride(stride_), pad(pad_) {
    w.assign(size_t(out) * in * k * k * k, T(0));
    b.assign(size_t(out), T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  size_t widx(int o, int i, int kz, int ky, int kx) const {
    return (((size_t(o) * in_c + i) * k + kz) * k + ky) * k + kx;
  }

  void init_he(Rng& rng) {
    double fan_in = double(in_c) * k * k * k;
    double s = std::sqrt(2.0 / fan_in);
    for (auto& v : w) v = T(rng.gaussian() * s);
    for (auto& v : b) v = T(0);
  }

  std::array<int, 3> out_dims(const std::array<int, 3>& in) const {
    std::array<int, 3> d;
    for (int i = 0; i < 3; ++i) d[i] = (in[i] + 2 * pad - k) / stride + 1;
    return d;
  }

  void collect(std::vector<ParamView<T>>& out) {
    out.push_back({w.data(), gw.data(), w.size()});
    out.push_back({b.data(), gb.data(), b.size()});
  }
};

template <typename T>
Tensor4<T> conv3d_forward(const Tensor4<T>& x, const Conv3d<T>& L) {
  if (x.channels != L.in_c) throw std::invalid_argument("conv3d_forward: channel mismatch");
  auto od = L.out_dims(x.dims);
  if (od[0] < 1 || od[1] < 1 || od[2] < 1)
    throw std::invalid_argument("conv3d_forward: kernel larger than padded input");
  Tensor4<T> y(L.out_c, od);
  const int s = L.stride, p = L.pad, k = L.k;
  for (int o = 0; o < L.out_c; ++o) {
    for (int zo = 0; zo < od[2]; ++zo) {
      for (int yo = 0; yo < od[1]; ++yo) {
        T* yrow = &y.at(o, 0, yo, zo);
        for (int xo = 0; xo < od[0]; ++xo) yrow[xo] = L.b[o];
        for (int i = 0; i < L.in_c; ++i) {
          for (int kz = 0; kz < k; ++kz) {
            int zi = zo * s - p + kz;
            if (zi < 0 || zi >= x.dims[2]) continue;
            for (int ky = 0; ky < k; ++ky) {
              int yi = yo * s - p + ky;
              if (yi < 0 || yi >= x.dims[1]) continue;
              const T* xrow = &x.at(i, 0, yi, zi);
              const T* wrow = &L.w[L.widx(o, i, kz, ky, 0)];
              for (int kx = 0; kx < k; ++kx) {
                int xi0 = -p + kx;
                T wv = wrow[kx];
                if (wv == T(0)) continue;
                int xo_begin = std::max(0, (-xi0 + s - 1) / s);
                int xo_end = std::min(od[0], (x.dims[0] - xi0 + s - 1) / s);
                const T* xp = xrow + xi0 + size_t(xo_begin) * s;
                for (int xo = xo_begin; xo < xo_end; ++xo, xp += s) yrow[xo] += wv * (*xp);
              }
            }
          }
        }
      }
    }
  }
  return y;
}

// Accumulates gw/gb; writes dx when non-null.
template <typename T>
void conv3d_backward(const Tensor4<T>& x, Conv3d<T>& L, const Tensor4<T>& dy, Tensor4<T>* dx) {
  auto od = L.out_dims(x.dims);
  if (dy.channels != L.out_c || dy.dims != od)
    throw std::invalid_argument("conv3d_backward: dy shape mismatch");
  if (dx) *dx = Tensor4<T>(L.in_c, x.dims);
  const int s = L.stride, p = L.pad, k = L.k;
  for (int o = 0; o < L.out_c; ++o) {
    T gbo = T(0);
    for (int zo = 0; zo < od[2]; ++zo) {
      for (int yo = 0; yo < od[1]; ++yo) {
        const T* dyrow = &dy.at(o, 0, yo, zo);
        for (int xo = 0; xo < od[0]; ++xo) gbo += dyrow[xo];
        for (int i = 0; i < L.in_c; ++i) {
          for (int kz = 0; kz < k; ++kz) {
            int zi = zo * s - p + kz;
            if (zi < 0 || zi >= x.dims[2]) continue;
            for (int ky = 0; ky < k; ++ky) {
              int yi = yo * s - p + ky;
              if (yi < 0 || yi >= x.dims[1]) continue;
              const T* xrow = &x.at(i, 0, yi, zi);
              T* dxrow = dx ? &dx->at(i, 0, yi, zi) : nullptr;
              T* gwrow = &L.gw[L.widx(o, i, kz, ky, 0)];
              const T* wrow = &L.w[L.widx(o, i, kz, ky, 0)];
              for (int kx = 0; kx < k; ++kx) {
                int xi0 = -p + kx;
                int xo_begin = std::max(0, (-xi0 + s - 1) / s);
                int xo_end = std::min(od[0], (x.dims[0] - xi0 + s - 1) / s);
                T gw_acc = T(0);
                const T wv = wrow[kx];
                for (int xo = xo_begin; xo < xo_end; ++xo) {
                  int xi = xi0 + xo * s;
                  gw_acc += dyrow[xo] * xrow[xi];
                  if (dxrow) dxrow[xi] += wv * dyrow[xo];
                }
                gwrow[kx] += gw_acc;
              }
            }
          }
        }
      }
    }
    L.gb[o] += gbo;
  }
}

// --- 3D transposed convolution ----------------------------------------------

template <typename T>
struct UpConv3d {
  int in_c = 0, out_c = 0, k = 2, stride = 2, pad = 0;
  std::vector<T> w, b, gw, gb;  // w: [in][out][kz][ky][kx] (adjoint of Conv3d)

  UpConv3d() = default;
  UpConv3d(int in, int out, int kernel, int stride_, int pad_)
      : in_c(in), out_c(out), k(kernel), stride(stride_), pad(pad_) {
    w.assign(size_t(in) * out * k * k * k, T(0));
    b.assign(size_t(out), T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  size_t widx(int i, int o, int kz, int ky, int kx) const {
    return (((size_t(i) * out_c + o) * k + kz) * k + ky) * k + kx;
  }

  void init_he(Rng& rng) {
    double fan_in = double(in_c) * k * k * k / double(stride * stride * stride);
    double s = std::sqrt(2.0 / std::max(1.0, fan_in));
    for (auto& v : w) v = T(rng.gaussian() * s);
    for (auto& v : b) v = T(0);
  }

  std::array<int, 3> out_dims(const std::array<int, 3>& in) const {
    std::array<int, 3> d;
    for (int i = 0; i < 3; ++i) d[i] = (in[i] - 1) * stride + k - 2 * pad;
    return d;
  }

  void collect(std::vector<ParamView<T>>& out) {
    out.push_back({w.data(), gw.data(), w.size()});
    out.push_back({b.data(), gb.data(), b.size()});
  }
};

template <typename T>
Tensor4<T> upconv3d_forward(const Tensor4<T>& x, const UpConv3d<T>& L) {
  if (x.channels != L.in_c) throw std::invalid_argument("upconv3d_forward: channel mismatch");
  auto od = L.out_dims(x.dims);
  if (od[0] < 1 || od[1] < 1 || od[2] < 1)
    throw std::invalid_argument("upconv3d_forward: degenerate output");
  Tensor4<T> y(L.out_c, od);
  for (int o = 0; o < L.out_c; ++o) {
    T* yc = y.channel(o);
    for (size_t q = 0; q < y.spatial_size(); ++q) yc[q] = L.b[o];
  }
  const int s = L.stride, p = L.pad, k = L.k;
  for (int i = 0; i < L.in_c; ++i) {
    for (int zq = 0; zq < x.dims[2]; ++zq) {
      for (int yq = 0; yq < x.dims[1]; ++yq) {
        const T* xrow = &x.at(i, 0, yq, zq);
        for (int o = 0; o < L.out_c; ++o) {
          for (int kz = 0; kz < k; ++kz) {
            int zr = zq * s - p + kz;
            if (zr < 0 || zr >= od[2]) continue;
            for (int ky = 0; ky < k; ++ky) {
              int yr = yq * s - p + ky;
              if (yr < 0 || yr >= od[1]) continue;
              T* yrow = &y.at(o, 0, yr, zr);
              const T* wrow = &L.w[L.widx(i, o, kz, ky, 0)];
              for (int kx = 0; kx < k; ++kx) {
                int xr0 = -p + kx;
                T wv = wrow[kx];
                if (wv == T(0)) continue;
                int xq_begin = std::max(0, (-xr0 + s - 1) / s);
                int xq_end = std::min(x.dims[0], (od[0] - xr0 + s - 1) / s);
                for (int xq = xq_begin; xq < xq_end; ++xq)
                  yrow[xr0 + size_t(xq) * s] += wv * xrow[xq];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void upconv3d_backward(const Tensor4<T>& x, UpConv3d<T>& L, const Tensor4<T>& dy,
                       Tensor4<T>* dx) {
  auto od = L.out_dims(x.dims);
  if (dy.channels != L.out_c || dy.dims != od)
    throw std::invalid_argument("upconv3d_backward: dy shape mismatch");
  if (dx) *dx = Tensor4<T>(L.in_c, x.dims);
  for (int o = 0; o < L.out_c; ++o) {
    const T* dyc = dy.channel(o);
    T acc = T(0);
    for (size_t q = 0; q < dy.spatial_size(); ++q) acc += dyc[q];
    L.gb[o] += acc;
  }
  const int s = L.stride, p = L.pad, k = L.k;
  for (int i = 0; i < L.in_c; ++i) {
    for (int zq = 0; zq < x.dims[2]; ++zq) {
      for (int yq = 0; yq < x.dims[1]; ++yq) {
        const T* xrow = &x.at(i, 0, yq, zq);
        T* dxrow = dx ? &dx->at(i, 0, yq, zq) : nullptr;
        for (int o = 0; o < L.out_c; ++o) {
          for (int kz = 0; kz < k; ++kz) {
            int zr = zq * s - p + kz;
            if (zr < 0 || zr >= od[2]) continue;
            for (int ky = 0; ky < k; ++ky) {
              int yr = yq * s - p + ky;
              if (yr < 0 || yr >= od[1]) continue;
              const T* dyrow = &dy.at(o, 0, yr, zr);
              T* gwrow = &L.gw[L.widx(i, o, kz, ky, 0)];
              const T* wrow = &L.w[L.widx(i, o, kz, ky, 0)];
              for (int kx = 0; kx < k; ++kx) {
                int xr0 = -p + kx;
                int xq_begin = std::max(0, (-xr0 + s - 1) / s);
                int xq_end = std::min(x.dims[0], (od[0] - xr0 + s - 1) / s);
                T gw_acc = T(0);
                const T wv = wrow[kx];
                for (int xq = xq_begin; xq < xq_end; ++xq) {
                  T dyv = dyrow[xr0 + size_t(xq) * s];
                  gw_acc += dyv * xrow[xq];
                  if (dxrow) dxrow[xq] += wv * dyv;
                }
                gwrow[kx] += gw_acc;
              }
            }
          }
        }
      }
    }
  }
}

// --- Per-channel normalization over spatial positions ------------------------
// Statistics are taken per sample over the channel's voxels; running averages
// feed frozen inference.

template <typename T>
struct BatchNorm {
  int channels = 0;
  T eps = T(1e-5);
  T momentum = T(0.1);
  std::vector<T> gamma, beta, ggamma, gbeta;
  std::vector<T> running_mean, running_var;

  BatchNorm() = default;
  explicit BatchNorm(int c) : channels(c) {
    gamma.assign(size_t(c), T(1));
    beta.assign(size_t(c), T(0));
    ggamma.assign(size_t(c), T(0));
    gbeta.assign(size_t(c), T(0));
    running_mean.assign(size_t(c), T(0));
    running_var.assign(size_t(c), T(1));
  }

  void collect(std::vector<ParamView<T>>& out) {
    out.push_back({gamma.data(), ggamma.data(), gamma.size()});
    out.push_back({beta.data(), gbeta.data(), beta.size()});
  }

  // Running statistics travel with checkpoints but not with the optimizer.
  void collect_state(std::vector<ParamView<T>>& out) {
    out.push_back({running_mean.data(), running_mean.data(), running_mean.size()});
    out.push_back({running_var.data(), running_var.data(), running_var.size()});
  }
};

template <typename T>
struct BnCache {
  std::vector<T> xhat;
  std::vector<T> inv_std;  // per channel
  std::vector<T> mean, var;
};

template <typename T>
Tensor4<T> bn_forward_train(const Tensor4<T>& x, const BatchNorm<T>& L, BnCache<T>& cache) {
  if (x.channels != L.channels) throw std::invalid_argument("bn_forward: channel mismatch");
  size_t n = x.spatial_size();
  Tensor4<T> y(x.channels, x.dims);
  cache.xhat.resize(x.size());
  cache.inv_std.resize(size_t(x.channels));
  cache.mean.resize(size_t(x.channels));
  cache.var.resize(size_t(x.channels));
  for (int c = 0; c < x.channels; ++c) {
    const T* xc = x.channel(c);
    T mean = T(0);
    for (size_t q = 0; q < n; ++q) mean += xc[q];
    mean /= T(n);
    T var = T(0);
    for (size_t q = 0; q < n; ++q) {
      T d = xc[q] - mean;
      var += d * d;
    }
    var /= T(n);
    T inv = T(1) / std::sqrt(var + L.eps);
    cache.inv_std[c] = inv;
    cache.mean[c] = mean;
    cache.var[c] = var;
    T* yc = y.channel(c);
    T* xh = cache.xhat.data() + size_t(c) * n;
    for (size_t q = 0; q < n; ++q) {
      xh[q] = (xc[q] - mean) * inv;
      yc[q] = L.gamma[c] * xh[q] + L.beta[c];
    }
  }
  return y;
}

template <typename T>
void bn_update_running(BatchNorm<T>& L, const BnCache<T>& cache) {
  for (int c = 0; c < L.channels; ++c) {
    L.running_mean[c] = (T(1) - L.momentum) * L.running_mean[c] + L.momentum * cache.mean[c];
    L.running_var[c] = (T(1) - L.momentum) * L.running_var[c] + L.momentum * cache.var[c];
  }
}

template <typename T>
Tensor4<T> bn_forward_eval(const Tensor4<T>& x, const BatchNorm<T>& L) {
  if (x.channels != L.channels) throw std::invalid_argument("bn_forward: channel mismatch");
  size_t n = x.spatial_size();
  Tensor4<T> y(x.channels, x.dims);
  for (int c = 0; c < x.channels; ++c) {
    const T* xc = x.channel(c);
    T* yc = y.channel(c);
    T inv = T(1) / std::sqrt(L.running_var[c] + L.eps);
    T scale = L.gamma[c] * inv;
    T shift = L.beta[c] - L.running_mean[c] * scale;
    for (size_t q = 0; q < n; ++q) yc[q] = scale * xc[q] + shift;
  }
  return y;
}

template <typename T>
Tensor4<T> bn_backward(const BnCache<T>& cache, BatchNorm<T>& L, const Tensor4<T>& dy) {
  size_t n = dy.spatial_size();
  Tensor4<T> dx(dy.channels, dy.dims);
  for (int c = 0; c < dy.channels; ++c) {
    const T* dyc = dy.channel(c);
    const T* xh = cache.xhat.data() + size_t(c) * n;
    T sum_dy = T(0), sum_dy_xh = T(0);
    for (size_t q = 0; q < n; ++q) {
      sum_dy += dyc[q];
      sum_dy_xh += dyc[q] * xh[q];
    }
    L.gbeta[c] += sum_dy;
    L.ggamma[c] += sum_dy_xh;
    T* dxc = dx.channel(c);
    T scale = L.gamma[c] * cache.inv_std[c] / T(n);
    for (size_t q = 0; q < n; ++q)
      dxc[q] = scale * (T(n) * dyc[q] - sum_dy - xh[q] * sum_dy_xh);
  }
  return dx;
}

// --- ReLU --------------------------------------------------------------------

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  Tensor4<T> y(x.channels, x.dims);
  for (size_t i = 0; i < x.values.size(); ++i) y.values[i] = x.values[i] > T(0) ? x.values[i] : T(0);
  return y;
}

// dx from dy and the forward output (mask = y > 0).
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
  Tensor4<T> dx(dy.channels, dy.dims);
  for (size_t i = 0; i < dy.values.size(); ++i)
    dx.values[i] = y.values[i] > T(0) ? dy.values[i] : T(0);
  return dx;
}

template <typename T>
void relu_forward_vec(std::vector<T>& v) {
  for (auto& x : v)
    if (x < T(0)) x = T(0);
}

// --- Fully connected ----------------------------------------------------------

template <typename T>
struct Linear {
  int in = 0, out = 0;
  std::vector<T> w, b, gw, gb;  // w: [out][in]

  Linear() = default;
  Linear(int in_, int out_) : in(in_), out(out_) {
    w.assign(size_t(in) * out, T(0));
    b.assign(size_t(out), T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  void init_he(Rng& rng) {
    double s = std::sqrt(2.0 / double(in));
    for (auto& v : w) v = T(rng.gaussian() * s);
    for (auto& v : b) v = T(0);
  }

  void collect(std::vector<ParamView<T>>& out_views) {
    out_views.push_back({w.data(), gw.data(), w.size()});
    out_views.push_back({b.data(), gb.data(), b.size()});
  }
};

template <typename T>
std::vector<T> linear_forward(const std::vector<T>& x, const Linear<T>& L) {
  if (int(x.size()) != L.in) throw std::invalid_argument("linear_forward: size mismatch");
  std::vector<T> y(size_t(L.out));
  for (int o = 0; o < L.out; ++o) {
    const T* wrow = &L.w[size_t(o) * L.in];
    T acc = L.b[o];
    for (int i = 0; i < L.in; ++i) acc += wrow[i] * x[i];
    y[o] = acc;
  }
  return y;
}

template <typename T>
std::vector<T> linear_backward(const std::vector<T>& x, Linear<T>& L, const std::vector<T>& dy) {
  std::vector<T> dx(size_t(L.in), T(0));
  for (int o = 0; o < L.out; ++o) {
    T d = dy[o];
    L.gb[o] += d;
    T* gwrow = &L.gw[size_t(o) * L.in];
    const T* wrow = &L.w[size_t(o) * L.in];
    for (int i = 0; i < L.in; ++i) {
      gwrow[i] += d * x[i];
      dx[i] += wrow[i] * d;
    }
  }
  return dx;
}

// --- 2x max pooling -----------------------------------------------------------

template <typename T>
struct PoolCache {
  std::vector<uint32_t> argmax;
  std::array<int, 3> in_dims{};
  int channels = 0;
};

template <typename T>
Tensor4<T> maxpool2_forward(const Tensor4<T>& x, PoolCache<T>& cache) {
  std::array<int, 3> od{x.dims[0] / 2, x.dims[1] / 2, x.dims[2] / 2};
  Tensor4<T> y(x.channels, od);
  cache.argmax.resize(y.size());
  cache.in_dims = x.dims;
  cache.channels = x.channels;
  size_t oi = 0;
  for (int c = 0; c < x.channels; ++c)
    for (int z = 0; z < od[2]; ++z)
      for (int yy = 0; yy < od[1]; ++yy)
        for (int xx = 0; xx < od[0]; ++xx, ++oi) {
          T best = -std::numeric_limits<T>::infinity();
          uint32_t best_idx = 0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy2 = 0; dy2 < 2; ++dy2)
              for (int dxx = 0; dxx < 2; ++dxx) {
                size_t ii = x.idx(c, xx * 2 + dxx, yy * 2 + dy2, z * 2 + dz);
                if (x.values[ii] > best) {
                  best = x.values[ii];
                  best_idx = uint32_t(ii);
                }
              }
          y.values[oi] = best;
          cache.argmax[oi] = best_idx;
        }
  return y;
}

template <typename T>
Tensor4<T> maxpool2_backward(const PoolCache<T>& cache, const Tensor4<T>& dy) {
  Tensor4<T> dx(cache.channels, cache.in_dims);
  for (size_t i = 0; i < dy.values.size(); ++i) dx.values[cache.argmax[i]] += dy.values[i];
  return dx;
}

// --- Softmax / cross entropy ----------------------------------------------------

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  std::vector<T> p(logits.size());
  T sum = T(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

// Returns loss; writes dlogits = softmax(logits) - onehot(label).
template <typename T>
T cross_entropy_with_logits(const std::vector<T>& logits, int label, std::vector<T>& dlogits) {
  std::vector<T> p = softmax(logits);
  dlogits = p;
  dlogits[size_t(label)] -= T(1);
  return -std::log(std::max(p[size_t(label)], T(1e-12)));
}

}  // namespace vcomp
