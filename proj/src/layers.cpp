#include "sqalab/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace sqalab {

std::string shape_string(const Shape& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

std::string layer_type(const LayerSpec& spec) {
  struct Visitor {
    std::string operator()(const Conv2DSpec&) const { return "conv2d"; }
    std::string operator()(const BatchNorm2DSpec&) const { return "batchnorm2d"; }
    std::string operator()(const ActivationSpec& a) const {
      return a.kind == ActivationKind::Relu ? "relu" : "silu";
    }
    std::string operator()(const MaxPool2DSpec&) const { return "maxpool2d"; }
    std::string operator()(const GlobalMaxPoolSpec&) const { return "globalmaxpool"; }
    std::string operator()(const DenseSpec&) const { return "dense"; }
    std::string operator()(const DropoutSpec&) const { return "dropout"; }
  };
  return std::visit(Visitor{}, spec);
}

namespace {

using Index = std::ptrdiff_t;

void require_rank(const Shape& s, std::size_t rank, const char* layer) {
  if (s.size() != rank) {
    throw InvalidInputError(std::string(layer) + " expects a rank-" +
                            std::to_string(rank) + " input, got " + shape_string(s));
  }
}

template <typename T>
double dot(const T* a, const T* b, std::size_t n) {
  T lanes[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < 8; ++j) acc += lanes[j];
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <typename T>
void kaiming_uniform(BasicTensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

// Output range [lo, hi) of positions o with o * stride + k - pad in [0, n).
std::pair<Index, Index> valid_range(Index out_len, Index n, Index stride, Index k,
                                    Index pad) {
  Index lo = 0;
  if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
  Index hi = out_len;
  const Index last = n - 1 + pad - k;  // o * stride <= last
  if (last < 0) return {0, 0};
  hi = std::min(hi, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

// ---------------------------------------------------------------------------

template <typename T>
class Conv2D final : public Layer<T> {
 public:
  Conv2D(const Conv2DSpec& spec, std::size_t in_channels, const std::string& prefix,
         Rng& rng)
      : spec_(spec), in_channels_(in_channels) {
    if (spec.out_channels == 0 || spec.kernel_h == 0 || spec.kernel_w == 0 ||
        spec.stride == 0) {
      throw InvalidInputError("invalid conv2d configuration");
    }
    weight_.name = prefix + ".weight";
    weight_.value = BasicTensor<T>({spec.out_channels, in_channels, spec.kernel_h,
                                    spec.kernel_w});
    weight_.grad = BasicTensor<T>(weight_.value.dims());
    kaiming_uniform(weight_.value, in_channels * spec.kernel_h * spec.kernel_w, rng);
    bias_.name = prefix + ".bias";
    bias_.value = BasicTensor<T>({spec.out_channels});
    bias_.grad = BasicTensor<T>({spec.out_channels});
  }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& in) const override {
    require_rank(in, 4, "conv2d");
    if (in[1] != in_channels_) {
      throw InvalidInputError("conv2d expects " + std::to_string(in_channels_) +
                              " channels, got " + shape_string(in));
    }
    const std::size_t h = in[2] + 2 * spec_.padding;
    const std::size_t w = in[3] + 2 * spec_.padding;
    if (h < spec_.kernel_h || w < spec_.kernel_w) {
      throw InvalidInputError("conv2d input smaller than kernel: " + shape_string(in));
    }
    return {in[0], spec_.out_channels, (h - spec_.kernel_h) / spec_.stride + 1,
            (w - spec_.kernel_w) / spec_.stride + 1};
  }

  BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext&) override {
    const Shape out_shape = output_shape(in.dims());
    BasicTensor<T> out(out_shape);
    const Index n_batch = static_cast<Index>(in.dim(0));
#pragma omp parallel for schedule(static)
    for (Index n = 0; n < n_batch; ++n) forward_one(in, out, static_cast<std::size_t>(n));
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>&,
                          const BasicTensor<T>& grad_out) override {
    BasicTensor<T> grad_in(in.dims());
    const std::size_t batch = in.dim(0);
    const std::size_t wsize = weight_.value.size();
    const std::size_t oc_count = spec_.out_channels;
    // Per-example partial sums reduced in example order, so the result does
    // not depend on the thread count.
    std::vector<double> dw(batch * wsize, 0.0);
    std::vector<double> db(batch * oc_count, 0.0);
#pragma omp parallel for schedule(static)
    for (Index n = 0; n < static_cast<Index>(batch); ++n) {
      const auto ni = static_cast<std::size_t>(n);
      backward_one(in, grad_out, grad_in, ni, dw.data() + ni * wsize,
                   db.data() + ni * oc_count);
    }
    for (std::size_t i = 0; i < wsize; ++i) {
      double acc = 0.0;
      for (std::size_t n = 0; n < batch; ++n) acc += dw[n * wsize + i];
      weight_.grad[i] += static_cast<T>(acc);
    }
    for (std::size_t o = 0; o < oc_count; ++o) {
      double acc = 0.0;
      for (std::size_t n = 0; n < batch; ++n) acc += db[n * oc_count + o];
      bias_.grad[o] += static_cast<T>(acc);
    }
    return grad_in;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 private:
  void forward_one(const BasicTensor<T>& in, BasicTensor<T>& out, std::size_t n) const {
    const Index C = static_cast<Index>(in.dim(1)), H = static_cast<Index>(in.dim(2)),
                W = static_cast<Index>(in.dim(3));
    const Index OC = static_cast<Index>(out.dim(1)), OH = static_cast<Index>(out.dim(2)),
                OW = static_cast<Index>(out.dim(3));
    const Index KH = static_cast<Index>(spec_.kernel_h), KW = static_cast<Index>(spec_.kernel_w);
    const Index S = static_cast<Index>(spec_.stride), P = static_cast<Index>(spec_.padding);
    const T* x = in.data() + n * in.dim(1) * in.dim(2) * in.dim(3);
    T* y = out.data() + n * out.dim(1) * out.dim(2) * out.dim(3);
    const T* wt = weight_.value.data();

    for (Index oc = 0; oc < OC; ++oc) {
      const T b = bias_.value[static_cast<std::size_t>(oc)];
      for (Index oy = 0; oy < OH; ++oy) {
        T* orow = y + (oc * OH + oy) * OW;
        for (Index ox = 0; ox < OW; ++ox) orow[ox] = b;
        for (Index ic = 0; ic < C; ++ic) {
          for (Index ky = 0; ky < KH; ++ky) {
            const Index iy = oy * S + ky - P;
            if (iy < 0 || iy >= H) continue;
            const T* irow = x + (ic * H + iy) * W;
            const T* wrow = wt + ((oc * C + ic) * KH + ky) * KW;
            for (Index kx = 0; kx < KW; ++kx) {
              const T w = wrow[kx];
              const auto [lo, hi] = valid_range(OW, W, S, kx, P);
              if (S == 1) {
                const T* src = irow + (kx - P);
                for (Index ox = lo; ox < hi; ++ox) orow[ox] += w * src[ox];
              } else {
                for (Index ox = lo; ox < hi; ++ox) orow[ox] += w * irow[ox * S + kx - P];
              }
            }
          }
        }
      }
    }
  }

  void backward_one(const BasicTensor<T>& in, const BasicTensor<T>& grad_out,
                    BasicTensor<T>& grad_in, std::size_t n, double* dw,
                    double* db) const {
    const Index C = static_cast<Index>(in.dim(1)), H = static_cast<Index>(in.dim(2)),
                W = static_cast<Index>(in.dim(3));
    const Index OC = static_cast<Index>(grad_out.dim(1)),
                OH = static_cast<Index>(grad_out.dim(2)),
                OW = static_cast<Index>(grad_out.dim(3));
    const Index KH = static_cast<Index>(spec_.kernel_h), KW = static_cast<Index>(spec_.kernel_w);
    const Index S = static_cast<Index>(spec_.stride), P = static_cast<Index>(spec_.padding);
    const std::size_t in_stride = in.dim(1) * in.dim(2) * in.dim(3);
    const T* x = in.data() + n * in_stride;
    T* gx = grad_in.data() + n * in_stride;
    const T* gy = grad_out.data() + n * grad_out.dim(1) * grad_out.dim(2) * grad_out.dim(3);
    const T* wt = weight_.value.data();

    for (Index oc = 0; oc < OC; ++oc) {
      double bias_acc = 0.0;
      for (Index oy = 0; oy < OH; ++oy) {
        const T* grow = gy + (oc * OH + oy) * OW;
        for (Index ox = 0; ox < OW; ++ox) bias_acc += grow[ox];
        for (Index ic = 0; ic < C; ++ic) {
          for (Index ky = 0; ky < KH; ++ky) {
            const Index iy = oy * S + ky - P;
            if (iy < 0 || iy >= H) continue;
            const T* irow = x + (ic * H + iy) * W;
            T* girow = gx + (ic * H + iy) * W;
            const Index widx = ((oc * C + ic) * KH + ky) * KW;
            for (Index kx = 0; kx < KW; ++kx) {
              const T w = wt[widx + kx];
              const auto [lo, hi] = valid_range(OW, W, S, kx, P);
              if (hi <= lo) continue;
              if (S == 1) {
                const Index shift = kx - P;
                dw[widx + kx] += dot(grow + lo, irow + lo + shift,
                                     static_cast<std::size_t>(hi - lo));
                T* dst = girow + shift;
                for (Index ox = lo; ox < hi; ++ox) dst[ox] += w * grow[ox];
              } else {
                double acc = 0.0;
                for (Index ox = lo; ox < hi; ++ox) {
                  const Index ix = ox * S + kx - P;
                  acc += static_cast<double>(grow[ox]) * irow[ix];
                  girow[ix] += w * grow[ox];
                }
                dw[widx + kx] += acc;
              }
            }
          }
        }
      }
      db[oc] += bias_acc;
    }
  }

  Conv2DSpec spec_;
  std::size_t in_channels_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

// ---------------------------------------------------------------------------

template <typename T>
class BatchNorm2D final : public Layer<T> {
 public:
  BatchNorm2D(std::size_t channels, const std::string& prefix) : channels_(channels) {
    gamma_.name = prefix + ".gamma";
    gamma_.value = BasicTensor<T>({channels}, T{1});
    gamma_.grad = BasicTensor<T>({channels});
    beta_.name = prefix + ".beta";
    beta_.value = BasicTensor<T>({channels});
    beta_.grad = BasicTensor<T>({channels});
    running_mean_ = BasicTensor<T>({channels});
    running_var_ = BasicTensor<T>({channels}, T{1});
    mean_name_ = prefix + ".running_mean";
    var_name_ = prefix + ".running_var";
  }

  LayerSpec spec() const override { return BatchNorm2DSpec{}; }

  Shape output_shape(const Shape& in) const override {
    require_rank(in, 4, "batchnorm2d");
    if (in[1] != channels_) throw InvalidInputError("batchnorm2d channel mismatch");
    return in;
  }

  BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext& ctx) override {
    output_shape(in.dims());
    const std::size_t N = in.dim(0), C = in.dim(1), HW = in.dim(2) * in.dim(3);
    BasicTensor<T> out(in.dims());
    if (ctx.training) {
      const std::size_t m = N * HW;
      if (m < 2) throw InvalidInputError("batchnorm2d needs more than one value per channel");
      batch_mean_.assign(C, 0.0);
      batch_invstd_.assign(C, 0.0);
#pragma omp parallel for schedule(static)
      for (Index c = 0; c < static_cast<Index>(C); ++c) {
        const auto ci = static_cast<std::size_t>(c);
        double sum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = in.data() + (n * C + ci) * HW;
          for (std::size_t i = 0; i < HW; ++i) sum += p[i];
        }
        const double mean = sum / static_cast<double>(m);
        double sq = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = in.data() + (n * C + ci) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            const double d = p[i] - mean;
            sq += d * d;
          }
        }
        const double var = sq / static_cast<double>(m);
        batch_mean_[ci] = mean;
        batch_invstd_[ci] = 1.0 / std::sqrt(var + kBatchNormEpsilon);
        running_mean_[ci] = static_cast<T>(kBatchNormMomentum * running_mean_[ci] +
                                           (1.0 - kBatchNormMomentum) * mean);
        const double unbiased = sq / static_cast<double>(m - 1);
        running_var_[ci] = static_cast<T>(kBatchNormMomentum * running_var_[ci] +
                                          (1.0 - kBatchNormMomentum) * unbiased);
      }
      normalize(in, out, batch_mean_, batch_invstd_);
    } else {
      std::vector<double> mean(C), invstd(C);
      for (std::size_t c = 0; c < C; ++c) {
        mean[c] = running_mean_[c];
        invstd[c] = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kBatchNormEpsilon);
      }
      normalize(in, out, mean, invstd);
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>&,
                          const BasicTensor<T>& grad_out) override {
    const std::size_t N = in.dim(0), C = in.dim(1), HW = in.dim(2) * in.dim(3);
    const double m = static_cast<double>(N * HW);
    BasicTensor<T> grad_in(in.dims());
#pragma omp parallel for schedule(static)
    for (Index c = 0; c < static_cast<Index>(C); ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const double mean = batch_mean_[ci], invstd = batch_invstd_[ci];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* x = in.data() + (n * C + ci) * HW;
        const T* dy = grad_out.data() + (n * C + ci) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * ((x[i] - mean) * invstd);
        }
      }
      beta_.grad[ci] += static_cast<T>(sum_dy);
      gamma_.grad[ci] += static_cast<T>(sum_dy_xhat);
      const double scale = gamma_.value[ci] * invstd / m;
      for (std::size_t n = 0; n < N; ++n) {
        const T* x = in.data() + (n * C + ci) * HW;
        const T* dy = grad_out.data() + (n * C + ci) * HW;
        T* dx = grad_in.data() + (n * C + ci) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const double xhat = (x[i] - mean) * invstd;
          dx[i] = static_cast<T>(scale * (m * dy[i] - sum_dy - xhat * sum_dy_xhat));
        }
      }
    }
    return grad_in;
  }

  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, BasicTensor<T>*>> buffers() override {
    return {{mean_name_, &running_mean_}, {var_name_, &running_var_}};
  }

 private:
  void normalize(const BasicTensor<T>& in, BasicTensor<T>& out,
                 const std::vector<double>& mean, const std::vector<double>& invstd) const {
    const std::size_t N = in.dim(0), C = in.dim(1), HW = in.dim(2) * in.dim(3);
#pragma omp parallel for schedule(static)
    for (Index nc = 0; nc < static_cast<Index>(N * C); ++nc) {
      const std::size_t c = static_cast<std::size_t>(nc) % C;
      const T scale = static_cast<T>(gamma_.value[c] * invstd[c]);
      const T shift = static_cast<T>(beta_.value[c] - gamma_.value[c] * invstd[c] * mean[c]);
      const T* x = in.data() + static_cast<std::size_t>(nc) * HW;
      T* y = out.data() + static_cast<std::size_t>(nc) * HW;
      for (std::size_t i = 0; i < HW; ++i) y[i] = x[i] * scale + shift;
    }
  }

  std::size_t channels_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  BasicTensor<T> running_mean_;
  BasicTensor<T> running_var_;
  std::string mean_name_;
  std::string var_name_;
  std::vector<double> batch_mean_;
  std::vector<double> batch_invstd_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Activation final : public Layer<T> {
 public:
  explicit Activation(ActivationKind kind) : kind_(kind) {}

  LayerSpec spec() const override { return ActivationSpec{kind_}; }
  Shape output_shape(const Shape& in) const override { return in; }

  BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext&) override {
    BasicTensor<T> out(in.dims());
    const T* x = in.data();
    T* y = out.data();
    const auto n = static_cast<Index>(in.size());
    if (kind_ == ActivationKind::Relu) {
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
    } else {
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) y[i] = x[i] / (T{1} + std::exp(-x[i]));
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>&,
                          const BasicTensor<T>& grad_out) override {
    BasicTensor<T> grad_in(in.dims());
    const T* x = in.data();
    const T* dy = grad_out.data();
    T* dx = grad_in.data();
    const auto n = static_cast<Index>(in.size());
    if (kind_ == ActivationKind::Relu) {
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
    } else {
#pragma omp parallel for schedule(static)
      for (Index i = 0; i < n; ++i) {
        const T s = T{1} / (T{1} + std::exp(-x[i]));
        dx[i] = dy[i] * s * (T{1} + x[i] * (T{1} - s));
      }
    }
    return grad_in;
  }

 private:
  ActivationKind kind_;
};

// ---------------------------------------------------------------------------

template <typename T>
class MaxPool2D final : public Layer<T> {
 public:
  explicit MaxPool2D(const MaxPool2DSpec& spec) : spec_(spec) {
    if (spec.kernel_h == 0 || spec.kernel_w == 0 || spec.stride == 0) {
      throw InvalidInputError("invalid maxpool2d configuration");
    }
  }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& in) const override {
    require_rank(in, 4, "maxpool2d");
    if (in[2] < spec_.kernel_h || in[3] < spec_.kernel_w) {
      throw InvalidInputError("maxpool2d input smaller than window: " + shape_string(in));
    }
    return {in[0], in[1], (in[2] - spec_.kernel_h) / spec_.stride + 1,
            (in[3] - spec_.kernel_w) / spec_.stride + 1};
  }

  BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext& ctx) override {
    BasicTensor<T> out(output_shape(in.dims()));
    const std::size_t NC = in.dim(0) * in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t OH = out.dim(2), OW = out.dim(3);
    if (ctx.training) argmax_.assign(out.size(), 0);
#pragma omp parallel for schedule(static)
    for (Index p = 0; p < static_cast<Index>(NC); ++p) {
      const auto pi = static_cast<std::size_t>(p);
      const T* x = in.data() + pi * H * W;
      for (std::size_t oy = 0; oy < OH; ++oy) {
        for (std::size_t ox = 0; ox < OW; ++ox) {
          std::size_t best = (oy * spec_.stride) * W + ox * spec_.stride;
          for (std::size_t ky = 0; ky < spec_.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < spec_.kernel_w; ++kx) {
              const std::size_t idx = (oy * spec_.stride + ky) * W + ox * spec_.stride + kx;
              if (x[idx] > x[best]) best = idx;
            }
          }
          const std::size_t o = (pi * OH + oy) * OW + ox;
          out[o] = x[best];
          if (ctx.training) argmax_[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>& out,
                          const BasicTensor<T>& grad_out) override {
    BasicTensor<T> grad_in(in.dims());
    const std::size_t NC = in.dim(0) * in.dim(1), HW = in.dim(2) * in.dim(3);
    const std::size_t OHW = out.dim(2) * out.dim(3);
#pragma omp parallel for schedule(static)
    for (Index p = 0; p < static_cast<Index>(NC); ++p) {
      const auto pi = static_cast<std::size_t>(p);
      T* gx = grad_in.data() + pi * HW;
      for (std::size_t o = 0; o < OHW; ++o) {
        gx[argmax_[pi * OHW + o]] += grad_out[pi * OHW + o];
      }
    }
    return grad_in;
  }

 private:
  MaxPool2DSpec spec_;
  std::vector<std::uint32_t> argmax_;
};

// ---------------------------------------------------------------------------

template <typename T>
class GlobalMaxPool final : public Layer<T> {
 public:
  LayerSpec spec() const override { return GlobalMaxPoolSpec{}; }

  Shape output_shape(const Shape& in) const override {
    require_rank(in, 4, "globalmaxpool");
    if (in[2] == 0 || in[3] == 0) throw InvalidInputError("globalmaxpool on empty map");
    return {in[0], in[1]};
  }

  BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext& ctx) override {
    BasicTensor<T> out(output_shape(in.dims()));
    const std::size_t NC = in.dim(0) * in.dim(1), HW = in.dim(2) * in.dim(3);
    if (ctx.training) argmax_.assign(NC, 0);
    for (std::size_t p = 0; p < NC; ++p) {
      const T* x = in.data() + p * HW;
      std::size_t best = 0;
      for (std::size_t i = 1; i < HW; ++i) {
        if (x[i] > x[best]) best = i;
      }
      out[p] = x[best];
      if (ctx.training) argmax_[p] = best;
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>&,
                          const BasicTensor<T>& grad_out) override {
    BasicTensor<T> grad_in(in.dims());
    const std::size_t NC = in.dim(0) * in.dim(1), HW = in.dim(2) * in.dim(3);
    for (std::size_t p = 0; p < NC; ++p) grad_in[p * HW + argmax_[p]] = grad_out[p];
    return grad_in;
  }

 private:
  std::vector<std::size_t> argmax_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(const DenseSpec& spec, std::size_t in_features, const std::string& prefix, Rng& rng)
      : spec_(spec), in_(in_features) {
    if (spec.out == 0 || in_features == 0) throw InvalidInputError("invalid dense configuration");
    weight_.name = prefix + ".weight";
    weight_.value = BasicTensor<T>({spec.out, in_features});
    weight_.grad = BasicTensor<T>(weight_.value.dims());
    kaiming_uniform(weight_.value, in_features, rng);
    bias_.name = prefix + ".bias";
    bias_.value = BasicTensor<T>({spec.out});
    bias_.grad = BasicTensor<T>({spec.out});
  }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& in) const override {
    require_rank(in, 2, "dense");
    if (in[1] != in_) throw InvalidInputError("dense input width mismatch: " + shape_string(in));
    return {in[0], spec_.out};
  }

  BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext&) override {
    BasicTensor<T> out(output_shape(in.dims()));
    const std::size_t N = in.dim(0), O = spec_.out;
    for (std::size_t n = 0; n < N; ++n) {
      const T* x = in.data() + n * in_;
      for (std::size_t o = 0; o < O; ++o) {
        const T* w = weight_.value.data() + o * in_;
        double acc = bias_.value[o];
        for (std::size_t i = 0; i < in_; ++i) acc += static_cast<double>(w[i]) * x[i];
        out[n * O + o] = static_cast<T>(acc);
      }
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>&,
                          const BasicTensor<T>& grad_out) override {
    const std::size_t N = in.dim(0), O = spec_.out;
    BasicTensor<T> grad_in(in.dims());
    for (std::size_t o = 0; o < O; ++o) {
      double db = 0.0;
      for (std::size_t n = 0; n < N; ++n) db += grad_out[n * O + o];
      bias_.grad[o] += static_cast<T>(db);
      T* gw = weight_.grad.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          acc += static_cast<double>(grad_out[n * O + o]) * in[n * in_ + i];
        }
        gw[i] += static_cast<T>(acc);
      }
    }
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < in_; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < O; ++o) {
          acc += static_cast<double>(weight_.value[o * in_ + i]) * grad_out[n * O + o];
        }
        grad_in[n * in_ + i] = static_cast<T>(acc);
      }
    }
    return grad_in;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 private:
  DenseSpec spec_;
  std::size_t in_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Dropout final : public Layer<T> {
 public:
  explicit Dropout(const DropoutSpec& spec) : spec_(spec) {
    if (!(spec.p >= 0.0 && spec.p < 1.0)) throw InvalidInputError("dropout p must lie in [0, 1)");
  }

  LayerSpec spec() const override { return spec_; }
  Shape output_shape(const Shape& in) const override { return in; }

  BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext& ctx) override {
    if (!ctx.training || spec_.p == 0.0) {
      mask_.assign(in.size(), T{1});
      return in;
    }
    if (ctx.rng == nullptr) throw InvalidInputError("dropout needs an RNG in training mode");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - spec_.p));
    mask_.resize(in.size());
    BasicTensor<T> out(in.dims());
    for (std::size_t i = 0; i < in.size(); ++i) {
      mask_[i] = ctx.rng->uniform() >= spec_.p ? keep_scale : T{0};
      out[i] = in[i] * mask_[i];
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>&,
                          const BasicTensor<T>& grad_out) override {
    BasicTensor<T> grad_in(in.dims());
    for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = grad_out[i] * mask_[i];
    return grad_in;
  }

 private:
  DropoutSpec spec_;
  std::vector<T> mask_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& in_shape,
                                     const std::string& prefix, Rng& init_rng) {
  struct Visitor {
    const Shape& in;
    const std::string& prefix;
    Rng& rng;
    std::unique_ptr<Layer<T>> operator()(const Conv2DSpec& s) const {
      require_rank(in, 4, "conv2d");
      return std::make_unique<Conv2D<T>>(s, in[1], prefix, rng);
    }
    std::unique_ptr<Layer<T>> operator()(const BatchNorm2DSpec&) const {
      require_rank(in, 4, "batchnorm2d");
      return std::make_unique<BatchNorm2D<T>>(in[1], prefix);
    }
    std::unique_ptr<Layer<T>> operator()(const ActivationSpec& s) const {
      return std::make_unique<Activation<T>>(s.kind);
    }
    std::unique_ptr<Layer<T>> operator()(const MaxPool2DSpec& s) const {
      return std::make_unique<MaxPool2D<T>>(s);
    }
    std::unique_ptr<Layer<T>> operator()(const GlobalMaxPoolSpec&) const {
      return std::make_unique<GlobalMaxPool<T>>();
    }
    std::unique_ptr<Layer<T>> operator()(const DenseSpec& s) const {
      require_rank(in, 2, "dense");
      return std::make_unique<Dense<T>>(s, in[1], prefix, rng);
    }
    std::unique_ptr<Layer<T>> operator()(const DropoutSpec& s) const {
      return std::make_unique<Dropout<T>>(s);
    }
  };
  return std::visit(Visitor{in_shape, prefix, init_rng}, spec);
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&, const Shape&,
                                                         const std::string&, Rng&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&, const Shape&,
                                                           const std::string&, Rng&);

}  // namespace sqalab
