#pragma once

#include <string>

#include "echo2mri/nn/im2col.hpp"
#include "echo2mri/nn/parameter.hpp"

namespace echo2mri::nn {

struct Conv2dOptions {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  Padding padding{};
  PadMode pad_mode = PadMode::zero;
  bool bias = true;
};

/// 2-D convolution lowered to im2col + GEMM. Weight layout is
/// [out][in][ky][kx].
template <typename T>
class Conv2d {
 public:
  struct Cache {
    Tensor<T> padded;
    Shape input;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, const Conv2dOptions& opt)
      : opt_(opt),
        weight_(name + ".weight", {opt.out_channels, opt.in_channels, opt.kernel, opt.kernel}),
        bias_(name + ".bias", {opt.bias ? opt.out_channels : 0}) {
    if (opt.in_channels < 1 || opt.out_channels < 1 || opt.kernel < 1 || opt.stride < 1) {
      throw ConstructionError("convolution '" + name + "' has a non-positive dimension");
    }
  }

  const Conv2dOptions& options() const noexcept { return opt_; }
  Parameter<T>& weight() noexcept { return weight_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }

  ParameterList<T> parameters() {
    ParameterList<T> out{&weight_};
    if (opt_.bias) out.push_back(&bias_);
    return out;
  }

  Shape output_shape(Shape in) const {
    if (in.channels != opt_.in_channels) {
      throw ShapeError("convolution expects " + std::to_string(opt_.in_channels) +
                       " channels, got " + in.str());
    }
    const int hp = in.height + opt_.padding.top + opt_.padding.bottom;
    const int wp = in.width + opt_.padding.left + opt_.padding.right;
    if (hp < opt_.kernel || wp < opt_.kernel) {
      throw ShapeError("input " + in.str() + " smaller than convolution kernel");
    }
    return {opt_.out_channels, (hp - opt_.kernel) / opt_.stride + 1,
            (wp - opt_.kernel) / opt_.stride + 1};
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    const Shape os = output_shape(x.shape());
    Tensor<T> padded = pad(x, opt_.padding, opt_.pad_mode);
    Tensor<T> out(os);
    const int k = opt_.kernel;
    const int patch = opt_.in_channels * k * k;
    const ConstStridedMap<T> w(weight_.value.data(), opt_.out_channels, patch,
                               Eigen::OuterStride<>(patch));
    RowMatrix<T> cols;
    const int chunk = rows_per_chunk(patch, os.width, os.height);
    for (int r0 = 0; r0 < os.height; r0 += chunk) {
      const int r1 = std::min(os.height, r0 + chunk);
      im2col(padded, k, opt_.stride, os.width, r0, r1, cols);
      StridedMap<T> dst(out.data() + static_cast<std::size_t>(r0) * os.width, os.channels,
                        (r1 - r0) * os.width, Eigen::OuterStride<>(os.height * os.width));
      dst.noalias() = w * cols;
    }
    if (opt_.bias) {
      for (int c = 0; c < os.channels; ++c) {
        T* p = out.channel(c);
        const T b = bias_.value[c];
        for (std::size_t i = 0; i < os.plane(); ++i) p[i] += b;
      }
    }
    if (cache) {
      cache->padded = std::move(padded);
      cache->input = x.shape();
    }
    return out;
  }

  /// Accumulates weight/bias gradients; returns the input gradient unless
  /// `input_grad` is false (then an empty tensor).
  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad_out, bool input_grad = true) {
    const Shape os = grad_out.shape();
    const int k = opt_.kernel;
    const int patch = opt_.in_channels * k * k;
    const ConstStridedMap<T> w(weight_.value.data(), opt_.out_channels, patch,
                               Eigen::OuterStride<>(patch));
    StridedMap<T> gw(weight_.grad.data(), opt_.out_channels, patch, Eigen::OuterStride<>(patch));
    Tensor<T> gpadded;
    if (input_grad) gpadded = Tensor<T>(cache.padded.shape());
    RowMatrix<T> cols;
    RowMatrix<T> gcols;
    const int chunk = rows_per_chunk(patch, os.width, os.height);
    for (int r0 = 0; r0 < os.height; r0 += chunk) {
      const int r1 = std::min(os.height, r0 + chunk);
      im2col(cache.padded, k, opt_.stride, os.width, r0, r1, cols);
      const ConstStridedMap<T> g(grad_out.data() + static_cast<std::size_t>(r0) * os.width,
                                 os.channels, (r1 - r0) * os.width,
                                 Eigen::OuterStride<>(os.height * os.width));
      gw.noalias() += g * cols.transpose();
      if (input_grad) {
        gcols.noalias() = w.transpose() * g;
        col2im(gcols, k, opt_.stride, os.width, r0, r1, gpadded);
      }
    }
    if (opt_.bias) {
      for (int c = 0; c < os.channels; ++c) {
        const T* p = grad_out.channel(c);
        T acc = 0;
        for (std::size_t i = 0; i < os.plane(); ++i) acc += p[i];
        bias_.grad[c] += acc;
      }
    }
    if (!input_grad) return {};
    return unpad_gradient(gpadded, cache.input, opt_.padding, opt_.pad_mode);
  }

 private:
  Conv2dOptions opt_{};
  Parameter<T> weight_;
  Parameter<T> bias_;
};

struct ConvTranspose2dOptions {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 2;
  int padding = 1;
  int output_padding = 1;
  bool bias = true;
};

/// Fractionally-strided convolution (adjoint of a strided Conv2d). Output
/// size is (H-1)*stride - 2*padding + kernel + output_padding. Weight layout
/// is [in][out][ky][kx].
template <typename T>
class ConvTranspose2d {
 public:
  struct Cache {
    Tensor<T> input;
  };

  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, const ConvTranspose2dOptions& opt)
      : opt_(opt),
        weight_(name + ".weight", {opt.in_channels, opt.out_channels, opt.kernel, opt.kernel}),
        bias_(name + ".bias", {opt.bias ? opt.out_channels : 0}) {
    if (opt.in_channels < 1 || opt.out_channels < 1 || opt.kernel < 1 || opt.stride < 1) {
      throw ConstructionError("transposed convolution '" + name + "' has a non-positive dimension");
    }
    if (opt.output_padding > opt.padding || opt.output_padding >= opt.stride) {
      throw ConstructionError("transposed convolution '" + name + "' has invalid output padding");
    }
  }

  const ConvTranspose2dOptions& options() const noexcept { return opt_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }

  ParameterList<T> parameters() {
    ParameterList<T> out{&weight_};
    if (opt_.bias) out.push_back(&bias_);
    return out;
  }

  Shape output_shape(Shape in) const {
    if (in.channels != opt_.in_channels) {
      throw ShapeError("transposed convolution expects " + std::to_string(opt_.in_channels) +
                       " channels, got " + in.str());
    }
    auto dim = [&](int n) {
      return (n - 1) * opt_.stride - 2 * opt_.padding + opt_.kernel + opt_.output_padding;
    };
    return {opt_.out_channels, dim(in.height), dim(in.width)};
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    const Shape os = output_shape(x.shape());
    const int k = opt_.kernel;
    const int patch = opt_.out_channels * k * k;
    const ConstStridedMap<T> w(weight_.value.data(), opt_.in_channels, patch,
                               Eigen::OuterStride<>(patch));
    const ConstStridedMap<T> xin(x.data(), x.channels(), static_cast<Eigen::Index>(x.shape().plane()),
                                 Eigen::OuterStride<>(x.shape().plane()));
    RowMatrix<T> cols = w.transpose() * xin;
    Tensor<T> full(opt_.out_channels, full_dim(x.height()), full_dim(x.width()));
    col2im(cols, k, opt_.stride, x.width(), 0, x.height(), full);
    Tensor<T> out(os);
    for (int c = 0; c < os.channels; ++c) {
      const T b = opt_.bias ? bias_.value[c] : T(0);
      for (int y = 0; y < os.height; ++y) {
        const int fy = y + opt_.padding;
        for (int xo = 0; xo < os.width; ++xo) {
          const int fx = xo + opt_.padding;
          const bool inside = fy < full.height() && fx < full.width();
          out(c, y, xo) = (inside ? full(c, fy, fx) : T(0)) + b;
        }
      }
    }
    if (cache) cache->input = x;
    return out;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad_out, bool input_grad = true) {
    const Tensor<T>& x = cache.input;
    const int k = opt_.kernel;
    const int patch = opt_.out_channels * k * k;
    Tensor<T> gfull(opt_.out_channels, full_dim(x.height()), full_dim(x.width()));
    const Shape os = grad_out.shape();
    for (int c = 0; c < os.channels; ++c) {
      for (int y = 0; y < os.height; ++y) {
        const int fy = y + opt_.padding;
        if (fy >= gfull.height()) continue;
        for (int xo = 0; xo < os.width; ++xo) {
          const int fx = xo + opt_.padding;
          if (fx < gfull.width()) gfull(c, fy, fx) = grad_out(c, y, xo);
        }
      }
    }
    RowMatrix<T> cols;
    im2col(gfull, k, opt_.stride, x.width(), 0, x.height(), cols);
    const auto plane = static_cast<Eigen::Index>(x.shape().plane());
    const ConstStridedMap<T> xin(x.data(), x.channels(), plane, Eigen::OuterStride<>(plane));
    StridedMap<T> gw(weight_.grad.data(), opt_.in_channels, patch, Eigen::OuterStride<>(patch));
    gw.noalias() += xin * cols.transpose();
    if (opt_.bias) {
      for (int c = 0; c < os.channels; ++c) {
        const T* p = grad_out.channel(c);
        T acc = 0;
        for (std::size_t i = 0; i < os.plane(); ++i) acc += p[i];
        bias_.grad[c] += acc;
      }
    }
    if (!input_grad) return {};
    Tensor<T> gx(x.shape());
    const ConstStridedMap<T> w(weight_.value.data(), opt_.in_channels, patch,
                               Eigen::OuterStride<>(patch));
    StridedMap<T> gxm(gx.data(), x.channels(), plane, Eigen::OuterStride<>(plane));
    gxm.noalias() = w * cols;
    return gx;
  }

 private:
  int full_dim(int n) const { return (n - 1) * opt_.stride + opt_.kernel; }

  ConvTranspose2dOptions opt_{};
  Parameter<T> weight_;
  Parameter<T> bias_;
};

}  // namespace echo2mri::nn
