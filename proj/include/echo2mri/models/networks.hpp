#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "echo2mri/models/blocks.hpp"
#include "echo2mri/models/spec.hpp"

namespace echo2mri::models {

/// Standard deviation of the Gaussian used for every convolution kernel.
inline constexpr double kInitStddev = 0.02;

template <typename T>
void initialize_kernels(nn::ParameterList<T> params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto* p : params) {
    if (p->name.ends_with(".weight")) nn::gaussian_fill(*p, kInitStddev, rng);
  }
}

/// ResNet translation network: 7x7 entry conv, two stride-2 downsampling
/// convs, n residual blocks at 4x width, two stride-2 transposed convs and a
/// 7x7 exit conv with tanh. Convs followed by instance norm carry no bias.
template <typename T>
class Generator {
 public:
  using Unit = ConvUnit<T, nn::Conv2d>;
  using UpUnit = ConvUnit<T, nn::ConvTranspose2d>;

  struct Tape {
    typename Unit::Cache entry, down1, down2;
    std::vector<typename ResidualBlock<T>::Cache> res;
    typename UpUnit::Cache up1, up2;
    typename Unit::Cache exit;
  };

  explicit Generator(const GeneratorSpec& spec = {}, const std::string& name = "G") : spec_(spec) {
    spec.validate();
    const int w = spec.base_width;
    using nn::Activation;
    using nn::PadMode;
    using nn::Padding;
    entry_ = Unit(nn::Conv2d<T>(name + ".entry",
                                {spec.input_channels, w, 7, 1, Padding::uniform(3), PadMode::reflect, false}),
                  true, Activation::relu, name + ".entry");
    down1_ = Unit(nn::Conv2d<T>(name + ".down1", {w, 2 * w, 3, 2, Padding::uniform(1), PadMode::zero, false}),
                  true, Activation::relu, name + ".down1");
    down2_ = Unit(nn::Conv2d<T>(name + ".down2", {2 * w, 4 * w, 3, 2, Padding::uniform(1), PadMode::zero, false}),
                  true, Activation::relu, name + ".down2");
    for (int i = 0; i < spec.n_res_blocks; ++i) {
      res_.emplace_back(4 * w, name + ".res" + std::to_string(i));
    }
    up1_ = UpUnit(nn::ConvTranspose2d<T>(name + ".up1", {4 * w, 2 * w, 3, 2, 1, 1, false}), true,
                  Activation::relu, name + ".up1");
    up2_ = UpUnit(nn::ConvTranspose2d<T>(name + ".up2", {2 * w, w, 3, 2, 1, 1, false}), true,
                  Activation::relu, name + ".up2");
    exit_ = Unit(nn::Conv2d<T>(name + ".exit",
                               {w, spec.input_channels, 7, 1, Padding::uniform(3), PadMode::reflect, true}),
                 false, Activation::tanh, name + ".exit");
  }

  const GeneratorSpec& spec() const noexcept { return spec_; }

  nn::ParameterList<T> parameters() {
    nn::ParameterList<T> out;
    auto add = [&](nn::ParameterList<T> p) { out.insert(out.end(), p.begin(), p.end()); };
    add(entry_.parameters());
    add(down1_.parameters());
    add(down2_.parameters());
    for (auto& r : res_) add(r.parameters());
    add(up1_.parameters());
    add(up2_.parameters());
    add(exit_.parameters());
    return out;
  }

  void initialize(std::uint64_t seed) { initialize_kernels(parameters(), seed); }

  std::vector<ResidualBlock<T>>& residual_blocks() noexcept { return res_; }

  Shape output_shape(Shape in) const {
    Shape s = entry_.output_shape(in);
    s = down1_.output_shape(s);
    s = down2_.output_shape(s);
    s = up1_.output_shape(s);
    s = up2_.output_shape(s);
    return exit_.output_shape(s);
  }

  Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
    check_input(x.shape());
    if (tape) tape->res.resize(res_.size());
    Tensor<T> h = entry_.forward(x, tape ? &tape->entry : nullptr);
    h = down1_.forward(h, tape ? &tape->down1 : nullptr);
    h = down2_.forward(h, tape ? &tape->down2 : nullptr);
    for (std::size_t i = 0; i < res_.size(); ++i) {
      h = res_[i].forward(h, tape ? &tape->res[i] : nullptr);
    }
    h = up1_.forward(h, tape ? &tape->up1 : nullptr);
    h = up2_.forward(h, tape ? &tape->up2 : nullptr);
    return exit_.forward(h, tape ? &tape->exit : nullptr);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return forward(x); }

  /// Backpropagates `grad` (w.r.t. the output) through the taped pass,
  /// accumulating parameter gradients.
  Tensor<T> backward(const Tape& tape, const Tensor<T>& grad, bool input_grad = true) {
    Tensor<T> g = exit_.backward(tape.exit, grad);
    g = up2_.backward(tape.up2, std::move(g));
    g = up1_.backward(tape.up1, std::move(g));
    for (std::size_t i = res_.size(); i-- > 0;) g = res_[i].backward(tape.res[i], g);
    g = down2_.backward(tape.down2, std::move(g));
    g = down1_.backward(tape.down1, std::move(g));
    return entry_.backward(tape.entry, std::move(g), input_grad);
  }

 private:
  void check_input(Shape in) const {
    if (in.channels != spec_.input_channels || in.height % 4 != 0 || in.width % 4 != 0 ||
        in.height < 8 || in.width < 8) {
      throw ShapeError("generator input must be (3, H, W) with H, W multiples of 4 and >= 8, got " +
                       in.str());
    }
  }

  GeneratorSpec spec_;
  Unit entry_, down1_, down2_;
  std::vector<ResidualBlock<T>> res_;
  UpUnit up1_, up2_;
  Unit exit_;
};

/// Five-layer patch discriminator emitting an (image_size/8)^2 decision grid.
/// No sigmoid on the output: the least-squares objectives consume raw scores.
template <typename T>
class Discriminator {
 public:
  using Unit = ConvUnit<T, nn::Conv2d>;
  struct Tape {
    std::vector<typename Unit::Cache> layers;
  };

  explicit Discriminator(const DiscriminatorSpec& spec = {}, const std::string& name = "D")
      : spec_(spec) {
    spec.validate();
    const int w = spec.base_width;
    using nn::Activation;
    using nn::PadMode;
    using nn::Padding;
    const auto down = Padding::uniform(1);
    const auto same = Padding::same(4);
    struct Layer {
      int in, out, stride;
      Padding pad;
      bool norm;
      Activation act;
    };
    const Layer plan[] = {
        {spec.input_channels, w, 2, down, false, Activation::leaky_relu},
        {w, 2 * w, 2, down, true, Activation::leaky_relu},
        {2 * w, 4 * w, 2, down, true, Activation::leaky_relu},
        {4 * w, 8 * w, 1, same, true, Activation::leaky_relu},
        {8 * w, 1, 1, same, false, Activation::none},
    };
    int i = 0;
    for (const auto& l : plan) {
      const std::string lname = name + ".conv" + std::to_string(++i);
      // a bias is redundant in front of instance norm
      layers_.emplace_back(nn::Conv2d<T>(lname, {l.in, l.out, 4, l.stride, l.pad, PadMode::zero, !l.norm}),
                           l.norm, l.act, lname);
    }
  }

  const DiscriminatorSpec& spec() const noexcept { return spec_; }

  nn::ParameterList<T> parameters() {
    nn::ParameterList<T> out;
    for (auto& l : layers_) {
      auto p = l.parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  void initialize(std::uint64_t seed) { initialize_kernels(parameters(), seed); }

  std::vector<Unit>& layers() noexcept { return layers_; }

  Shape output_shape(Shape in) const {
    for (const auto& l : layers_) in = l.output_shape(in);
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
    if (tape) tape->layers.resize(layers_.size());
    Tensor<T> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h, tape ? &tape->layers[i] : nullptr);
    }
    return h;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return forward(x); }

  Tensor<T> backward(const Tape& tape, const Tensor<T>& grad, bool input_grad = true) {
    Tensor<T> g = grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      g = layers_[i].backward(tape.layers[i], std::move(g), i > 0 || input_grad);
    }
    return g;
  }

 private:
  DiscriminatorSpec spec_;
  std::vector<Unit> layers_;
};

/// Exact number of trainable scalars.
template <typename Model>
std::size_t count_parameters(Model& model) {
  return nn::count_scalars(model.parameters());
}

/// The four networks of the two-cycle translation model. G maps echo (X)
/// to MRI (Y), F maps back; D_X and D_Y judge their domains.
template <typename T>
struct ModelBundle {
  Generator<T> G;
  Generator<T> F;
  Discriminator<T> D_X;
  Discriminator<T> D_Y;

  ModelBundle(const GeneratorSpec& gspec, const DiscriminatorSpec& dspec)
      : G(gspec, "G"), F(gspec, "F"), D_X(dspec, "D_X"), D_Y(dspec, "D_Y") {}

  void initialize(std::uint64_t seed) {
    G.initialize(seed * 4 + 1);
    F.initialize(seed * 4 + 2);
    D_X.initialize(seed * 4 + 3);
    D_Y.initialize(seed * 4 + 4);
  }
};

}  // namespace echo2mri::models
