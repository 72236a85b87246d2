#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <tuple>
#include <vector>

#include "echo2mri/training/train_state.hpp"

namespace echo2mri::training {

/// One alternating update on a batch of unpaired (x, y) triplets:
/// ŷ=G(x), x̃=F(ŷ), x̂=F(y), ỹ=G(x̂); one Adam step on {G, F} against the
/// total generator objective, then one step each on D_Y and D_X. Losses are
/// batch means. Throws DivergenceError before touching any weight if a loss
/// is non-finite.
template <typename T>
losses::LossReport train_step(TrainState<T>& s, std::span<const Tensor<T>> xs,
                              std::span<const Tensor<T>> ys) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw InputError("train_step needs equally sized, non-empty batches");
  }
  auto& m = s.bundle;
  const double lambda = s.config.lambda;
  const double inv_b = 1.0 / static_cast<double>(xs.size());
  losses::LossReport r;
  r.lambda = lambda;
  r.step = s.step + 1;
  r.epoch = s.epoch + 1;

  s.opt_generators.zero_grad();
  std::vector<Tensor<T>> fresh_y, fresh_x;
  try {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor<T>& x = xs[i];
    const Tensor<T>& y = ys[i];
    typename models::Generator<T>::Tape t_gx, t_fyhat, t_fy, t_gxhat;
    typename models::Discriminator<T>::Tape t_dy, t_dx;
    const Tensor<T> y_hat = m.G.forward(x, &t_gx);
    const Tensor<T> x_tilde = m.F.forward(y_hat, &t_fyhat);
    const Tensor<T> x_hat = m.F.forward(y, &t_fy);
    const Tensor<T> y_tilde = m.G.forward(x_hat, &t_gxhat);
    const Tensor<T> dy = m.D_Y.forward(y_hat, &t_dy);
    const Tensor<T> dx = m.D_X.forward(x_hat, &t_dx);

    const auto [adv_g, adv_f] = losses::adversarial_generator_loss(dy, dx);
    const double cyc = losses::cycle_consistency_loss(x, x_tilde, y, y_tilde);
    r.adv_G += inv_b * adv_g;
    r.adv_F += inv_b * adv_f;
    r.cyc += inv_b * cyc;

    // Discriminator parameter gradients collected here are discarded below.
    Tensor<T> g_yhat = m.D_Y.backward(t_dy, losses::mean_squared_deviation_grad(dy, 1.0, inv_b));
    Tensor<T> g_xhat = m.D_X.backward(t_dx, losses::mean_squared_deviation_grad(dx, 1.0, inv_b));
    g_yhat += m.F.backward(t_fyhat, losses::mean_absolute_deviation_grad(x_tilde, x, lambda * inv_b));
    m.G.backward(t_gx, g_yhat, false);
    g_xhat += m.G.backward(t_gxhat, losses::mean_absolute_deviation_grad(y_tilde, y, lambda * inv_b));
    m.F.backward(t_fy, g_xhat, false);

    fresh_y.push_back(y_hat);
    fresh_x.push_back(x_hat);
  }
  } catch (const NumericError&) {
    r.adv_G = std::numeric_limits<double>::quiet_NaN();
    r.total_T = r.adv_G;
    throw DivergenceError(r);
  }
  r.total_T = losses::total_generator_loss(r.adv_G, r.adv_F, r.cyc, lambda);

  auto discriminator_pass = [&](models::Discriminator<T>& d, Adam<T>& opt, HistoryBuffer<T>& pool,
                                std::span<const Tensor<T>> reals, std::vector<Tensor<T>>& fakes) {
    opt.zero_grad();
    double loss = 0.0;
    for (std::size_t i = 0; i < reals.size(); ++i) {
      const Tensor<T> fake = s.config.buffered_fakes ? pool.push_sample(fakes[i], s.rng) : fakes[i];
      typename models::Discriminator<T>::Tape t_real, t_fake;
      const Tensor<T> d_real = d.forward(reals[i], &t_real);
      const Tensor<T> d_fake = d.forward(fake, &t_fake);
      loss += inv_b * losses::discriminator_loss(d_real, d_fake);
      d.backward(t_real, losses::mean_squared_deviation_grad(d_real, 1.0, inv_b), false);
      d.backward(t_fake, losses::mean_squared_deviation_grad(d_fake, 0.0, inv_b), false);
    }
    return loss;
  };
  try {
    r.d1 = discriminator_pass(m.D_Y, s.opt_dy, s.fake_y_pool, ys, fresh_y);
    r.d2 = discriminator_pass(m.D_X, s.opt_dx, s.fake_x_pool, xs, fresh_x);
  } catch (const NumericError&) {
    r.d1 = r.d2 = std::numeric_limits<double>::quiet_NaN();
  }
  if (!r.finite()) throw DivergenceError(r);

  s.opt_generators.step(s.learning_rate);
  s.opt_dy.step(s.learning_rate);
  s.opt_dx.step(s.learning_rate);
  ++s.step;
  return r;
}

/// Forward-only evaluation of every loss term on one (x, y) pair, with the
/// discriminators judging the fresh fakes. Nothing is updated.
template <typename T>
losses::LossReport evaluate_losses(models::ModelBundle<T>& m, const Tensor<T>& x, const Tensor<T>& y,
                                   double lambda) {
  losses::LossReport r;
  r.lambda = lambda;
  const Tensor<T> y_hat = m.G(x);
  const Tensor<T> x_hat = m.F(y);
  std::tie(r.adv_G, r.adv_F) = losses::adversarial_generator_loss(m.D_Y(y_hat), m.D_X(x_hat));
  r.cyc = losses::cycle_consistency_loss(x, m.F(y_hat), y, m.G(x_hat));
  r.total_T = losses::total_generator_loss(r.adv_G, r.adv_F, r.cyc, lambda);
  r.d1 = losses::discriminator_loss(m.D_Y(y), m.D_Y(y_hat));
  r.d2 = losses::discriminator_loss(m.D_X(x), m.D_X(x_hat));
  return r;
}

template <typename T>
losses::LossReport train_step(TrainState<T>& s, const Tensor<T>& x, const Tensor<T>& y) {
  return train_step(s, std::span<const Tensor<T>>(&x, 1), std::span<const Tensor<T>>(&y, 1));
}

/// Drives epochs over two unpaired pools. Each step draws `batch_size`
/// echo and MRI triplets independently and uniformly; an epoch is
/// min(|X|, |Y|) / batch_size steps (at least one).
template <typename T>
class Trainer {
 public:
  using Callback = std::function<void(const losses::LossReport&)>;

  Trainer(std::unique_ptr<TrainState<T>> state, std::vector<Tensor<T>> echo,
          std::vector<Tensor<T>> mri)
      : state_(std::move(state)), echo_(std::move(echo)), mri_(std::move(mri)) {
    if (echo_.empty() || mri_.empty()) throw InputError("both triplet pools must be non-empty");
  }

  Trainer(const TrainConfig& cfg, std::vector<Tensor<T>> echo, std::vector<Tensor<T>> mri)
      : Trainer(std::make_unique<TrainState<T>>(cfg), std::move(echo), std::move(mri)) {}

  TrainState<T>& state() noexcept { return *state_; }

  /// Called with every report; also appended to `run_dir`/losses.jsonl when a
  /// run directory is set.
  void on_report(Callback cb) { callbacks_.push_back(std::move(cb)); }

  /// Enables checkpoints under `run_dir`/checkpoints and the loss log.
  void set_run_directory(const std::filesystem::path& run_dir) {
    run_dir_ = run_dir;
    std::filesystem::create_directories(run_dir / "checkpoints");
  }

  long steps_per_epoch() const {
    const auto n = std::min(echo_.size(), mri_.size()) / state_->config.batch_size;
    return std::max<long>(1, static_cast<long>(n));
  }

  /// One sampled step at the current learning rate.
  losses::LossReport step() {
    auto& s = *state_;
    std::vector<Tensor<T>> xs, ys;
    for (int i = 0; i < s.config.batch_size; ++i) {
      xs.push_back(echo_[std::uniform_int_distribution<std::size_t>(0, echo_.size() - 1)(s.rng)]);
      ys.push_back(mri_[std::uniform_int_distribution<std::size_t>(0, mri_.size() - 1)(s.rng)]);
    }
    const auto report = train_step(s, std::span<const Tensor<T>>(xs), std::span<const Tensor<T>>(ys));
    emit(report);
    return report;
  }

  /// Trains from the state's completed epoch to `config.epochs`.
  void run() {
    auto& s = *state_;
    for (int e = s.epoch + 1; e <= s.config.epochs; ++e) {
      s.learning_rate = lr_schedule(e, s.config);
      for (long i = 0; i < steps_per_epoch(); ++i) step();
      s.epoch = e;
      if (run_dir_ && (e % s.config.checkpoint_every == 0 || e == s.config.epochs)) {
        save_checkpoint(s, checkpoint_path(e));
      }
    }
  }

  std::filesystem::path checkpoint_path(int epoch) const {
    std::ostringstream name;
    name << "epoch_" << std::setw(4) << std::setfill('0') << epoch;
    return *run_dir_ / "checkpoints" / name.str();
  }

 private:
  void emit(const losses::LossReport& r) {
    if (run_dir_) {
      std::ofstream log(*run_dir_ / "losses.jsonl", std::ios::app);
      log << nlohmann::json(r).dump() << "\n";
    }
    for (auto& cb : callbacks_) cb(r);
  }

  std::unique_ptr<TrainState<T>> state_;
  std::vector<Tensor<T>> echo_;
  std::vector<Tensor<T>> mri_;
  std::optional<std::filesystem::path> run_dir_;
  std::vector<Callback> callbacks_;
};

/// Most recent checkpoint directory under `run_dir`/checkpoints, if any.
inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir) {
  std::optional<std::filesystem::path> best;
  const auto dir = run_dir / "checkpoints";
  if (!std::filesystem::exists(dir)) return best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!std::filesystem::exists(entry.path() / "checkpoint.json")) continue;
    if (!best || entry.path().filename() > best->filename()) best = entry.path();
  }
  return best;
}

}  // namespace echo2mri::training
