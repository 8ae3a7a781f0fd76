#pragma once

#include <cmath>
#include <vector>

#include "envshift/nn/train.hpp"

namespace envshift::nn {

struct AutoencoderOptions {
  std::vector<int> hidden = {64};
  Activation hidden_activation = Activation::ReLU;
};

struct AutoencoderResult {
  MlpParams encoder;
  MlpParams decoder;
  double initial_loss = 0.0;        // full-set MSE before the first update
  std::vector<double> epoch_loss;   // full-set MSE after each epoch
  std::uint64_t input_fingerprint = 0;
};

inline double reconstruction_mse(const MlpParams& enc, const MlpParams& dec, const Matrix& x) {
  return (forward(dec, forward(enc, x)) - x).squaredNorm() / static_cast<double>(x.size());
}

/// Trains encoder/decoder jointly on MSE reconstruction of every row of
/// `x_train`. The latent layer is linear; hidden layers use the configured
/// activation, mirrored in the decoder.
inline AutoencoderResult train_autoencoder(const Matrix& x_train, const TrainConfig& cfg, int d_latent,
                                           const AutoencoderOptions& opt = {}) {
  cfg.validate();
  if (d_latent < 1) throw ConfigError("d_latent must be >= 1");
  if (x_train.rows() < 2) throw InsufficientData("autoencoder needs >= 2 rows");
  const RngHandle root(cfg.seed, "autoencoder");
  const int d_x = static_cast<int>(x_train.cols());

  std::vector<int> enc_dims{d_x};
  enc_dims.insert(enc_dims.end(), opt.hidden.begin(), opt.hidden.end());
  enc_dims.push_back(d_latent);
  std::vector<Activation> enc_act(opt.hidden.size(), opt.hidden_activation);
  enc_act.push_back(Activation::Identity);

  std::vector<int> dec_dims(enc_dims.rbegin(), enc_dims.rend());
  std::vector<Activation> dec_act(opt.hidden.size(), opt.hidden_activation);
  dec_act.push_back(Activation::Identity);

  AutoencoderResult r;
  r.input_fingerprint = fingerprint(x_train);
  MlpParams net = stack(init_mlp(enc_dims, enc_act, root.split("init-encoder")),
                        init_mlp(dec_dims, dec_act, root.split("init-decoder")));
  const std::size_t n_enc = enc_act.size();
  AdamState adam = make_adam(net, cfg.lr);

  r.initial_loss = (forward(net, x_train) - x_train).squaredNorm() / static_cast<double>(x_train.size());
  Rng shuffle_rng(root.split("shuffle"));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(static_cast<std::size_t>(x_train.rows()));
    for (const auto& batch_idx : make_batches(order, cfg.batch_size)) {
      Batch b;
      b.inputs = gather_rows(x_train, batch_idx);
      b.targets = b.inputs;
      LossAndGrad lg = loss_and_grad(net, b, LossKind::MSE);
      add_weight_decay(lg.grads, net, cfg.weight_decay);
      adam_update(net, lg.grads, adam);
    }
    const double full = (forward(net, x_train) - x_train).squaredNorm() / static_cast<double>(x_train.size());
    if (!std::isfinite(full)) throw NumericalError("autoencoder diverged at epoch " + std::to_string(epoch + 1), -1);
    r.epoch_loss.push_back(full);
  }
  r.encoder = slice(net, 0, n_enc);
  r.decoder = slice(net, n_enc, net.layers.size());
  return r;
}

}  // namespace envshift::nn
