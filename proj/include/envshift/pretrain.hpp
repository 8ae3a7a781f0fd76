#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "envshift/core.hpp"
#include "envshift/nn/adam.hpp"
#include "envshift/nn/losses.hpp"
#include "envshift/nn/train.hpp"

namespace envshift {

enum class PretrainerKind { Random, ERM, IRM, Fish, LISA, MoCo, EAMoCo };

/// Column order of the report: None | Supervised | Unsupervised.
inline constexpr PretrainerKind kPretrainerTableOrder[] = {
    PretrainerKind::Random, PretrainerKind::ERM,    PretrainerKind::Fish, PretrainerKind::IRM,
    PretrainerKind::LISA,   PretrainerKind::EAMoCo, PretrainerKind::MoCo,
};

inline std::string_view pretrainer_id(PretrainerKind k) {
  switch (k) {
    case PretrainerKind::Random: return "random";
    case PretrainerKind::ERM: return "erm";
    case PretrainerKind::IRM: return "irm";
    case PretrainerKind::Fish: return "fish";
    case PretrainerKind::LISA: return "lisa";
    case PretrainerKind::MoCo: return "moco";
    case PretrainerKind::EAMoCo: return "eamoco";
  }
  return "?";
}

inline std::string_view pretrainer_display_name(PretrainerKind k) {
  switch (k) {
    case PretrainerKind::Random: return "Random";
    case PretrainerKind::ERM: return "ERM";
    case PretrainerKind::IRM: return "IRM";
    case PretrainerKind::Fish: return "Fish";
    case PretrainerKind::LISA: return "LISA";
    case PretrainerKind::MoCo: return "MoCo";
    case PretrainerKind::EAMoCo: return "EA-MoCo";
  }
  return "?";
}

inline std::string_view pretrainer_group(PretrainerKind k) {
  switch (k) {
    case PretrainerKind::Random: return "None";
    case PretrainerKind::MoCo:
    case PretrainerKind::EAMoCo: return "Unsupervised";
    default: return "Supervised";
  }
}

inline PretrainerKind parse_pretrainer(std::string_view name) {
  for (PretrainerKind k : kPretrainerTableOrder) {
    if (name == pretrainer_id(k) || name == pretrainer_display_name(k)) return k;
  }
  std::string valid;
  for (PretrainerKind k : kPretrainerTableOrder) valid += (valid.empty() ? "" : ", ") + std::string(pretrainer_id(k));
  throw ConfigError("unknown pretrainer '" + std::string(name) + "'; valid names: " + valid);
}

enum class LisaStrategy { IntraLabelCrossEnv };

struct PenaltyConfig {
  double irm_lambda = 100.0;
  int irm_warmup_epochs = 10;
  double irm_warmup_lambda = 1.0;
  double fish_meta_lr = 0.5;
  int fish_inner_steps = 3;
  double fish_inner_lr = 0.2;
  double lisa_alpha = 2.0;
  LisaStrategy lisa_strategy = LisaStrategy::IntraLabelCrossEnv;
  // Replaces the Beta draw when set; the partner draw still happens.
  std::optional<double> lisa_fixed_lambda;

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(irm_lambda) || irm_lambda < 0) throw ConfigError("irm_lambda must be finite and >= 0");
    if (!finite(irm_warmup_lambda) || irm_warmup_lambda < 0) throw ConfigError("irm_warmup_lambda must be finite and >= 0");
    if (irm_warmup_epochs < 0) throw ConfigError("irm_warmup_epochs must be >= 0");
    if (!finite(fish_meta_lr)) throw ConfigError("fish_meta_lr must be finite");
    if (!finite(fish_inner_lr) || fish_inner_lr <= 0) throw ConfigError("fish_inner_lr must be finite and > 0");
    if (fish_inner_steps < 1) throw ConfigError("fish_inner_steps must be >= 1");
    if (!finite(lisa_alpha) || lisa_alpha <= 0) throw ConfigError("lisa_alpha must be finite and > 0");
  }

  static PenaltyConfig from_config(const KeyValueConfig& kv) { return from_config(kv, PenaltyConfig{}); }

  static PenaltyConfig from_config(const KeyValueConfig& kv, PenaltyConfig c) {
    c.irm_lambda = kv.get("irm_lambda", c.irm_lambda);
    c.irm_warmup_epochs = kv.get("irm_warmup_epochs", c.irm_warmup_epochs);
    c.irm_warmup_lambda = kv.get("irm_warmup_lambda", c.irm_warmup_lambda);
    c.fish_meta_lr = kv.get("fish_meta_lr", c.fish_meta_lr);
    c.fish_inner_steps = kv.get("fish_inner_steps", c.fish_inner_steps);
    c.fish_inner_lr = kv.get("fish_inner_lr", c.fish_inner_lr);
    c.lisa_alpha = kv.get("lisa_alpha", c.lisa_alpha);
    c.validate();
    return c;
  }
};

/// Encoder shape shared by every pretrainer: d_x -> hidden... -> d_emb.
struct EncoderSpec {
  std::vector<int> hidden = {64, 64};
  int d_emb = 32;
};

/// One mixed LISA pair, reported through the observer.
struct MixRecord {
  std::size_t row_a = 0;
  std::size_t row_b = 0;
  double lambda = 1.0;
  int label_a = 0;
  int label_b = 0;
};

/// Optional instrumentation. Row indices refer to EnvDataset::samples.
struct TrainObserver {
  std::function<void(std::span<const std::size_t>)> on_batch;
  std::function<void(const MixRecord&)> on_mix;
  std::function<void(const Matrix&)> on_mixed_inputs;  // LISA batch after mixing
};

struct PretrainResult {
  nn::MlpParams encoder;
  nn::MlpParams head;              // empty for unsupervised pretrainers
  std::vector<double> epoch_loss;  // mean batch objective per epoch
};

/// Normal0 -> 0, Normal1 -> 1 for the train split, in dataset_view order.
inline std::vector<int> make_pretext_labels(const EnvDataset& ds) {
  std::vector<int> labels;
  bool seen[2] = {false, false};
  for (const Sample& s : ds.samples) {
    if (s.split != Split::Train) continue;
    if (s.content_label == ContentLabel::Anomaly) throw ConfigError("anomaly in the train split");
    const int y = s.content_label == ContentLabel::Normal0 ? 0 : 1;
    seen[y] = true;
    labels.push_back(y);
  }
  if (!seen[0]) throw MissingClass("normal class 0 is absent from the train split");
  if (!seen[1]) throw MissingClass("normal class 1 is absent from the train split");
  return labels;
}

/// Supervised encoder: every layer ReLU, so the embedding is the post-ReLU
/// activation feeding the linear head.
inline nn::MlpParams init_supervised_encoder(int d_x, const EncoderSpec& spec, const RngHandle& handle) {
  std::vector<int> dims{d_x};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.d_emb);
  return nn::init_mlp(dims, std::vector<nn::Activation>(dims.size() - 1, nn::Activation::ReLU), handle);
}

/// Encoder plus a linear logit head, initialised from `seed`.
inline nn::MlpParams init_classifier(int d_x, const EncoderSpec& spec, std::uint64_t seed) {
  const RngHandle root(seed, "pretrain");
  return nn::stack(init_supervised_encoder(d_x, spec, root.split("init-encoder")),
                   nn::init_mlp({spec.d_emb, 1}, {nn::Activation::Identity}, root.split("init-head")));
}

inline nn::MlpParams random_encoder(int d_x, int d_emb, std::uint64_t seed, const EncoderSpec& base = {}) {
  if (d_x <= 0 || d_emb <= 0) throw ShapeError("random_encoder dims must be positive");
  EncoderSpec spec = base;
  spec.d_emb = d_emb;
  return init_supervised_encoder(d_x, spec, RngHandle(seed, "random-encoder"));
}

/// IRMv1 penalty for one environment: the squared derivative of the mean BCE
/// with respect to a scalar multiplier on the logits, taken at 1.
inline nn::OutputLoss irm_penalty(const Matrix& logits, const Matrix& targets) {
  const Eigen::Index n = logits.rows();
  double g = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) g += (nn::sigmoid(logits(i, 0)) - targets(i, 0)) * logits(i, 0);
  g /= static_cast<double>(n);
  nn::OutputLoss out;
  out.value = g * g;
  out.grad_output.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = logits(i, 0);
    const double s = nn::sigmoid(z);
    out.grad_output(i, 0) = 2.0 * g * ((s - targets(i, 0)) + s * (1.0 - s) * z) / static_cast<double>(n);
  }
  return out;
}

namespace pretrain_detail {

struct PretextData {
  Matrix x;
  Matrix y;                                 // n x 1
  std::vector<int> env;
  std::vector<std::size_t> rows;            // dataset rows
  std::vector<int> env_ids;                 // sorted distinct train envs
  std::vector<std::vector<std::size_t>> by_env;  // local indices per env_ids entry
};

inline PretextData load(const EnvDataset& ds) {
  const auto labels = make_pretext_labels(ds);
  DatasetView v = dataset_view(ds, Split::Train);
  PretextData d;
  d.x = std::move(v.features);
  d.y.resize(d.x.rows(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) d.y(static_cast<Eigen::Index>(i), 0) = labels[i];
  d.env = std::move(v.envs);
  d.rows = std::move(v.rows);
  d.env_ids.assign(ds.train_envs.begin(), ds.train_envs.end());
  d.by_env.resize(d.env_ids.size());
  for (std::size_t i = 0; i < d.env.size(); ++i) {
    const auto pos = std::lower_bound(d.env_ids.begin(), d.env_ids.end(), d.env[i]) - d.env_ids.begin();
    d.by_env[static_cast<std::size_t>(pos)].push_back(i);
  }
  // Drop declared envs that contribute no rows.
  for (std::size_t e = d.env_ids.size(); e-- > 0;) {
    if (d.by_env[e].empty()) {
      d.env_ids.erase(d.env_ids.begin() + static_cast<std::ptrdiff_t>(e));
      d.by_env.erase(d.by_env.begin() + static_cast<std::ptrdiff_t>(e));
    }
  }
  return d;
}

inline void report_batch(const TrainObserver* obs, const PretextData& d, const std::vector<std::size_t>& local) {
  if (!obs || !obs->on_batch) return;
  std::vector<std::size_t> rows;
  rows.reserve(local.size());
  for (auto i : local) rows.push_back(d.rows[i]);
  obs->on_batch(rows);
}

inline nn::Batch make_batch(const PretextData& d, const std::vector<std::size_t>& idx) {
  return {nn::gather_rows(d.x, idx), nn::gather_rows(d.y, idx)};
}

/// Endless per-env stream of shuffled local indices.
class EnvCursor {
 public:
  EnvCursor(std::vector<std::size_t> members, const RngHandle& handle) : members_(std::move(members)), rng_(handle) {
    refill();
  }
  std::vector<std::size_t> take(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos_ == order_.size()) refill();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void refill() {
    order_ = members_;
    rng_.shuffle(order_);
    pos_ = 0;
  }
  std::vector<std::size_t> members_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

inline std::size_t per_env_batch(const nn::TrainConfig& cfg, std::size_t n_envs) {
  return std::max<std::size_t>(2, static_cast<std::size_t>(cfg.batch_size) / n_envs);
}

inline PretrainResult finish(const nn::MlpParams& net, std::vector<double> epoch_loss) {
  PretrainResult r;
  r.encoder = nn::slice(net, 0, net.layers.size() - 1);
  r.head = nn::slice(net, net.layers.size() - 1, net.layers.size());
  r.epoch_loss = std::move(epoch_loss);
  return r;
}

inline void require_envs(const PretextData& d) {
  if (d.env_ids.size() < 2) throw SingleEnv("env-aware pretraining needs >= 2 train envs");
}

inline void check_finite(const nn::MlpParams& net, const char* who) {
  if (!net.all_finite()) throw NumericalError(std::string(who) + ": parameters diverged", -1);
}

/// Shared loop for per-env balanced batches: each step draws the same number
/// of rows from every env and minimises mean_e [BCE_e + w * penalty_e],
/// divided by max(1, w).
inline PretrainResult train_env_batched(const EnvDataset& ds, const nn::TrainConfig& cfg, const EncoderSpec& spec,
                                        const std::function<double(int epoch)>& penalty_weight,
                                        const TrainObserver* obs) {
  cfg.validate();
  PretextData d = load(ds);
  require_envs(d);
  const RngHandle root(cfg.seed, "pretrain");
  nn::MlpParams net = init_classifier(static_cast<int>(d.x.cols()), spec, cfg.seed);
  nn::AdamState adam = nn::make_adam(net, cfg.lr);

  std::vector<EnvCursor> cursors;
  for (std::size_t e = 0; e < d.env_ids.size(); ++e) {
    cursors.emplace_back(d.by_env[e], root.split("env-batches", static_cast<std::uint64_t>(d.env_ids[e])));
  }
  const std::size_t b = per_env_batch(cfg, d.env_ids.size());
  std::size_t largest = 0;
  for (const auto& m : d.by_env) largest = std::max(largest, m.size());
  const std::size_t steps = (largest + b - 1) / b;
  const double n_envs = static_cast<double>(d.env_ids.size());

  std::vector<double> epoch_loss;
  double previous_weight = penalty_weight(0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double w = penalty_weight(epoch);
    if (w != previous_weight) {
      adam = nn::make_adam(net, cfg.lr);
      previous_weight = w;
    }
    const double norm = std::max(1.0, w);
    double total = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      nn::MlpParams grads = net.zeros_like();
      double objective = 0.0;
      for (auto& cursor : cursors) {
        const auto idx = cursor.take(b);
        report_batch(obs, d, idx);
        const nn::Batch batch = make_batch(d, idx);
        auto hook = [&](const Matrix& logits) {
          nn::OutputLoss l = nn::bce_with_logits(logits, batch.targets);
          if (w != 0.0) {
            const nn::OutputLoss p = irm_penalty(logits, batch.targets);
            l.value += w * p.value;
            l.grad_output += w * p.grad_output;
          }
          l.value /= n_envs * norm;
          l.grad_output /= n_envs * norm;
          return l;
        };
        nn::LossAndGrad lg = nn::loss_and_grad(net, batch, nn::LossKind::Hook, hook);
        objective += lg.loss;
        grads.axpy(1.0, lg.grads);
      }
      nn::add_weight_decay(grads, net, cfg.weight_decay);
      nn::adam_update(net, grads, adam);
      total += objective;
    }
    check_finite(net, "env-batched pretraining");
    epoch_loss.push_back(total / static_cast<double>(steps));
  }
  return finish(net, std::move(epoch_loss));
}

}  // namespace pretrain_detail

/// Pooled ERM: shuffled minibatches over the union of train envs, BCE on the
/// two normal classes. The head is returned but not used downstream.
inline PretrainResult train_erm(const EnvDataset& ds, const nn::TrainConfig& cfg, const EncoderSpec& spec = {},
                                const TrainObserver* obs = nullptr) {
  using namespace pretrain_detail;
  cfg.validate();
  PretextData d = load(ds);
  const RngHandle root(cfg.seed, "pretrain");
  nn::MlpParams net = init_classifier(static_cast<int>(d.x.cols()), spec, cfg.seed);
  nn::AdamState adam = nn::make_adam(net, cfg.lr);
  Rng shuffle(root.split("shuffle"));
  std::vector<double> epoch_loss;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = nn::make_batches(shuffle.permutation(static_cast<std::size_t>(d.x.rows())), cfg.batch_size);
    double total = 0.0;
    for (const auto& idx : batches) {
      report_batch(obs, d, idx);
      nn::LossAndGrad lg = nn::loss_and_grad(net, make_batch(d, idx), nn::LossKind::BCE);
      nn::add_weight_decay(lg.grads, net, cfg.weight_decay);
      nn::adam_update(net, lg.grads, adam);
      total += lg.loss;
    }
    check_finite(net, "ERM");
    epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  return finish(net, std::move(epoch_loss));
}

/// ERM objective with the per-env balanced batching used by IRM.
inline PretrainResult train_erm_env_batched(const EnvDataset& ds, const nn::TrainConfig& cfg,
                                            const EncoderSpec& spec = {}, const TrainObserver* obs = nullptr) {
  return pretrain_detail::train_env_batched(ds, cfg, spec, [](int) { return 0.0; }, obs);
}

inline PretrainResult train_irm(const EnvDataset& ds, const nn::TrainConfig& cfg, const PenaltyConfig& pc,
                                const EncoderSpec& spec = {}, const TrainObserver* obs = nullptr) {
  pc.validate();
  auto weight = [&pc](int epoch) { return epoch < pc.irm_warmup_epochs ? pc.irm_warmup_lambda : pc.irm_lambda; };
  return pretrain_detail::train_env_batched(ds, cfg, spec, weight, obs);
}

/// Reptile-style Fish. Each meta-update clones the parameters, takes
/// `fish_inner_steps` SGD steps on every train env in a random env order,
/// then moves the original parameters toward the clone by `fish_meta_lr`.
/// An epoch holds enough meta-updates to visit every train row once.
inline PretrainResult train_fish(const EnvDataset& ds, const nn::TrainConfig& cfg, const PenaltyConfig& pc,
                                 const EncoderSpec& spec = {}, const TrainObserver* obs = nullptr) {
  using namespace pretrain_detail;
  cfg.validate();
  pc.validate();
  PretextData d = load(ds);
  require_envs(d);
  const RngHandle root(cfg.seed, "pretrain");
  nn::MlpParams net = init_classifier(static_cast<int>(d.x.cols()), spec, cfg.seed);

  std::vector<EnvCursor> cursors;
  for (std::size_t e = 0; e < d.env_ids.size(); ++e) {
    cursors.emplace_back(d.by_env[e], root.split("env-batches", static_cast<std::uint64_t>(d.env_ids[e])));
  }
  Rng order_rng(root.split("fish-env-order"));
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t per_meta = d.env_ids.size() * static_cast<std::size_t>(pc.fish_inner_steps) * b;
  const std::size_t metas = std::max<std::size_t>(1, (static_cast<std::size_t>(d.x.rows()) + per_meta - 1) / per_meta);

  std::vector<double> epoch_loss;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t meta = 0; meta < metas; ++meta) {
      nn::MlpParams clone = net;
      for (std::size_t e : order_rng.permutation(d.env_ids.size())) {
        for (int s = 0; s < pc.fish_inner_steps; ++s) {
          const auto idx = cursors[e].take(b);
          report_batch(obs, d, idx);
          nn::LossAndGrad lg = nn::loss_and_grad(clone, make_batch(d, idx), nn::LossKind::BCE);
          nn::add_weight_decay(lg.grads, clone, cfg.weight_decay);
          clone.axpy(-pc.fish_inner_lr, lg.grads);
          total += lg.loss;
          ++count;
        }
      }
      clone.axpy(-1.0, net);        // clone - net
      net.axpy(pc.fish_meta_lr, clone);
    }
    check_finite(net, "Fish");
    epoch_loss.push_back(total / static_cast<double>(count));
  }
  return finish(net, std::move(epoch_loss));
}

/// LISA with intra-label, cross-env mixup. Anchors follow the same shuffled
/// minibatches as pooled ERM; each anchor is mixed with a partner that has
/// the same pretext label and a different env, weight lambda ~ Beta(a, a).
inline PretrainResult train_lisa(const EnvDataset& ds, const nn::TrainConfig& cfg, const PenaltyConfig& pc,
                                 const EncoderSpec& spec = {}, const TrainObserver* obs = nullptr) {
  using namespace pretrain_detail;
  cfg.validate();
  pc.validate();
  PretextData d = load(ds);
  const std::size_t n_env = d.env_ids.size();
  auto env_pos = [&](std::size_t i) {
    return static_cast<std::size_t>(std::lower_bound(d.env_ids.begin(), d.env_ids.end(), d.env[i]) - d.env_ids.begin());
  };

  // partners[label][env] = rows with that label outside that env.
  std::vector<std::vector<std::vector<std::size_t>>> partners(2, std::vector<std::vector<std::size_t>>(n_env));
  std::vector<std::set<int>> label_envs(2);
  for (std::size_t i = 0; i < d.env.size(); ++i) label_envs[static_cast<std::size_t>(d.y(static_cast<Eigen::Index>(i), 0))].insert(d.env[i]);
  for (int y = 0; y < 2; ++y) {
    if (label_envs[static_cast<std::size_t>(y)].size() < 2) {
      throw PairingError("pretext label " + std::to_string(y) + " occurs in fewer than 2 train envs");
    }
  }
  for (std::size_t i = 0; i < d.env.size(); ++i) {
    const auto y = static_cast<std::size_t>(d.y(static_cast<Eigen::Index>(i), 0));
    const std::size_t own = env_pos(i);
    for (std::size_t e = 0; e < n_env; ++e) {
      if (e != own) partners[y][e].push_back(i);
    }
  }

  const RngHandle root(cfg.seed, "pretrain");
  nn::MlpParams net = init_classifier(static_cast<int>(d.x.cols()), spec, cfg.seed);
  nn::AdamState adam = nn::make_adam(net, cfg.lr);
  Rng shuffle(root.split("shuffle"));
  Rng mix_rng(root.split("lisa"));

  std::vector<double> epoch_loss;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = nn::make_batches(shuffle.permutation(static_cast<std::size_t>(d.x.rows())), cfg.batch_size);
    double total = 0.0;
    for (const auto& idx : batches) {
      report_batch(obs, d, idx);
      nn::Batch batch = make_batch(d, idx);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t a = idx[r];
        const auto y = static_cast<std::size_t>(d.y(static_cast<Eigen::Index>(a), 0));
        const auto& pool = partners[y][env_pos(a)];
        const std::size_t partner = pool[mix_rng.uniform_index(pool.size())];
        double lambda = mix_rng.beta(pc.lisa_alpha, pc.lisa_alpha);
        if (pc.lisa_fixed_lambda) lambda = *pc.lisa_fixed_lambda;
        const auto row = static_cast<Eigen::Index>(r);
        batch.inputs.row(row) = lambda * d.x.row(static_cast<Eigen::Index>(a)) +
                                (1.0 - lambda) * d.x.row(static_cast<Eigen::Index>(partner));
        if (obs && obs->on_mix) {
          obs->on_mix({d.rows[a], d.rows[partner], lambda, static_cast<int>(y),
                       static_cast<int>(d.y(static_cast<Eigen::Index>(partner), 0))});
        }
      }
      if (obs && obs->on_mixed_inputs) obs->on_mixed_inputs(batch.inputs);
      nn::LossAndGrad lg = nn::loss_and_grad(net, batch, nn::LossKind::BCE);
      nn::add_weight_decay(lg.grads, net, cfg.weight_decay);
      nn::adam_update(net, lg.grads, adam);
      total += lg.loss;
    }
    check_finite(net, "LISA");
    epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  return finish(net, std::move(epoch_loss));
}

/// Fraction of normal rows in `split` whose pretext label the classifier gets right.
inline double pretext_accuracy(const PretrainResult& r, const EnvDataset& ds, Split split = Split::Train) {
  DatasetView v = dataset_view(ds, split);
  const Matrix logits = nn::forward(r.head, nn::forward(r.encoder, v.features));
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < v.content.size(); ++i) {
    if (v.content[i] == ContentLabel::Anomaly) continue;
    const int y = v.content[i] == ContentLabel::Normal0 ? 0 : 1;
    correct += (logits(static_cast<Eigen::Index>(i), 0) > 0.0) == (y == 1);
    ++total;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace envshift
