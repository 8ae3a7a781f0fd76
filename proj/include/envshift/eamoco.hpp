#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "envshift/core.hpp"
#include "envshift/nn/adam.hpp"
#include "envshift/nn/autoencoder.hpp"
#include "envshift/nn/losses.hpp"
#include "envshift/nn/train.hpp"
#include "envshift/pretrain.hpp"

namespace envshift {

/// Pairwise L2 distances between autoencoder embeddings of the train rows.
struct DistanceTable {
  Matrix dist;                                 // n x n
  std::vector<int> env;                        // env of each row
  std::map<int, std::vector<std::size_t>> members;  // env -> rows, ascending

  std::size_t size() const { return env.size(); }
};

inline DistanceTable build_distance_table(const Matrix& embeddings, std::span<const int> env_vector) {
  if (static_cast<std::size_t>(embeddings.rows()) != env_vector.size()) {
    throw ShapeError("distance table: embedding rows and env vector differ in length");
  }
  const Eigen::Index n = embeddings.rows();
  DistanceTable dt;
  dt.dist = Matrix::Zero(n, n);
  dt.env.assign(env_vector.begin(), env_vector.end());
  for (Eigen::Index i = 0; i < n; ++i) {
    dt.members[dt.env[static_cast<std::size_t>(i)]].push_back(static_cast<std::size_t>(i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (embeddings.row(i) - embeddings.row(j)).norm();
      dt.dist(i, j) = d;
      dt.dist(j, i) = d;
    }
  }
  if (!dt.dist.allFinite()) throw NumericalError("non-finite autoencoder embedding distance", -1);
  return dt;
}

/// Cross-env positive: draws an env uniformly among those different from the
/// anchor's, then returns that env's row closest to the anchor (lowest index
/// on ties).
inline std::size_t select_positive(std::size_t anchor, const DistanceTable& dt, Rng& rng) {
  if (anchor >= dt.size()) throw ShapeError("anchor index out of range");
  const int own = dt.env[anchor];
  std::vector<int> others;
  for (const auto& [e, rows] : dt.members) {
    if (e != own) others.push_back(e);
  }
  if (others.empty()) throw SingleEnv("positive selection needs >= 2 train envs");
  const int chosen = others[rng.uniform_index(others.size())];
  const auto& rows = dt.members.at(chosen);
  std::size_t best = rows.front();
  double best_d = dt.dist(static_cast<Eigen::Index>(anchor), static_cast<Eigen::Index>(best));
  for (std::size_t r : rows) {
    const double d = dt.dist(static_cast<Eigen::Index>(anchor), static_cast<Eigen::Index>(r));
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

inline std::size_t select_positive(std::size_t anchor, const DistanceTable& dt, const RngHandle& handle) {
  Rng rng(handle);
  return select_positive(anchor, dt, rng);
}

// Distance-table cache (binary):
//   "envshift-dist 1\n" "n <n> ae <hex hash>\n" "envs <e0,e1,...>\n" "data\n"
//   then the strict upper triangle, row-major, float64 little-endian.
inline std::string serialize_distance_table(const DistanceTable& dt, std::uint64_t ae_hash) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(ae_hash));
  std::string out = "envshift-dist 1\nn " + std::to_string(dt.size()) + " ae " + hex + "\nenvs ";
  for (std::size_t i = 0; i < dt.env.size(); ++i) out += (i ? "," : "") + std::to_string(dt.env[i]);
  out += "\ndata\n";
  const auto n = static_cast<Eigen::Index>(dt.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      std::uint64_t bits;
      const double v = dt.dist(i, j);
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  return out;
}

/// Returns the table; throws FormatError if the cached autoencoder hash differs.
inline DistanceTable parse_distance_table(std::string_view bytes, std::uint64_t expected_ae_hash) {
  std::size_t pos = 0;
  auto line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw FormatError("truncated distance table");
    std::string s(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return s;
  };
  if (line() != "envshift-dist 1") throw FormatError("not a distance table");
  const auto hdr = split_string(line(), ' ');
  if (hdr.size() != 4 || hdr[0] != "n" || hdr[2] != "ae") throw FormatError("bad distance table header");
  const auto n = static_cast<std::size_t>(parse_int(hdr[1]));
  if (std::stoull(hdr[3], nullptr, 16) != expected_ae_hash) throw FormatError("distance table was built from another autoencoder");
  const std::string envs_line = line();
  if (envs_line.rfind("envs ", 0) != 0) throw FormatError("missing env line");
  std::vector<int> env;
  for (const auto& t : split_string(envs_line.substr(5), ',')) env.push_back(static_cast<int>(parse_int(t)));
  if (env.size() != n) throw FormatError("env line length mismatch");
  if (line() != "data") throw FormatError("missing data marker");
  if (bytes.size() - pos != n * (n - 1) / 2 * 8) throw FormatError("distance block has the wrong size");
  DistanceTable dt;
  dt.env = std::move(env);
  dt.dist = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    dt.members[dt.env[i]].push_back(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
      pos += 8;
      double v;
      std::memcpy(&v, &bits, 8);
      dt.dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      dt.dist(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return dt;
}

struct ContrastiveConfig {
  double temperature = 0.2;
  double momentum = 0.999;
  bool use_augmented_anchor_positive = true;
  double augment_noise_sigma = 0.1;
  double augment_mask_prob = 0.0;
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-2;
  std::uint64_t seed = 0;
  int d_latent = 16;  // autoencoder latent size used for distances

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(augment_noise_sigma >= 0.0)) throw ConfigError("augment_noise_sigma must be >= 0");
    if (!(augment_mask_prob >= 0.0 && augment_mask_prob < 1.0)) throw ConfigError("augment_mask_prob must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 3) throw ConfigError("contrastive batch_size must be >= 3");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (d_latent < 1) throw ConfigError("d_latent must be >= 1");
  }

  static ContrastiveConfig from_config(const KeyValueConfig& kv) { return from_config(kv, ContrastiveConfig{}); }

  static ContrastiveConfig from_config(const KeyValueConfig& kv, ContrastiveConfig c) {
    c.temperature = kv.get("temperature", c.temperature);
    c.momentum = kv.get("momentum", c.momentum);
    c.use_augmented_anchor_positive = kv.get("use_augmented_anchor_positive", c.use_augmented_anchor_positive);
    c.augment_noise_sigma = kv.get("augment_noise_sigma", c.augment_noise_sigma);
    c.augment_mask_prob = kv.get("augment_mask_prob", c.augment_mask_prob);
    c.epochs = kv.get("contrastive_epochs", c.epochs);
    c.batch_size = kv.get("contrastive_batch_size", c.batch_size);
    c.lr = kv.get("contrastive_lr", c.lr);
    c.d_latent = kv.get("ae_latent_dim", c.d_latent);
    c.validate();
    return c;
  }
};

/// Gaussian jitter plus independent coordinate masking.
inline Vector augment(const Vector& x, const ContrastiveConfig& cfg, Rng& rng) {
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double noise = rng.normal();
    const double u = rng.uniform();
    out(i) = u < cfg.augment_mask_prob ? 0.0 : x(i) + cfg.augment_noise_sigma * noise;
  }
  return out;
}

struct InfoNceResult {
  double loss = 0.0;
  Vector grad_q;
  std::vector<Vector> grad_positives;
  std::vector<Vector> grad_negatives;
};

namespace contrastive_detail {

inline Vector normalized(const Vector& v, double& norm) {
  norm = v.norm();
  if (norm < 1e-12) throw ZeroVector("vector with norm < 1e-12 cannot be normalised");
  return v / norm;
}

// d/dv of f(v / |v|) given g = df/du.
inline Vector through_normalization(const Vector& u, double norm, const Vector& g) {
  return (g - u * u.dot(g)) / norm;
}

}  // namespace contrastive_detail

/// Mean over positives of -log softmax of the positive logit against all
/// negatives, on L2-normalised vectors with temperature tau.
inline InfoNceResult info_nce(const Vector& q, std::span<const Vector> positives, std::span<const Vector> negatives,
                              double tau) {
  using namespace contrastive_detail;
  if (positives.empty() || negatives.empty()) throw ConfigError("info_nce needs >= 1 positive and >= 1 negative");
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
  double qn;
  const Vector qu = normalized(q, qn);
  std::vector<Vector> pu, nu;
  std::vector<double> pn, nn_;
  for (const auto& p : positives) pu.push_back(normalized(p, pn.emplace_back()));
  for (const auto& n : negatives) nu.push_back(normalized(n, nn_.emplace_back()));

  std::vector<double> sn(nu.size());
  for (std::size_t j = 0; j < nu.size(); ++j) sn[j] = qu.dot(nu[j]) / tau;

  InfoNceResult r;
  Vector g_qu = Vector::Zero(q.size());
  std::vector<Vector> g_pu(pu.size(), Vector::Zero(q.size()));
  std::vector<Vector> g_nu(nu.size(), Vector::Zero(q.size()));
  const double inv_p = 1.0 / static_cast<double>(pu.size());
  for (std::size_t i = 0; i < pu.size(); ++i) {
    const double sp = qu.dot(pu[i]) / tau;
    double mx = sp;
    for (double s : sn) mx = std::max(mx, s);
    double z = std::exp(sp - mx);
    for (double s : sn) z += std::exp(s - mx);
    r.loss += (std::log(z) + mx - sp) * inv_p;
    // softmax weights
    const double wp = std::exp(sp - mx) / z;
    // dL/dsp = wp - 1; dL/dsn_j = w_j
    g_qu += inv_p * (wp - 1.0) / tau * pu[i];
    g_pu[i] += inv_p * (wp - 1.0) / tau * qu;
    for (std::size_t j = 0; j < nu.size(); ++j) {
      const double wn = std::exp(sn[j] - mx) / z;
      g_qu += inv_p * wn / tau * nu[j];
      g_nu[j] += inv_p * wn / tau * qu;
    }
  }
  r.grad_q = through_normalization(qu, qn, g_qu);
  for (std::size_t i = 0; i < pu.size(); ++i) r.grad_positives.push_back(through_normalization(pu[i], pn[i], g_pu[i]));
  for (std::size_t j = 0; j < nu.size(); ++j) r.grad_negatives.push_back(through_normalization(nu[j], nn_[j], g_nu[j]));
  return r;
}

/// Contrastive encoder: ReLU hidden layers, linear output.
inline nn::MlpParams init_contrastive_encoder(int d_x, const EncoderSpec& spec, const RngHandle& handle) {
  std::vector<int> dims{d_x};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.d_emb);
  std::vector<nn::Activation> act(dims.size() - 1, nn::Activation::ReLU);
  act.back() = nn::Activation::Identity;
  return nn::init_mlp(dims, act, handle);
}

/// key <- m * key + (1 - m) * query
inline void ema_update(nn::MlpParams& key, const nn::MlpParams& query, double momentum) {
  key.scale(momentum);
  key.axpy(1.0 - momentum, query);
}

struct ContrastiveBatchStats {
  double loss = 0.0;
  std::size_t positives_per_anchor = 0;
  std::size_t negatives_per_anchor = 0;
  double mean_positive_cosine = 0.0;
};

/// Query/key encoder pair trained with InfoNCE. Negatives for anchor i are
/// the key embeddings of every positive view belonging to the other anchors
/// in the batch; keys never receive gradients.
class MomentumContrast {
 public:
  MomentumContrast(nn::MlpParams init, const ContrastiveConfig& cfg)
      : query_(std::move(init)), key_(query_), adam_(nn::make_adam(query_, cfg.lr)), cfg_(cfg) {}

  const nn::MlpParams& query() const { return query_; }
  const nn::MlpParams& key() const { return key_; }

  /// Loss of one batch without updating anything. Row i of `anchors` is the
  /// query input; row i of every matrix in `positive_views` is a positive.
  ContrastiveBatchStats evaluate(const Matrix& anchors, const std::vector<Matrix>& positive_views,
                                 Matrix* grad_query_out = nullptr) const {
    const Eigen::Index b = anchors.rows();
    if (b < 2) throw ShapeError("contrastive batch needs >= 2 anchors");
    if (positive_views.empty()) throw ConfigError("contrastive batch needs a positive view");
    std::vector<Matrix> keys;
    for (const auto& v : positive_views) {
      if (v.rows() != b) throw ShapeError("positive view has the wrong number of rows");
      keys.push_back(nn::forward(key_, v));
    }
    const Matrix q = nn::forward(query_, anchors);
    ContrastiveBatchStats stats;
    stats.positives_per_anchor = keys.size();
    stats.negatives_per_anchor = keys.size() * static_cast<std::size_t>(b - 1);
    Matrix grad(q.rows(), q.cols());
    std::vector<Vector> pos, neg;
    for (Eigen::Index i = 0; i < b; ++i) {
      pos.clear();
      neg.clear();
      for (const auto& k : keys) {
        for (Eigen::Index j = 0; j < b; ++j) (j == i ? pos : neg).push_back(k.row(j).transpose());
      }
      const Vector qi = q.row(i).transpose();
      const InfoNceResult r = info_nce(qi, pos, neg, cfg_.temperature);
      stats.loss += r.loss / static_cast<double>(b);
      grad.row(i) = r.grad_q.transpose() / static_cast<double>(b);
      for (const auto& p : pos) stats.mean_positive_cosine += qi.normalized().dot(p.normalized());
    }
    stats.mean_positive_cosine /= static_cast<double>(b * static_cast<Eigen::Index>(keys.size()));
    if (!std::isfinite(stats.loss)) throw NumericalError("contrastive loss is not finite", -1);
    if (grad_query_out) *grad_query_out = std::move(grad);
    return stats;
  }

  /// One Adam step on the query encoder followed by the EMA key update.
  ContrastiveBatchStats step(const Matrix& anchors, const std::vector<Matrix>& positive_views) {
    Matrix grad_q;
    const ContrastiveBatchStats stats = evaluate(anchors, positive_views, &grad_q);
    const nn::ForwardCache cache = nn::forward_cached(query_, anchors);
    const nn::MlpParams grads = nn::backward(query_, cache, grad_q);
    nn::adam_update(query_, grads, adam_);
    ema_update(key_, query_, cfg_.momentum);
    if (!query_.all_finite()) throw NumericalError("contrastive training diverged", -1);
    return stats;
  }

 private:
  nn::MlpParams query_;
  nn::MlpParams key_;
  nn::AdamState adam_;
  ContrastiveConfig cfg_;
};

namespace contrastive_detail {

inline Matrix augment_rows(const Matrix& x, const std::vector<std::size_t>& idx, const ContrastiveConfig& cfg, Rng& rng) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = augment(x.row(static_cast<Eigen::Index>(idx[i])).transpose(), cfg, rng).transpose();
  }
  return out;
}

}  // namespace contrastive_detail

/// EA-MoCo on a fixed distance table. Per epoch each anchor gets a fresh
/// cross-env positive; the positive row is used as-is (never augmented).
inline PretrainResult train_ea_moco_on_table(const Matrix& x_train, const DistanceTable& dt,
                                             const ContrastiveConfig& cfg, const EncoderSpec& spec = {},
                                             const std::function<void(std::size_t, std::size_t)>& on_pair = {}) {
  using namespace contrastive_detail;
  cfg.validate();
  if (static_cast<std::size_t>(x_train.rows()) != dt.size()) throw ShapeError("distance table does not cover the train rows");
  if (dt.members.size() < 2) throw SingleEnv("EA-MoCo needs >= 2 train envs");
  const RngHandle root(cfg.seed, "ea-moco");
  MomentumContrast mc(init_contrastive_encoder(static_cast<int>(x_train.cols()), spec, root.split("init")), cfg);
  Rng shuffle(root.split("shuffle"));
  Rng env_rng(root.split("positive-env"));
  Rng aug_rng(root.split("augment"));
  const auto n = static_cast<std::size_t>(x_train.rows());

  PretrainResult r;
  std::vector<std::size_t> positive(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      positive[i] = select_positive(i, dt, env_rng);
      if (on_pair) on_pair(i, positive[i]);
    }
    const auto batches = nn::make_batches(shuffle.permutation(n), cfg.batch_size);
    double total = 0.0;
    for (const auto& idx : batches) {
      const Matrix anchors = augment_rows(x_train, idx, cfg, aug_rng);
      std::vector<std::size_t> pos_idx;
      for (auto i : idx) pos_idx.push_back(positive[i]);
      std::vector<Matrix> views{nn::gather_rows(x_train, pos_idx)};
      if (cfg.use_augmented_anchor_positive) views.push_back(augment_rows(x_train, idx, cfg, aug_rng));
      total += mc.step(anchors, views).loss;
    }
    r.epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  r.encoder = mc.query();
  return r;
}

struct EaMocoResult {
  PretrainResult pretrain;
  nn::AutoencoderResult autoencoder;
  DistanceTable table;
};

/// The full procedure: autoencoder on the union of all train envs, a static
/// distance table from its embeddings, then contrastive training.
inline EaMocoResult train_ea_moco(const EnvDataset& ds, const ContrastiveConfig& cfg, const nn::TrainConfig& ae_cfg,
                                  const EncoderSpec& spec = {}) {
  cfg.validate();
  DatasetView v = dataset_view(ds, Split::Train);
  EaMocoResult out;
  out.autoencoder = nn::train_autoencoder(v.features, ae_cfg, cfg.d_latent);
  out.table = build_distance_table(nn::encode(out.autoencoder.encoder, v.features), v.envs);
  out.pretrain = train_ea_moco_on_table(v.features, out.table, cfg, spec);
  return out;
}

/// Same as above with an already-trained autoencoder encoder.
inline PretrainResult train_ea_moco(const EnvDataset& ds, const nn::MlpParams& ae_encoder, const ContrastiveConfig& cfg,
                                    const EncoderSpec& spec = {}) {
  DatasetView v = dataset_view(ds, Split::Train);
  const DistanceTable dt = build_distance_table(nn::encode(ae_encoder, v.features), v.envs);
  return train_ea_moco_on_table(v.features, dt, cfg, spec);
}

/// Vanilla momentum contrast: the positive is a second augmented view of the
/// anchor. Only the feature matrix is consumed, so env labels cannot leak in.
inline PretrainResult train_moco_on_matrix(const Matrix& x_train, const ContrastiveConfig& cfg,
                                           const EncoderSpec& spec = {}) {
  using namespace contrastive_detail;
  cfg.validate();
  const RngHandle root(cfg.seed, "moco");
  MomentumContrast mc(init_contrastive_encoder(static_cast<int>(x_train.cols()), spec, root.split("init")), cfg);
  Rng shuffle(root.split("shuffle"));
  Rng aug_rng(root.split("augment"));
  PretrainResult r;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = nn::make_batches(shuffle.permutation(static_cast<std::size_t>(x_train.rows())), cfg.batch_size);
    double total = 0.0;
    for (const auto& idx : batches) {
      const Matrix anchors = augment_rows(x_train, idx, cfg, aug_rng);
      std::vector<Matrix> views{augment_rows(x_train, idx, cfg, aug_rng)};
      total += mc.step(anchors, views).loss;
    }
    r.epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  r.encoder = mc.query();
  return r;
}

inline PretrainResult train_moco_baseline(const EnvDataset& ds, const ContrastiveConfig& cfg, const EncoderSpec& spec = {}) {
  return train_moco_on_matrix(dataset_view(ds, Split::Train).features, cfg, spec);
}

}  // namespace envshift
