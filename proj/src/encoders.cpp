#include "aekick/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aekick/snapshot.hpp"

namespace aekick {

Encoder::Encoder(Variant v, std::string id) : variant_(std::move(v)), id_(std::move(id)) {}

Encoder Encoder::identity(std::size_t dim) { return Encoder(IdentityEncoder{dim}, "identity"); }

Encoder Encoder::standardize(const Matrix& corpus, std::string id) {
  if (corpus.rows == 0) throw ContractError("standardize: empty corpus");
  std::vector<double> mean(corpus.cols, 0.0), sd(corpus.cols, 0.0);
  for (std::size_t r = 0; r < corpus.rows; ++r) {
    for (std::size_t c = 0; c < corpus.cols; ++c) mean[c] += corpus(r, c);
  }
  for (double& m : mean) m /= static_cast<double>(corpus.rows);
  for (std::size_t r = 0; r < corpus.rows; ++r) {
    for (std::size_t c = 0; c < corpus.cols; ++c) {
      const double d = corpus(r, c) - mean[c];
      sd[c] += d * d;
    }
  }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(corpus.rows));
    if (!(s > 1e-12)) s = 1.0;
  }
  return standardize(std::move(mean), std::move(sd), std::move(id));
}

Encoder Encoder::standardize(std::vector<double> mean, std::vector<double> std, std::string id) {
  if (mean.size() != std.size()) throw ShapeError("standardize: mean/std length mismatch");
  for (double s : std) {
    if (!(s > 0.0)) throw ContractError("standardize: std entries must be > 0");
  }
  return Encoder(StandardizeEncoder{std::move(mean), std::move(std)}, std::move(id));
}

Encoder Encoder::vae(VaeEncoder model, std::string id) {
  if (model.encoder.output_dim() != 2 * model.latent_dim) {
    throw ShapeError("vae: encoder must emit 2 x latent_dim outputs");
  }
  if (model.decoder.input_dim() != model.latent_dim ||
      model.decoder.output_dim() != model.encoder.input_dim()) {
    throw ShapeError("vae: decoder dimensions do not match encoder");
  }
  return Encoder(std::move(model), std::move(id));
}

std::size_t Encoder::input_dim() const {
  return std::visit(
      [](const auto& e) -> std::size_t {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityEncoder>) return e.dim;
        else if constexpr (std::is_same_v<T, StandardizeEncoder>) return e.mean.size();
        else return e.encoder.input_dim();
      },
      variant_);
}

std::size_t Encoder::latent_dim() const {
  return std::visit(
      [](const auto& e) -> std::size_t {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityEncoder>) return e.dim;
        else if constexpr (std::is_same_v<T, StandardizeEncoder>) return e.mean.size();
        else return e.latent_dim;
      },
      variant_);
}

VaeEncoder& Encoder::vae_model() {
  if (!is_vae()) throw ContractError("encoder variant is not dense-vae");
  return std::get<VaeEncoder>(variant_);
}

const VaeEncoder& Encoder::vae_model() const {
  if (!is_vae()) throw ContractError("encoder variant is not dense-vae");
  return std::get<VaeEncoder>(variant_);
}

Matrix encode_batch(const Encoder& enc, const Matrix& obs) {
  if (obs.cols != enc.input_dim()) {
    throw ShapeError("encode: observation has " + std::to_string(obs.cols) +
                     " dims, encoder expects " + std::to_string(enc.input_dim()));
  }
  return std::visit(
      [&](const auto& e) -> Matrix {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityEncoder>) {
          return obs;
        } else if constexpr (std::is_same_v<T, StandardizeEncoder>) {
          Matrix out = obs;
          for (std::size_t r = 0; r < out.rows; ++r) {
            for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = (out(r, c) - e.mean[c]) / e.std[c];
          }
          return out;
        } else {
          const Matrix h = forward(e.encoder, obs).output();
          Matrix mu(obs.rows, e.latent_dim);
          for (std::size_t r = 0; r < obs.rows; ++r) {
            std::copy_n(h.row(r).begin(), e.latent_dim, mu.row(r).begin());
          }
          return mu;
        }
      },
      enc.variant());
}

std::vector<double> encode(const Encoder& enc, std::span<const double> obs) {
  if (std::holds_alternative<IdentityEncoder>(enc.variant())) {
    if (obs.size() != enc.input_dim()) throw ShapeError("encode: observation dimension mismatch");
    return {obs.begin(), obs.end()};
  }
  Matrix m(1, obs.size());
  std::copy(obs.begin(), obs.end(), m.data.begin());
  return encode_batch(enc, m).data;
}

void VaeTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("vae: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("vae: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("vae: learning rate must be > 0");
  if (!(beta_max >= 0.0)) throw ConfigError("vae: beta_max must be >= 0");
  if (!(ramp_start >= 0.0 && ramp_start < ramp_end && ramp_end <= 1.0)) {
    throw ConfigError("vae: need 0 <= ramp start < ramp end <= 1");
  }
}

double beta_schedule(int epoch, int total_epochs, const VaeTrainConfig& cfg) {
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  if (frac <= cfg.ramp_start) return 0.0;
  if (frac >= cfg.ramp_end) return cfg.beta_max;
  return cfg.beta_max * (frac - cfg.ramp_start) / (cfg.ramp_end - cfg.ramp_start);
}

double gaussian_kl(std::span<const double> mu, std::span<const double> log_var) {
  double s = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    s += 1.0 + log_var[d] - mu[d] * mu[d] - std::exp(log_var[d]);
  }
  return -0.5 * s;
}

VaeLossAndGrads vae_loss(const VaeEncoder& vae, const Matrix& batch, const Matrix& noise, double beta) {
  const std::size_t n = batch.rows;
  const std::size_t L = vae.latent_dim;
  if (noise.rows != n || noise.cols != L) throw ShapeError("vae_loss: noise must be batch x latent_dim");
  if (n == 0) throw ContractError("vae_loss: empty batch");

  const auto enc_acts = forward(vae.encoder, batch);
  const Matrix& h = enc_acts.output();
  Matrix z(n, L);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t d = 0; d < L; ++d) {
      z(b, d) = h(b, d) + std::exp(0.5 * h(b, L + d)) * noise(b, d);
    }
  }
  const auto dec_acts = forward(vae.decoder, z);
  const Matrix& recon = dec_acts.output();

  const double dims = static_cast<double>(batch.cols);
  VaeLossAndGrads out;
  Matrix g_recon(n, batch.cols);
  double rec_sum = 0.0, kl_sum = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    double rb = 0.0;
    for (std::size_t c = 0; c < batch.cols; ++c) {
      const double diff = recon(b, c) - batch(b, c);
      rb += diff * diff;
      g_recon(b, c) = 2.0 * diff / dims;
    }
    rec_sum += rb / dims;
    kl_sum += gaussian_kl(h.row(b).subspan(0, L), h.row(b).subspan(L, L));
  }
  out.loss.reconstruction = rec_sum / static_cast<double>(n);
  out.loss.kl = kl_sum / static_cast<double>(n);
  out.loss.total = out.loss.reconstruction + beta * out.loss.kl;

  out.decoder = backward(vae.decoder, dec_acts, g_recon);
  const Matrix& g_z = out.decoder.input;
  Matrix g_h(n, 2 * L);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t d = 0; d < L; ++d) {
      const double mu = h(b, d);
      const double lv = h(b, L + d);
      const double sigma = std::exp(0.5 * lv);
      g_h(b, d) = g_z(b, d) + beta * mu;
      g_h(b, L + d) = g_z(b, d) * noise(b, d) * 0.5 * sigma + 0.5 * beta * (std::exp(lv) - 1.0);
    }
  }
  out.encoder = backward(vae.encoder, enc_acts, g_h);
  return out;
}

VaeOptimizers VaeOptimizers::for_model(const VaeEncoder& vae, double learning_rate) {
  return {AdamState::for_net(vae.encoder, learning_rate), AdamState::for_net(vae.decoder, learning_rate)};
}

VaeLoss vae_train_step(VaeEncoder& vae, const Matrix& batch, double beta, VaeOptimizers& opt, Rng& rng) {
  Matrix noise(batch.rows, vae.latent_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : noise.data) v = normal(rng);
  auto lg = vae_loss(vae, batch, noise, beta);
  if (!std::isfinite(lg.loss.total)) throw NumericError("vae_train_step: non-finite loss");
  // Validate both gradients before touching either network.
  for (const auto* g : {&lg.encoder, &lg.decoder}) {
    for (const auto& l : g->layers) {
      if (!all_finite(l.weights.data) || !all_finite(l.biases)) {
        throw NumericError("vae_train_step: non-finite gradient");
      }
    }
  }
  adam_step(vae.encoder, lg.encoder, opt.encoder);
  adam_step(vae.decoder, lg.decoder, opt.decoder);
  return lg.loss;
}

VaeEncoder make_vae(std::size_t input_dim, std::size_t latent_dim,
                    const std::vector<std::size_t>& hidden, Rng& rng) {
  VaeEncoder v;
  v.latent_dim = latent_dim;
  v.encoder = DenseNet::make(input_dim, hidden, 2 * latent_dim, Activation::kLinear, rng);
  std::vector<std::size_t> rev(hidden.rbegin(), hidden.rend());
  v.decoder = DenseNet::make(latent_dim, rev, input_dim, Activation::kLinear, rng);
  return v;
}

std::vector<VaeEpochLog> train_vae(VaeEncoder& vae, const Matrix& corpus,
                                   const VaeTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (corpus.rows == 0) throw ContractError("train_vae: empty corpus");
  if (corpus.cols != vae.encoder.input_dim()) throw ShapeError("train_vae: corpus dimension mismatch");
  auto opt = VaeOptimizers::for_model(vae, cfg.learning_rate);
  std::vector<std::size_t> order(corpus.rows);
  std::iota(order.begin(), order.end(), 0);
  std::vector<VaeEpochLog> logs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double beta = beta_schedule(epoch, cfg.epochs, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    VaeEpochLog log{epoch, beta, {}};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Matrix batch(end - start, corpus.cols);
      for (std::size_t i = start; i < end; ++i) {
        std::copy_n(corpus.row(order[i]).begin(), corpus.cols, batch.row(i - start).begin());
      }
      const auto l = vae_train_step(vae, batch, beta, opt, rng);
      log.mean_loss.reconstruction += l.reconstruction;
      log.mean_loss.kl += l.kl;
      log.mean_loss.total += l.total;
      ++batches;
    }
    log.mean_loss.reconstruction /= batches;
    log.mean_loss.kl /= batches;
    log.mean_loss.total /= batches;
    logs.push_back(log);
  }
  return logs;
}

void save_encoder(const Encoder& enc, const std::filesystem::path& path) {
  ArrayBundle bundle;
  bundle.meta["kind"] = "encoder";
  bundle.meta["encoder_id"] = enc.id();
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityEncoder>) {
          bundle.meta["variant"] = "identity";
          bundle.meta["dim"] = e.dim;
        } else if constexpr (std::is_same_v<T, StandardizeEncoder>) {
          bundle.meta["variant"] = "standardize";
          Matrix m(1, e.mean.size()), s(1, e.std.size());
          m.data = e.mean;
          s.data = e.std;
          bundle.arrays.emplace_back("encoder.mean", std::move(m));
          bundle.arrays.emplace_back("encoder.std", std::move(s));
        } else {
          bundle.meta["variant"] = "dense-vae";
          bundle.meta["latent_dim"] = e.latent_dim;
          append_net(bundle, "vae.encoder", e.encoder);
          append_net(bundle, "vae.decoder", e.decoder);
        }
      },
      enc.variant());
  save_bundle(bundle, path);
}

Encoder load_encoder(const std::filesystem::path& path) {
  const auto bundle = load_bundle(path);
  try {
    const auto variant = bundle.meta.at("variant").get<std::string>();
    const auto id = bundle.meta.at("encoder_id").get<std::string>();
    if (variant == "identity") return Encoder::identity(bundle.meta.at("dim").get<std::size_t>());
    if (variant == "standardize") {
      return Encoder::standardize(bundle.get("encoder.mean").data, bundle.get("encoder.std").data, id);
    }
    if (variant == "dense-vae") {
      VaeEncoder v;
      v.latent_dim = bundle.meta.at("latent_dim").get<std::size_t>();
      v.encoder = extract_net(bundle, "vae.encoder");
      v.decoder = extract_net(bundle, "vae.decoder");
      return Encoder::vae(std::move(v), id);
    }
    throw FormatError("unknown encoder variant '" + variant + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad encoder header: " + e.what());
  }
}

}  // namespace aekick
