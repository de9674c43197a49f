#pragma once

// Feature extractors shared by every agent and by the retrieval index.

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aekick/numerics.hpp"

namespace aekick {

struct IdentityEncoder {
  std::size_t dim = 0;
};

struct StandardizeEncoder {
  std::vector<double> mean;
  std::vector<double> std;  // every entry > 0
};

/// Dense beta-VAE. The encoder net emits [mu, log sigma^2] (2 x latent_dim
/// linear outputs); the decoder maps a latent back to observation space.
struct VaeEncoder {
  DenseNet encoder;
  DenseNet decoder;
  std::size_t latent_dim = 0;
};

class Encoder {
 public:
  using Variant = std::variant<IdentityEncoder, StandardizeEncoder, VaeEncoder>;

  static Encoder identity(std::size_t dim);
  /// Per-dimension moments of `corpus`; zero-variance dimensions get std 1.
  static Encoder standardize(const Matrix& corpus, std::string id = "standardize");
  static Encoder standardize(std::vector<double> mean, std::vector<double> std,
                             std::string id = "standardize");
  static Encoder vae(VaeEncoder model, std::string id);

  const Variant& variant() const { return variant_; }
  const std::string& id() const { return id_; }
  std::size_t input_dim() const;
  std::size_t latent_dim() const;
  bool is_vae() const { return std::holds_alternative<VaeEncoder>(variant_); }
  VaeEncoder& vae_model();
  const VaeEncoder& vae_model() const;

 private:
  Encoder(Variant v, std::string id);
  Variant variant_;
  std::string id_;
};

/// Deterministic: the VAE variant returns the mu head without sampling.
std::vector<double> encode(const Encoder& enc, std::span<const double> obs);
Matrix encode_batch(const Encoder& enc, const Matrix& obs);

struct VaeTrainConfig {
  int epochs = 30;
  std::size_t batch_size = 128;
  double learning_rate = 3e-4;
  double beta_max = 5e-8;
  double ramp_start = 0.1;  // fraction of epochs
  double ramp_end = 0.9;

  void validate() const;
};

/// 0 until ramp_start * total, linear up to beta_max at ramp_end * total,
/// beta_max afterwards.
double beta_schedule(int epoch, int total_epochs, const VaeTrainConfig& cfg);

struct VaeLoss {
  double reconstruction = 0.0;  // mean over batch of per-sample MSE
  double kl = 0.0;              // mean over batch of the summed KL
  double total = 0.0;           // reconstruction + beta * kl
};

/// KL(N(mu, sigma^2) || N(0, 1)) summed over latent dimensions.
double gaussian_kl(std::span<const double> mu, std::span<const double> log_var);

struct VaeLossAndGrads {
  VaeLoss loss;
  NetGradients encoder;
  NetGradients decoder;
};

/// Loss and gradients for a fixed noise matrix (batch x latent_dim), using
/// z = mu + exp(log_var / 2) * noise.
VaeLossAndGrads vae_loss(const VaeEncoder& vae, const Matrix& batch, const Matrix& noise, double beta);

struct VaeOptimizers {
  AdamState encoder;
  AdamState decoder;
  static VaeOptimizers for_model(const VaeEncoder& vae, double learning_rate);
};

/// One Adam step on encoder and decoder with noise drawn from `rng`.
/// Throws NumericError and leaves the model untouched if the loss is not finite.
VaeLoss vae_train_step(VaeEncoder& vae, const Matrix& batch, double beta, VaeOptimizers& opt, Rng& rng);

struct VaeEpochLog {
  int epoch = 0;
  double beta = 0.0;
  VaeLoss mean_loss;
};

VaeEncoder make_vae(std::size_t input_dim, std::size_t latent_dim,
                    const std::vector<std::size_t>& hidden, Rng& rng);

/// Full pre-training over `corpus` (rows are observations), shuffled per epoch.
std::vector<VaeEpochLog> train_vae(VaeEncoder& vae, const Matrix& corpus,
                                   const VaeTrainConfig& cfg, Rng& rng);

void save_encoder(const Encoder& enc, const std::filesystem::path& path);
Encoder load_encoder(const std::filesystem::path& path);

}  // namespace aekick
