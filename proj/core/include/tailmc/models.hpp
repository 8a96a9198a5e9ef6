#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tailmc/data.hpp"
#include "tailmc/numeric.hpp"

namespace tailmc {

enum class ModelKind : std::uint8_t { MF, TMF, TMFDropout, IFWMF };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct TrainConfig {
  std::size_t rank = 10;
  double reg = 0.01;          // weight of the squared-norm penalty
  double learn_rate = 0.005;
  std::size_t max_epochs = 200;
  std::size_t patience = 5;   // epochs without validation improvement
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TruncationConfig {
  double steepness = 10.0;
  double midpoint = 0.0;

  void validate() const;
  friend bool operator==(const TruncationConfig&, const TruncationConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  // 1/2 sum w e^2 + reg/2 (|p_u|^2 + |q_i|^2) over training ratings, each
  // restricted to the coordinates used at prediction time.
  double train_objective = 0.0;
  std::optional<double> val_rmse;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  // Dropout bookkeeping: raw Poisson draws before clamping into [1, rank].
  std::uint64_t theta_draws = 0;
  std::uint64_t theta_sum = 0;
  friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

struct LatentModel {
  ModelKind kind = ModelKind::MF;
  TrainConfig hyper;
  std::optional<TruncationConfig> trunc;  // TMF, TMFDropout
  std::optional<double> rho;              // IFWMF
  double cdf_epsilon = kDefaultCdfEpsilon;
  DenseFactor users;  // n x rank
  DenseFactor items;  // m x rank
  // Mean training rating; the prediction for an entity without a factor row.
  double global_mean = 0.0;
  std::vector<std::uint8_t> user_seen;
  std::vector<std::uint8_t> item_seen;
  TrainTrace trace;

  std::size_t rank() const noexcept { return users.cols(); }
  std::size_t n_users() const noexcept { return users.rows(); }
  std::size_t n_items() const noexcept { return items.rows(); }

  // MF model over the given factors with every entity marked as trained.
  static LatentModel from_factors(DenseFactor users, DenseFactor items);

  // Throws InvalidArgument when shapes or kind-specific fields are inconsistent.
  void validate() const;
};

// Per-rating gradient of
//   w/2 (r - p_a . q_a)^2 + reg/2 (|p_a|^2 + |q_a|^2)
// where _a keeps the leading `active` coordinates. Inactive entries are 0.
struct RatingGradient {
  std::vector<double> user;
  std::vector<double> item;
};

RatingGradient rating_gradient(std::span<const double> p, std::span<const double> q,
                               double rating, std::size_t active, double weight, double reg);

// One SGD step along rating_gradient, applied to both rows simultaneously.
// Returns the pre-update error p_a . q_a - rating.
double sgd_step(std::span<double> p, std::span<double> q, double rating,
                std::size_t active, double weight, double reg, double learn_rate);

LatentModel train_mf(const RatingDataset& train, const RatingDataset& val,
                     const TrainConfig& cfg);

// `freq` must be computed on `train`.
LatentModel train_tmf(const RatingDataset& train, const RatingDataset& val,
                      const TrainConfig& cfg, const TruncationConfig& trunc,
                      const FrequencyTable& freq);

// Active counts are Poisson(sigmoid value) draws clamped into [1, rank],
// redrawn each time a rating is visited.
LatentModel train_tmf_dropout(const RatingDataset& train, const RatingDataset& val,
                              const TrainConfig& cfg, const TruncationConfig& trunc,
                              const FrequencyTable& freq, SeededStream& stream,
                              double cdf_epsilon = kDefaultCdfEpsilon);

LatentModel train_ifwmf(const RatingDataset& train, const RatingDataset& val,
                        const TrainConfig& cfg, double rho, const FrequencyTable& freq);

// Dot product over the leading `active` coordinates, or the global mean when
// either entity has no trained row. Throws std::out_of_range on bad indices.
double truncated_predict(const LatentModel& model, UserIdx u, ItemIdx i,
                         std::size_t active);

double predict_mf(const LatentModel& model, UserIdx u, ItemIdx i);
double predict_tmf(const LatentModel& model, UserIdx u, ItemIdx i,
                   const FrequencyTable& freq);
double predict_tmf_dropout(const LatentModel& model, UserIdx u, ItemIdx i,
                           const FrequencyTable& freq);
// Dispatches on model.kind.
double predict(const LatentModel& model, UserIdx u, ItemIdx i, const FrequencyTable& freq);

// Number of leading coordinates a model uses for (u, i) at prediction time.
std::size_t active_count(const LatentModel& model, UserIdx u, ItemIdx i,
                         const FrequencyTable& freq);

// Frequency-adaptive ensemble: a pool of MF models and, per user quartile and
// per item quartile, the pool index that scored best on validation.
struct FarpEnsemble {
  std::vector<LatentModel> models;
  std::array<std::size_t, kQuartiles> user_slot{};
  std::array<std::size_t, kQuartiles> item_slot{};
  std::size_t global_best = 0;
  QuartileMap quartiles;
  FrequencyTable frequencies;
  std::vector<std::string> warnings;

  const LatentModel& user_model(Quartile q) const { return models.at(user_slot[index_of(q)]); }
  const LatentModel& item_model(Quartile q) const { return models.at(item_slot[index_of(q)]); }
};

// Trains one MF model per candidate, then selects per quartile.
FarpEnsemble farp_fit(const RatingDataset& train, const RatingDataset& val,
                      const std::vector<TrainConfig>& candidates,
                      const FrequencyTable& freq, const QuartileMap& quartiles,
                      std::size_t workers = 1);

// Per-quartile selection over already trained MF models. A quartile with no
// validation ratings falls back to the best model on all of `val`.
FarpEnsemble farp_select(std::vector<LatentModel> models, const RatingDataset& val,
                         const FrequencyTable& freq, const QuartileMap& quartiles);

// Routes to the user's quartile model when f_u <= f_i, else to the item's.
double farp_predict(const FarpEnsemble& ens, UserIdx u, ItemIdx i);

using Predictor = std::function<double(UserIdx, ItemIdx)>;

// The returned callables reference their arguments; keep them alive.
Predictor make_predictor(const LatentModel& model, const FrequencyTable& freq);
Predictor make_predictor(const FarpEnsemble& ens);

}  // namespace tailmc
