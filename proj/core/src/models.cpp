#include "tailmc/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "tailmc/error.hpp"
#include "tailmc/parallel.hpp"

namespace tailmc {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::MF: return "mf";
    case ModelKind::TMF: return "tmf";
    case ModelKind::TMFDropout: return "tmf-dropout";
    case ModelKind::IFWMF: return "ifwmf";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "mf") return ModelKind::MF;
  if (name == "tmf") return ModelKind::TMF;
  if (name == "tmf-dropout") return ModelKind::TMFDropout;
  if (name == "ifwmf") return ModelKind::IFWMF;
  throw InvalidArgument("unknown model kind '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (rank == 0) throw InvalidArgument("rank must be >= 1");
  if (!(reg >= 0.0) || !std::isfinite(reg)) throw InvalidArgument("regularization must be >= 0");
  if (!(learn_rate > 0.0) || !std::isfinite(learn_rate)) {
    throw InvalidArgument("learning rate must be positive");
  }
  if (patience == 0) throw InvalidArgument("patience must be >= 1");
}

void TruncationConfig::validate() const {
  if (!(steepness > 0.0) || !std::isfinite(steepness)) {
    throw InvalidArgument("sigmoid steepness must be positive");
  }
  if (!(midpoint >= -1.0 && midpoint <= 1.0)) {
    throw InvalidArgument("sigmoid midpoint must lie in [-1, 1]");
  }
}

LatentModel LatentModel::from_factors(DenseFactor users, DenseFactor items) {
  if (users.cols() != items.cols()) throw InvalidArgument("factor ranks differ");
  LatentModel model;
  model.hyper.rank = users.cols();
  model.user_seen.assign(users.rows(), 1);
  model.item_seen.assign(items.rows(), 1);
  model.users = std::move(users);
  model.items = std::move(items);
  return model;
}

void LatentModel::validate() const {
  if (users.cols() != items.cols() || users.cols() == 0) {
    throw InvalidArgument("user and item factors must share a positive rank");
  }
  if (user_seen.size() != users.rows() || item_seen.size() != items.rows()) {
    throw InvalidArgument("seen flags do not match factor rows");
  }
  const bool wants_trunc = kind == ModelKind::TMF || kind == ModelKind::TMFDropout;
  if (wants_trunc != trunc.has_value()) {
    throw InvalidArgument("truncation config present iff the model is truncated");
  }
  if ((kind == ModelKind::IFWMF) != rho.has_value()) {
    throw InvalidArgument("rho present iff the model is inverse-frequency weighted");
  }
}

RatingGradient rating_gradient(std::span<const double> p, std::span<const double> q,
                               double rating, std::size_t active, double weight, double reg) {
  const std::size_t r = p.size();
  active = std::min(active, r);
  RatingGradient g{std::vector<double>(r, 0.0), std::vector<double>(r, 0.0)};
  const double err = dot(p.first(active), q.first(active)) - rating;
  const double scaled = weight * err;
  for (std::size_t j = 0; j < active; ++j) {
    g.user[j] = scaled * q[j] + reg * p[j];
    g.item[j] = scaled * p[j] + reg * q[j];
  }
  return g;
}

double sgd_step(std::span<double> p, std::span<double> q, double rating,
                std::size_t active, double weight, double reg, double learn_rate) {
  active = std::min(active, p.size());
  double pred = 0.0;
  for (std::size_t j = 0; j < active; ++j) pred += p[j] * q[j];
  const double err = pred - rating;
  const double scaled = weight * err;
  for (std::size_t j = 0; j < active; ++j) {
    const double pj = p[j];
    const double qj = q[j];
    p[j] = pj - learn_rate * (scaled * qj + reg * pj);
    q[j] = qj - learn_rate * (scaled * pj + reg * qj);
  }
  return err;
}

double truncated_predict(const LatentModel& model, UserIdx u, ItemIdx i,
                         std::size_t active) {
  const auto ui = index_of(u);
  const auto ii = index_of(i);
  if (ui >= model.n_users() || ii >= model.n_items()) {
    throw std::out_of_range("prediction index outside the model");
  }
  if (!model.user_seen[ui] || !model.item_seen[ii]) return model.global_mean;
  active = std::min(active, model.rank());
  return dot(model.users.row(ui).first(active), model.items.row(ii).first(active));
}

namespace {

void check_freq(const LatentModel& model, const FrequencyTable& freq) {
  if (freq.n_users() != model.n_users() || freq.n_items() != model.n_items()) {
    throw InvalidArgument("frequency table does not match model dimensions");
  }
}

std::size_t dropout_cutoff(double lambda, std::size_t rank, double epsilon) {
  if (!(lambda > 0.0)) return 1;
  const auto s = poisson_cdf_cutoff(lambda, epsilon);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::min<std::uint64_t>(s, rank)), 1,
                                 rank);
}

}  // namespace

std::size_t active_count(const LatentModel& model, UserIdx u, ItemIdx i,
                         const FrequencyTable& freq) {
  switch (model.kind) {
    case ModelKind::MF:
    case ModelKind::IFWMF:
      return model.rank();
    case ModelKind::TMF: {
      check_freq(model, freq);
      const auto& t = *model.trunc;
      return sigmoid_rank_count(freq.min_norm(u, i), model.rank(), t.steepness, t.midpoint).value;
    }
    case ModelKind::TMFDropout: {
      check_freq(model, freq);
      const auto& t = *model.trunc;
      const double lambda =
          sigmoid_rank_value(freq.min_norm(u, i), model.rank(), t.steepness, t.midpoint);
      return dropout_cutoff(lambda, model.rank(), model.cdf_epsilon);
    }
  }
  return model.rank();
}

double predict_mf(const LatentModel& model, UserIdx u, ItemIdx i) {
  return truncated_predict(model, u, i, model.rank());
}

double predict_tmf(const LatentModel& model, UserIdx u, ItemIdx i,
                   const FrequencyTable& freq) {
  if (model.kind != ModelKind::TMF) throw InvalidArgument("predict_tmf: model is not TMF");
  return truncated_predict(model, u, i, active_count(model, u, i, freq));
}

double predict_tmf_dropout(const LatentModel& model, UserIdx u, ItemIdx i,
                           const FrequencyTable& freq) {
  if (model.kind != ModelKind::TMFDropout) {
    throw InvalidArgument("predict_tmf_dropout: model is not TMF with dropout");
  }
  return truncated_predict(model, u, i, active_count(model, u, i, freq));
}

double predict(const LatentModel& model, UserIdx u, ItemIdx i, const FrequencyTable& freq) {
  return truncated_predict(model, u, i, active_count(model, u, i, freq));
}

namespace {

constexpr double kInitRange = 0.01;

// Everything the SGD loop needs besides the factors: how many coordinates a
// rating touches and how heavily its error counts.
struct RatingPlan {
  std::vector<std::size_t> active;       // fixed counts (MF, TMF, IFWMF)
  std::vector<double> weight;            // error weights
  std::vector<double> poisson_mean;      // dropout only
  std::vector<std::size_t> eval_active;  // prediction-time counts
};

RatingPlan plan_for(const LatentModel& model, const RatingDataset& data,
                    const FrequencyTable* freq) {
  RatingPlan plan;
  const std::size_t n = data.size();
  const std::size_t r = model.rank();
  plan.active.assign(n, r);
  plan.weight.assign(n, 1.0);
  plan.eval_active.assign(n, r);
  if (model.kind == ModelKind::MF) return plan;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& t = data.triples()[k];
    const double f_min = freq->min_norm(t.user, t.item);
    switch (model.kind) {
      case ModelKind::TMF:
        plan.active[k] = sigmoid_rank_count(f_min, r, model.trunc->steepness,
                                            model.trunc->midpoint).value;
        plan.eval_active[k] = plan.active[k];
        break;
      case ModelKind::TMFDropout: {
        const double lambda =
            sigmoid_rank_value(f_min, r, model.trunc->steepness, model.trunc->midpoint);
        plan.poisson_mean.push_back(lambda);
        plan.eval_active[k] = dropout_cutoff(lambda, r, model.cdf_epsilon);
        break;
      }
      case ModelKind::IFWMF:
        plan.weight[k] = inverse_frequency_weight(f_min, *model.rho);
        break;
      case ModelKind::MF:
        break;
    }
  }
  return plan;
}

double objective(const LatentModel& model, const RatingDataset& data, const RatingPlan& plan) {
  double total = 0.0;
  const double reg = model.hyper.reg;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& t = data.triples()[k];
    const auto p = model.users.row(index_of(t.user)).first(plan.eval_active[k]);
    const auto q = model.items.row(index_of(t.item)).first(plan.eval_active[k]);
    const double err = dot(p, q) - t.rating;
    total += 0.5 * plan.weight[k] * err * err + 0.5 * reg * (dot(p, p) + dot(q, q));
  }
  return total;
}

double validation_rmse(const LatentModel& model, const RatingDataset& val,
                       const RatingPlan& plan) {
  double sum = 0.0;
  for (std::size_t k = 0; k < val.size(); ++k) {
    const auto& t = val.triples()[k];
    const double err = truncated_predict(model, t.user, t.item, plan.eval_active[k]) - t.rating;
    sum += err * err;
  }
  return std::sqrt(sum / static_cast<double>(val.size()));
}

LatentModel fit(const RatingDataset& train, const RatingDataset& val, LatentModel model,
                const FrequencyTable* freq, SeededStream* dropout_stream) {
  const auto& cfg = model.hyper;
  cfg.validate();
  if (model.trunc) model.trunc->validate();
  if (model.rho && !(*model.rho >= 0.0)) throw InvalidArgument("rho must be >= 0");
  if (train.empty()) throw InvalidArgument("training set is empty");
  if (!val.empty() && (val.n_users() != train.n_users() || val.n_items() != train.n_items())) {
    throw InvalidArgument("validation set does not share the training index tables");
  }
  if (freq && (freq->n_users() != train.n_users() || freq->n_items() != train.n_items())) {
    throw InvalidArgument("frequency table does not match the training index tables");
  }

  const std::size_t r = cfg.rank;
  SeededStream stream(cfg.seed);
  model.users = DenseFactor(train.n_users(), r);
  model.items = DenseFactor(train.n_items(), r);
  for (auto& v : model.users.values()) v = stream.uniform(-kInitRange, kInitRange);
  for (auto& v : model.items.values()) v = stream.uniform(-kInitRange, kInitRange);
  model.user_seen.assign(train.n_users(), 0);
  model.item_seen.assign(train.n_items(), 0);
  for (const auto& t : train.triples()) {
    model.user_seen[index_of(t.user)] = 1;
    model.item_seen[index_of(t.item)] = 1;
  }
  model.global_mean = train.mean_rating();
  model.trace = {};

  const RatingPlan plan = plan_for(model, train, freq);
  const RatingPlan val_plan = val.empty() ? RatingPlan{} : plan_for(model, val, freq);
  const bool dropout = model.kind == ModelKind::TMFDropout;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double best_rmse = std::numeric_limits<double>::infinity();
  DenseFactor best_users = model.users;
  DenseFactor best_items = model.items;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), stream);
    for (const std::size_t k : order) {
      const auto& t = train.triples()[k];
      std::size_t active = plan.active[k];
      if (dropout) {
        const double lambda = plan.poisson_mean[k];
        const std::uint64_t theta = lambda > 0.0 ? poisson_sample(lambda, *dropout_stream) : 0;
        ++model.trace.theta_draws;
        model.trace.theta_sum += theta;
        active = std::clamp<std::size_t>(static_cast<std::size_t>(std::min<std::uint64_t>(theta, r)),
                                         1, r);
      }
      sgd_step(model.users.row(index_of(t.user)), model.items.row(index_of(t.item)), t.rating,
               active, plan.weight[k], cfg.reg, cfg.learn_rate);
    }
    if (!model.users.all_finite() || !model.items.all_finite()) throw DivergenceError(epoch);

    EpochRecord record{epoch, objective(model, train, plan), std::nullopt};
    if (!val.empty()) {
      const double rmse = validation_rmse(model, val, val_plan);
      record.val_rmse = rmse;
      if (rmse < best_rmse) {
        best_rmse = rmse;
        best_users = model.users;
        best_items = model.items;
        model.trace.best_epoch = epoch;
        stale = 0;
      } else {
        ++stale;
      }
    } else {
      model.trace.best_epoch = epoch;
    }
    model.trace.epochs.push_back(record);
    if (!val.empty() && stale >= cfg.patience) break;
  }
  if (!val.empty() && model.trace.best_epoch > 0) {
    model.users = std::move(best_users);
    model.items = std::move(best_items);
  }
  return model;
}

LatentModel blank(ModelKind kind, const TrainConfig& cfg) {
  LatentModel m;
  m.kind = kind;
  m.hyper = cfg;
  return m;
}

}  // namespace

LatentModel train_mf(const RatingDataset& train, const RatingDataset& val,
                     const TrainConfig& cfg) {
  return fit(train, val, blank(ModelKind::MF, cfg), nullptr, nullptr);
}

LatentModel train_tmf(const RatingDataset& train, const RatingDataset& val,
                      const TrainConfig& cfg, const TruncationConfig& trunc,
                      const FrequencyTable& freq) {
  auto m = blank(ModelKind::TMF, cfg);
  m.trunc = trunc;
  return fit(train, val, std::move(m), &freq, nullptr);
}

LatentModel train_tmf_dropout(const RatingDataset& train, const RatingDataset& val,
                              const TrainConfig& cfg, const TruncationConfig& trunc,
                              const FrequencyTable& freq, SeededStream& stream,
                              double cdf_epsilon) {
  if (!(cdf_epsilon > 0.0 && cdf_epsilon < 1.0)) {
    throw InvalidArgument("cdf epsilon must lie in (0, 1)");
  }
  auto m = blank(ModelKind::TMFDropout, cfg);
  m.trunc = trunc;
  m.cdf_epsilon = cdf_epsilon;
  return fit(train, val, std::move(m), &freq, &stream);
}

LatentModel train_ifwmf(const RatingDataset& train, const RatingDataset& val,
                        const TrainConfig& cfg, double rho, const FrequencyTable& freq) {
  auto m = blank(ModelKind::IFWMF, cfg);
  m.rho = rho;
  return fit(train, val, std::move(m), &freq, nullptr);
}

namespace {

double subset_rmse(const LatentModel& model, const std::vector<const RatingTriple*>& ratings) {
  double sum = 0.0;
  for (const auto* t : ratings) {
    const double err = predict_mf(model, t->user, t->item) - t->rating;
    sum += err * err;
  }
  return std::sqrt(sum / static_cast<double>(ratings.size()));
}

// Index of the smallest score; first wins ties.
std::size_t argmin(const std::vector<double>& scores) {
  return static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
}

}  // namespace

FarpEnsemble farp_select(std::vector<LatentModel> models, const RatingDataset& val,
                         const FrequencyTable& freq, const QuartileMap& quartiles) {
  if (models.empty()) throw InvalidArgument("farp: no candidate models");
  for (const auto& m : models) {
    if (m.kind != ModelKind::MF) throw InvalidArgument("farp: candidates must be MF models");
  }
  FarpEnsemble ens;
  ens.quartiles = quartiles;
  ens.frequencies = freq;

  std::vector<const RatingTriple*> all;
  std::array<std::vector<const RatingTriple*>, kQuartiles> by_user;
  std::array<std::vector<const RatingTriple*>, kQuartiles> by_item;
  for (const auto& t : val.triples()) {
    all.push_back(&t);
    by_user[index_of(quartiles.of(t.user))].push_back(&t);
    by_item[index_of(quartiles.of(t.item))].push_back(&t);
  }

  if (!all.empty()) {
    std::vector<double> scores;
    for (const auto& m : models) scores.push_back(subset_rmse(m, all));
    ens.global_best = argmin(scores);
  }

  auto pick = [&](const std::vector<const RatingTriple*>& subset, std::string_view who,
                  std::size_t q) {
    if (subset.empty()) {
      if (models.size() > 1) {
        ens.warnings.push_back(fmt::format(
            "farp: no validation ratings for {} quartile Q{}; using the globally best model",
            who, q + 1));
        spdlog::warn(ens.warnings.back());
      }
      return ens.global_best;
    }
    std::vector<double> scores;
    for (const auto& m : models) scores.push_back(subset_rmse(m, subset));
    return argmin(scores);
  };
  for (std::size_t q = 0; q < kQuartiles; ++q) {
    ens.user_slot[q] = pick(by_user[q], "user", q);
    ens.item_slot[q] = pick(by_item[q], "item", q);
  }
  ens.models = std::move(models);
  return ens;
}

FarpEnsemble farp_fit(const RatingDataset& train, const RatingDataset& val,
                      const std::vector<TrainConfig>& candidates,
                      const FrequencyTable& freq, const QuartileMap& quartiles,
                      std::size_t workers) {
  if (candidates.empty()) throw InvalidArgument("farp: at least one candidate configuration");
  std::vector<LatentModel> models(candidates.size());
  parallel_for(candidates.size(), workers, [&](std::size_t k, std::size_t) {
    models[k] = train_mf(train, val, candidates[k]);
  });
  return farp_select(std::move(models), val, freq, quartiles);
}

double farp_predict(const FarpEnsemble& ens, UserIdx u, ItemIdx i) {
  const auto fu = ens.frequencies.user_count(u);
  const auto fi = ens.frequencies.item_count(i);
  const auto& model = fi < fu ? ens.item_model(ens.quartiles.of(i))
                              : ens.user_model(ens.quartiles.of(u));
  return predict_mf(model, u, i);
}

Predictor make_predictor(const LatentModel& model, const FrequencyTable& freq) {
  return [&model, &freq](UserIdx u, ItemIdx i) { return predict(model, u, i, freq); };
}

Predictor make_predictor(const FarpEnsemble& ens) {
  return [&ens](UserIdx u, ItemIdx i) { return farp_predict(ens, u, i); };
}

}  // namespace tailmc
