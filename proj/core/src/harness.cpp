#include "tailmc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "tailmc/error.hpp"
#include "tailmc/parallel.hpp"

namespace tailmc {

using nlohmann::json;

namespace {

constexpr std::uint64_t kMaskSalt = 0x6A09E667F3BCC909ULL;
constexpr std::uint64_t kDropoutSalt = 0xBB67AE8584CAA73BULL;

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::MF: return "mf";
    case Method::TMF: return "tmf";
    case Method::TMFDropout: return "tmf-dropout";
    case Method::IFWMF: return "ifwmf";
    case Method::FARP: return "farp";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::MF, Method::TMF, Method::TMFDropout, Method::IFWMF, Method::FARP}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::Uniform: return "uniform";
    case MaskKind::Skewed: return "skewed";
    case MaskKind::Dense: return "dense";
    case MaskKind::Pattern: return "pattern";
  }
  return "?";
}

MaskKind parse_mask_kind(std::string_view name) {
  for (auto k : {MaskKind::Uniform, MaskKind::Skewed, MaskKind::Dense, MaskKind::Pattern}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown mask '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  if (n == 0 || m == 0) throw InvalidArgument("synthetic: n and m must be positive");
  if (rank == 0 || rank > std::min(n, m)) {
    throw InvalidArgument("synthetic: rank must be in [1, min(n, m)]");
  }
  if (mask == MaskKind::Uniform && !(density > 0.0 && density <= 1.0)) {
    throw InvalidArgument("synthetic: density must be in (0, 1]");
  }
  if (mask == MaskKind::Pattern && !pattern) {
    throw InvalidArgument("synthetic: pattern mask needs a pattern file");
  }
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.factors = generate_lowrank(spec.n, spec.m, spec.rank, spec.seed);
  out.full = dense_product(out.factors.users, out.factors.items);
  const auto& full = out.full;
  const auto mask_seed = spec.seed ^ kMaskSalt;
  switch (spec.mask) {
    case MaskKind::Uniform:
      out.ratings = apply_mask(full, spec.density, mask_seed);
      break;
    case MaskKind::Dense:
      out.ratings = apply_mask(full, dense_pattern(spec.n, spec.m));
      break;
    case MaskKind::Skewed:
      out.ratings = apply_mask(full, skewed_subsample(dense_pattern(spec.n, spec.m), mask_seed));
      break;
    case MaskKind::Pattern:
      out.ratings = apply_mask(full, load_ratings(*spec.pattern));
      break;
  }
  return out;
}

HyperGrid HyperGrid::defaults() {
  HyperGrid g;
  g.reg = {0.001, 0.01, 0.1, 1.0, 10.0};
  g.rank = {1, 5, 10, 15, 25, 50, 75, 100};
  g.rho = {1.0, 10.0, 50.0};
  g.steepness = {1.0, 5.0, 10.0, 20.0, 40.0};
  g.midpoint = {-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75};
  return g;
}

void HyperGrid::validate() const {
  if (reg.empty() || rank.empty() || rho.empty() || steepness.empty() || midpoint.empty()) {
    throw InvalidArgument("grid: every axis needs at least one value");
  }
  for (double v : reg) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("grid: reg must be >= 0");
  }
  for (auto r : rank) {
    if (r == 0) throw InvalidArgument("grid: rank must be >= 1");
  }
  for (double v : rho) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("grid: rho must be >= 0");
  }
  for (double k : steepness) {
    for (double z : midpoint) TruncationConfig{k, z}.validate();
  }
}

void ExperimentConfig::validate() const {
  if (dataset && synthetic) throw InvalidArgument("config: give either dataset or synthetic, not both");
  if (synthetic) synthetic->validate();
  grid.validate();
  if (repeats == 0) throw InvalidArgument("config: repeats must be >= 1");
  if (!(val_frac > 0.0) || !(test_frac > 0.0) || !(val_frac + test_frac < 1.0)) {
    throw InvalidArgument("config: need val_frac > 0, test_frac > 0, val_frac + test_frac < 1");
  }
  if (!(cdf_epsilon > 0.0 && cdf_epsilon < 1.0)) {
    throw InvalidArgument("config: cdf_epsilon must be in (0, 1)");
  }
  if (eval.buckets == 0) throw InvalidArgument("config: buckets must be >= 1");
  if (study.ranks.empty() || study.seeds == 0) {
    throw InvalidArgument("config: study needs ranks and at least one seed");
  }
  TrainConfig probe = training;
  probe.rank = 1;
  probe.reg = 0.0;
  probe.validate();
}

// ---------------------------------------------------------------- config

namespace {

void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw InvalidArgument("config: '" + std::string(where) + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw InvalidArgument("config: unknown key '" + std::string(where) + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

ExperimentConfig from_json(const json& doc) {
  check_keys(doc, "", {"dataset", "synthetic", "method", "grid", "training", "split", "repeats",
                       "seed", "workers", "eval", "out", "study"});
  ExperimentConfig cfg;
  if (doc.contains("dataset") && !doc["dataset"].is_null()) {
    cfg.dataset = doc["dataset"].get<std::string>();
  }
  if (doc.contains("synthetic") && !doc["synthetic"].is_null()) {
    const auto& s = doc["synthetic"];
    check_keys(s, "synthetic", {"n", "m", "rank", "seed", "mask", "density", "pattern"});
    SyntheticSpec spec;
    read(s, "n", spec.n);
    read(s, "m", spec.m);
    read(s, "rank", spec.rank);
    read(s, "seed", spec.seed);
    std::string mask = std::string(to_string(spec.mask));
    read(s, "mask", mask);
    spec.mask = parse_mask_kind(mask);
    read(s, "density", spec.density);
    if (s.contains("pattern")) spec.pattern = s["pattern"].get<std::string>();
    cfg.synthetic = spec;
  }
  if (doc.contains("method")) cfg.method = parse_method(doc["method"].get<std::string>());
  if (doc.contains("grid")) {
    const auto& g = doc["grid"];
    check_keys(g, "grid", {"reg", "rank", "rho", "steepness", "midpoint"});
    read(g, "reg", cfg.grid.reg);
    read(g, "rank", cfg.grid.rank);
    read(g, "rho", cfg.grid.rho);
    read(g, "steepness", cfg.grid.steepness);
    read(g, "midpoint", cfg.grid.midpoint);
  }
  if (doc.contains("training")) {
    const auto& t = doc["training"];
    check_keys(t, "training", {"learn_rate", "max_epochs", "patience", "cdf_epsilon"});
    read(t, "learn_rate", cfg.training.learn_rate);
    read(t, "max_epochs", cfg.training.max_epochs);
    read(t, "patience", cfg.training.patience);
    read(t, "cdf_epsilon", cfg.cdf_epsilon);
  }
  if (doc.contains("split")) {
    const auto& s = doc["split"];
    check_keys(s, "split", {"val_frac", "test_frac"});
    read(s, "val_frac", cfg.val_frac);
    read(s, "test_frac", cfg.test_frac);
  }
  read(doc, "repeats", cfg.repeats);
  read(doc, "seed", cfg.seed);
  read(doc, "workers", cfg.workers);
  if (doc.contains("eval")) {
    const auto& e = doc["eval"];
    check_keys(e, "eval", {"buckets", "mae_threshold"});
    read(e, "buckets", cfg.eval.buckets);
    read(e, "mae_threshold", cfg.eval.mae_threshold);
  }
  if (doc.contains("out")) cfg.out = doc["out"].get<std::string>();
  if (doc.contains("study")) {
    const auto& s = doc["study"];
    check_keys(s, "study", {"ranks", "seeds", "model_rank", "reg", "truth_eval"});
    read(s, "ranks", cfg.study.ranks);
    read(s, "seeds", cfg.study.seeds);
    read(s, "model_rank", cfg.study.model_rank);
    read(s, "reg", cfg.study.reg);
    read(s, "truth_eval", cfg.study.truth_eval);
  }
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg = from_json(doc);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["dataset"] = cfg.dataset ? json(cfg.dataset->string()) : json(nullptr);
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    doc["synthetic"] = {{"n", s.n}, {"m", s.m}, {"rank", s.rank}, {"seed", s.seed},
                        {"mask", std::string(to_string(s.mask))}, {"density", s.density}};
    if (s.pattern) doc["synthetic"]["pattern"] = s.pattern->string();
  } else {
    doc["synthetic"] = nullptr;
  }
  doc["method"] = std::string(to_string(cfg.method));
  doc["grid"] = {{"reg", cfg.grid.reg}, {"rank", cfg.grid.rank}, {"rho", cfg.grid.rho},
                 {"steepness", cfg.grid.steepness}, {"midpoint", cfg.grid.midpoint}};
  doc["training"] = {{"learn_rate", cfg.training.learn_rate},
                     {"max_epochs", cfg.training.max_epochs},
                     {"patience", cfg.training.patience},
                     {"cdf_epsilon", cfg.cdf_epsilon}};
  doc["split"] = {{"val_frac", cfg.val_frac}, {"test_frac", cfg.test_frac}};
  doc["repeats"] = cfg.repeats;
  doc["seed"] = cfg.seed;
  doc["workers"] = cfg.workers;
  doc["eval"] = {{"buckets", cfg.eval.buckets}, {"mae_threshold", cfg.eval.mae_threshold}};
  doc["out"] = cfg.out.string();
  doc["study"] = {{"ranks", cfg.study.ranks}, {"seeds", cfg.study.seeds},
                  {"model_rank", cfg.study.model_rank}, {"reg", cfg.study.reg},
                  {"truth_eval", cfg.study.truth_eval}};
  return doc.dump(2);
}

RatingDataset load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.dataset) return load_ratings(*cfg.dataset);
  if (cfg.synthetic) return make_synthetic(*cfg.synthetic).ratings;
  throw InvalidArgument("config: no dataset or synthetic section");
}

// ---------------------------------------------------------------- grid

std::vector<GridCell> grid_cells(const HyperGrid& grid, Method method) {
  grid.validate();
  const bool truncated = method == Method::TMF || method == Method::TMFDropout;
  const bool weighted = method == Method::IFWMF;
  std::vector<GridCell> cells;
  for (double reg : grid.reg) {
    for (auto rank : grid.rank) {
      if (weighted) {
        for (double rho : grid.rho) cells.push_back({reg, rank, rho, std::nullopt});
      } else if (truncated) {
        for (double k : grid.steepness) {
          for (double z : grid.midpoint) {
            cells.push_back({reg, rank, std::nullopt, TruncationConfig{k, z}});
          }
        }
      } else {
        cells.push_back({reg, rank, std::nullopt, std::nullopt});
      }
    }
  }
  return cells;
}

Predictor TrainedMethod::predictor() const {
  if (farp) return make_predictor(*farp);
  if (model) return make_predictor(*model, frequencies);
  throw InvalidArgument("predictor: no trained model");
}

namespace {

LatentModel train_one(Method method, const RatingDataset& train, const RatingDataset& val,
                      const TrainConfig& hyper, const GridCell& cell, double cdf_epsilon,
                      const FrequencyTable& freq) {
  TrainConfig cfg = hyper;
  cfg.rank = cell.rank;
  cfg.reg = cell.reg;
  switch (method) {
    case Method::MF:
    case Method::FARP:
      return train_mf(train, val, cfg);
    case Method::TMF:
      return train_tmf(train, val, cfg, cell.trunc.value(), freq);
    case Method::TMFDropout: {
      SeededStream stream(cfg.seed ^ kDropoutSalt);
      return train_tmf_dropout(train, val, cfg, cell.trunc.value(), freq, stream, cdf_epsilon);
    }
    case Method::IFWMF:
      return train_ifwmf(train, val, cfg, cell.rho.value(), freq);
  }
  throw InvalidArgument("unknown method");
}

double validation_rmse(const Predictor& predictor, const RatingDataset& val) {
  std::vector<PredictionPair> pairs;
  pairs.reserve(val.size());
  for (const auto& t : val.triples()) pairs.push_back({predictor(t.user, t.item), t.rating});
  return rmse(pairs);
}

}  // namespace

TrainedMethod train_method(Method method, const RatingDataset& train, const RatingDataset& val,
                           const TrainConfig& hyper, const GridCell& cell, double cdf_epsilon) {
  if (method == Method::FARP) throw InvalidArgument("train: farp is built by grid search");
  TrainedMethod out;
  out.method = method;
  out.frequencies = compute_frequencies(train);
  out.model = train_one(method, train, val, hyper, cell, cdf_epsilon, out.frequencies);
  return out;
}

GridResult grid_search(const ExperimentConfig& cfg, const RatingDataset& train,
                       const RatingDataset& val, std::uint64_t seed) {
  if (train.empty()) throw InvalidArgument("grid: empty training split");
  if (val.empty()) throw InvalidArgument("grid: empty validation split");
  const auto cells = grid_cells(cfg.grid, cfg.method);
  const auto freq = compute_frequencies(train);
  TrainConfig hyper = cfg.training;
  hyper.seed = seed;

  std::vector<std::optional<LatentModel>> models(cells.size());
  GridResult result;
  result.cells.resize(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t k, std::size_t) {
    auto& score = result.cells[k];
    score.cell = cells[k];
    try {
      auto model = train_one(cfg.method, train, val, hyper, cells[k], cfg.cdf_epsilon, freq);
      score.val_rmse = validation_rmse(make_predictor(model, freq), val);
      models[k] = std::move(model);
    } catch (const DivergenceError& e) {
      score.error = e.what();
    }
  });

  std::optional<std::size_t> winner;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& s = result.cells[k];
    if (!s.val_rmse) {
      spdlog::warn("grid: cell {} failed: {}", k, s.error);
      continue;
    }
    if (!winner || *s.val_rmse < *result.cells[*winner].val_rmse) winner = k;
  }
  if (!winner) throw Error("grid_failed", "grid: every cell failed");
  result.winner = *winner;
  result.best_val_rmse = *result.cells[*winner].val_rmse;
  result.best.method = cfg.method;
  result.best.frequencies = freq;

  if (cfg.method != Method::FARP) {
    result.best.model = std::move(models[*winner]);
    return result;
  }

  // Pool: every trained rank at the winning reg, in grid order.
  const double best_reg = cells[*winner].reg;
  std::vector<LatentModel> pool;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (cells[k].reg != best_reg || !models[k]) continue;
    result.farp_pool.push_back(cells[k].rank);
    pool.push_back(std::move(*models[k]));
  }
  result.best.farp = farp_select(std::move(pool), val, freq, assign_quartiles(freq));
  result.best_val_rmse = validation_rmse(make_predictor(*result.best.farp), val);
  return result;
}

// ---------------------------------------------------------------- experiments

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RatingDataset& data) {
  cfg.validate();
  ExperimentResult result;
  std::vector<EvalReport> reports;
  for (std::size_t k = 0; k < cfg.repeats; ++k) {
    RepeatResult rep;
    rep.seed = cfg.seed + k;
    auto parts = split(data, cfg.val_frac, cfg.test_frac, rep.seed);
    rep.grid = grid_search(cfg, parts.train, parts.validation, rep.seed);
    const auto quartiles = assign_quartiles(rep.grid.best.frequencies);
    rep.report = evaluate(rep.grid.best.predictor(), parts.test, quartiles,
                          rep.grid.best.frequencies, cfg.eval);
    rep.test = std::move(parts.test);
    reports.push_back(rep.report);
    result.repeats.push_back(std::move(rep));
  }
  result.mean = mean_report(reports);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, load_experiment_data(cfg));
}

StudyResult run_synthetic_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const SyntheticSpec base = cfg.synthetic.value_or(SyntheticSpec{});
  StudyResult result;
  result.ranks = cfg.study.ranks;
  const std::size_t per_rank = cfg.study.seeds;
  result.runs.resize(result.ranks.size() * per_rank);

  parallel_for(result.runs.size(), cfg.workers, [&](std::size_t k, std::size_t) {
    auto& run = result.runs[k];
    run.rank = result.ranks[k / per_rank];
    run.seed = cfg.seed + k % per_rank;
    run.model_rank = cfg.study.model_rank == 0 ? run.rank : cfg.study.model_rank;
    SyntheticSpec spec = base;
    spec.rank = run.rank;
    spec.seed = run.seed;
    const auto data = make_synthetic(spec);
    const auto parts = split(data.ratings, cfg.val_frac, cfg.test_frac, run.seed);
    TrainConfig hyper = cfg.training;
    hyper.rank = run.model_rank;
    hyper.reg = cfg.study.reg;
    hyper.seed = run.seed;
    const auto model = train_mf(parts.train, parts.validation, hyper);
    const auto freq = compute_frequencies(parts.train);
    const auto scored = cfg.study.truth_eval ? unobserved_entries(data.full, parts.train) : parts.test;
    run.report = evaluate(make_predictor(model, freq), scored, assign_quartiles(freq), freq, cfg.eval);
  });

  for (std::size_t r = 0; r < result.ranks.size(); ++r) {
    std::vector<EvalReport> reports;
    for (std::size_t s = 0; s < per_rank; ++s) reports.push_back(result.runs[r * per_rank + s].report);
    result.mean_by_rank.push_back(mean_report(reports));
  }
  return result;
}

// ---------------------------------------------------------------- output

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string opt(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

void quartile_rows(std::ostream& out, std::string_view prefix, const QuartileCells& cells) {
  for (std::size_t q = 0; q < kQuartiles; ++q) {
    out << prefix << "_Q" << q + 1 << ',';
    if (cells[q]) {
      out << cells[q]->count << ',' << format_real(cells[q]->rmse);
    } else {
      out << "0,";
    }
    out << '\n';
  }
}

json cells_json(const QuartileCells& cells) {
  json out = json::object();
  for (std::size_t q = 0; q < kQuartiles; ++q) {
    const std::string key = "Q" + std::to_string(q + 1);
    out[key] = cells[q] ? json(cells[q]->rmse) : json(nullptr);
  }
  return out;
}

json report_json(const EvalReport& r) {
  return {{"overall_rmse", r.overall_rmse},
          {"n_test", r.n_test},
          {"user", cells_json(r.user_quartiles)},
          {"item", cells_json(r.item_quartiles)},
          {"mae_accurate_count", r.mae_accurate_count}};
}

json cell_json(const GridCell& c) {
  json out = {{"reg", c.reg}, {"rank", c.rank}};
  if (c.rho) out["rho"] = *c.rho;
  if (c.trunc) {
    out["steepness"] = c.trunc->steepness;
    out["midpoint"] = c.trunc->midpoint;
  }
  return out;
}

}  // namespace

void write_quartile_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto out = open_out(path);
  out << "cell,count,rmse\n";
  quartile_rows(out, "item", report.item_quartiles);
  quartile_rows(out, "user", report.user_quartiles);
}

void write_bucket_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto out = open_out(path);
  out << "bucket,mean_freq,rmse\n";
  for (const auto& b : report.buckets) {
    out << b.bucket + 1 << ',' << format_real(b.mean_freq) << ',' << opt(b.rmse) << '\n';
  }
}

void write_mae_csv(const std::filesystem::path& path, const EvalReport& report,
                   const RatingDataset& names) {
  auto out = open_out(path);
  out << "item,freq,accurate_count\n";
  for (const auto& a : report.item_accuracy) {
    out << names.item_name(a.item) << ',' << a.freq << ',' << a.accurate_count << '\n';
  }
}

void write_grid_csv(const std::filesystem::path& path, const GridResult& grid) {
  auto out = open_out(path);
  out << "reg,rank,rho,steepness,midpoint,val_rmse,status\n";
  for (std::size_t k = 0; k < grid.cells.size(); ++k) {
    const auto& s = grid.cells[k];
    out << format_real(s.cell.reg) << ',' << s.cell.rank << ','
        << (s.cell.rho ? format_real(*s.cell.rho) : "") << ','
        << (s.cell.trunc ? format_real(s.cell.trunc->steepness) : "") << ','
        << (s.cell.trunc ? format_real(s.cell.trunc->midpoint) : "") << ','
        << opt(s.val_rmse) << ','
        << (!s.val_rmse ? "failed" : k == grid.winner ? "winner" : "ok") << '\n';
  }
}

Manifest::Manifest(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path Manifest::add(const std::string& name, std::optional<std::uint64_t> seed) {
  entries_.emplace_back(name, seed);
  return dir_ / name;
}

void Manifest::write(std::string_view command) const {
  json artifacts = json::array();
  for (const auto& [name, seed] : entries_) {
    artifacts.push_back({{"file", name}, {"seed", seed ? json(*seed) : json(nullptr)}});
  }
  json doc = {{"command", std::string(command)}, {"artifacts", artifacts}};
  auto out = open_out(dir_ / "manifest.json");
  out << doc.dump(2) << '\n';
}

void write_experiment(const ExperimentResult& result, const ExperimentConfig& cfg,
                      Manifest& manifest) {
  json repeats = json::array();
  for (std::size_t k = 0; k < result.repeats.size(); ++k) {
    const auto& rep = result.repeats[k];
    const std::string tag = "repeat" + std::to_string(k + 1);
    write_grid_csv(manifest.add(tag + "_grid.csv", rep.seed), rep.grid);
    write_quartile_csv(manifest.add(tag + "_quartiles.csv", rep.seed), rep.report);
    write_bucket_csv(manifest.add(tag + "_buckets.csv", rep.seed), rep.report);
    write_mae_csv(manifest.add(tag + "_mae.csv", rep.seed), rep.report, rep.test);
    json entry = report_json(rep.report);
    entry["seed"] = rep.seed;
    entry["winner"] = cell_json(rep.grid.cells[rep.grid.winner].cell);
    entry["val_rmse"] = rep.grid.best_val_rmse;
    if (!rep.grid.farp_pool.empty()) {
      const auto& ens = *rep.grid.best.farp;
      json slots = json::object();
      for (std::size_t q = 0; q < kQuartiles; ++q) {
        const std::string key = "Q" + std::to_string(q + 1);
        slots["user"][key] = ens.models[ens.user_slot[q]].rank();
        slots["item"][key] = ens.models[ens.item_slot[q]].rank();
      }
      entry["farp_ranks"] = slots;
    }
    repeats.push_back(entry);
  }
  write_quartile_csv(manifest.add("mean_quartiles.csv", cfg.seed), result.mean);
  write_bucket_csv(manifest.add("mean_buckets.csv", cfg.seed), result.mean);

  json summary = {{"method", std::string(to_string(cfg.method))},
                  {"repeats", repeats},
                  {"mean", report_json(result.mean)}};
  auto out = open_out(manifest.add("summary.json", cfg.seed));
  out << summary.dump(2) << '\n';
}

void write_study(const StudyResult& result, Manifest& manifest) {
  const auto first_seed = result.runs.empty() ? std::optional<std::uint64_t>{} : result.runs.front().seed;
  const std::size_t per_rank = result.ranks.empty() ? 0 : result.runs.size() / result.ranks.size();
  auto buckets = open_out(manifest.add("study_buckets.csv", first_seed));
  auto quarts = open_out(manifest.add("study_quartiles.csv", first_seed));
  buckets << "rank,model_rank,seed,bucket,mean_freq,rmse\n";
  quarts << "rank,model_rank,seed,cell,count,rmse\n";

  auto emit = [&](const StudyRun& run, const std::string& seed, const EvalReport& r) {
    const std::string key = std::to_string(run.rank) + ',' + std::to_string(run.model_rank) + ',' + seed + ',';
    for (const auto& b : r.buckets) {
      buckets << key << b.bucket + 1 << ',' << format_real(b.mean_freq) << ',' << opt(b.rmse) << '\n';
    }
    std::ostringstream cells;
    quartile_rows(cells, "item", r.item_quartiles);
    quartile_rows(cells, "user", r.user_quartiles);
    std::istringstream lines(cells.str());
    for (std::string line; std::getline(lines, line);) quarts << key << line << '\n';
  };
  for (std::size_t r = 0; r < result.ranks.size(); ++r) {
    for (std::size_t s = 0; s < per_rank; ++s) {
      const auto& run = result.runs[r * per_rank + s];
      emit(run, std::to_string(run.seed), run.report);
    }
    emit(result.runs[r * per_rank], "mean", result.mean_by_rank[r]);
  }
}

}  // namespace tailmc
