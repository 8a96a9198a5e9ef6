#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "tailmc/data.hpp"
#include "tailmc/error.hpp"
#include "tailmc/harness.hpp"
#include "tailmc/model_io.hpp"
#include "tailmc/models.hpp"
#include "tailmc/synthgen.hpp"

namespace fs = std::filesystem;
using namespace tailmc;

namespace {

// Flags shared by the pipeline subcommands; each overrides its config key.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> repeats;
  std::optional<std::string> dataset;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--method", c.method, "mf, tmf, tmf-dropout, ifwmf or farp");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--workers", c.workers, "concurrent training jobs");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.method) cfg.method = parse_method(*c.method);
  if (c.out) cfg.out = *c.out;
  if (c.workers) cfg.workers = *c.workers;
  if (c.repeats) cfg.repeats = *c.repeats;
  if (c.dataset) {
    cfg.dataset = *c.dataset;
    cfg.synthetic.reset();
  }
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

int cmd_generate(const SyntheticSpec& spec, const std::string& out_dir) {
  Manifest manifest(out_dir);
  const auto data = make_synthetic(spec);
  write_ratings(manifest.add("ratings.csv", spec.seed), data.ratings);
  std::string meta;
  meta += "n=" + std::to_string(spec.n) + "\n";
  meta += "m=" + std::to_string(spec.m) + "\n";
  meta += "r=" + std::to_string(spec.rank) + "\n";
  meta += "seed=" + std::to_string(spec.seed) + "\n";
  meta += "alpha=" + format_real(data.factors.alpha) + "\n";
  meta += "mask=" + std::string(to_string(spec.mask)) + "\n";
  if (spec.mask == MaskKind::Uniform) meta += "density=" + format_real(spec.density) + "\n";
  meta += "ratings=" + std::to_string(data.ratings.size()) + "\n";
  write_text(manifest.add("ratings.meta", spec.seed), meta);
  manifest.write("generate");
  std::cout << data.ratings.size() << " ratings written to " << (manifest.dir() / "ratings.csv").string() << "\n";
  return 0;
}

int cmd_subsample(const std::string& input, std::uint64_t seed, const std::string& out_dir) {
  Manifest manifest(out_dir);
  const auto ds = skewed_subsample(load_ratings(input), seed);
  write_ratings(manifest.add(fs::path(input).stem().string() + ".skewed.csv", seed), ds);
  manifest.write("subsample");
  std::cout << ds.size() << " ratings kept\n";
  return 0;
}

int cmd_split(const std::string& input, double val_frac, double test_frac, std::uint64_t seed,
              const std::string& out_dir) {
  Manifest manifest(out_dir);
  const auto parts = split(load_ratings(input), val_frac, test_frac, seed);
  const auto stem = fs::path(input).stem().string();
  write_ratings(manifest.add(stem + ".train", seed), parts.train);
  write_ratings(manifest.add(stem + ".val", seed), parts.validation);
  write_ratings(manifest.add(stem + ".test", seed), parts.test);
  manifest.write("split");
  std::cout << parts.train.size() << " train, " << parts.validation.size() << " validation, "
            << parts.test.size() << " test\n";
  return 0;
}

// Train and validation files are read together so both use one index table.
std::pair<RatingDataset, RatingDataset> load_pair(const std::string& train_path,
                                                  const std::string& val_path) {
  const auto train = load_ratings(train_path);
  if (val_path.empty()) return {train, train.with_triples({})};
  const auto val_raw = load_ratings(val_path);
  DatasetBuilder builder;
  for (const auto& t : train.triples()) builder.add(train.user_name(t.user), train.item_name(t.item), t.rating);
  for (const auto& t : val_raw.triples()) {
    builder.add(val_raw.user_name(t.user), val_raw.item_name(t.item), t.rating);
  }
  const auto joint = std::move(builder).build();
  const auto& all = joint.triples();
  std::vector<RatingTriple> a(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train.size()));
  std::vector<RatingTriple> b(all.begin() + static_cast<std::ptrdiff_t>(train.size()), all.end());
  return {joint.with_triples(std::move(a)), joint.with_triples(std::move(b))};
}

struct TrainFlags {
  std::string train;
  std::string val;
  std::size_t rank = 10;
  double reg = 0.01;
  double rho = 10.0;
  double steepness = 10.0;
  double midpoint = 0.0;
  std::optional<double> learn_rate;
  std::optional<std::size_t> max_epochs;
  std::optional<std::size_t> patience;
};

int cmd_train(const Common& common, const TrainFlags& f) {
  const auto cfg = resolve(common);
  if (cfg.method == Method::FARP) throw InvalidArgument("train: farp ensembles are built by 'grid'");
  auto [train, val] = load_pair(f.train, f.val);
  TrainConfig hyper = cfg.training;
  if (f.learn_rate) hyper.learn_rate = *f.learn_rate;
  if (f.max_epochs) hyper.max_epochs = *f.max_epochs;
  if (f.patience) hyper.patience = *f.patience;
  hyper.seed = cfg.seed;
  GridCell cell{f.reg, f.rank, std::nullopt, std::nullopt};
  if (cfg.method == Method::IFWMF) cell.rho = f.rho;
  if (cfg.method == Method::TMF || cfg.method == Method::TMFDropout) {
    cell.trunc = TruncationConfig{f.steepness, f.midpoint};
  }
  const auto trained = train_method(cfg.method, train, val, hyper, cell, cfg.cdf_epsilon);

  Manifest manifest(cfg.out);
  save_model(manifest.add("model.txt", cfg.seed), *trained.model);
  {
    std::ofstream trace(manifest.add("trace.csv", cfg.seed), std::ios::binary);
    trace << "epoch,train_objective,val_rmse\n";
    for (const auto& e : trained.model->trace.epochs) {
      trace << e.epoch << ',' << format_real(e.train_objective) << ','
            << (e.val_rmse ? format_real(*e.val_rmse) : "") << '\n';
    }
  }
  manifest.write("train");
  std::cout << "best epoch " << trained.model->trace.best_epoch << "\n";
  return 0;
}

int cmd_grid(const Common& common, const std::string& train_path, const std::string& val_path) {
  const auto cfg = resolve(common);
  auto [train, val] = load_pair(train_path, val_path);
  const auto grid = grid_search(cfg, train, val, cfg.seed);
  Manifest manifest(cfg.out);
  write_grid_csv(manifest.add("grid.csv", cfg.seed), grid);
  if (grid.best.model) save_model(manifest.add("model.txt", cfg.seed), *grid.best.model);
  manifest.write("grid");
  std::cout << "winner cell " << grid.winner << " val_rmse " << format_real(grid.best_val_rmse) << "\n";
  return 0;
}

int cmd_experiment(const Common& common) {
  const auto cfg = resolve(common);
  const auto result = run_experiment(cfg);
  Manifest manifest(cfg.out);
  write_experiment(result, cfg, manifest);
  write_text(manifest.add("config.json", cfg.seed), config_to_json(cfg) + "\n");
  manifest.write("experiment");
  std::cout << "mean test rmse " << format_real(result.mean.overall_rmse) << "\n";
  return 0;
}

int cmd_study(const Common& common) {
  const auto cfg = resolve(common);
  const auto result = run_synthetic_study(cfg);
  Manifest manifest(cfg.out);
  write_study(result, manifest);
  write_text(manifest.add("config.json", cfg.seed), config_to_json(cfg) + "\n");
  manifest.write("study-synthetic");
  for (std::size_t r = 0; r < result.ranks.size(); ++r) {
    std::cout << "rank " << result.ranks[r] << " mean test rmse "
              << format_real(result.mean_by_rank[r].overall_rmse) << "\n";
  }
  return 0;
}

void report_failure(std::string_view kind, std::string_view message) {
  const nlohmann::json line = {{"error", kind}, {"message", message}};
  std::cerr << line.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailmc: frequency-adaptive matrix completion"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  SyntheticSpec gen;
  std::string gen_mask = "skewed";
  std::string gen_pattern;
  std::string gen_out = "out";
  auto* generate = app.add_subcommand("generate", "exact-rank synthetic ratings");
  generate->add_option("--n", gen.n, "users")->capture_default_str();
  generate->add_option("--m", gen.m, "items")->capture_default_str();
  generate->add_option("--rank", gen.rank, "rank")->capture_default_str();
  generate->add_option("--seed", gen.seed, "seed")->capture_default_str();
  generate->add_option("--mask", gen_mask, "uniform, skewed, dense or pattern")->capture_default_str();
  generate->add_option("--density", gen.density, "uniform mask density")->capture_default_str();
  generate->add_option("--pattern", gen_pattern, "ratings file whose positions form the mask");
  generate->add_option("--out", gen_out, "output directory")->capture_default_str();

  std::string sub_input;
  std::uint64_t sub_seed = 1;
  std::string sub_out = "out";
  auto* subsample = app.add_subcommand("subsample", "two-phase skewed down-sampling");
  subsample->add_option("--input", sub_input, "ratings file")->required()->check(CLI::ExistingFile);
  subsample->add_option("--seed", sub_seed, "seed")->capture_default_str();
  subsample->add_option("--out", sub_out, "output directory")->capture_default_str();

  std::string split_input;
  double val_frac = 0.2;
  double test_frac = 0.2;
  std::uint64_t split_seed = 1;
  std::string split_out = "out";
  auto* split_cmd = app.add_subcommand("split", "train/validation/test split");
  split_cmd->add_option("--input", split_input, "ratings file")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--val-frac", val_frac)->capture_default_str();
  split_cmd->add_option("--test-frac", test_frac)->capture_default_str();
  split_cmd->add_option("--seed", split_seed)->capture_default_str();
  split_cmd->add_option("--out", split_out, "output directory")->capture_default_str();

  Common train_common;
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "train one method at fixed hyperparameters");
  add_common(train, train_common);
  train->add_option("--train", tf.train, "training ratings")->required()->check(CLI::ExistingFile);
  train->add_option("--val", tf.val, "validation ratings (enables early stopping)")->check(CLI::ExistingFile);
  train->add_option("--rank", tf.rank)->capture_default_str();
  train->add_option("--reg", tf.reg)->capture_default_str();
  train->add_option("--rho", tf.rho)->capture_default_str();
  train->add_option("--steepness", tf.steepness)->capture_default_str();
  train->add_option("--midpoint", tf.midpoint)->capture_default_str();
  train->add_option("--learn-rate", tf.learn_rate);
  train->add_option("--max-epochs", tf.max_epochs);
  train->add_option("--patience", tf.patience);

  Common grid_common;
  std::string grid_train;
  std::string grid_val;
  auto* grid = app.add_subcommand("grid", "grid search on a train/validation pair");
  add_common(grid, grid_common);
  grid->add_option("--train", grid_train, "training ratings")->required()->check(CLI::ExistingFile);
  grid->add_option("--val", grid_val, "validation ratings")->required()->check(CLI::ExistingFile);

  Common exp_common;
  auto* experiment = app.add_subcommand("experiment", "repeated split, grid search and evaluation");
  add_common(experiment, exp_common);
  experiment->add_option("--dataset", exp_common.dataset, "ratings file (replaces the synthetic section)");
  experiment->add_option("--repeats", exp_common.repeats, "number of repeats");

  Common study_common;
  auto* study = app.add_subcommand("study-synthetic", "MF on synthetic matrices of several ranks");
  add_common(study, study_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) report_failure("usage", e.what());
    return app.exit(e);
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (*generate) {
      gen.mask = parse_mask_kind(gen_mask);
      if (!gen_pattern.empty()) gen.pattern = gen_pattern;
      return cmd_generate(gen, gen_out);
    }
    if (*subsample) return cmd_subsample(sub_input, sub_seed, sub_out);
    if (*split_cmd) return cmd_split(split_input, val_frac, test_frac, split_seed, split_out);
    if (*train) return cmd_train(train_common, tf);
    if (*grid) return cmd_grid(grid_common, grid_train, grid_val);
    if (*experiment) return cmd_experiment(exp_common);
    if (*study) return cmd_study(study_common);
  } catch (const Error& e) {
    report_failure(e.kind(), e.what());
    return 2;
  } catch (const std::exception& e) {
    report_failure("internal", e.what());
    return 3;
  }
  return 1;
}
