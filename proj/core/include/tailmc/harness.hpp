#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tailmc/data.hpp"
#include "tailmc/eval.hpp"
#include "tailmc/models.hpp"
#include "tailmc/synthgen.hpp"

namespace tailmc {

enum class Method : std::uint8_t { MF, TMF, TMFDropout, IFWMF, FARP };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

enum class MaskKind : std::uint8_t { Uniform, Skewed, Dense, Pattern };

std::string_view to_string(MaskKind kind);
MaskKind parse_mask_kind(std::string_view name);

struct SyntheticSpec {
  std::size_t n = 300;
  std::size_t m = 200;
  std::size_t rank = 5;
  std::uint64_t seed = 1;
  MaskKind mask = MaskKind::Skewed;
  double density = 0.4;                       // uniform mask only
  std::optional<std::filesystem::path> pattern;  // pattern mask only

  void validate() const;
};

struct SyntheticData {
  LowRankFactors factors;
  FullMatrix full;
  RatingDataset ratings;
};

// Generates the factors and projects their product onto the mask. The mask
// stream is salted so it does not reuse the factor draws.
SyntheticData make_synthetic(const SyntheticSpec& spec);

struct HyperGrid {
  std::vector<double> reg;
  std::vector<std::size_t> rank;
  std::vector<double> rho;
  std::vector<double> steepness;
  std::vector<double> midpoint;

  // reg {0.001, 0.01, 0.1, 1, 10}, rank {1, 5, 10, 15, 25, 50, 75, 100},
  // rho {1, 10, 50}, steepness {1, 5, 10, 20, 40},
  // midpoint {-0.75, -0.5, -0.25, 0, 0.25, 0.5, 0.75}.
  static HyperGrid defaults();
  void validate() const;
  friend bool operator==(const HyperGrid&, const HyperGrid&) = default;
};

struct StudyConfig {
  std::vector<std::size_t> ranks{5, 20};  // ranks of the generated matrices
  std::size_t seeds = 5;
  std::size_t model_rank = 0;             // 0: train at the generating rank
  double reg = 0.01;
  // Score every entry outside the training split against the generated
  // matrix instead of the test split alone.
  bool truth_eval = true;
};

struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset;
  std::optional<SyntheticSpec> synthetic;
  Method method = Method::MF;
  HyperGrid grid = HyperGrid::defaults();
  TrainConfig training;  // rank, reg and seed are overwritten per cell
  double cdf_epsilon = kDefaultCdfEpsilon;
  double val_frac = 0.2;
  double test_frac = 0.2;
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  EvalOptions eval;
  std::filesystem::path out = "out";
  StudyConfig study;

  void validate() const;
};

// JSON document; every key is optional and unknown keys are rejected.
//
//   {"dataset": "ratings.csv",
//    "synthetic": {"n", "m", "rank", "seed", "mask", "density", "pattern"},
//    "method": "mf|tmf|tmf-dropout|ifwmf|farp",
//    "grid": {"reg", "rank", "rho", "steepness", "midpoint"},
//    "training": {"learn_rate", "max_epochs", "patience", "cdf_epsilon"},
//    "split": {"val_frac", "test_frac"},
//    "repeats", "seed", "workers",
//    "eval": {"buckets", "mae_threshold"},
//    "out": "dir",
//    "study": {"ranks", "seeds", "model_rank", "reg", "truth_eval"}}
ExperimentConfig parse_config(std::string_view json);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

// Loads cfg.dataset, or generates cfg.synthetic.
RatingDataset load_experiment_data(const ExperimentConfig& cfg);

struct GridCell {
  double reg = 0.0;
  std::size_t rank = 0;
  std::optional<double> rho;
  std::optional<TruncationConfig> trunc;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

// Cells in lexicographic (reg, rank, rho, steepness, midpoint) order over the
// axes the method uses. FARP searches the MF cells.
std::vector<GridCell> grid_cells(const HyperGrid& grid, Method method);

struct CellScore {
  GridCell cell;
  std::optional<double> val_rmse;  // absent when training failed
  std::string error;
  friend bool operator==(const CellScore&, const CellScore&) = default;
};

// A trained model of any method, with the frequencies its predictor needs.
struct TrainedMethod {
  Method method = Method::MF;
  std::optional<LatentModel> model;
  std::optional<FarpEnsemble> farp;
  FrequencyTable frequencies;

  // References *this; keep it alive while predicting.
  Predictor predictor() const;
};

struct GridResult {
  std::vector<CellScore> cells;
  std::size_t winner = 0;
  double best_val_rmse = 0.0;
  TrainedMethod best;
  // FARP: the rank pool the ensemble was selected from.
  std::vector<std::size_t> farp_pool;
};

// Trains one model per cell (concurrently up to cfg.workers) and keeps the
// lowest validation RMSE, ties to the earliest cell. Diverged cells are
// recorded and skipped; an all-failed grid throws. For FARP the MF cells are
// searched first and the ensemble is selected from the rank grid at the best
// reg.
GridResult grid_search(const ExperimentConfig& cfg, const RatingDataset& train,
                       const RatingDataset& val, std::uint64_t seed);

// Trains one method at fixed hyperparameters.
TrainedMethod train_method(Method method, const RatingDataset& train, const RatingDataset& val,
                           const TrainConfig& hyper, const GridCell& cell, double cdf_epsilon);

struct RepeatResult {
  std::uint64_t seed = 0;
  GridResult grid;
  EvalReport report;
  RatingDataset test;
};

struct ExperimentResult {
  std::vector<RepeatResult> repeats;
  EvalReport mean;
};

// Repeat k splits with seed cfg.seed + k, grid-searches on train/val and
// evaluates the winner on test.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RatingDataset& data);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct StudyRun {
  std::size_t rank = 0;      // generating rank
  std::size_t model_rank = 0;
  std::uint64_t seed = 0;
  EvalReport report;
};

struct StudyResult {
  std::vector<StudyRun> runs;             // rank-major, then seed
  std::vector<std::size_t> ranks;
  std::vector<EvalReport> mean_by_rank;   // parallel to ranks
};

// For each rank and seed (cfg.seed + k): generate, mask, split, train MF at a
// fixed reg, evaluate on the unobserved entries or the test split.
StudyResult run_synthetic_study(const ExperimentConfig& cfg);

// Output files. Reals use the shortest round-trip form, so identical inputs
// give byte-identical files.
std::string format_real(double value);
void write_quartile_csv(const std::filesystem::path& path, const EvalReport& report);
void write_bucket_csv(const std::filesystem::path& path, const EvalReport& report);
void write_mae_csv(const std::filesystem::path& path, const EvalReport& report,
                   const RatingDataset& names);
void write_grid_csv(const std::filesystem::path& path, const GridResult& grid);

// Artifacts produced under one output directory, with the seed behind each.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  // Path of `name` inside the directory, recorded with `seed`.
  std::filesystem::path add(const std::string& name, std::optional<std::uint64_t> seed);
  void write(std::string_view command) const;

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::optional<std::uint64_t>>> entries_;
};

void write_experiment(const ExperimentResult& result, const ExperimentConfig& cfg,
                      Manifest& manifest);
void write_study(const StudyResult& result, Manifest& manifest);

}  // namespace tailmc
