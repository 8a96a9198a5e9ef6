#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "tailmc/error.hpp"
#include "tailmc/model_io.hpp"
#include "tailmc/models.hpp"
#include "tailmc/numeric.hpp"

using namespace tailmc;

namespace {

LatentModel random_model(ModelKind kind, std::uint64_t seed) {
  SeededStream s(seed);
  DenseFactor p(7, 3), q(5, 3);
  for (auto& v : p.values()) v = s.uniform(-1, 1) * std::pow(10.0, s.uniform(-8, 8));
  for (auto& v : q.values()) v = s.uniform(-1, 1) / 3.0;
  auto m = LatentModel::from_factors(p, q);
  m.kind = kind;
  m.hyper.reg = 0.1 / 3.0;
  m.hyper.learn_rate = 0.007;
  m.hyper.max_epochs = 123;
  m.hyper.patience = 9;
  m.hyper.seed = 0xFFFFFFFFFFFFFFFFULL;
  m.global_mean = 1.0 / 7.0;
  m.user_seen[2] = 0;
  if (kind == ModelKind::TMF || kind == ModelKind::TMFDropout) m.trunc = TruncationConfig{20.0, -0.25};
  if (kind == ModelKind::TMFDropout) m.cdf_epsilon = 1e-9;
  if (kind == ModelKind::IFWMF) m.rho = 50.0;
  return m;
}

}  // namespace

TEST(ModelIo, RoundTripIsExactForEveryKind) {
  for (auto kind : {ModelKind::MF, ModelKind::TMF, ModelKind::TMFDropout, ModelKind::IFWMF}) {
    const auto m = random_model(kind, 3 + static_cast<int>(kind));
    std::stringstream buf;
    write_model(buf, m);
    const auto back = read_model(buf);
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.hyper, m.hyper);
    EXPECT_EQ(back.trunc, m.trunc);
    EXPECT_EQ(back.rho, m.rho);
    EXPECT_EQ(back.cdf_epsilon, m.cdf_epsilon);
    EXPECT_EQ(back.global_mean, m.global_mean);
    EXPECT_EQ(back.users, m.users);
    EXPECT_EQ(back.items, m.items);
    EXPECT_EQ(back.user_seen, m.user_seen);
    EXPECT_EQ(back.item_seen, m.item_seen);
  }
}

TEST(ModelIo, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "tailmc_test_model.txt";
  const auto m = random_model(ModelKind::IFWMF, 11);
  save_model(path, m);
  const auto back = load_model(path);
  EXPECT_EQ(back.users, m.users);
  std::filesystem::remove(path);
}

TEST(ModelIo, RejectsBadInput) {
  std::stringstream bad_header("some-model 1\n");
  EXPECT_THROW(read_model(bad_header), ParseError);
  std::stringstream bad_version("tailmc-model 7\n");
  EXPECT_THROW(read_model(bad_version), ParseError);

  std::stringstream buf;
  write_model(buf, random_model(ModelKind::MF, 5));
  const auto text = buf.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(read_model(truncated), ParseError);

  EXPECT_THROW(load_model("/nonexistent/dir/model.txt"), IoError);
}
