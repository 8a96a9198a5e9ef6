#pragma once

#include <filesystem>
#include <iosfwd>

#include "tailmc/models.hpp"

namespace tailmc {

// Text container:
//
//   tailmc-model 1
//   kind <mf|tmf|tmf-dropout|ifwmf>
//   rank, reg, learn_rate, max_epochs, patience, seed   (one key per line)
//   steepness / midpoint       (truncated kinds only)
//   rho                        (ifwmf only)
//   cdf_epsilon, global_mean
//   users <n>
//   <seen> <v_1> ... <v_rank>  (n lines)
//   items <m>
//   <seen> <v_1> ... <v_rank>  (m lines)
//
// Reals use the shortest representation that round-trips, so a load
// reproduces every value exactly. The training trace is not stored.
void write_model(std::ostream& out, const LatentModel& model);
LatentModel read_model(std::istream& in);

void save_model(const std::filesystem::path& path, const LatentModel& model);
LatentModel load_model(const std::filesystem::path& path);

}  // namespace tailmc
