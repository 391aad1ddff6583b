#ifndef HOSL_CAMPAIGN_HPP
#define HOSL_CAMPAIGN_HPP

#include <string>
#include <vector>

#include "hosl/roles.hpp"

namespace hosl {

// Cartesian sweep over (mode, q, cut, seed). `cuts` means the cut layer for
// net tasks and the client block dimension for the quadratic task.
struct CampaignSpec {
  TrainingConfig base;
  std::vector<Mode> modes;
  std::vector<std::size_t> q_values;
  std::vector<std::size_t> cuts;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "campaign_out";
  std::size_t jobs = 1;
  // Campaign outputs are byte-reproducible; timing columns are zeroed
  // unless explicitly requested.
  bool with_timing = false;
};

struct CampaignCell {
  Mode mode;
  std::size_t q;
  std::size_t cut;
  std::uint64_t seed;
  std::string log_path;
  bool ok = false;
  std::string error;
  TrainLog log;
};

struct CampaignResult {
  std::vector<CampaignCell> cells;
  std::string summary_path;
  std::size_t failures = 0;
};

// Deterministic enumeration order: modes x q_values x cuts x seeds. One
// TrainLog CSV per cell plus summary.csv; a failing cell is recorded and the
// campaign continues.
CampaignResult run_campaign(const CampaignSpec& spec);

}  // namespace hosl

#endif  // HOSL_CAMPAIGN_HPP
