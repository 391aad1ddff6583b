#include "hosl/campaign.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "hosl/log.hpp"

namespace hosl {

namespace {

TrainingConfig cell_config(const CampaignSpec& spec, const CampaignCell& c) {
  TrainingConfig cfg = spec.base;
  cfg.mode = c.mode;
  cfg.q = c.q;
  cfg.master_seed = c.seed;
  if (cfg.dataset.kind == DatasetKind::kQuadratic) {
    cfg.model.quad_client_dim = c.cut;
  } else {
    cfg.model.cut = c.cut;
  }
  return cfg;
}

std::string cell_name(const CampaignCell& c) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "train_%s_q%zu_k%zu_seed%llu",
                mode_name(c.mode), c.q, c.cut,
                static_cast<unsigned long long>(c.seed));
  return buf;
}

// Bound column only where the theorem's quantities are all known: zo-fo on
// the full-batch quadratic with a unified step size (sigma = 0 there).
std::string bound_column(const TrainingConfig& cfg, const TrainLog& log) {
  if (cfg.mode != Mode::kZoFo ||
      cfg.dataset.kind != DatasetKind::kQuadratic ||
      cfg.batch_size < cfg.dataset.samples ||
      cfg.lr_client != cfg.lr_server) {
    return "";
  }
  const Dataset ds = generate_dataset(cfg.dataset);
  TheoryParams p;
  p.l_smooth = quadratic_smoothness(ds);
  p.sigma_c_sq = 0.0;
  p.sigma_s_sq = 0.0;
  p.client_dim = cfg.model.quad_client_dim;
  p.iters = cfg.iters;
  p.q = cfg.q;
  p.lr = cfg.lr_client;
  p.lambda = cfg.eps;
  const BoundResult r = convergence_bound(p, log.objective_decrease);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", r.value);
  return buf;
}

}  // namespace

CampaignResult run_campaign(const CampaignSpec& spec) {
  if (spec.modes.empty() || spec.q_values.empty() || spec.cuts.empty() ||
      spec.seeds.empty()) {
    throw ConfigError("campaign sweep axes must be non-empty");
  }
  std::filesystem::create_directories(spec.out_dir);

  CampaignResult result;
  for (Mode mode : spec.modes) {
    for (std::size_t q : spec.q_values) {
      for (std::size_t cut : spec.cuts) {
        for (std::uint64_t seed : spec.seeds) {
          CampaignCell c;
          c.mode = mode;
          c.q = q;
          c.cut = cut;
          c.seed = seed;
          c.log_path = spec.out_dir + "/" + cell_name(c) + ".csv";
          result.cells.push_back(std::move(c));
        }
      }
    }
  }

  const std::size_t jobs = std::max<std::size_t>(1, spec.jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= result.cells.size()) return;
      CampaignCell& c = result.cells[i];
      try {
        const TrainingConfig cfg = cell_config(spec, c);
        c.log = run_training(cfg);
        std::ofstream out(c.log_path, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + c.log_path);
        write_train_log_csv(c.log, out, spec.with_timing);
        c.ok = true;
        log_debug("campaign cell done: " + c.log_path);
      } catch (const std::exception& e) {
        c.ok = false;
        c.error = e.what();
        log_info("campaign cell failed: " + cell_name(c) + ": " + c.error);
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  result.summary_path = spec.out_dir + "/summary.csv";
  std::ofstream sum(result.summary_path, std::ios::binary);
  if (!sum) throw ConfigError("cannot write " + result.summary_path);
  sum << "mode,q,k,seed,status,final_loss,final_stationarity,"
         "client_to_server_bytes,server_to_client_bytes,bound\n";
  char buf[256];
  for (const CampaignCell& c : result.cells) {
    if (!c.ok) {
      ++result.failures;
      std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%llu,failed,,,,,\n",
                    mode_name(c.mode), c.q, c.cut,
                    static_cast<unsigned long long>(c.seed));
      sum << buf;
      continue;
    }
    const TrainingConfig cfg = cell_config(spec, c);
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%llu,ok,%.17g,%.17g,%llu,%llu,",
                  mode_name(c.mode), c.q, c.cut,
                  static_cast<unsigned long long>(c.seed), c.log.final_loss,
                  c.log.mean_grad_norm_sq,
                  static_cast<unsigned long long>(
                      c.log.ledger.total(Direction::kClientToServer).bytes),
                  static_cast<unsigned long long>(
                      c.log.ledger.total(Direction::kServerToClient).bytes));
    sum << buf << bound_column(cfg, c.log) << "\n";
  }
  return result;
}

}  // namespace hosl
