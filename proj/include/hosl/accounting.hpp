#ifndef HOSL_ACCOUNTING_HPP
#define HOSL_ACCOUNTING_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hosl {

// Transformer training-shape parameters driving the memory calculator.
// The calculator only counts; no transformer code runs anywhere in the repo.
struct ModelSpec {
  std::uint64_t batch = 0;          // B
  std::uint64_t seq_len = 0;        // S
  std::uint64_t hidden = 0;         // H
  std::uint64_t layers = 0;         // L
  std::uint64_t client_layers = 0;  // L_c
  std::uint64_t server_layers = 0;  // L_s
  std::uint64_t heads = 0;          // A
  std::uint64_t head_dim = 0;       // d_h, conventionally H/A
  std::uint64_t ffn_dim = 0;        // d_ff, conventionally 4H
  std::uint64_t vocab = 0;          // V
  std::uint64_t max_positions = 0;  // M
  std::uint64_t bytes_per_element = 4;  // beta (FP32 accounting)
  std::uint64_t lora_rank = 8;          // r, documentation only
  std::uint64_t lora_alpha = 16;        // alpha, documentation only

  // Convention violations are warnings, never failures.
  std::vector<std::string> warnings() const;

  // Documented defaults: OPT-125M shapes with B = S = 64.
  static ModelSpec opt125m_defaults();
};

struct MemoryComponent {
  std::string name;
  std::uint64_t elements = 0;  // 0 for byte-denominated constants
  std::uint64_t bytes = 0;
};

struct MemoryBreakdown {
  std::vector<MemoryComponent> components;
  std::vector<std::string> notes;

  std::uint64_t total_bytes() const;
  const MemoryComponent& component(const std::string& name) const;
};

// 4H^2 + 2H*d_ff + d_ff + 9H: attention projections, FFN, LayerNorms.
std::uint64_t per_layer_params(const ModelSpec& spec);

// Peak-memory model of a ZO client: parameters, causal masks, KV cache,
// transient buffers and the outbound activation buffer; no gradients and no
// stored activations. cuda_overhead_mib is a documented constant standing in
// for runtime overhead (a range of roughly 400-800 MiB in practice).
MemoryBreakdown client_memory_zo(const ModelSpec& spec,
                                 std::uint64_t cuda_overhead_mib = 600);

// Peak-memory model of an FO server: parameters plus same-sized gradients,
// masks, stored activations for backprop, the vocabulary-scale logits peak,
// and transient buffers.
MemoryBreakdown server_memory_fo(const ModelSpec& spec,
                                 std::uint64_t cuda_overhead_mib = 500);

// Known published element count for the logits peak at the default
// configuration; the formula gives 814,004,224, 0.099% above this figure.
inline constexpr std::uint64_t kPublishedLogitsElements = 813'197'824ULL;

inline double bytes_to_mib(std::uint64_t b) {
  return static_cast<double>(b) / (1024.0 * 1024.0);
}
inline double bytes_to_mb(std::uint64_t b) {
  return static_cast<double>(b) / 1e6;
}

// Byte ledger over the two wire directions, updated once per frame actually
// sent. Tag indices match the protocol variant tags.
enum class Direction { kClientToServer, kServerToClient };

struct DirectionStats {
  std::uint64_t bytes = 0;
  std::uint64_t frames = 0;
  std::array<std::uint64_t, 4> frames_by_tag{};
  std::array<std::uint64_t, 4> bytes_by_tag{};
};

struct RoundStats {
  DirectionStats to_server;
  DirectionStats to_client;
};

class CommLedger {
 public:
  void begin_round();
  void record_frame(Direction dir, std::span<const std::uint8_t> frame);

  const DirectionStats& total(Direction dir) const {
    return dir == Direction::kClientToServer ? total_to_server_
                                             : total_to_client_;
  }
  const std::vector<RoundStats>& rounds() const { return rounds_; }

 private:
  DirectionStats total_to_server_;
  DirectionStats total_to_client_;
  std::vector<RoundStats> rounds_;
};

// Constants of the convergence analysis for one training setup.
struct TheoryParams {
  double l_smooth = 0.0;    // L
  double sigma_c_sq = 0.0;  // client stochastic-gradient variance bound
  double sigma_s_sq = 0.0;  // server stochastic-gradient variance bound
  std::uint64_t client_dim = 0;  // d_c
  std::uint64_t iters = 0;       // T
  std::uint64_t q = 0;           // perturbation count
  double lr = 0.0;               // unified step size eta
  double lambda = 0.0;           // ZO smoothing scale
};

struct BoundResult {
  double value = 0.0;
  // 4F/(eta T), 2 L eta sigma_s^2, 4 eta L d_c sigma_c^2 / Q,
  // L^2 lambda^2 d_c^3 / Q
  std::array<double, 4> terms{};
  double lr_max = 0.0;  // min(3/(4L), Q/(4 L d_c))
  bool step_size_valid = false;
};

// Stationarity bound for a run with objective decrease F.
BoundResult convergence_bound(const TheoryParams& params, double f);

struct BoundReport {
  double measured = 0.0;  // (1/T) sum_t ||grad L(theta_t)||^2
  double bound = 0.0;
  double ratio = 0.0;  // measured / bound
  bool violated = false;
  bool step_size_valid = false;
};

BoundReport bound_check(double mean_grad_norm_sq, double objective_decrease,
                        const TheoryParams& params);

// Aligned-text + key=value report used by the memreport subcommand.
std::string format_memory_report(const ModelSpec& spec,
                                 const MemoryBreakdown& client,
                                 const MemoryBreakdown& server);

}  // namespace hosl

#endif  // HOSL_ACCOUNTING_HPP
