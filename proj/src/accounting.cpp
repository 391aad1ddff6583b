#include "hosl/accounting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "hosl/common.hpp"
#include "hosl/protocol.hpp"

namespace hosl {

std::vector<std::string> ModelSpec::warnings() const {
  std::vector<std::string> w;
  if (heads != 0 && head_dim * heads != hidden) {
    w.push_back("head_dim * heads != hidden (d_h != H/A)");
  }
  if (ffn_dim != 4 * hidden) {
    w.push_back("ffn_dim != 4 * hidden (d_ff != 4H)");
  }
  if (client_layers + server_layers != layers) {
    w.push_back("client_layers + server_layers != layers");
  }
  return w;
}

ModelSpec ModelSpec::opt125m_defaults() {
  ModelSpec s;
  s.batch = 64;
  s.seq_len = 64;
  s.hidden = 768;
  s.layers = 12;
  s.client_layers = 5;
  s.server_layers = 7;
  s.heads = 12;
  s.head_dim = 64;
  s.ffn_dim = 3072;
  s.vocab = 50272;
  s.max_positions = 2048;
  s.bytes_per_element = 4;
  s.lora_rank = 8;
  s.lora_alpha = 16;
  return s;
}

std::uint64_t MemoryBreakdown::total_bytes() const {
  std::uint64_t t = 0;
  for (const auto& c : components) t += c.bytes;
  return t;
}

const MemoryComponent& MemoryBreakdown::component(
    const std::string& name) const {
  for (const auto& c : components) {
    if (c.name == name) return c;
  }
  throw ConfigError("no memory component named " + name);
}

std::uint64_t per_layer_params(const ModelSpec& s) {
  return 4 * s.hidden * s.hidden + 2 * s.hidden * s.ffn_dim + s.ffn_dim +
         9 * s.hidden;
}

namespace {

MemoryComponent elems(const std::string& name, std::uint64_t n,
                      std::uint64_t beta) {
  return {name, n, n * beta};
}

}  // namespace

MemoryBreakdown client_memory_zo(const ModelSpec& s,
                                 std::uint64_t cuda_overhead_mib) {
  const std::uint64_t beta = s.bytes_per_element;
  MemoryBreakdown b;
  // Token embeddings, learned positions (two offset slots), layer stacks.
  const std::uint64_t params = s.vocab * s.hidden +
                               (s.max_positions + 2) * s.hidden +
                               s.client_layers * per_layer_params(s);
  b.components.push_back(elems("params", params, beta));
  // ZO estimates gradients from loss differences; nothing is stored.
  b.components.push_back(elems("grads", 0, beta));
  b.components.push_back(
      elems("masks", s.client_layers * s.max_positions * s.max_positions,
            beta));
  b.components.push_back(elems(
      "kv_cache",
      s.client_layers * 2 * s.batch * s.heads * s.seq_len * s.head_dim, beta));
  b.components.push_back(elems("activations", 0, beta));
  b.components.push_back(
      elems("transient",
            2 * s.batch * s.seq_len * s.hidden +
                s.batch * s.seq_len * s.ffn_dim,
            beta));
  b.components.push_back(
      elems("comm_buffer", s.batch * s.seq_len * s.hidden, beta));
  b.components.push_back(
      {"cuda_overhead", 0, cuda_overhead_mib * 1024 * 1024});
  return b;
}

MemoryBreakdown server_memory_fo(const ModelSpec& s,
                                 std::uint64_t cuda_overhead_mib) {
  const std::uint64_t beta = s.bytes_per_element;
  MemoryBreakdown b;
  // LM head weights, layer stacks, final LayerNorm.
  const std::uint64_t params = s.vocab * s.hidden +
                               s.server_layers * per_layer_params(s) +
                               2 * s.hidden;
  b.components.push_back(elems("params", params, beta));
  b.components.push_back(elems("grads", params, beta));
  b.components.push_back(
      elems("masks", s.server_layers * s.max_positions * s.max_positions,
            beta));
  // Stored per layer for backprop: inputs and QKV projections, attention
  // scores and softmax outputs, FFN intermediates.
  const std::uint64_t act_per_layer =
      6 * s.batch * s.seq_len * s.hidden +
      2 * s.batch * s.heads * s.seq_len * s.seq_len +
      s.batch * s.seq_len * s.ffn_dim;
  b.components.push_back(
      elems("activations", s.server_layers * act_per_layer, beta));
  // Logits, shifted copies, softmax probabilities and their gradients.
  const std::uint64_t seq_minus_1 = s.seq_len > 0 ? s.seq_len - 1 : 0;
  const std::uint64_t logits = s.batch * s.seq_len * s.vocab +
                               3 * s.batch * seq_minus_1 * s.vocab;
  b.components.push_back(elems("logits_peak", logits, beta));
  b.components.push_back(
      elems("transient",
            2 * s.batch * s.seq_len * s.hidden +
                s.batch * s.seq_len * s.ffn_dim,
            beta));
  b.components.push_back(
      {"cuda_overhead", 0, cuda_overhead_mib * 1024 * 1024});
  if (logits != 0 && logits != kPublishedLogitsElements &&
      s.batch == 64 && s.seq_len == 64 && s.vocab == 50272) {
    std::ostringstream note;
    note << "logits_peak: formula B*S*V + 3*B*(S-1)*V gives " << logits
         << " elements; published breakdowns for this configuration list "
         << kPublishedLogitsElements << " (0.099% apart)";
    b.notes.push_back(note.str());
  }
  return b;
}

void CommLedger::begin_round() { rounds_.emplace_back(); }

void CommLedger::record_frame(Direction dir,
                              std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderBytes) {
    throw FramingError("ledger: frame shorter than a header");
  }
  const std::uint8_t tag = frame[5];
  if (tag > 3) throw ProtocolError("ledger: unknown tag");
  auto add = [&](DirectionStats& st) {
    st.bytes += frame.size();
    st.frames += 1;
    st.frames_by_tag[tag] += 1;
    st.bytes_by_tag[tag] += frame.size();
  };
  if (dir == Direction::kClientToServer) {
    add(total_to_server_);
    if (!rounds_.empty()) add(rounds_.back().to_server);
  } else {
    add(total_to_client_);
    if (!rounds_.empty()) add(rounds_.back().to_client);
  }
}

BoundResult convergence_bound(const TheoryParams& p, double f) {
  if (!(p.l_smooth > 0.0)) throw ConfigError("bound: L must be > 0");
  if (p.iters < 1 || p.q < 1 || p.client_dim < 1) {
    throw ConfigError("bound: T, Q, d_c must be >= 1");
  }
  if (!(p.lr > 0.0)) throw ConfigError("bound: lr must be > 0");
  if (p.sigma_c_sq < 0.0 || p.sigma_s_sq < 0.0 || p.lambda < 0.0) {
    throw ConfigError("bound: variances and lambda must be >= 0");
  }
  const double l = p.l_smooth;
  const double dc = static_cast<double>(p.client_dim);
  const double t = static_cast<double>(p.iters);
  const double q = static_cast<double>(p.q);
  BoundResult r;
  r.terms[0] = 4.0 * f / (p.lr * t);
  r.terms[1] = 2.0 * l * p.lr * p.sigma_s_sq;
  r.terms[2] = 4.0 * p.lr * l * dc * p.sigma_c_sq / q;
  r.terms[3] = l * l * p.lambda * p.lambda * dc * dc * dc / q;
  r.value = r.terms[0] + r.terms[1] + r.terms[2] + r.terms[3];
  r.lr_max = std::min(3.0 / (4.0 * l), q / (4.0 * l * dc));
  r.step_size_valid = p.lr <= r.lr_max;
  return r;
}

BoundReport bound_check(double mean_grad_norm_sq, double objective_decrease,
                        const TheoryParams& params) {
  const BoundResult res = convergence_bound(params, objective_decrease);
  BoundReport rep;
  rep.measured = mean_grad_norm_sq;
  rep.bound = res.value;
  rep.ratio = res.value != 0.0 ? mean_grad_norm_sq / res.value
                               : std::numeric_limits<double>::infinity();
  rep.violated = mean_grad_norm_sq > res.value;
  rep.step_size_valid = res.step_size_valid;
  return rep;
}

std::string format_memory_report(const ModelSpec& spec,
                                 const MemoryBreakdown& client,
                                 const MemoryBreakdown& server) {
  std::ostringstream out;
  char line[160];
  for (const auto& w : spec.warnings()) out << "warning: " << w << "\n";
  out << "per-layer parameter count: " << per_layer_params(spec) << "\n\n";
  auto table = [&](const char* title, const MemoryBreakdown& b) {
    out << title << "\n";
    std::snprintf(line, sizeof(line), "  %-14s %14s %16s %10s %10s\n",
                  "component", "elements", "bytes", "MiB", "MB");
    out << line;
    for (const auto& c : b.components) {
      std::snprintf(line, sizeof(line), "  %-14s %14llu %16llu %10.1f %10.1f\n",
                    c.name.c_str(),
                    static_cast<unsigned long long>(c.elements),
                    static_cast<unsigned long long>(c.bytes),
                    bytes_to_mib(c.bytes), bytes_to_mb(c.bytes));
      out << line;
    }
    const std::uint64_t total = b.total_bytes();
    std::snprintf(line, sizeof(line),
                  "  %-14s %14s %16llu %10.1f %10.1f  (~%.2f GB)\n", "total",
                  "", static_cast<unsigned long long>(total),
                  bytes_to_mib(total), bytes_to_mb(total),
                  bytes_to_mib(total) / 1000.0);
    out << line;
    for (const auto& n : b.notes) out << "  note: " << n << "\n";
    out << "\n";
  };
  table("client (ZO optimization)", client);
  table("server (FO optimization)", server);

  auto kv = [&](const char* side, const MemoryBreakdown& b) {
    for (const auto& c : b.components) {
      out << side << "." << c.name << ".elements=" << c.elements << "\n";
      out << side << "." << c.name << ".bytes=" << c.bytes << "\n";
    }
    out << side << ".total.bytes=" << b.total_bytes() << "\n";
    std::snprintf(line, sizeof(line), "%s.total.gb=%.4f\n", side,
                  bytes_to_mib(b.total_bytes()) / 1000.0);
    out << line;
  };
  out << "per_layer_params=" << per_layer_params(spec) << "\n";
  kv("client", client);
  kv("server", server);
  for (const auto& n : server.notes) out << "note=" << n << "\n";
  return out.str();
}

}  // namespace hosl
