#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "hosl/campaign.hpp"
#include "hosl/log.hpp"
#include "hosl/roles.hpp"

namespace {

using namespace hosl;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

Mode parse_mode(const std::string& s) {
  if (s == "zo-fo") return Mode::kZoFo;
  if (s == "zo-zo") return Mode::kZoZo;
  if (s == "fo-fo") return Mode::kFoFo;
  throw ConfigError("unknown mode '" + s + "'");
}

DatasetKind parse_dataset(const std::string& s) {
  if (s == "quadratic") return DatasetKind::kQuadratic;
  if (s == "linreg") return DatasetKind::kLinreg;
  if (s == "blobs") return DatasetKind::kBlobs;
  throw ConfigError("unknown dataset '" + s + "'");
}

// "12,10:tanh,1:id" -> input width 12, then dense layers 12->10 tanh and
// 10->1 identity.
std::vector<LayerSpec> parse_layers(const std::string& s) {
  std::vector<std::string> tokens;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) tokens.push_back(tok);
  if (tokens.size() < 2) {
    throw ConfigError("--layers needs an input width and at least one layer");
  }
  auto parse_width = [](const std::string& w) {
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("bad layer width '" + w + "'");
    return static_cast<std::size_t>(v);
  };
  std::vector<LayerSpec> layers;
  std::size_t in = parse_width(tokens[0]);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    std::string width = tokens[i];
    Activation act = Activation::kIdentity;
    const auto colon = width.find(':');
    if (colon != std::string::npos) {
      const std::string name = width.substr(colon + 1);
      width = width.substr(0, colon);
      if (name == "id" || name == "identity") {
        act = Activation::kIdentity;
      } else if (name == "tanh") {
        act = Activation::kTanh;
      } else if (name == "relu") {
        act = Activation::kRelu;
      } else {
        throw ConfigError("unknown activation '" + name + "'");
      }
    }
    const std::size_t out = parse_width(width);
    layers.push_back({in, out, act});
    in = out;
  }
  return layers;
}

struct TrainFlags {
  std::string mode = "zo-fo";
  std::string dataset = "quadratic";
  std::string layers;
  std::string transport = "inproc";
  std::string listen;
  std::string connect;
  std::string out_dir;
  std::size_t q = 10;
  double eps = 1e-3;
  double lr_client = 0.05;
  double lr_server = 0.05;
  std::size_t split_layer = 1;
  std::size_t dc = 0;
  std::uint64_t iters = 200;
  std::size_t batch = 16;
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 0;
  bool data_seed_set = false;
  std::size_t dim = 32;
  std::size_t samples = 128;
  double noise = 0.0;
  std::size_t classes = 2;
  bool with_timing = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--mode", f.mode, "zo-zo | fo-fo | zo-fo")
      ->check(CLI::IsMember({"zo-zo", "fo-fo", "zo-fo"}));
  cmd->add_option("--q", f.q, "perturbations per iteration");
  cmd->add_option("--eps", f.eps, "ZO perturbation scale");
  cmd->add_option("--lr-client", f.lr_client, "client step size");
  cmd->add_option("--lr-server", f.lr_server, "server step size");
  cmd->add_option("--split-layer", f.split_layer, "cut layer for net models");
  cmd->add_option("--layers", f.layers,
                  "net shape, e.g. 12,10:tanh,1:id (input width first)");
  cmd->add_option("--iters", f.iters, "training iterations T");
  cmd->add_option("--batch", f.batch, "minibatch size");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--data-seed", f.data_seed, "dataset seed (default: master)")
      ->each([&f](const std::string&) { f.data_seed_set = true; });
  cmd->add_option("--dataset", f.dataset, "quadratic | linreg | blobs")
      ->check(CLI::IsMember({"quadratic", "linreg", "blobs"}));
  cmd->add_option("--dim", f.dim, "dataset dimension");
  cmd->add_option("--samples", f.samples, "dataset size");
  cmd->add_option("--noise", f.noise, "dataset noise level");
  cmd->add_option("--classes", f.classes, "blobs class count");
  cmd->add_option("--dc", f.dc,
                  "client block dim for the quadratic task (default dim/4)");
  cmd->add_option("--transport", f.transport, "inproc | tcp")
      ->check(CLI::IsMember({"inproc", "tcp"}));
  cmd->add_option("--listen", f.listen, "host:port (server endpoint only)");
  cmd->add_option("--connect", f.connect, "host:port (client endpoint only)");
  cmd->add_option("--out", f.out_dir, "output directory for CSV logs");
  cmd->add_flag("--with-timing", f.with_timing,
                "keep wall-clock column in CSV output");
}

TrainingConfig to_config(const TrainFlags& f) {
  TrainingConfig cfg;
  cfg.mode = parse_mode(f.mode);
  cfg.q = f.q;
  cfg.eps = f.eps;
  cfg.lr_client = f.lr_client;
  cfg.lr_server = f.lr_server;
  cfg.iters = f.iters;
  cfg.batch_size = f.batch;
  cfg.master_seed = f.seed;
  cfg.dataset.kind = parse_dataset(f.dataset);
  cfg.dataset.dims = f.dim;
  cfg.dataset.samples = f.samples;
  cfg.dataset.noise = f.noise;
  cfg.dataset.classes = f.classes;
  cfg.dataset.seed = f.data_seed_set ? f.data_seed : f.seed;
  cfg.transport =
      f.transport == "tcp" ? TransportKind::kTcp : TransportKind::kInproc;
  if (cfg.dataset.kind == DatasetKind::kQuadratic) {
    cfg.model.quad_client_dim =
        f.dc > 0 ? f.dc : std::max<std::size_t>(1, f.dim / 4);
  } else {
    if (f.layers.empty()) {
      throw ConfigError("--layers is required for linreg/blobs datasets");
    }
    cfg.model.layers = parse_layers(f.layers);
    cfg.model.cut = f.split_layer;
  }
  if (cfg.mode == Mode::kFoFo && f.q != 10) {
    log_info("q is inert in fo-fo mode");
  }
  return cfg;
}

void print_summary(const TrainLog& log) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "iters=%zu initial_loss=%.6g final_loss=%.6g F=%.6g "
                "mean_grad_norm_sq=%.6g",
                log.records.size(), log.initial_loss, log.final_loss,
                log.objective_decrease, log.mean_grad_norm_sq);
  std::cout << buf << "\n";
  const auto& c2s = log.ledger.total(Direction::kClientToServer);
  const auto& s2c = log.ledger.total(Direction::kServerToClient);
  std::snprintf(buf, sizeof(buf),
                "client->server: %llu bytes in %llu frames; "
                "server->client: %llu bytes in %llu frames",
                static_cast<unsigned long long>(c2s.bytes),
                static_cast<unsigned long long>(c2s.frames),
                static_cast<unsigned long long>(s2c.bytes),
                static_cast<unsigned long long>(s2c.frames));
  std::cout << buf << "\n";
}

int cmd_train(const TrainFlags& f) {
  TrainingConfig cfg = to_config(f);
  if (!f.listen.empty() && !f.connect.empty()) {
    throw ConfigError("--listen and --connect are mutually exclusive");
  }
  if ((!f.listen.empty() || !f.connect.empty()) && f.transport != "tcp") {
    throw ConfigError("--listen/--connect require --transport tcp");
  }
  if (!f.listen.empty()) {
    cfg.transport = TransportKind::kTcp;
    log_info("serving on " + f.listen);
    run_server_standalone(cfg, parse_host_port(f.listen));
    log_info("peer finished, shutting down");
    return kExitOk;
  }
  TrainLog log;
  if (!f.connect.empty()) {
    cfg.transport = TransportKind::kTcp;
    log = run_client_standalone(cfg, parse_host_port(f.connect));
  } else {
    log = run_training(cfg);
  }
  print_summary(log);
  if (!f.out_dir.empty()) {
    std::filesystem::create_directories(f.out_dir);
    const std::string path = f.out_dir + "/train_log.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    write_train_log_csv(log, out, f.with_timing);
    std::cout << "log: " << path << "\n";
  }
  return kExitOk;
}

struct CampaignFlags {
  TrainFlags base;
  std::string modes = "zo-fo,zo-zo,fo-fo";
  std::string q_list;
  std::string cut_list;
  std::string seed_list = "1";
  std::size_t jobs = 1;
};

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& csv, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(parse(tok));
  }
  if (out.empty()) throw ConfigError("empty list '" + csv + "'");
  return out;
}

int cmd_campaign(const CampaignFlags& f) {
  CampaignSpec spec;
  spec.base = to_config(f.base);
  spec.modes = parse_list<Mode>(f.modes, parse_mode);
  spec.q_values = f.q_list.empty()
                      ? std::vector<std::size_t>{f.base.q}
                      : parse_list<std::size_t>(f.q_list, [](const auto& s) {
                          return static_cast<std::size_t>(std::stoull(s));
                        });
  const std::size_t default_cut =
      spec.base.dataset.kind == DatasetKind::kQuadratic
          ? spec.base.model.quad_client_dim
          : spec.base.model.cut;
  spec.cuts = f.cut_list.empty()
                  ? std::vector<std::size_t>{default_cut}
                  : parse_list<std::size_t>(f.cut_list, [](const auto& s) {
                      return static_cast<std::size_t>(std::stoull(s));
                    });
  spec.seeds =
      parse_list<std::uint64_t>(f.seed_list, [](const auto& s) {
        return static_cast<std::uint64_t>(std::stoull(s));
      });
  spec.out_dir = f.base.out_dir.empty() ? "campaign_out" : f.base.out_dir;
  spec.jobs = f.jobs;
  spec.with_timing = f.base.with_timing;
  const CampaignResult res = run_campaign(spec);
  std::cout << "cells=" << res.cells.size() << " failures=" << res.failures
            << " summary=" << res.summary_path << "\n";
  return res.failures == 0 ? kExitOk : kExitRuntime;
}

struct MemFlags {
  std::string spec_file;
  ModelSpec spec = ModelSpec::opt125m_defaults();
  std::uint64_t cuda_client_mib = 600;
  std::uint64_t cuda_server_mib = 500;
};

ModelSpec load_spec_file(const std::string& path, ModelSpec base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read spec file " + path);
  std::map<std::string, std::uint64_t*> fields{
      {"B", &base.batch},          {"S", &base.seq_len},
      {"H", &base.hidden},         {"L", &base.layers},
      {"Lc", &base.client_layers}, {"Ls", &base.server_layers},
      {"A", &base.heads},          {"dh", &base.head_dim},
      {"dff", &base.ffn_dim},      {"V", &base.vocab},
      {"M", &base.max_positions},  {"beta", &base.bytes_per_element},
      {"r", &base.lora_rank},      {"alpha", &base.lora_alpha}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const auto it = fields.find(key);
    if (it == fields.end()) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
    *it->second = std::stoull(line.substr(eq + 1));
  }
  return base;
}

int cmd_memreport(const MemFlags& f) {
  ModelSpec spec = f.spec;
  if (!f.spec_file.empty()) spec = load_spec_file(f.spec_file, spec);
  const MemoryBreakdown client = client_memory_zo(spec, f.cuda_client_mib);
  const MemoryBreakdown server = server_memory_fo(spec, f.cuda_server_mib);
  std::cout << format_memory_report(spec, client, server);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid-order split learning testbed"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "run one training session");
  add_train_flags(train, train_flags);

  CampaignFlags camp_flags;
  CLI::App* campaign =
      app.add_subcommand("campaign", "sweep (mode, q, cut, seed) cells");
  add_train_flags(campaign, camp_flags.base);
  campaign->add_option("--modes", camp_flags.modes, "comma-separated modes");
  campaign->add_option("--q-list", camp_flags.q_list, "comma-separated Q");
  campaign->add_option("--cut-list", camp_flags.cut_list,
                       "comma-separated cuts (k or quadratic dc)");
  campaign->add_option("--seeds", camp_flags.seed_list,
                       "comma-separated master seeds");
  campaign->add_option("--jobs", camp_flags.jobs, "parallel cells");

  MemFlags mem_flags;
  CLI::App* mem = app.add_subcommand(
      "memreport", "split-training memory model for transformer shapes");
  mem->add_option("--spec-file", mem_flags.spec_file,
                  "key=value file: B,S,H,L,Lc,Ls,A,dh,dff,V,M,beta,r,alpha");
  mem->add_option("--B", mem_flags.spec.batch, "batch size");
  mem->add_option("--S", mem_flags.spec.seq_len, "sequence length");
  mem->add_option("--H", mem_flags.spec.hidden, "hidden dim");
  mem->add_option("--L", mem_flags.spec.layers, "total layers");
  mem->add_option("--Lc", mem_flags.spec.client_layers, "client layers");
  mem->add_option("--Ls", mem_flags.spec.server_layers, "server layers");
  mem->add_option("--A", mem_flags.spec.heads, "attention heads");
  mem->add_option("--dh", mem_flags.spec.head_dim, "head dim");
  mem->add_option("--dff", mem_flags.spec.ffn_dim, "FFN dim");
  mem->add_option("--V", mem_flags.spec.vocab, "vocabulary size");
  mem->add_option("--M", mem_flags.spec.max_positions, "max positions");
  mem->add_option("--beta", mem_flags.spec.bytes_per_element,
                  "bytes per element");
  mem->add_option("--cuda-client-mib", mem_flags.cuda_client_mib,
                  "client runtime-overhead constant (MiB)");
  mem->add_option("--cuda-server-mib", mem_flags.cuda_server_mib,
                  "server runtime-overhead constant (MiB)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_flags);
    if (campaign->parsed()) return cmd_campaign(camp_flags);
    if (mem->parsed()) return cmd_memreport(mem_flags);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
