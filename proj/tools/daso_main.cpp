// Command-line front end: train / eval / recommend / synth subcommands over
// the daso library. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "daso/daso.hpp"

namespace fs = std::filesystem;
using Real = float;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string interactions;
  std::string social;
  std::string config_path;
  std::string out_dir = "daso_out";
  std::string checkpoint;
  double threshold = 1.0;
  bool directed_social = false;
  bool synthetic = false;
  bool baseline = false;
  std::string k_list = "3,5,10";
  daso::SyntheticConfig synth;
};

std::vector<int> parse_k_list(const std::string& s) {
  std::vector<int> ks = daso::cfg_detail::parse_int_list(s);
  if (ks.empty()) throw std::invalid_argument("--k: expected a comma-separated list");
  for (int k : ks) {
    if (k < 1) throw std::invalid_argument("--k: values must be >= 1");
  }
  return ks;
}

void write_history(const std::string& path, const daso::TrainHistory& h, int eval_k) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[256];
  out << "# epoch\td_loss_item\td_loss_social\tcycle_loss\tval_precision@" << eval_k << "\n";
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof(buf), "%d\t%.9e\t%.9e\t%.9e\t", e.epoch, e.disc_loss_item,
                  e.disc_loss_social, e.cycle_loss);
    out << buf;
    if (e.has_val) {
      std::snprintf(buf, sizeof(buf), "%.9e\n", e.val_precision);
      out << buf;
    } else {
      out << "na\n";
    }
  }
}

void write_baseline_history(const std::string& path,
                            const std::vector<daso::BaselineEpoch>& h, int eval_k) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[128];
  out << "# epoch\tloss\tval_precision@" << eval_k << "\n";
  for (const auto& e : h) {
    std::snprintf(buf, sizeof(buf), "%d\t%.9e\t", e.epoch, e.loss);
    out << buf;
    if (e.has_val) {
      std::snprintf(buf, sizeof(buf), "%.9e\n", e.val_precision);
      out << buf;
    } else {
      out << "na\n";
    }
  }
}

void write_report(const std::string& path, const daso::MetricReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << daso::format_report_text(rep);
  for (const auto& line : daso::format_report_records(rep)) out << line << "\n";
}

void print_report(const daso::MetricReport& rep) {
  std::cout << daso::format_report_text(rep);
  for (const auto& line : daso::format_report_records(rep)) std::cout << line << "\n";
}

/// Loads interactions + social graph, either from files or by generating the
/// planted-community fixture under `out` and reloading it from disk (so the
/// text formats stay the single source of truth).
daso::LoadedInteractions load_dataset(const CommonOpts& opts, std::uint64_t seed,
                                      daso::SocialGraph* social_out) {
  std::string ipath = opts.interactions;
  std::string spath = opts.social;
  if (opts.synthetic) {
    daso::SyntheticConfig scfg = opts.synth;
    scfg.seed = seed;
    const daso::SyntheticData data = daso::generate_synthetic(scfg);
    fs::create_directories(opts.out_dir);
    ipath = (fs::path(opts.out_dir) / "interactions.txt").string();
    spath = (fs::path(opts.out_dir) / "trust.txt").string();
    daso::write_interactions(ipath, data.interactions);
    daso::write_social(spath, data.social);
    std::ofstream comm(fs::path(opts.out_dir) / "communities.txt");
    for (std::size_t u = 0; u < data.community.size(); ++u) {
      comm << u << '\t' << data.community[u] << '\n';
    }
  }
  daso::LoadedInteractions loaded = daso::load_interactions(ipath, opts.threshold);
  if (!spath.empty()) {
    daso::SocialLoadStats stats;
    *social_out = daso::load_social(spath, loaded.users, &stats, !opts.directed_social);
    if (stats.dropped_unknown_user > 0) {
      std::cerr << "warning: dropped " << stats.dropped_unknown_user
                << " social lines with unknown users\n";
    }
    if (stats.dropped_self_loops > 0) {
      std::cerr << "warning: dropped " << stats.dropped_self_loops << " self-loops\n";
    }
  } else {
    std::cerr << "warning: no social file; training without social relations\n";
    social_out->num_users = loaded.set.num_users;
    social_out->edges.clear();
  }
  return loaded;
}

int cmd_train(const CommonOpts& opts, const daso::TrainConfig& cfg_in) {
  daso::TrainConfig cfg = cfg_in;
  daso::SocialGraph social;
  const daso::LoadedInteractions loaded = load_dataset(opts, cfg.hp.seed, &social);
  const daso::DatasetSplit data = daso::split(loaded.set, {0.8, 0.1, 0.1}, cfg.hp.seed);
  fs::create_directories(opts.out_dir);
  const std::vector<int> ks = parse_k_list(opts.k_list);

  std::cout << "dataset: " << loaded.set.num_users << " users, " << loaded.set.num_items
            << " items, " << loaded.set.pairs.size() << " interactions, "
            << social.edges.size() / 2 << " social relations\n";

  if (opts.baseline) {
    const auto result = daso::fit_baseline<Real>(cfg, data);
    const std::string ck = (fs::path(opts.out_dir) / "baseline.ckpt").string();
    daso::save_baseline_checkpoint(result.params, ck);
    write_baseline_history((fs::path(opts.out_dir) / "history.tsv").string(), result.history,
                           cfg.eval_k);
    const auto rep =
        daso::evaluate_baseline(result.params, data.validation, data.train, ks);
    write_report((fs::path(opts.out_dir) / "validation_report.txt").string(), rep);
    std::cout << "baseline checkpoint: " << ck << "\n";
    print_report(rep);
    return kExitOk;
  }

  const auto result = daso::fit<Real>(cfg, data, social);
  const std::string ck = (fs::path(opts.out_dir) / "model.ckpt").string();
  daso::save_checkpoint(result.params, result.optim, ck);
  write_history((fs::path(opts.out_dir) / "history.tsv").string(), result.history, cfg.eval_k);
  const auto rep = daso::evaluate(result.params, data.validation, data.train, ks);
  write_report((fs::path(opts.out_dir) / "validation_report.txt").string(), rep);
  std::cout << "checkpoint: " << ck << "\n";
  print_report(rep);
  return kExitOk;
}

bool has_baseline_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  return in.gcount() == 4 && std::memcmp(magic, daso::ckpt::kBaselineMagic, 4) == 0;
}

int cmd_eval(const CommonOpts& opts, std::optional<std::uint64_t> seed_flag) {
  const std::vector<int> ks = parse_k_list(opts.k_list);
  const daso::LoadedInteractions loaded =
      daso::load_interactions(opts.interactions, opts.threshold);

  auto check_dims = [&](int n, int m) {
    if (n != loaded.set.num_users || m != loaded.set.num_items) {
      throw std::runtime_error("checkpoint/dataset dimension mismatch: checkpoint has " +
                               std::to_string(n) + " users x " + std::to_string(m) +
                               " items, dataset has " + std::to_string(loaded.set.num_users) +
                               " x " + std::to_string(loaded.set.num_items));
    }
  };

  if (has_baseline_magic(opts.checkpoint)) {
    const auto params = daso::load_baseline_checkpoint<Real>(opts.checkpoint);
    check_dims(params.num_users, params.num_items);
    const std::uint64_t seed = seed_flag.value_or(42);
    const daso::DatasetSplit data = daso::split(loaded.set, {0.8, 0.1, 0.1}, seed);
    print_report(daso::evaluate_baseline(params, data.test, data.train, ks));
    return kExitOk;
  }

  const auto [params, optim] = daso::load_checkpoint<Real>(opts.checkpoint);
  check_dims(params.num_users, params.num_items);
  // Default to the training seed stored in the checkpoint so the test split
  // matches the one held out during training.
  const std::uint64_t seed = seed_flag.value_or(optim.hp.seed);
  const daso::DatasetSplit data = daso::split(loaded.set, {0.8, 0.1, 0.1}, seed);
  print_report(daso::evaluate(params, data.test, data.train, ks));
  return kExitOk;
}

int cmd_recommend(const CommonOpts& opts, const std::string& user_id, int k) {
  const daso::LoadedInteractions loaded =
      daso::load_interactions(opts.interactions, opts.threshold);
  const int u = loaded.users.find(user_id);
  if (u < 0) {
    std::cerr << "error: unknown user '" << user_id << "'; dataset has "
              << loaded.users.size() << " users (internal indices 0.."
              << loaded.users.size() - 1 << "), e.g. ids:";
    for (int i = 0; i < std::min(3, loaded.users.size()); ++i) {
      std::cerr << " " << loaded.users.names[i];
    }
    std::cerr << "\n";
    return kExitUsage;
  }
  const daso::UserIndex seen = daso::build_user_index(loaded.set);

  daso::RankedList ranked;
  if (has_baseline_magic(opts.checkpoint)) {
    const auto params = daso::load_baseline_checkpoint<Real>(opts.checkpoint);
    if (params.num_users != loaded.set.num_users || params.num_items != loaded.set.num_items) {
      throw std::runtime_error("checkpoint/dataset dimension mismatch");
    }
    std::vector<double> scores(params.num_items);
    daso::baseline_scorer(params)(u, {scores.data(), scores.size()});
    ranked = daso::rank_topk(u, {scores.data(), scores.size()}, k, seen.of(u));
  } else {
    const auto [params, optim] = daso::load_checkpoint<Real>(opts.checkpoint);
    if (params.num_users != loaded.set.num_users || params.num_items != loaded.set.num_items) {
      throw std::runtime_error("checkpoint/dataset dimension mismatch");
    }
    ranked = daso::recommend_topk(params, u, k, seen.of(u));
  }
  for (std::size_t r = 0; r < ranked.items.size(); ++r) {
    std::printf("%zu\t%s\t%.6f\n", r + 1, loaded.items.names[ranked.items[r]].c_str(),
                ranked.scores[r]);
  }
  if (ranked.truncated) std::cerr << "note: fewer than K items remained after exclusion\n";
  return kExitOk;
}

int cmd_synth(const CommonOpts& opts, std::uint64_t seed) {
  daso::SyntheticConfig scfg = opts.synth;
  scfg.seed = seed;
  const daso::SyntheticData data = daso::generate_synthetic(scfg);
  fs::create_directories(opts.out_dir);
  const auto ipath = fs::path(opts.out_dir) / "interactions.txt";
  const auto spath = fs::path(opts.out_dir) / "trust.txt";
  daso::write_interactions(ipath.string(), data.interactions);
  daso::write_social(spath.string(), data.social);
  std::ofstream comm(fs::path(opts.out_dir) / "communities.txt");
  for (std::size_t u = 0; u < data.community.size(); ++u) {
    comm << u << '\t' << data.community[u] << '\n';
  }
  std::cout << "wrote " << data.interactions.pairs.size() << " interactions and "
            << data.social.edges.size() / 2 << " relations under " << opts.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial social recommendation: separated per-domain user "
               "representations, cross-domain mapping nets, and two "
               "generator/discriminator games trained with policy gradients."};
  app.require_subcommand(1);

  CommonOpts opts;
  daso::TrainConfig cfg;
  std::optional<std::uint64_t> seed_flag;
  std::string user_id;
  int recommend_k = 10;

  auto add_data_flags = [&](CLI::App* cmd) {
    cmd->add_option("--interactions", opts.interactions, "interactions file (user item rating)");
    cmd->add_option("--threshold", opts.threshold, "implicit-feedback rating cutoff");
  };
  auto add_synth_flags = [&](CLI::App* cmd) {
    cmd->add_option("--synth-users", opts.synth.num_users, "synthetic: number of users");
    cmd->add_option("--synth-items", opts.synth.num_items, "synthetic: number of items");
    cmd->add_option("--synth-communities", opts.synth.num_communities,
                    "synthetic: number of communities");
    cmd->add_option("--synth-affinity", opts.synth.affinity,
                    "synthetic: in-community item probability");
    cmd->add_option("--synth-noise", opts.synth.noise, "synthetic: off-community probability");
    cmd->add_option("--synth-degree", opts.synth.social_degree,
                    "synthetic: social edges drawn per user");
    cmd->add_option("--synth-infrac", opts.synth.social_in_community,
                    "synthetic: fraction of social edges inside the community");
  };

  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_data_flags(train);
  train->add_option("--social", opts.social, "trust file (user user [weight])");
  train->add_option("--config", opts.config_path, "key = value config file");
  train->add_option("--out", opts.out_dir, "output directory");
  train->add_flag("--synthetic", opts.synthetic, "train on a generated planted-community fixture");
  train->add_flag("--baseline", opts.baseline, "train the negative-sampling baseline instead");
  train->add_flag("--directed-social", opts.directed_social, "do not symmetrize social edges");
  train->add_option("--k", opts.k_list, "report Ks, comma separated");
  add_synth_flags(train);
  int flag_dim = 0, flag_batch = 0, flag_epochs = 0;
  double flag_lr = 0.0, flag_lambda = 0.0;
  std::uint64_t flag_seed = 0;
  auto* f_dim = train->add_option("--dim", flag_dim, "representation size d");
  auto* f_lr = train->add_option("--lr", flag_lr, "RMSprop learning rate");
  auto* f_batch = train->add_option("--batch", flag_batch, "mini-batch size");
  auto* f_lambda = train->add_option("--lambda", flag_lambda, "cycle reconstruction weight");
  auto* f_epochs = train->add_option("--epochs", flag_epochs, "training epochs");
  auto* f_seed = train->add_option("--seed", flag_seed, "RNG seed");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_data_flags(eval);
  eval->add_option("--checkpoint", opts.checkpoint, "checkpoint path")->required();
  eval->add_option("--k", opts.k_list, "Ks to report, comma separated");
  std::uint64_t eval_seed = 0;
  auto* f_eval_seed =
      eval->add_option("--seed", eval_seed, "split seed (default: the checkpoint's)");
  eval->callback([&] {
    if (f_eval_seed->count() > 0) seed_flag = eval_seed;
  });

  CLI::App* recommend = app.add_subcommand("recommend", "top-K items for one user");
  add_data_flags(recommend);
  recommend->add_option("--checkpoint", opts.checkpoint, "checkpoint path")->required();
  recommend->add_option("--user", user_id, "external user id")->required();
  recommend->add_option("--k", recommend_k, "list length");

  CLI::App* synth = app.add_subcommand("synth", "write a planted-community fixture");
  synth->add_option("--out", opts.out_dir, "output directory");
  std::uint64_t synth_seed = 0;
  synth->add_option("--seed", synth_seed, "RNG seed");
  add_synth_flags(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) {
      if (!opts.synthetic && opts.interactions.empty()) {
        std::cerr << "error: provide --interactions (and --social) or --synthetic\n";
        return kExitUsage;
      }
      if (!opts.config_path.empty()) daso::load_config_file(cfg, opts.config_path);
      // Explicit flags win over config-file values.
      if (f_dim->count() > 0) cfg.dim = flag_dim;
      if (f_lr->count() > 0) cfg.hp.learning_rate = flag_lr;
      if (f_batch->count() > 0) cfg.hp.batch_size = flag_batch;
      if (f_lambda->count() > 0) cfg.hp.lambda = flag_lambda;
      if (f_epochs->count() > 0) cfg.hp.epochs = flag_epochs;
      if (f_seed->count() > 0) cfg.hp.seed = flag_seed;
      return cmd_train(opts, cfg);
    }
    if (eval->parsed()) {
      if (opts.interactions.empty()) {
        std::cerr << "error: eval requires --interactions\n";
        return kExitUsage;
      }
      return cmd_eval(opts, seed_flag);
    }
    if (recommend->parsed()) {
      if (opts.interactions.empty()) {
        std::cerr << "error: recommend requires --interactions\n";
        return kExitUsage;
      }
      if (recommend_k < 1) {
        std::cerr << "error: --k must be >= 1\n";
        return kExitUsage;
      }
      return cmd_recommend(opts, user_id, recommend_k);
    }
    if (synth->parsed()) {
      if (!(opts.synth.noise >= 0.0 && opts.synth.noise < opts.synth.affinity &&
            opts.synth.affinity <= 1.0)) {
        std::cerr << "error: need 0 <= noise < affinity <= 1\n";
        return kExitUsage;
      }
      return cmd_synth(opts, synth_seed);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
