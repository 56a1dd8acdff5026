#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "daso/optim.hpp"

namespace daso {

/// Full training configuration: the optimizer hyperparameters plus run
/// options that stay outside checkpoints.
struct TrainConfig {
  HyperParams hp;
  int dim = 16;
  std::vector<int> hidden;  // empty = (2d, 2d, 2d)
  int k_disc = 1;           // discriminator batches per step
  int k_gen = 1;            // generator batches per step
  int patience = 10;        // early-stop patience in validation rounds; 0 = off
  int eval_every = 1;       // validation cadence in epochs; 0 = never
  int eval_k = 10;          // K for the early-stopping precision
  // Cycle gradients stop at the mapping nets by default. Letting them flow
  // into the embedding tables (Eq. 1 taken literally) collapses the
  // embedding scale at small step budgets: shrinking p toward zero is the
  // cheapest way to shrink the reconstruction error.
  bool freeze_cycle_embeddings = true;
  bool exclude_observed_fakes = false;
  // Subtract the per-user mean sample reward in the policy gradient. With
  // raw rewards every REINFORCE step has the same sign pattern regardless of
  // the reward values once RMSprop normalizes per coordinate, and the
  // generators never leave the noise floor.
  bool reward_baseline = true;

  std::vector<int> hidden_or_default() const {
    return hidden.empty() ? default_hidden_widths(dim) : hidden;
  }
};

namespace cfg_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

inline std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

}  // namespace cfg_detail

/// Applies one `key = value` assignment. Unknown keys are an error.
inline void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
  using cfg_detail::parse_bool;
  try {
    if (key == "dim") c.dim = std::stoi(value);
    else if (key == "hidden") c.hidden = cfg_detail::parse_int_list(value);
    else if (key == "lr") c.hp.learning_rate = std::stod(value);
    else if (key == "rho") c.hp.rho = std::stod(value);
    else if (key == "eps") c.hp.eps = std::stod(value);
    else if (key == "batch") c.hp.batch_size = std::stoi(value);
    else if (key == "lambda") c.hp.lambda = std::stod(value);
    else if (key == "samples_per_user") c.hp.samples_per_user = std::stoi(value);
    else if (key == "steps_per_epoch") c.hp.steps_per_epoch = std::stoi(value);
    else if (key == "epochs") c.hp.epochs = std::stoi(value);
    else if (key == "seed") c.hp.seed = std::stoull(value);
    else if (key == "k_disc") c.k_disc = std::stoi(value);
    else if (key == "k_gen") c.k_gen = std::stoi(value);
    else if (key == "patience") c.patience = std::stoi(value);
    else if (key == "eval_every") c.eval_every = std::stoi(value);
    else if (key == "eval_k") c.eval_k = std::stoi(value);
    else if (key == "freeze_cycle_embeddings") c.freeze_cycle_embeddings = parse_bool(value, key);
    else if (key == "exclude_observed_fakes") c.exclude_observed_fakes = parse_bool(value, key);
    else if (key == "reward_baseline") c.reward_baseline = parse_bool(value, key);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad value for " + key + ": " + value);
  }
}

/// Flat `key = value` text, one assignment per line, # comments allowed.
inline void load_config_file(TrainConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = cfg_detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                  ": expected `key = value`");
    }
    apply_config_entry(c, cfg_detail::trim(line.substr(0, eq)),
                       cfg_detail::trim(line.substr(eq + 1)));
  }
}

}  // namespace daso
