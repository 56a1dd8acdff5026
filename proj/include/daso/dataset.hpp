#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "daso/rng.hpp"

namespace daso {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Sparse implicit feedback: stored pairs mean "interacted", absence means
/// unobserved. Pairs are kept sorted and deduplicated.
struct InteractionSet {
  int num_users = 0;
  int num_items = 0;
  std::vector<std::pair<int, int>> pairs;  // (user, item)
};

/// User-user relations, stored as the symmetric closure of the input edges
/// (both directions present), sorted, no self-loops.
struct SocialGraph {
  int num_users = 0;
  std::vector<std::pair<int, int>> edges;
};

struct DatasetSplit {
  InteractionSet train;
  InteractionSet validation;
  InteractionSet test;
};

/// Dense external-id <-> index mapping, in order of first appearance.
struct IdIndex {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;

  int intern(const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(names.size());
    names.push_back(name);
    index.emplace(name, id);
    return id;
  }
  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }
  int size() const { return static_cast<int>(names.size()); }
};

struct LoadedInteractions {
  InteractionSet set;
  IdIndex users;
  IdIndex items;
};

struct SocialLoadStats {
  int dropped_unknown_user = 0;  // lines referencing users outside the map
  int dropped_self_loops = 0;
};

namespace detail {

inline bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

inline void sort_unique(std::vector<std::pair<int, int>>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace detail

/// Parses `user item rating` lines and keeps pairs with rating >= threshold
/// as implicit positives. External ids (arbitrary tokens) are re-indexed
/// densely in order of first appearance.
inline LoadedInteractions load_interactions(const std::string& path, double threshold = 1.0) {
  if (threshold < 0.0) throw std::invalid_argument("load_interactions: threshold must be >= 0");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_interactions: cannot open " + path);

  LoadedInteractions out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::string user, item, rating_tok;
    if (!(ss >> user >> item >> rating_tok)) {
      throw ParseError(path, lineno, "expected `user item rating`");
    }
    double rating;
    try {
      std::size_t pos = 0;
      rating = std::stod(rating_tok, &pos);
      if (pos != rating_tok.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(path, lineno, "bad rating value '" + rating_tok + "'");
    }
    std::string extra;
    if (ss >> extra) throw ParseError(path, lineno, "trailing tokens after rating");
    if (rating < threshold) continue;
    out.set.pairs.emplace_back(out.users.intern(user), out.items.intern(item));
  }
  if (out.set.pairs.empty()) {
    throw std::runtime_error("load_interactions: no interactions at threshold in " + path);
  }
  detail::sort_unique(out.set.pairs);
  out.set.num_users = out.users.size();
  out.set.num_items = out.items.size();
  return out;
}

/// Parses `user user [weight]` lines against an existing user map. Unknown
/// users and self-loops are dropped (counted in `stats`). With
/// `symmetrize` the graph stores both directions of every kept edge.
inline SocialGraph load_social(const std::string& path, const IdIndex& user_map,
                               SocialLoadStats* stats = nullptr, bool symmetrize = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_social: cannot open " + path);

  SocialLoadStats local;
  SocialGraph g;
  g.num_users = user_map.size();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::string a, b, weight, extra;
    if (!(ss >> a >> b)) throw ParseError(path, lineno, "expected `user user [weight]`");
    ss >> weight;  // optional, ignored
    if (ss >> extra) throw ParseError(path, lineno, "trailing tokens after weight");
    const int ia = user_map.find(a);
    const int ib = user_map.find(b);
    if (ia < 0 || ib < 0) {
      ++local.dropped_unknown_user;
      continue;
    }
    if (ia == ib) {
      ++local.dropped_self_loops;
      continue;
    }
    g.edges.emplace_back(ia, ib);
    if (symmetrize) g.edges.emplace_back(ib, ia);
  }
  detail::sort_unique(g.edges);
  if (stats) *stats = local;
  return g;
}

/// Global pair-level split by seeded shuffle. Sizes follow largest-remainder
/// allocation of the ratios, so each part is within one pair of exact.
inline DatasetSplit split(const InteractionSet& set, std::array<double, 3> ratios,
                          std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split: ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");

  std::vector<std::pair<int, int>> pairs = set.pairs;
  std::sort(pairs.begin(), pairs.end());  // canonical order before shuffling
  Rng rng(seed);
  rng.shuffle(pairs);

  const std::size_t total = pairs.size();
  std::array<std::size_t, 3> counts{};
  std::array<std::pair<double, int>, 3> frac;  // (fractional part, part index)
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = {exact - static_cast<double>(counts[i]), i};
    assigned += counts[i];
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; assigned < total; ++i, ++assigned) ++counts[frac[i % 3].second];

  DatasetSplit out;
  InteractionSet* parts[3] = {&out.train, &out.validation, &out.test};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    parts[i]->num_users = set.num_users;
    parts[i]->num_items = set.num_items;
    parts[i]->pairs.assign(pairs.begin() + pos, pairs.begin() + pos + counts[i]);
    detail::sort_unique(parts[i]->pairs);
    pos += counts[i];
  }
  return out;
}

struct SyntheticConfig {
  int num_users = 500;
  int num_items = 1000;
  int num_communities = 5;
  double affinity = 0.3;  // in-community item pick probability
  double noise = 0.02;    // off-community item pick probability
  int social_degree = 10;
  double social_in_community = 0.95;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  InteractionSet interactions;
  SocialGraph social;
  std::vector<int> community;  // per user
};

/// Planted-community fixture: users in a community prefer that community's
/// item block; social edges fall mostly within the community. Every user is
/// guaranteed at least one interaction (forced in-block pick) so the fixture
/// survives a text-format round trip with the user set intact.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_users <= 0 || cfg.num_items <= 0) {
    throw std::invalid_argument("generate_synthetic: users and items must be positive");
  }
  if (cfg.num_communities <= 0 || cfg.num_communities > cfg.num_users ||
      cfg.num_communities > cfg.num_items) {
    throw std::invalid_argument("generate_synthetic: bad community count");
  }
  if (!(cfg.noise >= 0.0 && cfg.noise < cfg.affinity && cfg.affinity <= 1.0)) {
    throw std::invalid_argument("generate_synthetic: need 0 <= noise < affinity <= 1");
  }

  const int C = cfg.num_communities;
  auto block_of = [C](int idx, int n) {
    // contiguous blocks; the first n % C blocks take the remainder
    const int base = n / C, extra = n % C;
    const int cut = (base + 1) * extra;
    return idx < cut ? idx / (base + 1) : extra + (idx - cut) / base;
  };
  auto block_range = [C](int c, int n) {
    const int base = n / C, extra = n % C;
    const int lo = c < extra ? c * (base + 1) : extra * (base + 1) + (c - extra) * base;
    const int len = base + (c < extra ? 1 : 0);
    return std::pair<int, int>(lo, lo + len);
  };

  SyntheticData out;
  out.interactions.num_users = cfg.num_users;
  out.interactions.num_items = cfg.num_items;
  out.social.num_users = cfg.num_users;
  out.community.resize(cfg.num_users);

  Rng rng(cfg.seed);
  for (int u = 0; u < cfg.num_users; ++u) {
    const int c = block_of(u, cfg.num_users);
    out.community[u] = c;
    auto [ilo, ihi] = block_range(c, cfg.num_items);
    bool any = false;
    for (int v = 0; v < cfg.num_items; ++v) {
      const double p = (v >= ilo && v < ihi) ? cfg.affinity : cfg.noise;
      if (rng.bernoulli(p)) {
        out.interactions.pairs.emplace_back(u, v);
        any = any || (v >= ilo && v < ihi);
      }
    }
    if (!any) {
      out.interactions.pairs.emplace_back(u, ilo + static_cast<int>(rng.uniform_index(ihi - ilo)));
    }
  }
  detail::sort_unique(out.interactions.pairs);

  std::set<std::pair<int, int>> edges;
  for (int u = 0; u < cfg.num_users; ++u) {
    const int c = out.community[u];
    auto [ulo, uhi] = block_range(c, cfg.num_users);
    const int csize = uhi - ulo;
    for (int t = 0; t < cfg.social_degree; ++t) {
      int v;
      if (csize > 1 && rng.bernoulli(cfg.social_in_community)) {
        do {
          v = ulo + static_cast<int>(rng.uniform_index(csize));
        } while (v == u);
      } else {
        if (cfg.num_users == 1) break;
        do {
          v = static_cast<int>(rng.uniform_index(cfg.num_users));
        } while (v == u);
      }
      edges.emplace(std::min(u, v), std::max(u, v));
    }
  }
  for (auto [a, b] : edges) {
    out.social.edges.emplace_back(a, b);
    out.social.edges.emplace_back(b, a);
  }
  detail::sort_unique(out.social.edges);
  return out;
}

/// Writes `user item 1` lines in the ingestion format, using external names
/// when provided (indices otherwise).
inline void write_interactions(const std::string& path, const InteractionSet& set,
                               const IdIndex* users = nullptr, const IdIndex* items = nullptr) {
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error("write_interactions: cannot open " + path);
  for (auto [u, v] : set.pairs) {
    const std::string us = users ? users->names[u] : std::to_string(u);
    const std::string vs = items ? items->names[v] : std::to_string(v);
    outf << us << '\t' << vs << '\t' << 1 << '\n';
  }
}

/// Writes each undirected relation once as `user user`.
inline void write_social(const std::string& path, const SocialGraph& g,
                         const IdIndex* users = nullptr) {
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error("write_social: cannot open " + path);
  for (auto [a, b] : g.edges) {
    if (a > b) continue;
    const std::string as = users ? users->names[a] : std::to_string(a);
    const std::string bs = users ? users->names[b] : std::to_string(b);
    outf << as << '\t' << bs << '\n';
  }
}

/// CSR-style per-user item lists; used for exclusion sets and batch lookups.
struct UserIndex {
  std::vector<int> offsets;  // num_users + 1
  std::vector<int> items;

  std::span<const int> of(int u) const {
    return {items.data() + offsets[u], static_cast<std::size_t>(offsets[u + 1] - offsets[u])};
  }
  bool contains(int u, int v) const {
    const auto s = of(u);
    return std::binary_search(s.begin(), s.end(), v);
  }
};

inline UserIndex build_user_index(const InteractionSet& set) {
  UserIndex idx;
  idx.offsets.assign(static_cast<std::size_t>(set.num_users) + 1, 0);
  for (auto [u, v] : set.pairs) ++idx.offsets[u + 1];
  for (int u = 0; u < set.num_users; ++u) idx.offsets[u + 1] += idx.offsets[u];
  idx.items.resize(set.pairs.size());
  std::vector<int> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
  for (auto [u, v] : set.pairs) idx.items[cursor[u]++] = v;
  return idx;
}

}  // namespace daso
