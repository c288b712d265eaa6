#include "davots/hclust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <tuple>

#include "davots/error.hpp"

namespace davots::hclust {

std::string_view to_string(Linkage linkage) noexcept {
  switch (linkage) {
    case Linkage::ward: return "ward";
    case Linkage::complete: return "complete";
    case Linkage::average: return "average";
    case Linkage::single: return "single";
  }
  return "unknown";
}

Linkage linkage_from_string(std::string_view name) {
  for (auto l : kAllLinkages) {
    if (to_string(l) == name) return l;
  }
  fail(ErrorKind::invalid_argument, "unknown linkage '" + std::string(name) + "'");
}

void Dendrogram::validate() const {
  const std::size_t m = leaf_count;
  if (m == 0) fail(ErrorKind::invalid_argument, "malformed tree: no leaves");
  if (merges.size() != m - 1) fail(ErrorKind::invalid_argument, "malformed tree: expected m-1 merges");
  std::vector<std::size_t> sizes(2 * m - 1, 0);
  std::vector<bool> used(2 * m - 1, false);
  for (std::size_t i = 0; i < m; ++i) sizes[i] = 1;
  for (std::size_t s = 0; s < merges.size(); ++s) {
    const auto& mg = merges[s];
    const std::size_t node = m + s;
    for (std::size_t child : {mg.left, mg.right}) {
      if (child >= node) fail(ErrorKind::invalid_argument, "malformed tree: merge " + std::to_string(s) + " references a later node");
      if (used[child]) fail(ErrorKind::invalid_argument, "malformed tree: node " + std::to_string(child) + " merged twice");
      used[child] = true;
    }
    if (mg.left == mg.right) fail(ErrorKind::invalid_argument, "malformed tree: self merge");
    if (!(mg.height >= 0.0) || !std::isfinite(mg.height)) fail(ErrorKind::invalid_argument, "malformed tree: bad height");
    sizes[node] = sizes[mg.left] + sizes[mg.right];
    if (mg.size != sizes[node]) fail(ErrorKind::invalid_argument, "malformed tree: size mismatch at merge " + std::to_string(s));
  }
}

namespace {

struct PairKey {
  double d;
  std::size_t lo;
  std::size_t hi;
  bool operator<(const PairKey& o) const { return std::tie(d, lo, hi) < std::tie(o.d, o.lo, o.hi); }
};

PairKey make_key(double d, std::size_t i, std::size_t j) { return {d, std::min(i, j), std::max(i, j)}; }

// Full symmetric working matrix in condensed form over slots.
class Working {
 public:
  explicit Working(std::size_t m) : m_(m), v_(m * (m - 1) / 2) {}
  double& operator()(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return v_[metrics::DistanceMatrix::offset(m_, i, j)];
  }

 private:
  std::size_t m_;
  std::vector<double> v_;
};

}  // namespace

Dendrogram agglomerate(const metrics::DistanceMatrix& dm, Linkage linkage) {
  const std::size_t m = dm.size();
  if (m < 2) fail(ErrorKind::invalid_argument, "agglomerate needs at least two points");
  const bool ward = linkage == Linkage::ward;

  Working d(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double v = dm.at(i, j);
      if (!std::isfinite(v)) fail(ErrorKind::invalid_argument, "non-finite distance at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      d(i, j) = ward ? v * v : v;
    }
  }

  std::vector<bool> active(m, true);
  std::vector<std::size_t> node(m), size(m, 1);
  for (std::size_t i = 0; i < m; ++i) node[i] = i;

  // best partner of every active slot over all other active slots
  std::vector<std::size_t> nn(m, 0);
  std::vector<PairKey> nn_key(m);
  auto refresh = [&](std::size_t i) {
    PairKey best{std::numeric_limits<double>::infinity(), m, m};
    std::size_t partner = i;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i || !active[j]) continue;
      const PairKey k = make_key(d(i, j), i, j);
      if (k < best) {
        best = k;
        partner = j;
      }
    }
    nn[i] = partner;
    nn_key[i] = best;
  };
  for (std::size_t i = 0; i < m; ++i) refresh(i);

  Dendrogram dg;
  dg.leaf_count = m;
  dg.merges.reserve(m - 1);

  for (std::size_t step = 0; step + 1 < m; ++step) {
    std::size_t best_slot = m;
    for (std::size_t i = 0; i < m; ++i) {
      if (active[i] && (best_slot == m || nn_key[i] < nn_key[best_slot])) best_slot = i;
    }
    const std::size_t a = std::min(best_slot, nn[best_slot]);
    const std::size_t b = std::max(best_slot, nn[best_slot]);
    const double dab = d(a, b);
    const double na = static_cast<double>(size[a]), nb = static_cast<double>(size[b]);

    dg.merges.push_back(Merge{node[a], node[b], ward ? std::sqrt(dab) : dab, size[a] + size[b]});

    for (std::size_t k = 0; k < m; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double dka = d(k, a), dkb = d(k, b);
      double merged = 0.0;
      switch (linkage) {
        case Linkage::single: merged = std::min(dka, dkb); break;
        case Linkage::complete: merged = std::max(dka, dkb); break;
        case Linkage::average: merged = (na * dka + nb * dkb) / (na + nb); break;
        case Linkage::ward: {
          const double nk = static_cast<double>(size[k]);
          merged = ((na + nk) * dka + (nb + nk) * dkb - nk * dab) / (na + nb + nk);
          break;
        }
      }
      d(k, a) = merged;
    }
    active[b] = false;
    node[a] = m + step;
    size[a] += size[b];

    if (step + 2 == m) break;
    refresh(a);
    for (std::size_t k = 0; k < m; ++k) {
      if (!active[k] || k == a) continue;
      if (nn[k] == a || nn[k] == b) {
        refresh(k);
      } else {
        const PairKey candidate = make_key(d(k, a), k, a);
        if (candidate < nn_key[k]) {
          nn[k] = a;
          nn_key[k] = candidate;
        }
      }
    }
  }
  return dg;
}

Ordering leaf_order(const Dendrogram& dg) {
  dg.validate();
  const std::size_t m = dg.leaf_count;
  Ordering ord;
  ord.permutation.reserve(m);
  if (m == 1) {
    ord.permutation.push_back(0);
    return ord;
  }
  auto created = [m](std::size_t node) -> double {
    return node < m ? -static_cast<double>(node) : static_cast<double>(node - m);
  };
  std::vector<std::size_t> stack{2 * m - 2};
  while (!stack.empty()) {
    const std::size_t node = stack.back();
    stack.pop_back();
    if (node < m) {
      ord.permutation.push_back(node);
      continue;
    }
    const auto& mg = dg.merges[node - m];
    std::size_t first = mg.left, second = mg.right;
    if (created(second) < created(first)) std::swap(first, second);
    stack.push_back(second);
    stack.push_back(first);
  }
  return ord;
}

OrderingScore ordering_score(std::span<const std::size_t> permutation, std::span<const double> rows,
                             std::size_t width, metrics::DistanceKind kind) {
  if (width == 0 || rows.size() % width != 0) fail(ErrorKind::invalid_argument, "ragged base data");
  const std::size_t m = rows.size() / width;
  if (permutation.size() != m) {
    fail(ErrorKind::invalid_argument, "ordering has " + std::to_string(permutation.size()) + " entries but base data has " +
                                          std::to_string(m) + " rows");
  }
  if (m < 2) fail(ErrorKind::invalid_argument, "ordering score needs at least two rows");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    if (permutation[i] >= m || permutation[i + 1] >= m) fail(ErrorKind::invalid_argument, "ordering index out of range");
    total += metrics::distance(kind, rows.subspan(permutation[i] * width, width),
                               rows.subspan(permutation[i + 1] * width, width));
  }
  return {total / static_cast<double>(m - 1), kind};
}

LinkageChoice best_linkage(const metrics::DistanceMatrix& dm, std::span<const double> rows, std::size_t width,
                           metrics::DistanceKind kind) {
  LinkageChoice choice;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::size(kAllLinkages); ++i) {
    const auto ord = leaf_order(agglomerate(dm, kAllLinkages[i]));
    choice.scores[i] = ordering_score(ord.permutation, rows, width, kind).mean_neighbor_distance;
    if (choice.scores[i] < best) {
      best = choice.scores[i];
      choice.best = kAllLinkages[i];
    }
  }
  return choice;
}

std::string serialize(const Dendrogram& dg) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& mg : dg.merges) merges.push_back({mg.left, mg.right, mg.height, mg.size});
  return nlohmann::json{{"artifact", "dendrogram"},
                        {"leaf_count", dg.leaf_count},
                        {"columns", {"left", "right", "height", "size"}},
                        {"merges", merges}}
      .dump();
}

Dendrogram deserialize_dendrogram(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    Dendrogram dg;
    dg.leaf_count = doc.at("leaf_count").get<std::size_t>();
    for (const auto& row : doc.at("merges")) {
      dg.merges.push_back(Merge{row.at(0).get<std::size_t>(), row.at(1).get<std::size_t>(), row.at(2).get<double>(),
                                row.at(3).get<std::size_t>()});
    }
    dg.validate();
    return dg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::integrity, std::string("malformed dendrogram document: ") + e.what());
  }
}

}  // namespace davots::hclust
