#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "davots/codec.hpp"
#include "davots/metrics.hpp"

namespace davots::hclust {

/// Declaration order is also the tie-break preference used by best_linkage.
enum class Linkage { ward, complete, average, single };

inline constexpr Linkage kAllLinkages[] = {Linkage::ward, Linkage::complete, Linkage::average, Linkage::single};

std::string_view to_string(Linkage linkage) noexcept;
Linkage linkage_from_string(std::string_view name);

/// Nodes 0..m-1 are leaves; merge s creates node m + s.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;
  std::size_t size = 0;
  bool operator==(const Merge&) const = default;
};

struct Dendrogram {
  std::size_t leaf_count = 0;
  std::vector<Merge> merges;

  /// Throws invalid_argument when the tree is malformed.
  void validate() const;
};

/// What an ordering was computed from. Used to reject stale orderings.
struct OrderingSource {
  std::string dataset;
  std::string stage;
  std::string base;    // raw | activations | attributions
  std::string method;  // attribution method when base == attributions, else empty
  metrics::DistanceKind distance = metrics::DistanceKind::euclidean;
  Linkage linkage = Linkage::ward;
  bool operator==(const OrderingSource&) const = default;
};

struct Ordering {
  std::vector<std::size_t> permutation;
  OrderingSource source;
};

struct OrderingScore {
  double mean_neighbor_distance = 0.0;
  metrics::DistanceKind kind = metrics::DistanceKind::euclidean;
};

/// Agglomerative clustering with Lance-Williams updates. Clusters are
/// identified by their smallest leaf; among equally close pairs the one with
/// the smallest (lower id, higher id) merges first, and the merged cluster
/// keeps the lower id. Ward runs on squared inputs and reports sqrt heights.
Dendrogram agglomerate(const metrics::DistanceMatrix& dm, Linkage linkage);

/// In-order traversal of the final tree. At each internal node the child
/// created earlier goes first; leaf i counts as created at time -i, merge s
/// at time s. Equal times (leaf 0 against merge 0) keep the recorded order.
Ordering leaf_order(const Dendrogram& dg);

/// Mean distance between consecutive rows of the ordering (lower is better).
OrderingScore ordering_score(std::span<const std::size_t> permutation, std::span<const double> rows,
                             std::size_t width, metrics::DistanceKind kind);

struct LinkageChoice {
  Linkage best = Linkage::ward;
  std::array<double, 4> scores{};  // indexed like kAllLinkages
};

LinkageChoice best_linkage(const metrics::DistanceMatrix& dm, std::span<const double> rows, std::size_t width,
                           metrics::DistanceKind kind);

std::string serialize(const Dendrogram& dg);
Dendrogram deserialize_dendrogram(std::string_view text);

}  // namespace davots::hclust
