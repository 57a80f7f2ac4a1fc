#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "pathsentry/errors.hpp"
#include "pathsentry/prefix.hpp"

namespace pathsentry {

// Binary (one bit per level) trie over prefixes of a single address family.
// Supports exact insert/remove and longest-prefix-match lookup.
template <typename T>
class PrefixTree {
 public:
  struct Match {
    Prefix prefix;
    const T* value;
  };

  explicit PrefixTree(Family family = Family::kV4) : family_(family) { nodes_.emplace_back(); }

  Family family() const { return family_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  // Returns true if the prefix was new, false if an existing entry was overwritten.
  bool insert(const Prefix& p, T value) {
    check_family(p);
    std::int32_t at = 0;
    for (int i = 0; i < p.length(); ++i) {
      int b = p.bit(i);
      if (nodes_[at].child[b] < 0) {
        nodes_[at].child[b] = static_cast<std::int32_t>(nodes_.size());
        nodes_.emplace_back();
      }
      at = nodes_[at].child[b];
    }
    bool fresh = !nodes_[at].entry.has_value();
    nodes_[at].entry.emplace(p, std::move(value));
    if (fresh) ++size_;
    return fresh;
  }

  // Removes the exact prefix. Returns false if it was not stored.
  bool remove(const Prefix& p) {
    check_family(p);
    std::int32_t at = walk(p);
    if (at < 0 || !nodes_[at].entry) return false;
    nodes_[at].entry.reset();
    --size_;
    return true;
  }

  const T* find(const Prefix& p) const {
    check_family(p);
    std::int32_t at = walk(p);
    if (at < 0 || !nodes_[at].entry) return nullptr;
    return &nodes_[at].entry->second;
  }

  std::optional<Match> lpm(const Prefix& query) const {
    check_family(query);
    std::optional<Match> best;
    std::int32_t at = 0;
    for (int i = 0;; ++i) {
      const auto& node = nodes_[at];
      if (node.entry) best = Match{node.entry->first, &node.entry->second};
      if (i == query.length()) break;
      at = node.child[query.bit(i)];
      if (at < 0) break;
    }
    return best;
  }

  // Calls fn(prefix, value) for every stored entry covering `query`, shortest first.
  template <typename Fn>
  void for_each_cover(const Prefix& query, Fn&& fn) const {
    check_family(query);
    std::int32_t at = 0;
    for (int i = 0;; ++i) {
      const auto& node = nodes_[at];
      if (node.entry) fn(node.entry->first, node.entry->second);
      if (i == query.length()) break;
      at = node.child[query.bit(i)];
      if (at < 0) break;
    }
  }

  // Calls fn(prefix, value) for every entry, in bit-lexicographic order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
      auto at = stack.back();
      stack.pop_back();
      const auto& node = nodes_[at];
      if (node.entry) fn(node.entry->first, node.entry->second);
      if (node.child[1] >= 0) stack.push_back(node.child[1]);
      if (node.child[0] >= 0) stack.push_back(node.child[0]);
    }
  }

 private:
  struct Node {
    std::int32_t child[2] = {-1, -1};
    std::optional<std::pair<Prefix, T>> entry;
  };

  void check_family(const Prefix& p) const {
    if (p.family() != family_) throw DataError("address family mismatch for " + p.to_string());
  }

  std::int32_t walk(const Prefix& p) const {
    std::int32_t at = 0;
    for (int i = 0; i < p.length() && at >= 0; ++i) at = nodes_[at].child[p.bit(i)];
    return at;
  }

  Family family_;
  std::vector<Node> nodes_;
  std::size_t size_ = 0;
};

}  // namespace pathsentry
