#include "lve/constraint.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace lve {
namespace detail {

struct CtNode {
  // Sibling labels are disjoint, sorted by smallest value; children of the
  // bottom level are null-free: a node with no edges is a leaf.
  std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
};

namespace {

const CtNodePtr& leafNode() {
  static const CtNodePtr leaf = std::make_shared<CtNode>();
  return leaf;
}

bool nodeEqual(const CtNodePtr& a, const CtNodePtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->edges.size() != b->edges.size()) return false;
  for (std::size_t i = 0; i < a->edges.size(); ++i) {
    if (a->edges[i].first != b->edges[i].first) return false;
    if (!nodeEqual(a->edges[i].second, b->edges[i].second)) return false;
  }
  return true;
}

std::vector<int> sortedUnion(const std::vector<int>& a,
                             const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

std::vector<int> sortedIntersect(const std::vector<int>& a,
                                 const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

std::vector<int> sortedDifference(const std::vector<int>& a,
                                  const std::vector<int>& b) {
  std::vector<int> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::back_inserter(out));
  return out;
}

// Canonicalizing node constructor: drops empty edges, merges edges whose
// subtrees are structurally equal, sorts siblings by smallest value.
// Returns null for a node with no surviving edges (the empty subtree).
CtNodePtr makeNode(std::vector<std::pair<std::vector<int>, CtNodePtr>> edges) {
  std::vector<std::pair<std::vector<int>, CtNodePtr>> merged;
  for (auto& [label, child] : edges) {
    if (label.empty() || !child) continue;
    bool found = false;
    for (auto& [mlabel, mchild] : merged) {
      if (nodeEqual(mchild, child)) {
        mlabel = sortedUnion(mlabel, label);
        found = true;
        break;
      }
    }
    if (!found) merged.emplace_back(std::move(label), std::move(child));
  }
  if (merged.empty()) return nullptr;
  std::sort(merged.begin(), merged.end(),
            [](const auto& a, const auto& b) {
              return a.first.front() < b.first.front();
            });
  auto node = std::make_shared<CtNode>();
  node->edges = std::move(merged);
  return node;
}

// Swaps the level at `depth` with the one below it, for every node at
// `depth`, re-merging as it goes.
CtNodePtr swapAtDepth(const CtNodePtr& node, std::size_t depth) {
  if (!node) return nullptr;
  if (depth > 0) {
    std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
    edges.reserve(node->edges.size());
    for (const auto& [label, child] : node->edges)
      edges.emplace_back(label, swapAtDepth(child, depth - 1));
    return makeNode(std::move(edges));
  }
  // Expand to (lower value -> list of (upper label, grandchild)) and group
  // lower values by identical residual nodes.
  std::map<int, std::vector<std::pair<std::vector<int>, CtNodePtr>>> perValue;
  for (const auto& [upper, child] : node->edges) {
    for (const auto& [lower, grand] : child->edges) {
      CtNodePtr g = grand ? grand : leafNode();
      for (int v : lower) perValue[v].emplace_back(upper, g);
    }
  }
  std::vector<std::pair<std::vector<int>, CtNodePtr>> result;
  std::vector<CtNodePtr> groupNodes;
  for (auto& [v, mapping] : perValue) {
    CtNodePtr inner = makeNode(mapping);
    bool found = false;
    for (std::size_t i = 0; i < groupNodes.size(); ++i) {
      if (nodeEqual(groupNodes[i], inner)) {
        result[i].first.push_back(v);  // ascending map order keeps it sorted
        found = true;
        break;
      }
    }
    if (!found) {
      result.emplace_back(std::vector<int>{v}, inner);
      groupNodes.push_back(inner);
    }
  }
  return makeNode(std::move(result));
}

// Keeps only the top `depth` levels.
CtNodePtr truncateAt(const CtNodePtr& node, std::size_t depth) {
  if (!node) return nullptr;
  if (depth == 0) return leafNode();
  std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
  edges.reserve(node->edges.size());
  for (const auto& [label, child] : node->edges)
    edges.emplace_back(label, truncateAt(child, depth - 1));
  return makeNode(std::move(edges));
}

// Replaces every leaf of `node` (at `depth` levels down) with `suffix`.
CtNodePtr appendBelow(const CtNodePtr& node, std::size_t depth,
                      const CtNodePtr& suffix) {
  if (!node) return nullptr;
  if (depth == 0) return suffix;
  std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
  edges.reserve(node->edges.size());
  for (const auto& [label, child] : node->edges)
    edges.emplace_back(label, appendBelow(child, depth - 1, suffix));
  return makeNode(std::move(edges));
}

std::uint64_t nodeCardinality(
    const CtNodePtr& node,
    std::unordered_map<const CtNode*, std::uint64_t>& memo) {
  if (!node) return 0;
  if (node->edges.empty()) return 1;
  auto it = memo.find(node.get());
  if (it != memo.end()) return it->second;
  std::uint64_t total = 0;
  for (const auto& [label, child] : node->edges)
    total += static_cast<std::uint64_t>(label.size()) *
             nodeCardinality(child, memo);
  memo.emplace(node.get(), total);
  return total;
}

}  // namespace
}  // namespace detail

using detail::CtNode;
using detail::CtNodePtr;
using detail::appendBelow;
using detail::leafNode;
using detail::makeNode;
using detail::nodeCardinality;
using detail::nodeEqual;
using detail::sortedDifference;
using detail::sortedIntersect;
using detail::swapAtDepth;
using detail::truncateAt;

ConstraintTree::ConstraintTree(std::vector<LogVar> logvars, CtNodePtr root)
    : logvars_(std::move(logvars)), root_(std::move(root)) {}

ConstraintTree ConstraintTree::empty(std::vector<LogVar> logvars) {
  return ConstraintTree(std::move(logvars), nullptr);
}

ConstraintTree ConstraintTree::nullary() {
  return ConstraintTree({}, leafNode());
}

ConstraintTree ConstraintTree::product(std::vector<LogVar> logvars,
                                       std::vector<std::vector<int>> valueSets) {
  if (logvars.size() != valueSets.size())
    throw StructuralError("product: one value set per logvar required");
  CtNodePtr node = leafNode();
  for (std::size_t i = logvars.size(); i-- > 0;) {
    auto values = valueSets[i];
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (int v : values)
      if (v < 0 || v >= static_cast<int>(logvars[i].domain()->size()))
        throw StructuralError("product: value outside domain of '" +
                              logvars[i].name() + "'");
    node = makeNode({{std::move(values), node}});
  }
  return ConstraintTree(std::move(logvars), node);
}

ConstraintTree ConstraintTree::fullProduct(std::vector<LogVar> logvars) {
  std::vector<std::vector<int>> sets;
  sets.reserve(logvars.size());
  for (const auto& v : logvars) {
    std::vector<int> all(v.domain()->size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    sets.push_back(std::move(all));
  }
  return product(std::move(logvars), std::move(sets));
}

namespace {
CtNodePtr buildFromSorted(
    const std::vector<std::vector<int>>& tuples, std::size_t lo,
    std::size_t hi, std::size_t level, std::size_t arity) {
  if (level == arity) return leafNode();
  std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
  std::size_t i = lo;
  while (i < hi) {
    int value = tuples[i][level];
    std::size_t j = i;
    while (j < hi && tuples[j][level] == value) ++j;
    edges.emplace_back(std::vector<int>{value},
                       buildFromSorted(tuples, i, j, level + 1, arity));
    i = j;
  }
  return makeNode(std::move(edges));
}
}  // namespace

ConstraintTree ConstraintTree::fromTuples(
    std::vector<LogVar> logvars, const std::vector<std::vector<int>>& tuples) {
  const std::size_t arity = logvars.size();
  std::vector<std::vector<int>> sorted;
  sorted.reserve(tuples.size());
  for (const auto& t : tuples) {
    if (t.size() != arity)
      throw StructuralError("fromTuples: tuple arity mismatch");
    for (std::size_t i = 0; i < arity; ++i)
      if (t[i] < 0 || t[i] >= static_cast<int>(logvars[i].domain()->size()))
        throw StructuralError("fromTuples: value outside domain of '" +
                              logvars[i].name() + "'");
    sorted.push_back(t);
  }
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.empty()) return empty(std::move(logvars));
  CtNodePtr root = buildFromSorted(sorted, 0, sorted.size(), 0, arity);
  return ConstraintTree(std::move(logvars), root);
}

bool ConstraintTree::hasLogvar(const LogVar& v) const {
  return std::find(logvars_.begin(), logvars_.end(), v) != logvars_.end();
}

std::size_t ConstraintTree::levelOf(const LogVar& v) const {
  for (std::size_t i = 0; i < logvars_.size(); ++i)
    if (logvars_[i] == v) return i;
  throw StructuralError("logvar '" + v.name() + "' not in constraint");
}

std::uint64_t ConstraintTree::cardinality() const {
  std::unordered_map<const CtNode*, std::uint64_t> memo;
  return nodeCardinality(root_, memo);
}

bool ConstraintTree::contains(const std::vector<int>& tuple) const {
  if (tuple.size() != logvars_.size())
    throw StructuralError("contains: tuple arity mismatch");
  CtNodePtr node = root_;
  for (std::size_t level = 0; level < tuple.size(); ++level) {
    if (!node) return false;
    const CtNodePtr* next = nullptr;
    for (const auto& [label, child] : node->edges) {
      if (std::binary_search(label.begin(), label.end(), tuple[level])) {
        next = &child;
        break;
      }
    }
    if (!next) return false;
    node = *next;
  }
  return node != nullptr;
}

namespace {
void collectTuples(const CtNodePtr& node, std::vector<int>& acc,
                   std::vector<std::vector<int>>& out) {
  if (!node) return;
  if (node->edges.empty()) {
    out.push_back(acc);
    return;
  }
  for (const auto& [label, child] : node->edges) {
    for (int v : label) {
      acc.push_back(v);
      collectTuples(child, acc, out);
      acc.pop_back();
    }
  }
}
}  // namespace

std::vector<std::vector<int>> ConstraintTree::tuples() const {
  std::vector<std::vector<int>> out;
  std::vector<int> acc;
  collectTuples(root_, acc, out);
  return out;
}

ConstraintTree ConstraintTree::reorder(
    const std::vector<LogVar>& newOrder) const {
  if (newOrder.size() != logvars_.size())
    throw StructuralError("reorder: not a permutation");
  for (const auto& v : newOrder) levelOf(v);
  std::vector<LogVar> current = logvars_;
  CtNodePtr root = root_;
  for (std::size_t target = 0; target < newOrder.size(); ++target) {
    std::size_t pos = target;
    while (current[pos] != newOrder[target]) ++pos;
    while (pos > target) {
      root = swapAtDepth(root, pos - 1);
      std::swap(current[pos - 1], current[pos]);
      --pos;
    }
  }
  return ConstraintTree(newOrder, root);
}

ConstraintTree ConstraintTree::project(const std::vector<LogVar>& vars) const {
  std::vector<LogVar> order = vars;
  for (const auto& v : logvars_)
    if (std::find(vars.begin(), vars.end(), v) == vars.end())
      order.push_back(v);
  if (order.size() != logvars_.size())
    throw StructuralError("project: unknown or repeated logvar");
  ConstraintTree moved = reorder(order);
  return ConstraintTree(vars, truncateAt(moved.root_, vars.size()));
}

ConstraintTree ConstraintTree::selectEq(const LogVar& var, int value) const {
  std::size_t target = levelOf(var);
  // Restrict the labels at `target`, keeping all levels present.
  struct Rec {
    std::size_t target;
    int value;
    CtNodePtr operator()(const CtNodePtr& node, std::size_t depth) const {
      if (!node) return nullptr;
      std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
      for (const auto& [label, child] : node->edges) {
        if (depth == target) {
          if (std::binary_search(label.begin(), label.end(), value))
            edges.emplace_back(std::vector<int>{value}, child);
        } else {
          edges.emplace_back(label, (*this)(child, depth + 1));
        }
      }
      return makeNode(std::move(edges));
    }
  } rec{target, value};
  return ConstraintTree(logvars_, rec(root_, 0));
}

ConstraintTree ConstraintTree::rename(
    const std::vector<std::pair<LogVar, LogVar>>& mapping) const {
  std::vector<LogVar> renamed = logvars_;
  for (const auto& [from, to] : mapping) {
    std::size_t level = levelOf(from);
    if (from.domain() != to.domain())
      throw StructuralError("rename: domain mismatch for '" + from.name() +
                            "' -> '" + to.name() + "'");
    renamed[level] = to;
  }
  for (std::size_t i = 0; i < renamed.size(); ++i)
    for (std::size_t j = i + 1; j < renamed.size(); ++j)
      if (renamed[i] == renamed[j])
        throw StructuralError("rename: duplicate column '" +
                              renamed[i].name() + "'");
  return ConstraintTree(std::move(renamed), root_);
}

namespace {
CtNodePtr joinRec(const CtNodePtr& a, const CtNodePtr& b, std::size_t depth,
                  std::size_t shared, std::size_t restA) {
  if (!a || !b) return nullptr;
  if (depth == shared) {
    // Below the shared prefix: this tree's remainder, then the other's.
    return appendBelow(a, restA, b);
  }
  std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
  for (const auto& [la, ca] : a->edges) {
    for (const auto& [lb, cb] : b->edges) {
      std::vector<int> common = sortedIntersect(la, lb);
      if (common.empty()) continue;
      edges.emplace_back(std::move(common),
                         joinRec(ca, cb, depth + 1, shared, restA));
    }
  }
  return makeNode(std::move(edges));
}
}  // namespace

ConstraintTree ConstraintTree::join(const ConstraintTree& other) const {
  std::vector<LogVar> shared;
  for (const auto& v : logvars_)
    if (other.hasLogvar(v)) shared.push_back(v);
  std::vector<LogVar> restA;
  for (const auto& v : logvars_)
    if (!other.hasLogvar(v)) restA.push_back(v);
  std::vector<LogVar> restB;
  for (const auto& v : other.logvars_)
    if (!hasLogvar(v)) restB.push_back(v);

  std::vector<LogVar> orderA = shared;
  orderA.insert(orderA.end(), restA.begin(), restA.end());
  std::vector<LogVar> orderB = shared;
  orderB.insert(orderB.end(), restB.begin(), restB.end());
  ConstraintTree a = reorder(orderA);
  ConstraintTree b = other.reorder(orderB);

  std::vector<LogVar> resultOrder = orderA;
  resultOrder.insert(resultOrder.end(), restB.begin(), restB.end());
  CtNodePtr root = joinRec(a.root_, b.root_, 0, shared.size(), restA.size());
  return ConstraintTree(std::move(resultOrder), root);
}

ConstraintTree ConstraintTree::cartesian(const ConstraintTree& other) const {
  for (const auto& v : other.logvars_)
    if (hasLogvar(v))
      throw StructuralError("cartesian: shared logvar '" + v.name() + "'");
  return join(other);
}

namespace {
// Partitions `node` (whose top `prefix` levels are matched against `probe`)
// into the part whose prefix occurs in the probe and the part that does not.
std::pair<CtNodePtr, CtNodePtr> splitRec(const CtNodePtr& node,
                                         const CtNodePtr& probe,
                                         std::size_t depth,
                                         std::size_t prefix) {
  if (!node) return {nullptr, nullptr};
  if (!probe) return {nullptr, node};
  if (depth == prefix) return {node, nullptr};
  std::vector<std::pair<std::vector<int>, CtNodePtr>> commonEdges;
  std::vector<std::pair<std::vector<int>, CtNodePtr>> exclEdges;
  for (const auto& [label, child] : node->edges) {
    std::vector<int> uncovered = label;
    for (const auto& [plabel, pchild] : probe->edges) {
      std::vector<int> hit = sortedIntersect(uncovered, plabel);
      if (hit.empty()) continue;
      uncovered = sortedDifference(uncovered, hit);
      auto [com, exc] = splitRec(child, pchild, depth + 1, prefix);
      if (com) commonEdges.emplace_back(hit, com);
      if (exc) exclEdges.emplace_back(std::move(hit), exc);
    }
    if (!uncovered.empty()) exclEdges.emplace_back(std::move(uncovered), child);
  }
  return {makeNode(std::move(commonEdges)), makeNode(std::move(exclEdges))};
}
}  // namespace

std::pair<ConstraintTree, ConstraintTree> ConstraintTree::splitOnOverlap(
    const ConstraintTree& other, const std::vector<LogVar>& vars,
    const std::vector<LogVar>& otherVars) const {
  if (vars.size() != otherVars.size())
    throw StructuralError("splitOnOverlap: var lists differ in length");
  ConstraintTree probe = other.project(otherVars);
  std::vector<LogVar> order = vars;
  for (const auto& v : logvars_)
    if (std::find(vars.begin(), vars.end(), v) == vars.end())
      order.push_back(v);
  ConstraintTree moved = reorder(order);
  auto [com, exc] = splitRec(moved.root_, probe.root_, 0, vars.size());
  ConstraintTree commonTree =
      ConstraintTree(order, com).reorder(logvars_);
  ConstraintTree exclTree = ConstraintTree(order, exc).reorder(logvars_);
  return {std::move(commonTree), std::move(exclTree)};
}

std::uint64_t ConstraintTree::countFor(const std::vector<LogVar>& Y,
                                       const std::vector<LogVar>& Z,
                                       const std::vector<int>& tuple) const {
  if (!contains(tuple))
    throw PreconditionError("countFor: tuple not in constraint");
  if (Y.empty()) return 1;
  ConstraintTree selected = *this;
  for (const auto& z : Z) selected = selected.selectEq(z, tuple[levelOf(z)]);
  return selected.project(Y).cardinality();
}

namespace {
// Walks to `depth` and reports the cardinality of each distinct truncated
// subtree of `width` further levels, ignoring what lies below those.
void collectGroupCounts(const CtNodePtr& node, std::size_t depth,
                        std::size_t width,
                        std::unordered_map<const CtNode*, std::uint64_t>& seen,
                        std::vector<std::uint64_t>& out) {
  if (!node) return;
  if (depth == 0) {
    auto it = seen.find(node.get());
    if (it != seen.end()) return;
    CtNodePtr trunc = truncateAt(node, width);
    std::unordered_map<const CtNode*, std::uint64_t> memo;
    std::uint64_t card = nodeCardinality(trunc, memo);
    seen.emplace(node.get(), card);
    out.push_back(card);
    return;
  }
  for (const auto& [label, child] : node->edges)
    collectGroupCounts(child, depth - 1, width, seen, out);
}

// Rebuilds the top `depth` levels keeping only branches whose node at
// `depth` satisfies `keep`.
template <typename Keep>
CtNodePtr filterAtDepth(const CtNodePtr& node, std::size_t depth,
                        const Keep& keep) {
  if (!node) return nullptr;
  if (depth == 0) return keep(node) ? node : nullptr;
  std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
  for (const auto& [label, child] : node->edges)
    edges.emplace_back(label, filterAtDepth(child, depth - 1, keep));
  return makeNode(std::move(edges));
}
}  // namespace

std::optional<std::uint64_t> ConstraintTree::conditionalCount(
    const std::vector<LogVar>& Y, const std::vector<LogVar>& Z) const {
  if (Y.empty()) return 1;
  if (isEmpty())
    throw StructuralError("conditionalCount on an empty constraint");
  std::vector<LogVar> order = Z;
  order.insert(order.end(), Y.begin(), Y.end());
  for (const auto& v : logvars_)
    if (std::find(order.begin(), order.end(), v) == order.end())
      order.push_back(v);
  if (order.size() != logvars_.size())
    throw StructuralError("conditionalCount: Y and Z must be disjoint");
  ConstraintTree moved = reorder(order);
  std::unordered_map<const CtNode*, std::uint64_t> seen;
  std::vector<std::uint64_t> counts;
  collectGroupCounts(moved.root_, Z.size(), Y.size(), seen, counts);
  for (std::size_t i = 1; i < counts.size(); ++i)
    if (counts[i] != counts[0]) return std::nullopt;
  return counts.empty() ? std::optional<std::uint64_t>(0)
                        : std::optional<std::uint64_t>(counts[0]);
}

std::vector<std::pair<std::uint64_t, ConstraintTree>>
ConstraintTree::groupByCount(const std::vector<LogVar>& Y,
                             const std::vector<LogVar>& Z) const {
  std::vector<LogVar> order = Z;
  order.insert(order.end(), Y.begin(), Y.end());
  for (const auto& v : logvars_)
    if (std::find(order.begin(), order.end(), v) == order.end())
      order.push_back(v);
  ConstraintTree moved = reorder(order);
  if (Y.empty()) {
    // COUNT is constantly 1: a single cell.
    if (isEmpty()) return {};
    return {{1, *this}};
  }

  std::unordered_map<const CtNode*, std::uint64_t> countOf;
  std::vector<std::uint64_t> counts;
  collectGroupCounts(moved.root_, Z.size(), Y.size(), countOf, counts);
  std::set<std::uint64_t> keys(counts.begin(), counts.end());

  std::vector<std::pair<std::uint64_t, ConstraintTree>> cells;
  for (std::uint64_t key : keys) {
    CtNodePtr filtered = filterAtDepth(
        moved.root_, Z.size(),
        [&](const CtNodePtr& n) { return countOf.at(n.get()) == key; });
    cells.emplace_back(key,
                       ConstraintTree(order, filtered).reorder(logvars_));
  }
  return cells;
}

namespace {
using JointKey = std::pair<std::uint64_t, std::uint64_t>;

std::uint64_t labelTotal(const CtNodePtr& node) {
  if (!node) return 0;
  std::uint64_t total = 0;
  for (const auto& [label, child] : node->edges) total += label.size();
  return total;
}

// Simultaneous walk of (full, part1, part2). At the prefix boundary the key
// is (|X in part1|, |X in part2|). Builds the filtered tree for `want`.
CtNodePtr filterJoint(const CtNodePtr& node, const CtNodePtr& p1,
                      const CtNodePtr& p2, std::size_t depth,
                      const JointKey& want, bool collectOnly,
                      std::set<JointKey>* keys) {
  if (!node) return nullptr;
  if (depth == 0) {
    JointKey key{labelTotal(p1), labelTotal(p2)};
    if (keys) keys->insert(key);
    if (collectOnly) return nullptr;
    return key == want ? node : nullptr;
  }
  std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
  for (const auto& [label, child] : node->edges) {
    // Refine the label by its alignment with p1's and p2's edges; the
    // pieces of the refinement descend into distinct child combinations.
    std::vector<std::pair<std::vector<int>, CtNodePtr>> byP1;
    std::vector<int> left = label;
    if (p1) {
      for (const auto& [l1, c1] : p1->edges) {
        std::vector<int> hit = sortedIntersect(left, l1);
        if (hit.empty()) continue;
        left = sortedDifference(left, hit);
        byP1.emplace_back(std::move(hit), c1);
      }
    }
    if (!left.empty()) byP1.emplace_back(std::move(left), nullptr);
    for (auto& [piece1, c1] : byP1) {
      std::vector<int> rest = piece1;
      if (p2) {
        for (const auto& [l2, c2] : p2->edges) {
          std::vector<int> hit = sortedIntersect(rest, l2);
          if (hit.empty()) continue;
          rest = sortedDifference(rest, hit);
          edges.emplace_back(hit, filterJoint(child, c1, c2, depth - 1, want,
                                              collectOnly, keys));
        }
      }
      if (!rest.empty())
        edges.emplace_back(std::move(rest),
                           filterJoint(child, c1, nullptr, depth - 1, want,
                                       collectOnly, keys));
    }
  }
  return makeNode(std::move(edges));
}
}  // namespace

std::vector<std::pair<std::pair<std::uint64_t, std::uint64_t>, ConstraintTree>>
ConstraintTree::groupByJointCount(const LogVar& counted,
                                  const ConstraintTree& c1,
                                  const ConstraintTree& c2) const {
  std::vector<LogVar> order;
  for (const auto& v : logvars_)
    if (v != counted) order.push_back(v);
  std::size_t prefix = order.size();
  order.push_back(counted);
  ConstraintTree moved = reorder(order);
  ConstraintTree m1 = c1.isEmpty() ? c1 : c1.reorder(order);
  ConstraintTree m2 = c2.isEmpty() ? c2 : c2.reorder(order);

  std::set<JointKey> keys;
  filterJoint(moved.root_, m1.root_, m2.root_, prefix, {}, true, &keys);

  std::vector<std::pair<JointKey, ConstraintTree>> cells;
  for (const auto& key : keys) {
    CtNodePtr filtered =
        filterJoint(moved.root_, m1.root_, m2.root_, prefix, key, false,
                    nullptr);
    cells.emplace_back(key, ConstraintTree(order, filtered).reorder(logvars_));
  }
  return cells;
}

std::vector<std::pair<int, ConstraintTree>> ConstraintTree::groupByValue(
    const LogVar& var) const {
  std::vector<LogVar> order{var};
  for (const auto& v : logvars_)
    if (v != var) order.push_back(v);
  ConstraintTree moved = reorder(order);
  std::vector<std::pair<int, ConstraintTree>> cells;
  if (moved.isEmpty()) return cells;
  for (const auto& [label, child] : moved.root_->edges) {
    for (int v : label) {
      CtNodePtr cell = makeNode({{std::vector<int>{v}, child}});
      cells.emplace_back(v, ConstraintTree(order, cell).reorder(logvars_));
    }
  }
  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return cells;
}

ConstraintTree ConstraintTree::duplicateColumn(const LogVar& src,
                                               const LogVar& dst) const {
  if (src.domain() != dst.domain())
    throw StructuralError("duplicateColumn: domain mismatch");
  if (hasLogvar(dst))
    throw StructuralError("duplicateColumn: column already present");
  // Move src to the bottom, then give each of its values a singleton child.
  std::vector<LogVar> order;
  for (const auto& v : logvars_)
    if (v != src) order.push_back(v);
  order.push_back(src);
  ConstraintTree moved = reorder(order);

  struct Rec {
    std::size_t bottom;
    CtNodePtr operator()(const CtNodePtr& node, std::size_t depth) const {
      if (!node) return nullptr;
      std::vector<std::pair<std::vector<int>, CtNodePtr>> edges;
      if (depth == bottom) {
        for (const auto& [label, child] : node->edges)
          for (int v : label)
            edges.emplace_back(std::vector<int>{v},
                               makeNode({{std::vector<int>{v}, child}}));
      } else {
        for (const auto& [label, child] : node->edges)
          edges.emplace_back(label, (*this)(child, depth + 1));
      }
      return makeNode(std::move(edges));
    }
  } rec{order.size() - 1};

  CtNodePtr root = rec(moved.root_, 0);
  order.push_back(dst);
  std::vector<LogVar> finalOrder = logvars_;
  finalOrder.push_back(dst);
  return ConstraintTree(order, root).reorder(finalOrder);
}

bool ConstraintTree::sameRelation(const ConstraintTree& other,
                                  const std::vector<LogVar>& vars,
                                  const std::vector<LogVar>& otherVars) const {
  ConstraintTree a = project(vars);
  ConstraintTree b = other.project(otherVars);
  return nodeEqual(a.root_, b.root_);
}

bool ConstraintTree::subsetOf(const ConstraintTree& other,
                              const std::vector<LogVar>& vars,
                              const std::vector<LogVar>& otherVars) const {
  auto [com, exc] = project(vars).splitOnOverlap(other, vars, otherVars);
  return exc.isEmpty();
}

bool ConstraintTree::overlaps(const ConstraintTree& other,
                              const std::vector<LogVar>& vars,
                              const std::vector<LogVar>& otherVars) const {
  auto [com, exc] = project(vars).splitOnOverlap(other, vars, otherVars);
  return !com.isEmpty();
}

bool ConstraintTree::structurallyEqual(const ConstraintTree& other) const {
  return logvars_ == other.logvars_ && nodeEqual(root_, other.root_);
}

namespace {
void dumpNode(const CtNodePtr& node, const std::vector<LogVar>& vars,
              std::size_t depth, std::ostringstream& os) {
  if (!node || node->edges.empty()) return;
  for (const auto& [label, child] : node->edges) {
    os << std::string(2 * depth, ' ') << vars[depth].name() << " in {";
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (i) os << ',';
      os << vars[depth].domain()->constants()[label[i]];
    }
    os << "}\n";
    dumpNode(child, vars, depth + 1, os);
  }
}
}  // namespace

std::string ConstraintTree::dump() const {
  std::ostringstream os;
  if (isEmpty()) {
    os << "(empty)\n";
    return os.str();
  }
  if (logvars_.empty()) {
    os << "(nullary)\n";
    return os.str();
  }
  dumpNode(root_, logvars_, 0, os);
  return os.str();
}

// --- TupleSet ---------------------------------------------------------------

TupleSet::TupleSet(std::vector<LogVar> logvars,
                   std::vector<std::vector<int>> tuples)
    : logvars_(std::move(logvars)), tuples_(std::move(tuples)) {
  for (const auto& t : tuples_)
    if (t.size() != logvars_.size())
      throw StructuralError("TupleSet: tuple arity mismatch");
  normalize();
}

void TupleSet::normalize() {
  std::sort(tuples_.begin(), tuples_.end());
  tuples_.erase(std::unique(tuples_.begin(), tuples_.end()), tuples_.end());
}

TupleSet TupleSet::fromTree(const ConstraintTree& t) {
  return TupleSet(t.logvars(), t.tuples());
}

std::size_t TupleSet::levelOf(const LogVar& v) const {
  for (std::size_t i = 0; i < logvars_.size(); ++i)
    if (logvars_[i] == v) return i;
  throw StructuralError("TupleSet: logvar '" + v.name() + "' not present");
}

TupleSet TupleSet::project(const std::vector<LogVar>& vars) const {
  std::vector<std::size_t> idx;
  idx.reserve(vars.size());
  for (const auto& v : vars) idx.push_back(levelOf(v));
  std::vector<std::vector<int>> out;
  out.reserve(tuples_.size());
  for (const auto& t : tuples_) {
    std::vector<int> row;
    row.reserve(idx.size());
    for (std::size_t i : idx) row.push_back(t[i]);
    out.push_back(std::move(row));
  }
  return TupleSet(vars, std::move(out));
}

TupleSet TupleSet::selectEq(const LogVar& var, int value) const {
  std::size_t i = levelOf(var);
  std::vector<std::vector<int>> out;
  for (const auto& t : tuples_)
    if (t[i] == value) out.push_back(t);
  return TupleSet(logvars_, std::move(out));
}

TupleSet TupleSet::rename(
    const std::vector<std::pair<LogVar, LogVar>>& mapping) const {
  std::vector<LogVar> renamed = logvars_;
  for (const auto& [from, to] : mapping) renamed[levelOf(from)] = to;
  return TupleSet(std::move(renamed), tuples_);
}

TupleSet TupleSet::join(const TupleSet& other) const {
  std::vector<std::pair<std::size_t, std::size_t>> shared;
  std::vector<std::size_t> restB;
  for (std::size_t j = 0; j < other.logvars_.size(); ++j) {
    bool found = false;
    for (std::size_t i = 0; i < logvars_.size(); ++i)
      if (logvars_[i] == other.logvars_[j]) {
        shared.emplace_back(i, j);
        found = true;
        break;
      }
    if (!found) restB.push_back(j);
  }
  std::vector<LogVar> resultVars = logvars_;
  for (std::size_t j : restB) resultVars.push_back(other.logvars_[j]);
  std::vector<std::vector<int>> out;
  for (const auto& ta : tuples_) {
    for (const auto& tb : other.tuples_) {
      bool match = true;
      for (const auto& [i, j] : shared)
        if (ta[i] != tb[j]) {
          match = false;
          break;
        }
      if (!match) continue;
      std::vector<int> row = ta;
      for (std::size_t j : restB) row.push_back(tb[j]);
      out.push_back(std::move(row));
    }
  }
  return TupleSet(std::move(resultVars), std::move(out));
}

std::pair<TupleSet, TupleSet> TupleSet::splitOnOverlap(
    const TupleSet& other, const std::vector<LogVar>& vars,
    const std::vector<LogVar>& otherVars) const {
  TupleSet probe = other.project(otherVars);
  std::set<std::vector<int>> probeSet(probe.tuples_.begin(),
                                      probe.tuples_.end());
  std::vector<std::size_t> idx;
  for (const auto& v : vars) idx.push_back(levelOf(v));
  std::vector<std::vector<int>> com, exc;
  for (const auto& t : tuples_) {
    std::vector<int> key;
    key.reserve(idx.size());
    for (std::size_t i : idx) key.push_back(t[i]);
    (probeSet.count(key) ? com : exc).push_back(t);
  }
  return {TupleSet(logvars_, std::move(com)),
          TupleSet(logvars_, std::move(exc))};
}

std::uint64_t TupleSet::countFor(const std::vector<LogVar>& Y,
                                 const std::vector<LogVar>& Z,
                                 const std::vector<int>& tuple) const {
  if (Y.empty()) return 1;
  TupleSet selected = *this;
  for (const auto& z : Z) selected = selected.selectEq(z, tuple[levelOf(z)]);
  return selected.project(Y).size();
}

std::optional<std::uint64_t> TupleSet::conditionalCount(
    const std::vector<LogVar>& Y, const std::vector<LogVar>& Z) const {
  if (Y.empty()) return 1;
  std::optional<std::uint64_t> result;
  for (const auto& t : tuples_) {
    std::uint64_t c = countFor(Y, Z, t);
    if (!result)
      result = c;
    else if (*result != c)
      return std::nullopt;
  }
  return result ? result : std::optional<std::uint64_t>(0);
}

bool TupleSet::sameRelation(const TupleSet& other) const {
  if (logvars_.size() != other.logvars_.size()) return false;
  TupleSet reordered = other.project(logvars_);
  return tuples_ == reordered.tuples_;
}

}  // namespace lve
