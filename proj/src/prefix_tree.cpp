#include "infsub/prefix_tree.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace infsub {

namespace {

std::vector<QueryId> intersect_sorted(const std::vector<QueryId>& a,
                                      const std::vector<QueryId>& b) {
  std::vector<QueryId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

PrefixTree::PrefixTree(std::vector<QueryId> all_queries) {
  root_ = std::make_unique<TreeNode>();
  auto payload = std::make_unique<PathPayload>();
  payload->queries = std::move(all_queries);  // the empty set relates to all
  root_->payload = std::move(payload);
}

TreeNode* PrefixTree::find_path(std::span<const UserId> s) {
  TreeNode* node = root_.get();
  for (UserId u : s) {
    auto it = node->children.find(u);
    if (it == node->children.end()) {
      auto child = std::make_unique<TreeNode>();
      child->user = u;
      child->parent = node;
      TreeNode* raw = child.get();
      node->children.emplace(u, std::move(child));
      index_insert(raw);
      ++node_count_;
      node = raw;
    } else {
      node = it->second.get();
    }
  }
  return node;
}

std::vector<PrefixTree::Visited> PrefixTree::dfs_marginals(
    UserId u_r, const std::vector<QueryId>& q_ur, const EdgeStore& edges,
    std::size_t k, const PruneFlags& flags, const QueryLookup& queries_of,
    std::uint64_t seq) {
  std::vector<CoverSlot> slots;
  if (const auto* row = edges.influence_set(u_r)) {
    slots.reserve(row->size());
    for (const auto& [v, w] : *row) slots.push_back({v, w, 0.0});
    std::sort(slots.begin(), slots.end(),
              [](const CoverSlot& a, const CoverSlot& b) { return a.v < b.v; });
  }
  const double f_ur = edges.user_influence(u_r);
  std::vector<QueryId> active = q_ur;  // Q of the empty path is "everything"
  std::vector<Visited> out;
  dfs_visit(root_.get(), u_r, f_ur, active, slots, edges, k, flags, queries_of,
            seq, out);
  return out;
}

void PrefixTree::dfs_visit(TreeNode* node, UserId u_r, double f_ur,
                           std::vector<QueryId>& active,
                           std::vector<CoverSlot>& slots,
                           const EdgeStore& edges, std::size_t k,
                           const PruneFlags& flags,
                           const QueryLookup& queries_of, std::uint64_t seq,
                           std::vector<Visited>& out) {
  if (node->payload) {
    PathPayload& pl = *node->payload;
    if (flags.threshold && pl.set.size() < k) {
      // f(u_r) bounds every marginal below; e_min_subtree is +inf for an
      // estimation-free subtree, so those are skipped outright.
      const double bound = (0.5 * node->e_min_subtree - pl.influence) /
                           static_cast<double>(k - pl.set.size());
      if (f_ur < bound) {
        ++counters_.prune_threshold;
        return;
      }
    }
    double gain = 0.0;
    for (const CoverSlot& slot : slots)
      if (slot.w_ur > slot.cover) gain += slot.w_ur - slot.cover;
    pl.marg = gain;
    pl.marg_seq = seq;
    ++counters_.marginal_evals;
    out.push_back({node, gain});
  }
  for (auto& [user, child_ptr] : node->children) {
    TreeNode* child = child_ptr.get();
    if (flags.user_match && child->user == u_r) {
      ++counters_.prune_user_match;
      continue;
    }
    std::vector<QueryId> child_active =
        intersect_sorted(active, queries_of(child->user));
    if (flags.query_disjoint && child_active.empty()) {
      ++counters_.prune_query_disjoint;
      continue;
    }
    // Extend the running cover f(S -> v) by this node's user, undoing on the
    // way back up.
    std::vector<std::pair<std::size_t, double>> undo;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const double w = edges.edge_weight(child->user, slots[i].v);
      if (w > slots[i].cover) {
        undo.emplace_back(i, slots[i].cover);
        slots[i].cover = w;
      }
    }
    dfs_visit(child, u_r, f_ur, child_active, slots, edges, k, flags,
              queries_of, seq, out);
    for (auto it = undo.rbegin(); it != undo.rend(); ++it)
      slots[it->first].cover = it->second;
  }
}

void PrefixTree::modify(UserId u_r, TreeNode* source, Estimation* est,
                        ModifyMemo& memo, const std::vector<QueryId>& q_ur,
                        std::uint64_t seq) {
  PathPayload* sp = source->payload.get();
  if (!sp) throw std::logic_error("modify: source path has no payload");
  TreeNode* target = nullptr;
  auto memo_it = memo.find(source);
  if (memo_it != memo.end()) {
    target = memo_it->second;
  } else {
    std::vector<UserId> super = sp->set;
    super.insert(std::upper_bound(super.begin(), super.end(), u_r), u_r);
    target = find_path(super);
    if (sp->marg_seq != seq)
      throw std::logic_error("modify: marginal cache is stale");
    if (!target->payload) {
      auto pl = std::make_unique<PathPayload>();
      pl->set = std::move(super);
      target->payload = std::move(pl);
      ++counters_.paths_created;
    }
    // The first resolution of this source during this action (re)writes the
    // target's influence, existing path or not. Re-arrivals of a member grow
    // the live coverage of every set containing it; without this refresh the
    // stored value would lag behind for good.
    target->payload->influence = sp->influence + sp->marg;
    target->payload->queries = intersect_sorted(sp->queries, q_ur);
    memo.emplace(source, target);
  }
  unlink(est);
  link(est, target);
}

void PrefixTree::clear_pass(const std::vector<Visited>& visited) {
  for (const Visited& v : visited) {
    if (v.node == root_.get()) continue;
    if (v.node->payload && v.node->payload->ests.empty()) clear_from(v.node);
  }
}

void PrefixTree::link_to_root(Estimation* est) { link(est, root_.get()); }

void PrefixTree::release_estimation(Estimation* est) {
  TreeNode* node = est->node;
  unlink(est);
  if (node && node != root_.get() && node->payload &&
      node->payload->ests.empty())
    clear_from(node);
}

void PrefixTree::apply_decay(double d) {
  // Recursive walk; payload influences (and any stale marginal cache) scale
  // by the common factor.
  struct Walker {
    double d;
    void operator()(TreeNode* node) const {
      if (node->payload) {
        node->payload->influence *= d;
        node->payload->marg *= d;
      }
      for (auto& [user, child] : node->children) (*this)(child.get());
    }
  };
  Walker{d}(root_.get());
}

void PrefixTree::recompute_emin_all() { recompute_emin(root_.get()); }

std::string PrefixTree::debug_dump() const {
  std::vector<std::pair<std::vector<UserId>, std::string>> lines;
  for_each_payload([&](const TreeNode&, const PathPayload& pl) {
    std::ostringstream os;
    os << "S=";
    for (std::size_t i = 0; i < pl.set.size(); ++i)
      os << (i ? "," : "") << pl.set[i];
    os << " f=" << fmt_double(pl.influence) << " Q=";
    for (std::size_t i = 0; i < pl.queries.size(); ++i)
      os << (i ? "," : "") << pl.queries[i];
    os << " E=";
    std::vector<double> values;
    for (const Estimation* est : pl.ests) values.push_back(est->value);
    std::sort(values.begin(), values.end());
    for (std::size_t i = 0; i < values.size(); ++i)
      os << (i ? "," : "") << fmt_double(values[i]);
    lines.emplace_back(pl.set, os.str());
  });
  std::sort(lines.begin(), lines.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (const auto& [set, line] : lines) {
    out += line;
    out += '\n';
  }
  return out;
}

const TreeNode* PrefixTree::user_index_head(UserId u) const {
  auto it = user_index_.find(u);
  return it == user_index_.end() ? nullptr : it->second;
}

void PrefixTree::link(Estimation* est, TreeNode* node) {
  if (!node->payload) throw std::logic_error("link: node has no payload");
  node->payload->ests.push_back(est);
  est->node = node;
  refresh_emin_upward(node);
}

void PrefixTree::unlink(Estimation* est) {
  TreeNode* node = est->node;
  if (!node) return;
  auto& ests = node->payload->ests;
  auto it = std::find(ests.begin(), ests.end(), est);
  if (it == ests.end()) throw std::logic_error("unlink: estimation not linked");
  ests.erase(it);
  est->node = nullptr;
  refresh_emin_upward(node);
}

void PrefixTree::clear_from(TreeNode* node) {
  node->payload.reset();
  ++counters_.paths_erased;
  TreeNode* cur = node;
  while (cur != root_.get() && !cur->payload && cur->children.empty()) {
    TreeNode* parent = cur->parent;
    index_remove(cur);
    parent->children.erase(cur->user);
    --node_count_;
    cur = parent;
  }
  refresh_emin_upward(cur);
}

double PrefixTree::own_emin(const TreeNode* node) {
  double m = std::numeric_limits<double>::infinity();
  if (node->payload)
    for (const Estimation* est : node->payload->ests)
      if (est->value < m) m = est->value;
  return m;
}

void PrefixTree::refresh_emin_upward(TreeNode* node) {
  for (TreeNode* n = node; n; n = n->parent) {
    double m = own_emin(n);
    for (const auto& [user, child] : n->children)
      if (child->e_min_subtree < m) m = child->e_min_subtree;
    if (m == n->e_min_subtree) break;
    n->e_min_subtree = m;
  }
}

double PrefixTree::recompute_emin(TreeNode* node) {
  double m = own_emin(node);
  for (auto& [user, child] : node->children) {
    const double c = recompute_emin(child.get());
    if (c < m) m = c;
  }
  node->e_min_subtree = m;
  return m;
}

void PrefixTree::index_insert(TreeNode* node) {
  auto [it, inserted] = user_index_.try_emplace(node->user, node);
  if (!inserted) {
    node->next_same_user = it->second;
    it->second = node;
  }
}

void PrefixTree::index_remove(TreeNode* node) {
  auto it = user_index_.find(node->user);
  if (it == user_index_.end())
    throw std::logic_error("index_remove: user missing from occurrence index");
  if (it->second == node) {
    if (node->next_same_user)
      it->second = node->next_same_user;
    else
      user_index_.erase(it);
  } else {
    TreeNode* prev = it->second;
    while (prev->next_same_user && prev->next_same_user != node)
      prev = prev->next_same_user;
    if (prev->next_same_user != node)
      throw std::logic_error("index_remove: node missing from its chain");
    prev->next_same_user = node->next_same_user;
  }
  node->next_same_user = nullptr;
}

}  // namespace infsub
