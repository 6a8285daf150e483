//===-- schedule_check.cpp - Independent mapping verifier ----------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// Deliberately shares nothing with the scheduler beyond neighbors(); every
// property is recomputed from the placements and routes alone.
//
//===----------------------------------------------------------------------===//

#include <algorithm>
#include <map>
#include <set>

#include "malta/mapper.hpp"

namespace malta {

namespace {

std::string coord_text(Coord c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

} // namespace

std::vector<std::string> check_schedule(const KernelGraph &k,
                                        const FabricSpec &f,
                                        const MappingResult &m) {
  std::vector<std::string> bad;
  if (m.ii < 1)
    bad.push_back("ii must be positive");
  if (m.ii > f.config_mem_depth)
    bad.push_back("ii " + std::to_string(m.ii) + " exceeds config_mem_depth " +
                  std::to_string(f.config_mem_depth));
  if (!bad.empty() && m.ii < 1)
    return bad;

  std::map<int, const Placement *> where;
  for (const Placement &p : m.placements)
    if (!where.emplace(p.node, &p).second)
      bad.push_back("node " + std::to_string(p.node) + " placed twice");

  std::set<std::pair<int, int>> slots;
  int last = 0;
  for (const DfgNode &n : k.nodes) {
    auto it = where.find(n.id);
    if (it == where.end()) {
      bad.push_back("node " + std::to_string(n.id) + " is not placed");
      continue;
    }
    const Placement &p = *it->second;
    const std::string who = "node " + std::to_string(n.id);
    if (!f.contains(p.tile))
      bad.push_back(who + " placed outside the grid at " + coord_text(p.tile));
    if (!f.fu_kinds.contains(n.kind))
      bad.push_back(who + " needs " + std::string(to_string(n.kind)) +
                    " which the fabric lacks");
    if (p.cycle < 0)
      bad.push_back(who + " starts at negative cycle");
    if (!slots.emplace(f.index_of(p.tile), p.cycle % m.ii).second)
      bad.push_back(who + " collides on tile " + coord_text(p.tile) +
                    " slot " + std::to_string(p.cycle % m.ii));
    last = std::max(last, p.cycle + n.latency);
  }
  if (where.size() != k.nodes.size())
    bad.push_back("placement count does not match node count");
  if (m.schedule_len < last)
    bad.push_back("schedule_len " + std::to_string(m.schedule_len) +
                  " shorter than last completion " + std::to_string(last));

  if (m.routes.size() != k.edges.size()) {
    bad.push_back("route count does not match edge count");
    return bad;
  }
  for (std::size_t i = 0; i < k.edges.size(); ++i) {
    const DfgEdge &e = k.edges[i];
    const Route &r = m.routes[i];
    const std::string which = "edge " + std::to_string(e.src) + "->" +
                              std::to_string(e.dst);
    if (r.edge != e) {
      bad.push_back(which + " has a route for a different edge");
      continue;
    }
    auto s = where.find(e.src);
    auto d = where.find(e.dst);
    if (s == where.end() || d == where.end())
      continue;
    if (r.path.empty() || r.path.front() != s->second->tile ||
        r.path.back() != d->second->tile) {
      bad.push_back(which + " route does not join its endpoints");
      continue;
    }
    bool linked = true;
    for (std::size_t h = 0; h + 1 < r.path.size(); ++h) {
      if (!f.contains(r.path[h]) || !f.contains(r.path[h + 1])) {
        linked = false;
        break;
      }
      const auto next = neighbors(f, r.path[h]);
      if (std::find(next.begin(), next.end(), r.path[h + 1]) == next.end())
        linked = false;
    }
    if (!linked) {
      bad.push_back(which + " route steps between non-adjacent tiles");
      continue;
    }
    const long long ready = static_cast<long long>(s->second->cycle) +
                            k.node(e.src).latency + r.hops() -
                            static_cast<long long>(e.distance) * m.ii;
    if (d->second->cycle < ready)
      bad.push_back(which + " consumer starts at " +
                    std::to_string(d->second->cycle) + " before operand ready at " +
                    std::to_string(ready));
  }
  return bad;
}

} // namespace malta
