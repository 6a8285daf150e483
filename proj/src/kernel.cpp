//===-- kernel.cpp - Loop-kernel dataflow graphs and transforms ----*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//

#include "malta/kernel.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "json_util.hpp"
#include "malta/data.hpp"
#include "malta/error.hpp"

namespace malta {

namespace {

constexpr std::string_view kKernelFile = "kernel file";

std::filesystem::path kernel_dir() { return data_dir() / "kernels"; }

} // namespace

std::size_t KernelGraph::index_of(int id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id)
      return i;
  throw Error(ErrorCode::InvalidKernel,
              name + ": no node with id " + std::to_string(id));
}

long long KernelGraph::total_latency() const {
  long long sum = 0;
  for (const DfgNode &n : nodes)
    sum += n.latency;
  return sum;
}

bool accepts_carried_value(FuKind kind) {
  return kind == FuKind::Phi || kind == FuKind::Mac;
}

std::vector<std::string> kernel_problems(const KernelGraph &k) {
  std::vector<std::string> out;
  if (k.trip_count < 1)
    out.push_back("trip_count must be positive");
  if (k.nodes.empty())
    out.push_back("kernel has no nodes");

  std::map<int, std::size_t> index;
  for (std::size_t i = 0; i < k.nodes.size(); ++i) {
    const DfgNode &n = k.nodes[i];
    if (!index.emplace(n.id, i).second)
      out.push_back("duplicate node id " + std::to_string(n.id));
    if (n.latency < 1 || n.latency > kMaxNodeLatency)
      out.push_back("node " + std::to_string(n.id) + " latency " +
                    std::to_string(n.latency) + " outside [1, 8]");
  }

  std::vector<std::vector<std::size_t>> intra(k.nodes.size());
  std::vector<int> indegree(k.nodes.size(), 0);
  for (const DfgEdge &e : k.edges) {
    const std::string label = "edge " + std::to_string(e.src) + "->" +
                              std::to_string(e.dst);
    auto s = index.find(e.src);
    auto d = index.find(e.dst);
    if (s == index.end() || d == index.end()) {
      out.push_back(label + " references a missing node");
      continue;
    }
    if (e.distance < 0) {
      out.push_back(label + " has negative distance");
      continue;
    }
    if (e.distance == 0) {
      if (e.src == e.dst) {
        out.push_back(label + " is a zero-distance self loop");
        continue;
      }
      intra[s->second].push_back(d->second);
      ++indegree[d->second];
    } else if (!accepts_carried_value(k.nodes[d->second].kind)) {
      out.push_back(label + " carries a value into a " +
                    std::string(to_string(k.nodes[d->second].kind)) +
                    " node (only PHI and MAC accept carried values)");
    }
  }

  // Kahn's algorithm on the distance-0 subgraph.
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < indegree.size(); ++i)
    if (indegree[i] == 0)
      ready.push_back(i);
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::size_t cur = ready.back();
    ready.pop_back();
    ++visited;
    for (std::size_t nxt : intra[cur])
      if (--indegree[nxt] == 0)
        ready.push_back(nxt);
  }
  if (visited != k.nodes.size())
    out.push_back("intra-iteration edges contain a cycle");
  return out;
}

void validate_kernel(const KernelGraph &k) {
  auto problems = kernel_problems(k);
  if (!problems.empty())
    throw Error(ErrorCode::InvalidKernel, k.name + ": " + problems.front());
}

std::map<FuKind, int> op_census(const KernelGraph &k) {
  std::map<FuKind, int> census;
  for (const DfgNode &n : k.nodes)
    ++census[n.kind];
  return census;
}

FuSet required_kinds(const KernelGraph &k) {
  FuSet s;
  for (const DfgNode &n : k.nodes)
    s.insert(n.kind);
  return s;
}

bool has_carried_edges(const KernelGraph &k) {
  return std::any_of(k.edges.begin(), k.edges.end(),
                     [](const DfgEdge &e) { return e.distance > 0; });
}

KernelGraph unroll(const KernelGraph &k, int factor) {
  if (factor < 1)
    throw Error(ErrorCode::InvalidArgument, "unroll factor must be >= 1");
  if (k.trip_count % factor != 0)
    throw Error(ErrorCode::NonDivisibleFactor,
                k.name + ": unroll factor " + std::to_string(factor) +
                    " does not divide trip count " +
                    std::to_string(k.trip_count));
  if (k.lanes != 1 && factor != 1)
    throw Error(ErrorCode::InvalidArgument,
                k.name + ": unrolling a vectorized kernel is not supported");

  int stride = 0;
  for (const DfgNode &n : k.nodes)
    stride = std::max(stride, n.id + 1);

  KernelGraph out;
  out.name = k.name;
  out.trip_count = k.trip_count / factor;
  out.unroll_factor = k.unroll_factor * factor;
  out.lanes = k.lanes;
  out.nodes.reserve(k.nodes.size() * static_cast<std::size_t>(factor));
  for (int c = 0; c < factor; ++c) {
    for (const DfgNode &n : k.nodes) {
      DfgNode copy = n;
      copy.id = c * stride + n.id;
      copy.copy = c * k.unroll_factor + n.copy;
      out.nodes.push_back(copy);
    }
  }
  out.edges.reserve(k.edges.size() * static_cast<std::size_t>(factor));
  for (int c = 0; c < factor; ++c) {
    for (const DfgEdge &e : k.edges) {
      const int reach = c + e.distance;
      out.edges.push_back({c * stride + e.src,
                           (reach % factor) * stride + e.dst,
                           reach / factor});
    }
  }
  return out;
}

KernelGraph vectorize(const KernelGraph &k, int factor) {
  if (factor < 1)
    throw Error(ErrorCode::InvalidArgument, "vectorize factor must be >= 1");
  if (k.trip_count % factor != 0)
    throw Error(ErrorCode::NonDivisibleFactor,
                k.name + ": vectorize factor " + std::to_string(factor) +
                    " does not divide trip count " +
                    std::to_string(k.trip_count));
  for (const DfgEdge &e : k.edges) {
    if (e.distance > 0 && e.distance % factor != 0)
      throw Error(ErrorCode::CarriedDepBlocksVectorization,
                  k.name + ": carried edge " + std::to_string(e.src) + "->" +
                      std::to_string(e.dst) + " with distance " +
                      std::to_string(e.distance) + " blocks " +
                      std::to_string(factor) + "-wide vectorization");
  }
  KernelGraph out = k;
  out.trip_count = k.trip_count / factor;
  out.lanes = k.lanes * factor;
  for (DfgNode &n : out.nodes)
    n.lanes *= factor;
  for (DfgEdge &e : out.edges)
    e.distance /= factor;
  return out;
}

KernelGraph apply_sw(const KernelGraph &k, const SwParams &sw) {
  return vectorize(unroll(k, sw.unroll_factor), sw.vectorize_factor);
}

KernelGraph parse_kernel(std::string_view text) {
  using namespace detail;
  const nlohmann::json j = parse_json_text(text, kKernelFile);
  reject_unknown_keys(j, {"name", "description", "trip_count", "nodes", "edges"},
                      kKernelFile);
  KernelGraph k;
  k.name = get_string(require(j, "name", kKernelFile), "name", kKernelFile);
  k.trip_count = static_cast<int>(
      get_integer(require(j, "trip_count", kKernelFile), "trip_count", kKernelFile));

  const auto &nodes = require(j, "nodes", kKernelFile);
  if (!nodes.is_array())
    throw Error(ErrorCode::TypeMismatch, "kernel file: 'nodes' must be an array");
  for (const auto &jn : nodes) {
    reject_unknown_keys(jn, {"id", "kind", "latency"}, kKernelFile);
    DfgNode n;
    n.id = static_cast<int>(get_integer(require(jn, "id", kKernelFile), "id", kKernelFile));
    n.kind = parse_fu_kind(get_string(require(jn, "kind", kKernelFile), "kind", kKernelFile));
    n.latency = static_cast<int>(
        get_integer(require(jn, "latency", kKernelFile), "latency", kKernelFile));
    n.origin = n.id;
    k.nodes.push_back(n);
  }

  const auto &edges = require(j, "edges", kKernelFile);
  if (!edges.is_array())
    throw Error(ErrorCode::TypeMismatch, "kernel file: 'edges' must be an array");
  for (const auto &je : edges) {
    reject_unknown_keys(je, {"src", "dst", "distance"}, kKernelFile);
    DfgEdge e;
    e.src = static_cast<int>(get_integer(require(je, "src", kKernelFile), "src", kKernelFile));
    e.dst = static_cast<int>(get_integer(require(je, "dst", kKernelFile), "dst", kKernelFile));
    e.distance = je.contains("distance")
                     ? static_cast<int>(get_integer(je["distance"], "distance", kKernelFile))
                     : 0;
    k.edges.push_back(e);
  }
  validate_kernel(k);
  return k;
}

nlohmann::json kernel_to_json(const KernelGraph &k) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const DfgNode &n : k.nodes)
    nodes.push_back({{"id", n.id},
                     {"kind", std::string(to_string(n.kind))},
                     {"latency", n.latency}});
  nlohmann::json edges = nlohmann::json::array();
  for (const DfgEdge &e : k.edges)
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"distance", e.distance}});
  return {{"name", k.name},
          {"trip_count", k.trip_count},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

std::vector<std::string> builtin_kernel_names() {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto &entry : std::filesystem::directory_iterator(kernel_dir(), ec))
    if (entry.path().extension() == ".json")
      names.push_back(entry.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

KernelGraph load_kernel(std::string_view name_or_path) {
  const std::filesystem::path builtin =
      kernel_dir() / (std::string(name_or_path) + ".json");
  const bool is_name =
      name_or_path.find('/') == std::string_view::npos &&
      name_or_path.find(".json") == std::string_view::npos;
  if (is_name && std::filesystem::exists(builtin))
    return parse_kernel(detail::read_file(builtin.string()));
  const std::filesystem::path path{std::string(name_or_path)};
  if (!is_name && std::filesystem::is_regular_file(path))
    return parse_kernel(detail::read_file(path.string()));
  throw Error(ErrorCode::UnknownKernel,
              "unknown kernel '" + std::string(name_or_path) + "'");
}

} // namespace malta
