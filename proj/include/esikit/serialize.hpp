#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "esikit/engine.hpp"
#include "esikit/error.hpp"
#include "esikit/partition.hpp"

namespace esi {

using Json = nlohmann::json;

inline constexpr int kForestFormatVersion = 1;

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw InvalidArgument(where + ": unknown key '" + key + "'");
}

template <class T>
T get_as(const Json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(where + ": bad or missing '" + key + "' (" + e.what() + ")");
  }
}

inline ProcessKind parse_process(const std::string& s) {
  if (s == "mondrian") return ProcessKind::mondrian;
  if (s == "voronoi") return ProcessKind::voronoi;
  throw InvalidArgument("unknown p_process '" + s + "'");
}

inline Json domain_to_json(const Domain& d) { return {{"lower", d.lower()}, {"upper", d.upper()}}; }

inline Domain domain_from_json(const Json& j) {
  return Domain(get_as<std::vector<double>>(j, "lower", "domain"), get_as<std::vector<double>>(j, "upper", "domain"));
}

inline Json mondrian_node_to_json(const std::vector<MondrianNode>& nodes, std::size_t i) {
  const auto& n = nodes[i];
  Json j = {{"box", domain_to_json(n.box)}};
  if (!n.is_leaf()) {
    j["cut_dim"] = n.cut_dim;
    j["cut_pos"] = n.cut_pos;
    j["time"] = n.time;
    j["below"] = mondrian_node_to_json(nodes, static_cast<std::size_t>(n.below));
    j["above"] = mondrian_node_to_json(nodes, static_cast<std::size_t>(n.above));
  }
  return j;
}

// Rebuilds nodes in the sampler's pre-order (node, above, below).
inline std::int32_t mondrian_node_from_json(const Json& j, std::vector<MondrianNode>& nodes) {
  auto id = static_cast<std::int32_t>(nodes.size());
  nodes.push_back(MondrianNode{domain_from_json(j.at("box"))});
  if (j.contains("cut_dim")) {
    nodes[id].cut_dim = get_as<std::int32_t>(j, "cut_dim", "mondrian node");
    nodes[id].cut_pos = get_as<double>(j, "cut_pos", "mondrian node");
    nodes[id].time = get_as<double>(j, "time", "mondrian node");
    std::int32_t above = mondrian_node_from_json(j.at("above"), nodes);
    std::int32_t below = mondrian_node_from_json(j.at("below"), nodes);
    nodes[id].above = above;
    nodes[id].below = below;
  }
  return id;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configurations

inline Json to_json(const EsiConfig& c) {
  Json j = {{"p_process", to_string(c.p_process)},
            {"n_partitions", c.n_partitions},
            {"alpha", c.alpha},
            {"data_cond", c.data_cond},
            {"agg_function", c.agg_function},
            {"seed", c.seed}};
  if (const auto* idw = std::get_if<IdwParams>(&c.local)) {
    j["local_interpolator"] = "idw";
    j["exponent"] = idw->exponent;
  } else {
    const auto& k = std::get<KrigingParams>(c.local);
    j["local_interpolator"] = "kriging";
    j["model"] = to_string(k.model);
    j["nugget"] = k.nugget;
    j["range"] = k.range;
    j["sill"] = k.sill;
  }
  return j;
}

/// Reads an ESI configuration; absent keys keep their defaults, unknown keys
/// are rejected.
inline EsiConfig esi_config_from_json(const Json& j) {
  const std::string where = "esi config";
  detail::reject_unknown_keys(j,
                              {"p_process", "n_partitions", "alpha", "data_cond", "local_interpolator", "exponent",
                               "model", "nugget", "range", "sill", "agg_function", "seed"},
                              where);
  EsiConfig c;
  if (j.contains("p_process")) c.p_process = detail::parse_process(detail::get_as<std::string>(j, "p_process", where));
  if (j.contains("n_partitions")) c.n_partitions = detail::get_as<std::size_t>(j, "n_partitions", where);
  if (j.contains("alpha")) c.alpha = detail::get_as<double>(j, "alpha", where);
  if (j.contains("data_cond")) c.data_cond = detail::get_as<bool>(j, "data_cond", where);
  if (j.contains("agg_function")) c.agg_function = detail::get_as<std::string>(j, "agg_function", where);
  if (j.contains("seed")) c.seed = detail::get_as<std::uint64_t>(j, "seed", where);
  std::string local = j.contains("local_interpolator") ? detail::get_as<std::string>(j, "local_interpolator", where)
                                                       : std::string("idw");
  if (local == "idw") {
    for (const char* k : {"model", "nugget", "range", "sill"})
      if (j.contains(k)) throw InvalidArgument(where + ": '" + k + "' is only valid with the kriging interpolator");
    IdwParams p;
    if (j.contains("exponent")) p.exponent = detail::get_as<double>(j, "exponent", where);
    c.local = p;
  } else if (local == "kriging") {
    if (j.contains("exponent")) throw InvalidArgument(where + ": 'exponent' is only valid with the idw interpolator");
    KrigingParams p;
    if (j.contains("model")) p.model = parse_covariance_model(detail::get_as<std::string>(j, "model", where));
    if (j.contains("nugget")) p.nugget = detail::get_as<double>(j, "nugget", where);
    if (j.contains("range")) p.range = detail::get_as<double>(j, "range", where);
    if (j.contains("sill")) p.sill = detail::get_as<double>(j, "sill", where);
    c.local = p;
  } else {
    throw InvalidArgument(where + ": unknown local_interpolator '" + local + "'");
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Forests

inline Json to_json(const Forest& f) {
  Json parts = Json::array();
  for (const auto& p : f.partitions) {
    if (const auto* t = std::get_if<MondrianTree>(&p)) {
      parts.push_back(detail::mondrian_node_to_json(t->nodes(), 0));
    } else {
      const auto& v = std::get<VoronoiPartition>(p);
      Json nuclei = Json::array();
      for (std::size_t i = 0; i < v.nuclei().size(); ++i) {
        auto r = v.nuclei().row(i);
        nuclei.push_back(std::vector<double>(r.begin(), r.end()));
      }
      parts.push_back({{"nuclei", std::move(nuclei)}});
    }
  }
  return {{"format", "esikit.forest"},
          {"version", kForestFormatVersion},
          {"kind", to_string(f.kind)},
          {"domain", detail::domain_to_json(f.domain)},
          {"lambda", f.lambda},
          {"alpha", f.alpha},
          {"trained", f.trained},
          {"seed", f.seed},
          {"partitions", std::move(parts)}};
}

inline Forest forest_from_json(const Json& j) {
  const std::string where = "forest";
  if (detail::get_as<std::string>(j, "format", where) != "esikit.forest")
    throw InvalidArgument("forest: not an esikit forest document");
  if (detail::get_as<int>(j, "version", where) != kForestFormatVersion)
    throw InvalidArgument("forest: unsupported format version");
  Forest f;
  f.kind = detail::parse_process(detail::get_as<std::string>(j, "kind", where));
  f.domain = detail::domain_from_json(j.at("domain"));
  f.lambda = detail::get_as<double>(j, "lambda", where);
  f.alpha = detail::get_as<double>(j, "alpha", where);
  f.trained = detail::get_as<bool>(j, "trained", where);
  f.seed = detail::get_as<std::uint64_t>(j, "seed", where);
  for (const auto& p : j.at("partitions")) {
    if (f.kind == ProcessKind::mondrian) {
      std::vector<MondrianNode> nodes;
      detail::mondrian_node_from_json(p, nodes);
      f.partitions.emplace_back(MondrianTree(std::move(nodes)));
    } else {
      LocationSet nuclei(f.domain.dim());
      for (const auto& c : p.at("nuclei")) nuclei.push_back(c.get<std::vector<double>>());
      f.partitions.emplace_back(VoronoiPartition(f.domain, std::move(nuclei), f.trained));
    }
  }
  return f;
}

}  // namespace esi
