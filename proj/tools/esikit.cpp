#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "esikit/esikit.hpp"

namespace fs = std::filesystem;
using esi::Json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string out = ".";
};

const std::string kWhere = "run config";

Json load_config(const Common& c) {
  if (c.config.empty()) return Json::object();
  try {
    Json j = Json::parse(esi::io::read_file(c.config));
    if (!j.is_object()) throw esi::InvalidArgument(kWhere + ": top level must be an object");
    return j;
  } catch (const Json::exception& e) {
    throw esi::IoError(c.config + ": " + e.what());
  }
}

// Relative input paths are taken from the config file's directory.
fs::path resolve(const Common& c, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || c.config.empty()) return path;
  return fs::path(c.config).parent_path() / path;
}

std::uint64_t run_seed(const Common& c, const Json& cfg) {
  if (c.seed) return *c.seed;
  if (cfg.contains("seed")) return esi::detail::get_as<std::uint64_t>(cfg, "seed", kWhere);
  return 0;
}

// "points": "file.csv" | {"synthetic": "cubic", "rows": N, "seed": S}
esi::ConditioningData load_points(const Common& c, const Json& cfg) {
  if (!cfg.contains("points")) throw esi::InvalidArgument(kWhere + ": 'points' is required");
  const Json& p = cfg.at("points");
  if (p.is_string()) return esi::io::read_points_csv(resolve(c, p.get<std::string>()));
  esi::detail::reject_unknown_keys(p, {"synthetic", "rows", "seed"}, "points");
  if (esi::detail::get_as<std::string>(p, "synthetic", "points") != "cubic")
    throw esi::InvalidArgument("points: the only synthetic generator is 'cubic'");
  std::size_t rows = p.contains("rows") ? esi::detail::get_as<std::size_t>(p, "rows", "points") : 1000;
  std::uint64_t seed = p.contains("seed") ? esi::detail::get_as<std::uint64_t>(p, "seed", "points") : 0;
  return esi::synth::cubic_samples(rows, seed);
}

struct Targets {
  esi::LocationSet locations;
  std::optional<esi::GridSpec> grid;
};

// Exactly one of "grid" (file or inline spec) and "targets" (CSV file).
Targets load_targets(const Common& c, const Json& cfg) {
  if (cfg.contains("grid") == cfg.contains("targets"))
    throw esi::InvalidArgument(kWhere + ": give exactly one of 'grid' and 'targets'");
  if (cfg.contains("targets")) {
    return {esi::io::read_targets_csv(resolve(c, esi::detail::get_as<std::string>(cfg, "targets", kWhere))),
            std::nullopt};
  }
  const Json& g = cfg.at("grid");
  esi::GridSpec grid = g.is_string() ? esi::io::read_grid(resolve(c, g.get<std::string>())) : esi::io::grid_from_json(g);
  return {esi::flatten_grid(grid), grid};
}

esi::GlobalIdwParams idw_params(const Json& cfg) {
  esi::GlobalIdwParams p;
  if (!cfg.contains("idw")) return p;
  const Json& j = cfg.at("idw");
  esi::detail::reject_unknown_keys(j, {"radius", "exponent"}, "idw");
  if (j.contains("radius")) p.radius = esi::detail::get_as<double>(j, "radius", "idw");
  if (j.contains("exponent")) p.exponent = esi::detail::get_as<double>(j, "exponent", "idw");
  esi::validate(p);
  return p;
}

template <class T>
std::vector<T> list_of(const Json& j, const char* key, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_array()) return {esi::detail::get_as<T>(j, key, "search grid")};
  return esi::detail::get_as<std::vector<T>>(j, key, "search grid");
}

esi::EsiSearchGrid esi_grid_from_json(const Json& j) {
  esi::detail::reject_unknown_keys(j,
                                   {"p_process", "local_interpolator", "n_partitions", "alpha", "data_cond",
                                    "exponent", "model", "nugget", "range", "sill", "agg_function"},
                                   "search grid");
  esi::EsiSearchGrid g;
  if (j.contains("p_process"))
    g.p_process = esi::detail::parse_process(esi::detail::get_as<std::string>(j, "p_process", "search grid"));
  std::string local = j.contains("local_interpolator")
                          ? esi::detail::get_as<std::string>(j, "local_interpolator", "search grid")
                          : std::string("idw");
  if (local == "kriging") g.local = esi::LocalKind::kriging;
  else if (local != "idw") throw esi::InvalidArgument("search grid: unknown local_interpolator '" + local + "'");
  g.n_partitions = list_of(j, "n_partitions", g.n_partitions);
  g.alpha = list_of(j, "alpha", g.alpha);
  g.data_cond = list_of(j, "data_cond", g.data_cond);
  g.exponent = list_of(j, "exponent", g.exponent);
  g.nugget = list_of(j, "nugget", g.nugget);
  g.range = list_of(j, "range", g.range);
  g.sill = list_of(j, "sill", g.sill);
  g.agg_function = list_of(j, "agg_function", g.agg_function);
  if (j.contains("model")) {
    g.model.clear();
    for (const auto& m : list_of<std::string>(j, "model", {})) g.model.push_back(esi::parse_covariance_model(m));
  }
  return g;
}

esi::IdwSearchGrid idw_grid_from_json(const Json& j) {
  esi::detail::reject_unknown_keys(j, {"radius", "exponent"}, "search grid");
  esi::IdwSearchGrid g;
  g.radius = list_of<double>(j, "radius", {});
  g.exponent = list_of(j, "exponent", g.exponent);
  return g;
}

std::string method_of(const Json& cfg, const std::string& flag) {
  std::string m = !flag.empty() ? flag
                  : cfg.contains("method") ? esi::detail::get_as<std::string>(cfg, "method", kWhere)
                                           : std::string("esi");
  if (m != "esi" && m != "idw-baseline") throw esi::InvalidArgument("unknown method '" + m + "'");
  return m;
}

fs::path prepare_out(const Common& c) {
  fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw esi::IoError("cannot create output directory '" + c.out + "'");
  return out;
}

// ---------------------------------------------------------------------------

void cmd_synth(const Common& c) {
  Json cfg = load_config(c);
  esi::detail::reject_unknown_keys(cfg, {"seed", "rows", "grid_count"}, kWhere);
  std::size_t rows = cfg.contains("rows") ? esi::detail::get_as<std::size_t>(cfg, "rows", kWhere) : 1000;
  auto count = cfg.contains("grid_count") ? esi::detail::get_as<std::vector<std::size_t>>(cfg, "grid_count", kWhere)
                                          : std::vector<std::size_t>{100, 200};
  if (count.size() != 2) throw esi::InvalidArgument(kWhere + ": grid_count needs two entries");
  auto data = esi::synth::cubic_samples(rows, run_seed(c, cfg));
  auto grid = esi::synth::unit_square_grid(count[0], count[1]);
  auto nodes = esi::flatten_grid(grid.spec());
  std::vector<double> truth(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) truth[i] = esi::synth::cubic_surface(nodes.row(i)[0], nodes.row(i)[1]);

  fs::path out = prepare_out(c);
  esi::io::write_points_csv(out / "points.csv", data);
  esi::io::write_file(out / "grid.json", esi::io::grid_to_json(grid.origin, grid.step, grid.count).dump(2) + "\n");
  esi::io::write_columns_csv(out / "truth.csv", nodes, {{"value", &truth}});
}

void cmd_estimate(const Common& c, const std::string& method_flag) {
  Json cfg = load_config(c);
  esi::detail::reject_unknown_keys(
      cfg, {"seed", "points", "grid", "targets", "method", "esi", "idw", "precision", "write_cube"}, kWhere);
  std::string method = method_of(cfg, method_flag);
  auto data = load_points(c, cfg);
  auto targets = load_targets(c, cfg);
  std::optional<std::string> loss_name;
  if (cfg.contains("precision") && !cfg.at("precision").is_null())
    loss_name = esi::detail::get_as<std::string>(cfg, "precision", kWhere);
  bool write_cube = cfg.contains("write_cube") && esi::detail::get_as<bool>(cfg, "write_cube", kWhere);

  if (method == "idw-baseline") {
    if (loss_name || write_cube)
      throw esi::InvalidArgument("precision and write_cube need the esi method (the baseline has no sample cube)");
    auto params = idw_params(cfg);
    auto r = esi::idw_nongriddata(data, targets.locations, params, c.threads);
    fs::path out = prepare_out(c);
    esi::io::write_columns_csv(out / "estimate.csv", targets.locations, {{"estimate", &r.estimate}});
    return;
  }

  esi::EsiConfig config = cfg.contains("esi") ? esi::esi_config_from_json(cfg.at("esi")) : esi::EsiConfig{};
  if (c.seed || cfg.contains("seed")) config.seed = run_seed(c, cfg);
  std::optional<esi::LossFunction> loss;
  if (loss_name) {
    loss = esi::parse_loss(*loss_name);
    if (loss->cube_output()) throw esi::InvalidArgument("estimate: cube-valued losses are only available via 'precision'");
  }
  esi::RunOptions opt;
  opt.threads = c.threads;
  auto result = targets.grid ? esi::esi_griddata(data, *targets.grid, config, opt)
                             : esi::esi_nongriddata(data, targets.locations, config, opt);
  if (result.stats().singular_fallbacks > 0)
    std::cerr << "esikit: " << result.stats().singular_fallbacks
              << " kriging cells were singular and used the cell mean\n";

  fs::path out = prepare_out(c);
  std::vector<std::pair<std::string, const std::vector<double>*>> cols{{"estimate", &result.estimation()}};
  if (loss) cols.emplace_back("precision", &esi::precision(result, *loss));
  esi::io::write_columns_csv(out / "estimate.csv", targets.locations, cols);
  if (write_cube) esi::io::write_cube(out / "cube", result.esi_samples(), config);
}

template <class Params>
void write_report(const fs::path& out, const esi::SearchResult<Params>& r) {
  auto rep = esi::cv_error_report(r);
  auto finite_or_null = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json edges = Json::array(), series = Json::array();
  for (double e : rep.bin_edges) edges.push_back(finite_or_null(e));
  for (double e : rep.series) series.push_back(finite_or_null(e));
  Json j = {{"metric", esi::to_string(r.metric)}, {"k", r.k},         {"best_index", rep.best_index},
            {"bin_edges", edges},                 {"counts", rep.counts}, {"series", series}};
  esi::io::write_file(out / "cv_report.json", j.dump(2) + "\n");
}

std::string error_text(double e) { return std::isfinite(e) ? esi::io::format_double(e) : "inf"; }

void cmd_search(const Common& c, const std::string& method_flag) {
  Json cfg = load_config(c);
  esi::detail::reject_unknown_keys(cfg, {"seed", "points", "grid", "targets", "method", "search"}, kWhere);
  std::string method = method_of(cfg, method_flag);
  if (!cfg.contains("search")) throw esi::InvalidArgument(kWhere + ": 'search' is required");
  const Json& s = cfg.at("search");
  esi::detail::reject_unknown_keys(s, {"k", "metric", "max_missing_fraction", "grid"}, "search");
  esi::SearchOptions opt;
  if (s.contains("k")) opt.k = esi::detail::get_as<int>(s, "k", "search");
  if (s.contains("metric")) opt.metric = esi::parse_metric(esi::detail::get_as<std::string>(s, "metric", "search"));
  if (s.contains("max_missing_fraction"))
    opt.max_missing_fraction = esi::detail::get_as<double>(s, "max_missing_fraction", "search");
  opt.seed = run_seed(c, cfg);
  opt.threads = c.threads;
  Json grid_json = s.contains("grid") ? s.at("grid") : Json::object();
  auto data = load_points(c, cfg);

  if (method == "idw-baseline") {
    auto grid = idw_grid_from_json(grid_json);
    auto r = esi::idw_hparams_search(data, grid, opt);
    fs::path out = prepare_out(c);
    std::string table = "index,radius,exponent,cv_error\n";
    for (const auto& rec : r.records)
      table += std::to_string(rec.index) + ',' + esi::io::format_double(rec.params.radius) + ',' +
               esi::io::format_double(rec.params.exponent) + ',' + error_text(rec.cv_error) + '\n';
    esi::io::write_file(out / "search.csv", table);
    write_report(out, r);
    const auto& best = r.best_result();
    Json b = {{"method", "idw-baseline"}, {"idw", {{"radius", best.radius}, {"exponent", best.exponent}}}};
    esi::io::write_file(out / "best.json", b.dump(2) + "\n");
    return;
  }

  auto targets = load_targets(c, cfg);
  auto grid = esi_grid_from_json(grid_json);
  auto r = esi::esi_hparams_search(data, targets.locations, grid, opt);
  fs::path out = prepare_out(c);
  bool kriging = grid.local == esi::LocalKind::kriging;
  std::string table = "index,p_process,n_partitions,alpha,data_cond,";
  table += kriging ? "model,nugget,range,sill," : "exponent,";
  table += "agg_function,cv_error\n";
  for (const auto& rec : r.records) {
    const auto& p = rec.params;
    table += std::to_string(rec.index) + ',' + esi::to_string(p.p_process) + ',' + std::to_string(p.n_partitions) +
             ',' + esi::io::format_double(p.alpha) + ',' + (p.data_cond ? "true" : "false") + ',';
    if (const auto* k = std::get_if<esi::KrigingParams>(&p.local)) {
      table += std::string(esi::to_string(k->model)) + ',' + esi::io::format_double(k->nugget) + ',' +
               esi::io::format_double(k->range) + ',' + esi::io::format_double(k->sill) + ',';
    } else {
      table += esi::io::format_double(std::get<esi::IdwParams>(p.local).exponent) + ',';
    }
    table += p.agg_function + ',' + error_text(rec.cv_error) + '\n';
  }
  esi::io::write_file(out / "search.csv", table);
  write_report(out, r);
  Json b = {{"method", "esi"}, {"esi", esi::to_json(r.best_result())}};
  esi::io::write_file(out / "best.json", b.dump(2) + "\n");
}

void cmd_precision(const Common& c, const std::string& cube_flag, const std::string& loss_flag) {
  Json cfg = load_config(c);
  esi::detail::reject_unknown_keys(cfg, {"cube", "loss", "agg_function"}, kWhere);
  std::string cube_path = !cube_flag.empty() ? cube_flag
                          : cfg.contains("cube") ? resolve(c, esi::detail::get_as<std::string>(cfg, "cube", kWhere)).string()
                                                 : std::string();
  if (cube_path.empty()) throw esi::InvalidArgument("precision: no cube given (--cube or 'cube')");
  std::string loss_name = !loss_flag.empty() ? loss_flag
                          : cfg.contains("loss") ? esi::detail::get_as<std::string>(cfg, "loss", kWhere)
                                                 : std::string("mse");
  auto loss = esi::parse_loss(loss_name);
  auto stored = esi::io::read_cube(cube_path);
  std::string agg_name = cfg.contains("agg_function") ? esi::detail::get_as<std::string>(cfg, "agg_function", kWhere)
                                                      : stored.config.agg_function;
  auto estimate = esi::parse_aggregation(agg_name)(stored.cube);

  fs::path out = prepare_out(c);
  if (loss.cube_output()) {
    esi::io::write_cube(out / "precision_cube", esi::precision_cube(estimate, stored.cube, loss), stored.config);
    return;
  }
  auto p = esi::precision(estimate, stored.cube, loss);
  std::string text = "row,estimate,precision\n";
  for (std::size_t j = 0; j < p.size(); ++j)
    text += std::to_string(j) + ',' + esi::io::format_double(estimate[j]) + ',' + esi::io::format_double(p[j]) + '\n';
  esi::io::write_file(out / "precision.csv", text);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--threads", c.threads, "worker threads (default: ESIKIT_THREADS or all cores)");
  sub->add_option("--out", c.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble spatial interpolation toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string method, cube, loss;

  auto* synth = app.add_subcommand("synth", "write the cubic benchmark points, grid and truth");
  add_common(synth, common);
  auto* estimate = app.add_subcommand("estimate", "estimate at grid nodes or target locations");
  add_common(estimate, common);
  estimate->add_option("--method", method, "esi (default) or idw-baseline")
      ->check(CLI::IsMember({"esi", "idw-baseline"}));
  auto* search = app.add_subcommand("search", "cross-validated hyperparameter search");
  add_common(search, common);
  search->add_option("--method", method, "esi (default) or idw-baseline")->check(CLI::IsMember({"esi", "idw-baseline"}));
  auto* prec = app.add_subcommand("precision", "precision of a stored sample cube");
  add_common(prec, common);
  prec->add_option("--cube", cube, "cube prefix (without .bin/.json)");
  prec->add_option("--loss", loss, "mse | mae | mse_cube | mae_cube | operr[:range][_cube]");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) cmd_synth(common);
    else if (*estimate) cmd_estimate(common, method);
    else if (*search) cmd_search(common, method);
    else cmd_precision(common, cube, loss);
  } catch (const std::exception& e) {
    std::cerr << "esikit: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
