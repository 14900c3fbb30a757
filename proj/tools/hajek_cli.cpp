// Command-line front end: point estimation reports, simulation studies and
// exhaustive assignment enumeration over stratified cluster designs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hajek/covadj.hpp"
#include "hajek/core.hpp"
#include "hajek/error.hpp"
#include "hajek/estimators.hpp"
#include "hajek/inference.hpp"
#include "hajek/io.hpp"
#include "hajek/randomize.hpp"
#include "hajek/simulate.hpp"
#include "hajek/variance.hpp"
#include "hajek/version.hpp"

namespace {

using json = nlohmann::json;
using hajek::io::detail::format_g17;

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-") {
    std::cout << content;
    return;
  }
  hajek::io::write_text_file(out_path, content);
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct estimate_args {
  std::string input;
  std::string dataset;
  bool individual = false;
  std::vector<std::string> covariates;
  std::string policy = "auto";
  double level = 0.95;
  std::string df = "auto";
  double tau0 = 0.0;
  bool csv = false;
  std::uint64_t seed = 0;
  std::string out = "-";
};

hajek::variance_policy parse_policy(const std::string& s) {
  if (s == "auto") return hajek::variance_policy::automatic;
  if (s == "small") return hajek::variance_policy::force_small;
  if (s == "large") return hajek::variance_policy::force_large;
  hajek::fail_validation(hajek::errc::config_error,
                         "--policy must be auto, small or large");
}

// --df is "auto", "z", or an explicit integer degrees-of-freedom value.
std::optional<int> parse_df(const std::string& s) {
  if (s == "auto") return std::nullopt;
  if (s == "z") return 0;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos == s.size() && v >= 1) return v;
  } catch (const std::exception&) {
  }
  hajek::fail_validation(hajek::errc::config_error,
                         "--df must be auto, z or a positive integer");
}

json variance_json(const hajek::variance_report& rep,
                   const std::string& policy) {
  json per = json::object();
  for (const auto& s : rep.per_stratum)
    per[s.stratum_id] = {{"nu", s.value},
                         {"selector", s.used_small ? "s" : "l"}};
  return {{"v_hat", rep.v_hat},
          {"se", rep.se},
          {"clamped", rep.clamped},
          {"policy", policy},
          {"per_stratum", per}};
}

std::string report_to_csv(const json& report) {
  const json flat = report.flatten();
  std::string out = "key,value\n";
  for (const auto& [ptr, value] : flat.items()) {
    std::string key = ptr;
    if (!key.empty() && key[0] == '/') key.erase(0, 1);
    for (char& c : key)
      if (c == '/') c = '.';
    out += key;
    out += ',';
    if (value.is_number_float())
      out += format_g17(value.get<double>());
    else if (value.is_number_integer())
      out += std::to_string(value.get<long long>());
    else if (value.is_boolean())
      out += value.get<bool>() ? "true" : "false";
    else if (value.is_string())
      out += value.get<std::string>();
    else if (!value.is_null())
      out += value.dump();
    out += '\n';
  }
  return out;
}

// Wald interval from an externally supplied variance, honoring --df.
hajek::interval wald_from(double tau, double v_hat, double alpha,
                          std::optional<int> df, int auto_df) {
  const int use_df = df.has_value() ? *df : auto_df;
  hajek::interval iv;
  iv.level = 1.0 - alpha;
  const double se = std::sqrt(std::max(v_hat, 0.0));
  double q;
  if (use_df == 0) {
    q = hajek::std_normal_quantile(1.0 - alpha / 2.0);
    iv.method = "wald_z";
  } else {
    q = hajek::student_t_quantile(1.0 - alpha / 2.0, use_df);
    iv.method = "wald_t(" + std::to_string(use_df) + ")";
  }
  iv.lo = tau - q * se;
  iv.hi = tau + q * se;
  return iv;
}

// Covariate column names as the parser would select them.
std::vector<std::string> covariate_names(const std::string& text,
                                         const std::vector<std::string>& sel) {
  if (!sel.empty()) return sel;
  const auto lines = hajek::io::detail::non_empty_lines(text);
  if (lines.empty()) return {};
  std::vector<std::string> names;
  for (const std::string& n : hajek::io::detail::split_line(lines[0])) {
    if (n == "stratum" || n == "cluster" || n == "z" || n == "y" || n == "w")
      continue;
    names.push_back(n);
  }
  return names;
}

int run_estimate(const estimate_args& a) {
  if (a.input.empty() == a.dataset.empty())
    hajek::fail_validation(hajek::errc::config_error,
                           "give exactly one of --input or --dataset");
  const double alpha = 1.0 - a.level;
  if (!(alpha > 0.0 && alpha < 1.0))
    hajek::fail_validation(hajek::errc::config_error,
                           "--level must lie strictly between 0 and 1");
  const auto policy = parse_policy(a.policy);
  const auto df = parse_df(a.df);

  json report;
  report["provenance"] = {{"version", hajek::version_string},
                          {"seed", a.seed},
                          {"input", a.dataset.empty() ? a.input : a.dataset}};
  report["settings"] = {{"policy", a.policy},
                        {"level", a.level},
                        {"df", a.df},
                        {"tau0", a.tau0},
                        {"adjusted", a.individual}};

  json intervals = json::array();
  json tests = json::array();

  if (a.individual) {
    if (a.dataset == "osnap")
      hajek::fail_validation(hajek::errc::config_error,
                             "the bundled dataset is cluster-level");
    const std::string text = hajek::io::read_text_file(a.input);
    const hajek::individual_data data =
        hajek::io::parse_individual_csv(text, a.covariates);
    report["provenance"]["input_digest"] = hajek::io::input_digest(data);

    const hajek::experiment_data& cl = data.clusters();
    const hajek::adjusted_fit fit = hajek::fit_adjusted(data);
    const hajek::variance_report var =
        hajek::adjusted_variance(data, fit, policy);
    const int n = int(cl.size());
    const int auto_df = n - 2 - fit.n_kept_covariates;

    report["data"] = {{"n_individuals", data.rows().size()},
                      {"n_clusters", n},
                      {"n_strata", cl.strata().size()},
                      {"total_weight", cl.total_weight()},
                      {"kish_ess", hajek::kish_ess(cl)}};
    const hajek::hajek_fit un = hajek::hajek_estimate(cl);
    report["estimates"] = {
        {"hajek",
         {{"rho1", un.rho1}, {"rho0", un.rho0}, {"tau", un.tau}}},
        {"horvitz_thompson", hajek::horvitz_thompson(cl)},
        {"ikn", hajek::ikn(cl)},
        {"fe", hajek::fixed_effects(cl)},
        {"adjusted",
         {{"tau", fit.tau},
          {"rho1", fit.rho1},
          {"rho0", fit.rho0},
          {"beta", fit.beta},
          {"covariates", covariate_names(text, a.covariates)},
          {"df", auto_df}}}};
    report["variance"] = variance_json(var, a.policy);

    intervals.push_back(hajek::io::interval_json(
        hajek::adjusted_score_ci(data, fit, alpha, policy)));
    if (!df.has_value())
      intervals.push_back(hajek::io::interval_json(
          hajek::adjusted_wald_ci(data, fit, alpha, policy)));
    else
      intervals.push_back(hajek::io::interval_json(
          wald_from(fit.tau, var.v_hat, alpha, df, auto_df)));
    tests.push_back(hajek::io::test_json(
        hajek::adjusted_score_test(data, fit, a.tau0, alpha, policy)));
  } else {
    const hajek::experiment_data data =
        a.dataset.empty() ? hajek::io::read_cluster_csv(a.input)
                          : hajek::io::load_dataset(a.dataset);
    report["provenance"]["input_digest"] = hajek::io::input_digest(data);

    const hajek::hajek_fit fit = hajek::hajek_estimate(data);
    const hajek::variance_report var =
        hajek::variance_estimate(data, fit.rho1, fit.rho0, policy);
    const int auto_df = int(data.size()) - 2;

    report["data"] = {{"n_clusters", data.size()},
                      {"n_strata", data.strata().size()},
                      {"total_weight", data.total_weight()},
                      {"kish_ess", hajek::kish_ess(data)}};
    report["estimates"] = {
        {"hajek",
         {{"rho1", fit.rho1}, {"rho0", fit.rho0}, {"tau", fit.tau}}},
        {"horvitz_thompson", hajek::horvitz_thompson(data)},
        {"ikn", hajek::ikn(data)},
        {"fe", hajek::fixed_effects(data)}};
    report["variance"] = variance_json(var, a.policy);

    intervals.push_back(
        hajek::io::interval_json(hajek::score_ci(data, alpha, policy)));
    const hajek::df_choice wdf =
        df.has_value() ? (*df == 0 ? hajek::df_choice::z()
                                   : hajek::df_choice::t(*df))
                       : hajek::df_choice::t(auto_df);
    intervals.push_back(
        hajek::io::interval_json(hajek::wald_ci(data, alpha, wdf, policy)));
    tests.push_back(hajek::io::test_json(
        hajek::score_test(data, a.tau0, alpha, policy)));
  }

  report["intervals"] = intervals;
  report["tests"] = tests;

  emit(a.out, a.csv ? report_to_csv(report) : report.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct sim_cell {
  std::string label;
  std::string study = "estimators";  // or "variance"
  json params;                       // echoed into summary.json
  hajek::potential_table table;
  std::vector<int> n_treated;
  hajek::sim::run_options opt;
};

template <typename T>
T get_opt(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

hajek::sim::effect_model parse_effect(const json& j) {
  hajek::sim::effect_model m;
  const std::string kind = get_opt<std::string>(j, "kind", "constant");
  if (kind == "constant")
    m.kind = hajek::sim::effect_kind::constant;
  else if (kind == "size_correlated")
    m.kind = hajek::sim::effect_kind::size_correlated;
  else if (kind == "stratified" || kind == "alpha_beta")
    m.kind = hajek::sim::effect_kind::stratified;
  else
    hajek::fail_validation(hajek::errc::config_error,
                           "unknown effect kind: " + kind);
  m.value = get_opt<double>(j, "value", 5.0);
  m.alpha = get_opt<double>(j, "alpha", 0.0);
  m.beta = get_opt<double>(j, "beta", 0.0);
  m.size_slope = get_opt<double>(j, "size_slope", 1.0 / 6.0);
  return m;
}

hajek::sim::treated_rule parse_rule(const std::string& s) {
  if (s == "balanced") return hajek::sim::treated_rule::balanced;
  if (s == "unbalanced_half") return hajek::sim::treated_rule::unbalanced_half;
  if (s == "one_fifth") return hajek::sim::treated_rule::one_fifth;
  hajek::fail_validation(hajek::errc::config_error,
                         "unknown assignment rule: " + s);
}

hajek::sim::dgp_config parse_dgp(const json& j, std::uint64_t seed) {
  hajek::sim::dgp_config cfg;
  cfg.n_strata = get_opt<int>(j, "n_strata", 10);
  cfg.stratum_size = get_opt<int>(j, "stratum_size", 2);
  cfg.size_matched = get_opt<bool>(j, "size_matched", false);
  if (j.contains("effect")) cfg.effect = parse_effect(j.at("effect"));
  cfg.rule = parse_rule(get_opt<std::string>(j, "assignment", "balanced"));
  cfg.weight_shape = get_opt<double>(j, "weight_shape", 4.0);
  cfg.weight_rate = get_opt<double>(j, "weight_rate", 4.0 / 30.0);
  cfg.seed = get_opt<std::uint64_t>(j, "seed", seed);
  return cfg;
}

// Shared run settings for a cell, from cell-level json with file-level
// defaults.
hajek::sim::run_options parse_run_options(const json& cell, const json& root,
                                          std::uint64_t seed) {
  hajek::sim::run_options opt;
  auto pick = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    if (cell.contains(key)) return cell.at(key).get<T>();
    if (root.contains(key)) return root.at(key).get<T>();
    return fallback;
  };
  const std::string mode = pick("mode", std::string("mc"));
  if (mode == "exact")
    opt.mode = hajek::sim::run_options::mode_t::exact;
  else if (mode == "mc")
    opt.mode = hajek::sim::run_options::mode_t::monte_carlo;
  else
    hajek::fail_validation(hajek::errc::config_error,
                           "mode must be mc or exact");
  opt.n_replicates = pick("replicates", long(10000));
  opt.seed = pick("seed", seed);
  opt.enumeration_cap =
      pick("cap", hajek::assignment_enumerator::default_cap);
  opt.alpha = pick("alpha", 0.05);
  return opt;
}

sim_cell build_cell(const json& cell, const json& root, std::uint64_t seed) {
  sim_cell out;
  out.study = get_opt<std::string>(
      cell, "study", get_opt<std::string>(root, "study", "estimators"));
  if (out.study != "estimators" && out.study != "variance")
    hajek::fail_validation(hajek::errc::config_error,
                           "study must be estimators or variance");
  out.opt = parse_run_options(cell, root, seed);
  out.params = cell;

  const json table = cell.contains("table") ? cell.at("table") : json::object();
  const std::string source = get_opt<std::string>(table, "source", "dgp");
  if (source == "dgp") {
    const hajek::sim::dgp_config cfg = parse_dgp(table, out.opt.seed);
    out.table = hajek::sim::gen_population(cfg);
    out.n_treated = hajek::sim::treated_counts(cfg);
  } else if (source == "osnap_imputed") {
    hajek::potential_table t = hajek::sim::osnap_impute_constant_total(
        hajek::io::load_dataset("osnap"),
        get_opt<double>(table, "delta_total", 3.6));
    const int k = get_opt<int>(table, "replicate_pairs", 1);
    if (k > 1) t = hajek::sim::replicate_pairs(t, k);
    out.table = std::move(t);
    out.n_treated.assign(out.table.stratum_count(), 1);
  } else {
    hajek::fail_validation(hajek::errc::config_error,
                           "table source must be dgp or osnap_imputed");
  }
  out.label = get_opt<std::string>(cell, "label", "cell");
  return out;
}

json dgp_cell(const std::string& label, const std::string& study,
              const std::string& mode, int B, int n_b, bool matched,
              const char* effect_kind, double alpha, double beta,
              const char* rule) {
  json effect = {{"kind", effect_kind}};
  if (std::string(effect_kind) == "stratified") {
    effect["alpha"] = alpha;
    effect["beta"] = beta;
  }
  return {{"label", label},
          {"study", study},
          {"mode", mode},
          {"table",
           {{"source", "dgp"},
            {"n_strata", B},
            {"stratum_size", n_b},
            {"size_matched", matched},
            {"effect", effect},
            {"assignment", rule}}}};
}

// Built-in preset grids.
json preset_config(const std::string& name) {
  json cells = json::array();
  if (name == "paper-table2") {
    cells.push_back({{"label", "pairs10_exact"},
                     {"study", "estimators"},
                     {"mode", "exact"},
                     {"table",
                      {{"source", "osnap_imputed"}, {"delta_total", 3.6}}}});
    cells.push_back({{"label", "pairs1000_mc"},
                     {"study", "estimators"},
                     {"mode", "mc"},
                     {"table",
                      {{"source", "osnap_imputed"},
                       {"delta_total", 3.6},
                       {"replicate_pairs", 100}}}});
    return {{"preset", name}, {"cells", cells}};
  }
  if (name == "figure2" || name == "sm-tableS") {
    for (auto [n_b, B] : {std::pair{2, 10}, {2, 50}, {10, 2}, {50, 2}})
      for (bool matched : {true, false})
        for (const char* eff : {"size_correlated", "constant"}) {
          const std::string label = "n" + std::to_string(n_b) + "_B" +
                                    std::to_string(B) +
                                    (matched ? "_matched_" : "_unequal_") +
                                    eff;
          cells.push_back(dgp_cell(label, "estimators", "mc", B, n_b, matched,
                                   eff, 0, 0, "balanced"));
        }
    return {{"preset", name}, {"cells", cells}};
  }
  if (name == "figure3" || name == "figure4") {
    const bool balanced = name == "figure3";
    std::vector<std::tuple<int, int, const char*>> designs;
    if (balanced) {
      designs = {{2, 10, "balanced"},  {2, 50, "balanced"},
                 {4, 10, "balanced"},  {4, 50, "balanced"},
                 {10, 2, "balanced"},  {50, 2, "balanced"}};
    } else {
      designs = {{4, 10, "unbalanced_half"},
                 {4, 50, "unbalanced_half"},
                 {10, 2, "one_fifth"},
                 {50, 2, "one_fifth"}};
    }
    std::vector<std::pair<double, double>> grid;
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) grid.push_back({a, 0.0});
    for (double b : {0.25, 0.5, 0.75, 1.0}) grid.push_back({0.0, b});
    for (auto [n_b, B, rule] : designs)
      for (auto [al, be] : grid) {
        char lab[96];
        std::snprintf(lab, sizeof(lab), "n%d_B%d_%s_a%g_b%g", n_b, B, rule,
                      al, be);
        cells.push_back(dgp_cell(lab, "variance", "mc", B, n_b, false,
                                 "stratified", al, be, rule));
      }
    return {{"preset", name}, {"cells", cells}};
  }
  hajek::fail_validation(hajek::errc::config_error, "unknown preset: " + name);
}

json summary_cell_json(const sim_cell& cell,
                       const hajek::sim::sim_summary& s) {
  json j;
  j["label"] = cell.label;
  j["study"] = cell.study;
  j["params"] = cell.params;
  j["summary"] = hajek::io::summary_json(s);
  return j;
}

void append_metrics_csv(std::string& csv, const sim_cell& cell,
                        const hajek::sim::sim_summary& s) {
  const json table =
      cell.params.contains("table") ? cell.params.at("table") : json::object();
  const bool dgp = get_opt<std::string>(table, "source", "dgp") == "dgp";
  json effect = table.contains("effect") ? table.at("effect") : json::object();
  std::string head = cell.label + "," + cell.study + "," + s.mode + "," +
                     std::to_string(s.n_replicates) + ",";
  if (dgp) {
    head += std::to_string(get_opt<int>(table, "n_strata", 10)) + "," +
            std::to_string(get_opt<int>(table, "stratum_size", 2)) + "," +
            (get_opt<bool>(table, "size_matched", false) ? "true" : "false") +
            "," + get_opt<std::string>(effect, "kind", "constant") + "," +
            format_g17(get_opt<double>(effect, "alpha", 0.0)) + "," +
            format_g17(get_opt<double>(effect, "beta", 0.0)) + "," +
            get_opt<std::string>(table, "assignment", "balanced") + ",";
  } else {
    head += ",,,,,,,";
  }
  for (const hajek::io::metric_row& r : hajek::io::summary_rows(s)) {
    csv += head + r.group + "," + r.name + "," + r.metric + "," +
           format_g17(r.value) + "\n";
  }
}

struct simulate_args {
  std::string config;
  std::string preset;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  long replicates = 0;
  int threads = 0;
};

int run_simulate(const simulate_args& a) {
  if (a.config.empty() == a.preset.empty())
    hajek::fail_validation(hajek::errc::config_error,
                           "give exactly one of --config or --preset");
  json root;
  std::string config_text;
  if (!a.preset.empty()) {
    root = preset_config(a.preset);
    config_text = root.dump(2);
  } else {
    config_text = hajek::io::read_text_file(a.config);
    try {
      root = json::parse(config_text);
    } catch (const json::exception& e) {
      hajek::fail_validation(hajek::errc::config_error,
                             std::string("bad config JSON: ") + e.what());
    }
    if (root.contains("preset")) {
      json preset = preset_config(root.at("preset").get<std::string>());
      for (auto& [k, v] : root.items())
        if (k != "preset") preset[k] = v;
      root = std::move(preset);
    }
  }

  std::uint64_t seed = get_opt<std::uint64_t>(root, "seed", 1);
  if (a.seed_set) seed = a.seed;

  json cell_list = root.contains("cells") ? root.at("cells") : json::array();
  if (cell_list.empty()) cell_list.push_back(root);

  json out_cells = json::array();
  std::string csv =
      "label,study,mode,replicates,n_strata,stratum_size,size_matched,"
      "effect,alpha,beta,assignment,group,name,metric,value\n";
  try {
    for (const json& cj : cell_list) {
      sim_cell cell = build_cell(cj, root, seed);
      if (a.replicates > 0) cell.opt.n_replicates = a.replicates;
      if (a.seed_set) cell.opt.seed = a.seed;
      if (a.threads > 0) cell.opt.threads = a.threads;
      const hajek::sim::sim_summary s =
          cell.study == "variance"
              ? hajek::sim::run_variance_study(cell.table, cell.n_treated,
                                               cell.opt)
              : hajek::sim::run_estimator_comparison(cell.table,
                                                     cell.n_treated, cell.opt);
      out_cells.push_back(summary_cell_json(cell, s));
      append_metrics_csv(csv, cell, s);
    }
  } catch (const json::exception& e) {
    hajek::fail_validation(hajek::errc::config_error,
                           std::string("bad config JSON: ") + e.what());
  }

  json summary;
  summary["version"] = hajek::version_string;
  summary["seed"] = seed;
  summary["config_digest"] = hajek::io::text_digest(config_text);
  summary["cells"] = out_cells;

  std::filesystem::create_directories(a.out_dir);
  hajek::io::write_text_file(a.out_dir + "/summary.json",
                             summary.dump(2) + "\n");
  hajek::io::write_text_file(a.out_dir + "/metrics.csv", csv);
  return 0;
}

// ---------------------------------------------------------------------------
// enumerate
// ---------------------------------------------------------------------------

struct enumerate_args {
  std::string input;
  std::string dataset;
  std::string potential;
  double impute_delta = 3.6;
  std::string treated = "";  // "", "half", "observed" or comma counts
  double cap = hajek::assignment_enumerator::default_cap;
  std::string out = "-";
};

std::vector<int> parse_treated(const std::string& spec,
                               const hajek::potential_table& table,
                               const std::vector<int>* observed) {
  const std::size_t B = table.stratum_count();
  if (spec == "observed") {
    if (!observed)
      hajek::fail_validation(hajek::errc::config_error,
                             "--treated observed needs --input data");
    return *observed;
  }
  if (spec == "half") {
    std::vector<int> ks(B);
    for (std::size_t b = 0; b < B; ++b) {
      const int n = table.stratum_sizes()[b];
      if (n % 2 != 0)
        hajek::fail_validation(hajek::errc::config_error,
                               "--treated half needs even strata");
      ks[b] = n / 2;
    }
    return ks;
  }
  // single integer, or one count per stratum
  std::vector<int> ks;
  std::string cur;
  for (char c : spec + ",") {
    if (c == ',') {
      if (!cur.empty()) ks.push_back(int(hajek::io::detail::parse_number(
          cur, 0, "--treated")));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (ks.size() == 1) ks.assign(B, ks[0]);
  if (ks.size() != B)
    hajek::fail_validation(
        hajek::errc::config_error,
        "--treated needs one count, or one per stratum (" +
            std::to_string(B) + ")");
  return ks;
}

int run_enumerate(const enumerate_args& a) {
  const int sources = int(!a.input.empty()) + int(!a.dataset.empty()) +
                      int(!a.potential.empty());
  if (sources != 1)
    hajek::fail_validation(
        hajek::errc::config_error,
        "give exactly one of --input, --dataset or --potential");

  hajek::potential_table table;
  std::vector<int> observed;
  const std::vector<int>* observed_ptr = nullptr;
  if (!a.potential.empty()) {
    table = hajek::io::read_potential_csv(a.potential);
  } else {
    const hajek::experiment_data data =
        a.input.empty() ? hajek::io::load_dataset(a.dataset)
                        : hajek::io::read_cluster_csv(a.input);
    table = hajek::sim::osnap_impute_constant_total(data, a.impute_delta);
    observed.assign(table.stratum_count(), 0);
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.units()[i].z) ++observed[data.stratum_of(i)];
    observed_ptr = &observed;
  }
  const std::string spec =
      a.treated.empty() ? (observed_ptr ? "observed" : "half") : a.treated;
  const std::vector<int> ks = parse_treated(spec, table, observed_ptr);

  std::string body = "assignment,hajek,horvitz_thompson,ikn,fe\n";
  const hajek::sim::sim_summary s = hajek::sim::enumerate_estimates(
      table, ks, a.cap,
      [&](long slot, const std::vector<int>&, double h, double ht, double ik,
          double f) {
        body += std::to_string(slot);
        body += ',';
        body += format_g17(h);
        body += ',';
        body += format_g17(ht);
        body += ',';
        body += format_g17(ik);
        body += ',';
        body += format_g17(f);
        body += '\n';
      });
  body += "# truth," + format_g17(s.truth) + "\n";
  for (const auto& [name, m] : s.estimators) {
    body += "# bias," + name + "," + format_g17(m.bias) + "\n";
    body += "# sd," + name + "," + format_g17(m.sd) + "\n";
    body += "# rmse," + name + "," + format_g17(m.rmse) + "\n";
  }
  emit(a.out, body);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-based estimation and inference for stratified cluster"
               " randomized experiments"};
  app.set_version_flag("--version", hajek::version_string);
  app.require_subcommand(1);

  estimate_args ea;
  CLI::App* est = app.add_subcommand(
      "estimate", "Point estimates, variance and intervals for one dataset");
  est->add_option("--input", ea.input, "cluster CSV (or individual CSV)");
  est->add_option("--dataset", ea.dataset, "bundled dataset name (osnap)");
  est->add_flag("--individual", ea.individual,
                "input holds individual-level rows");
  est->add_option("--covariates", ea.covariates,
                  "covariate columns (default: all extra columns)")
      ->delimiter(',');
  est->add_option("--policy", ea.policy, "variance policy: auto|small|large");
  est->add_option("--level", ea.level, "confidence level (default 0.95)");
  est->add_option("--df", ea.df, "Wald reference: auto|z|<int>");
  est->add_option("--tau0", ea.tau0, "null effect for the score test");
  bool want_json = false;
  est->add_flag("--json", want_json, "JSON output (default)");
  est->add_flag("--csv", ea.csv, "flat CSV output");
  est->add_option("--seed", ea.seed, "seed recorded in the report");
  est->add_option("--out", ea.out, "output path (default: stdout)");

  simulate_args sa;
  CLI::App* sim = app.add_subcommand(
      "simulate", "Run a simulation study from a config file or preset");
  sim->add_option("--config", sa.config, "JSON config path");
  sim->add_option("--preset", sa.preset,
                  "paper-table2|figure2|figure3|figure4|sm-tableS");
  sim->add_option("--out", sa.out_dir, "output directory");
  sim->add_option("--seed", sa.seed, "override config seed");
  sim->add_option("--replicates", sa.replicates,
                  "override Monte Carlo replicate count");
  sim->add_option("--threads", sa.threads, "worker thread count");

  enumerate_args na;
  CLI::App* enu = app.add_subcommand(
      "enumerate", "Exhaustive assignment distribution of the estimators");
  enu->add_option("--input", na.input, "cluster CSV to impute from");
  enu->add_option("--dataset", na.dataset, "bundled dataset name (osnap)");
  enu->add_option("--potential", na.potential, "potential-outcome CSV");
  enu->add_option("--impute-constant-total", na.impute_delta,
                  "constant total effect used for imputation (default 3.6)");
  enu->add_option("--treated", na.treated,
                  "per-stratum treated counts: observed|half|k|k1,k2,...");
  enu->add_option("--cap", na.cap, "assignment count cap");
  enu->add_option("--out", na.out, "output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (est->parsed()) return run_estimate(ea);
    sa.seed_set = sim->count("--seed") > 0;
    if (sim->parsed()) return run_simulate(sa);
    if (enu->parsed()) return run_enumerate(na);
    return 2;
  } catch (const hajek::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == hajek::err_kind::validation ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
