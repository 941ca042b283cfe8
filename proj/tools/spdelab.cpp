// Command-line front end: simulate, run, sweep, aggregate, verify-kernel,
// holder, moments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "spdelab/spdelab.hpp"

namespace {

using namespace spdelab;

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw IoError("cannot write " + out);
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_double(item, "--values"));
  }
  if (out.empty()) throw ConfigError("--values is empty");
  return out;
}

std::string report_csv(const std::vector<BoundReport>& reports) {
  std::ostringstream o;
  o << "schema_version,lemma_id,params,lhs,rhs_bound,margin,quadrature_error,ratio,verdict,calibrated_constant\n";
  for (const auto& r : reports) {
    std::string params;
    for (const auto& [k, v] : r.params) params += (params.empty() ? "" : ";") + k + "=" + format_double(v);
    o << kSchemaVersion << ',' << to_string(r.lemma_id) << ',' << params << ',' << format_double(r.lhs) << ','
      << format_double(r.rhs_bound) << ',' << format_double(r.margin) << ',' << format_double(r.quadrature_error)
      << ',' << format_double(r.ratio()) << ',' << to_string(r.verdict()) << ','
      << (r.calibrated_constant ? "true" : "false") << '\n';
  }
  return o.str();
}

struct Common {
  std::string config;
  std::optional<unsigned> jobs;
  std::optional<std::size_t> n_paths;
  std::optional<std::uint64_t> seed_base;
  std::optional<std::string> outputs;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "experiment TOML file")->required()->check(CLI::ExistingFile);
    app->add_option("-j,--jobs", jobs, "worker threads (default: SPDE_LAB_JOBS or all cores)");
    app->add_option("--n-paths", n_paths, "override run.n_paths");
    app->add_option("--seed-base", seed_base, "override run.seed_base");
    app->add_option("--outputs", outputs, "override run.outputs");
  }

  ExperimentConfig load() const {
    ExperimentConfig c = load_config(config);
    if (n_paths) c.n_paths = *n_paths;
    if (seed_base) c.seed_base = *seed_base;
    if (outputs) c.outputs = *outputs;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized SPDE blowup laboratory"};
  app.require_subcommand(1);

  Common sim_opts, run_opts, sweep_opts, holder_opts, moment_opts;

  auto* sim = app.add_subcommand("simulate", "simulate one path and write its JSONL record");
  sim_opts.attach(sim);
  std::size_t sim_index = 0;
  std::string sim_out;
  bool sim_fields = false;
  sim->add_option("--index", sim_index, "path index within the seed block (seed = seed_base + index)");
  sim->add_option("-o,--out", sim_out, "output file (default stdout)");
  sim->add_flag("--fields", sim_fields, "include stored fields every out_stride steps");

  auto* run_cmd = app.add_subcommand("run", "simulate an ensemble, persist path files and summary.csv");
  run_opts.attach(run_cmd);

  auto* sw = app.add_subcommand("sweep", "run the ensemble for each value of one config field");
  sweep_opts.attach(sw);
  std::string axis, values;
  sw->add_option("--axis", axis, "config field, as section.key or an unambiguous key")->required();
  sw->add_option("--values", values, "comma-separated values")->required();

  auto* agg = app.add_subcommand("aggregate", "merge path files into one summary CSV");
  std::vector<std::string> agg_inputs;
  std::string agg_out;
  agg->add_option("inputs", agg_inputs, "path files or directories")->required();
  agg->add_option("-o,--out", agg_out, "output CSV (default stdout)");

  auto* vk = app.add_subcommand("verify-kernel", "run the Green-function bound battery");
  std::string vk_lemma, vk_out;
  std::vector<std::string> vk_params;
  vk->add_option("--lemma", vk_lemma, "single check: A1, A2, A3, A5, A6, feller, feller2");
  vk->add_option("--param", vk_params, "key=value for the single check")->expected(0, -1);
  vk->add_option("-o,--out", vk_out, "output CSV (default stdout)");

  auto* hol = app.add_subcommand("holder", "Hölder exponent regression on a stored-field ensemble");
  holder_opts.attach(hol);
  double h_k = 2.0, h_tstar = 0.5;
  std::string h_out;
  hol->add_option("--k", h_k, "moment order");
  hol->add_option("--t-star", h_tstar, "time of the spatial increments / start of the temporal ones");
  hol->add_option("-o,--out", h_out, "output CSV (default stdout)");

  auto* mom = app.add_subcommand("moments", "moment-norm estimates on a stored-field ensemble");
  moment_opts.attach(mom);
  std::string m_ks = "2,4,6,8", m_betas = "0";
  std::string m_out;
  mom->add_option("--k", m_ks, "comma-separated moment orders");
  mom->add_option("--beta", m_betas, "comma-separated exponential weights");
  mom->add_option("-o,--out", m_out, "output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const ExperimentConfig c = sim_opts.load();
      c.validate();
      const PathResult p = simulate_path(c, sim_index, {sim_fields, 0.0});
      emit(sim_out, path_jsonl(p, c));
    } else if (*run_cmd) {
      const ExperimentConfig c = run_opts.load();
      const EnsembleSummary e = run(c, {resolve_jobs(run_opts.jobs)});
      std::cout << summary_csv(e);
    } else if (*sw) {
      const ExperimentConfig c = sweep_opts.load();
      const SweepResult r = sweep(c, axis, parse_values(values), {resolve_jobs(sweep_opts.jobs)});
      std::cout << sweep_csv(r);
    } else if (*agg) {
      emit(agg_out, summary_csv(aggregate(collect_path_files(agg_inputs))));
    } else if (*vk) {
      const HeatKernel kernel;
      std::vector<BoundReport> reports;
      if (vk_lemma.empty()) {
        reports = default_battery(kernel);
      } else {
        std::map<std::string, double> p;
        for (const auto& kv : vk_params) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw ConfigError("--param expects key=value, got '" + kv + "'");
          p[kv.substr(0, eq)] = parse_double(kv.substr(eq + 1), kv.substr(0, eq));
        }
        reports.push_back(verify_green_bound(kernel, lemma_from_string(vk_lemma), p));
      }
      emit(vk_out, report_csv(reports));
    } else if (*hol) {
      const ExperimentConfig c = holder_opts.load();
      const auto ens = simulate_ensemble(c, {true, std::max(0.0, h_tstar - 0.05)}, resolve_jobs(holder_opts.jobs));
      HolderOptions ho;
      ho.t_star = h_tstar;
      std::vector<HolderFit> fits{holder_fit(ens, Direction::Space, h_k, ho),
                                  holder_fit(ens, Direction::Time, h_k, ho)};
      emit(h_out, holder_csv(fits, config_hash(c), ens.size()));
    } else if (*mom) {
      const ExperimentConfig c = moment_opts.load();
      const auto ens = simulate_ensemble(c, {true, 0.0}, resolve_jobs(moment_opts.jobs));
      std::vector<MomentEstimate> ms;
      for (double beta : parse_values(m_betas)) {
        for (double k : parse_values(m_ks)) ms.push_back(moment_norm_estimate(ens, beta, k));
      }
      emit(m_out, moments_csv(ms, config_hash(c)));
    }
  } catch (const MergeConflict& e) {
    std::cerr << "merge conflict: " << e.what() << '\n';
    for (const auto& o : e.offenders()) std::cerr << "  " << o << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
