#include "epbt/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "epbt/errors.hpp"
#include "epbt/io.hpp"
#include "epbt/loss_taylor.hpp"
#include "epbt/run_config.hpp"
#include "epbt/run_log.hpp"

namespace epbt {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
    return env;
  }
  return cfg.output_dir;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) {
    text += l;
    text += '\n';
  }
  return text;
}

/// First `count` lines of a file, verbatim.
std::vector<std::string> read_lines(const fs::path& path, std::size_t count) {
  std::vector<std::string> lines;
  if (count == 0) {
    return lines;
  }
  std::istringstream in(read_file(path));
  std::string line;
  while (lines.size() < count && std::getline(in, line)) {
    lines.push_back(line);
  }
  if (lines.size() < count) {
    throw FormatError(path.string() + ": has " + std::to_string(lines.size()) +
                      " lines, checkpoint expects " + std::to_string(count));
  }
  return lines;
}

json genome_json(const Genome& g) {
  json j;
  j["theta"] = g.loss_params.theta();
  j["lr_scale"] = g.lr_scale;
  j["lr_decay"] = g.lr_decay_factor;
  j["momentum"] = g.momentum;
  return j;
}

json counters_json(const RunCounters& c) {
  json j;
  j["evaluations"] = c.evaluations;
  j["genomes_evaluated"] = c.genomes_evaluated;
  j["trained_epochs"] = c.trained_epochs;
  j["budget_epochs"] = c.budget_epochs;
  j["failed_evaluations"] = c.failed_evaluations;
  return j;
}

int run_population(const RunConfig& cfg, const EvolutionConfig& evo, const Split& data,
                   const MlpArchitecture& arch, const fs::path& dir, bool resume,
                   std::ostream& out) {
  TrainerEvaluator evaluator(data, arch, cfg.sgd, evo.pulsation.probe_size, probe_seed(cfg));
  EvolutionRun run(evo, evaluator);

  const fs::path log_path = dir / "generations.jsonl";
  const fs::path timing_path = dir / "timings.jsonl";
  const fs::path checkpoint = dir / "checkpoint";
  std::vector<std::string> log_lines;
  std::vector<std::string> timing_lines;

  if (resume && fs::exists(checkpoint / "state.json")) {
    LoadedRunState loaded = load_run_state(checkpoint);
    run.restore(loaded.state);
    log_lines = read_lines(log_path, loaded.records_written);
    if (fs::exists(timing_path)) {
      std::istringstream in(read_file(timing_path));
      std::string line;
      while (timing_lines.size() < loaded.records_written && std::getline(in, line)) {
        timing_lines.push_back(line);
      }
    }
    out << "resuming at generation " << loaded.state.next_generation << "\n";
  }

  while (!run.finished()) {
    const GenerationRecord rec = run.step();
    log_lines.push_back(generation_json(rec, evo.strategy));
    timing_lines.push_back(timing_json(rec));
    write_file_atomic(log_path, join_lines(log_lines));
    write_file_atomic(timing_path, join_lines(timing_lines));
    save_run_state(run.state(), log_lines.size(), checkpoint);
    out << "generation " << rec.generation << " best " << format_double(rec.best_fitness)
        << " median " << format_double(rec.median_fitness) << "\n";
  }

  const Individual& best = run.population().best();
  json summary;
  summary["strategy"] = to_string(evo.strategy);
  summary["seed"] = evo.seed;
  summary["generations"] = evo.generations;
  summary["population"] = evo.population_size;
  json b;
  b["id"] = best.id;
  b["validation_fitness"] = best.fitness_or_zero();
  b["test_accuracy"] = best.test_accuracy ? json(*best.test_accuracy) : json(nullptr);
  b["genome"] = genome_json(best.genome);
  summary["best"] = b;
  summary["counters"] = counters_json(run.counters());
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  if (best.weights) {
    save_weights(*best.weights, dir / "best_weights.bin");
  }
  out << "best individual " << best.id << " validation " << format_double(best.fitness_or_zero());
  if (best.test_accuracy) {
    out << " test " << format_double(*best.test_accuracy);
  }
  out << "\n";
  return kExitOk;
}

int run_sgd(const RunConfig& cfg, const EvolutionConfig& evo, const Split& data,
            const MlpArchitecture& arch, const fs::path& dir, std::ostream& out) {
  const SgdBaselineResult result = run_sgd_baseline(evo, data, arch, cfg.sgd);
  std::string csv = "epoch,train_loss,validation_accuracy,test_accuracy\n";
  for (const auto& p : result.curve) {
    csv += std::to_string(p.epoch) + "," + format_double(p.train_loss) + "," +
           format_double(p.validation_accuracy) + "," + format_double(p.test_accuracy) + "\n";
  }
  write_file_atomic(dir / "curve.csv", csv);
  save_weights(result.weights, dir / "final_weights.bin");

  json summary;
  summary["strategy"] = to_string(evo.strategy);
  summary["seed"] = evo.seed;
  summary["epochs"] = evo.total_epochs();
  summary["diverged"] = result.diverged;
  if (!result.curve.empty()) {
    summary["validation_accuracy"] = result.curve.back().validation_accuracy;
    summary["test_accuracy"] = result.curve.back().test_accuracy;
  }
  RunCounters c = predict_counters(evo);
  summary["counters"] = counters_json(c);
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  if (!result.curve.empty()) {
    out << "final validation " << format_double(result.curve.back().validation_accuracy)
        << " test " << format_double(result.curve.back().test_accuracy) << "\n";
  }
  return result.diverged ? kExitRuntime : kExitOk;
}

/// Maps exceptions to exit codes and prints the message.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LookupError& e) {
    err << "missing input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

} // namespace

int cmd_run(const fs::path& config_path, const RunOptions& options, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = RunConfig::load(config_path);
    if (options.workers) {
      cfg.evolution.workers = *options.workers;
    }
    const Split data = build_split(cfg);
    const MlpArchitecture arch = build_architecture(cfg, data);
    const EvolutionConfig evo = resolve_evolution(cfg, data);
    const fs::path dir = output_dir(cfg);
    fs::create_directories(dir);
    if (evo.strategy == Strategy::sgd_baseline) {
      return run_sgd(cfg, evo, data, arch, dir, out);
    }
    return run_population(cfg, evo, data, arch, dir, options.resume, out);
  });
}

int cmd_loss_curve(std::span<const double> theta, std::size_t resolution, const fs::path& out_path,
                   std::ostream& out, std::ostream& err) {
  if (theta.size() != kTaylorParamCount) {
    err << "usage error: --theta needs exactly " << kTaylorParamCount << " values, got "
        << theta.size() << "\n";
    return kExitConfig;
  }
  if (resolution < 2) {
    err << "usage error: --resolution must be at least 2\n";
    return kExitConfig;
  }
  return guarded(err, [&] {
    const LossCurve curve = project_binary(LossParams::from_span(theta), resolution);
    write_loss_curve_csv(curve, out_path);
    out << "wrote " << curve.samples.size() << " rows to " << out_path.string() << "\n";
    return kExitOk;
  });
}

int cmd_ancestry(const fs::path& run_dir, const std::string& id_text, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&]() -> int {
    const auto history = load_generation_log(run_dir / "generations.jsonl");
    if (history.empty()) {
      throw FormatError("generation log is empty");
    }
    IndividualId id = 0;
    if (id_text == "best") {
      const auto& last = history.back().members;
      const MemberRecord* best = nullptr;
      for (const auto& m : last) {
        if (best == nullptr || m.fitness > best->fitness ||
            (m.fitness == best->fitness && m.id < best->id)) {
          best = &m;
        }
      }
      if (best == nullptr) {
        throw FormatError("last generation has no members");
      }
      id = best->id;
    } else {
      std::size_t used = 0;
      try {
        id = std::stoull(id_text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != id_text.size() || id_text.empty() || id_text.front() == '-') {
        err << "usage error: --id must be a non-negative integer or 'best'\n";
        return kExitConfig;
      }
    }
    std::vector<AncestorEntry> chain;
    try {
      chain = ancestry(history, id);
    } catch (const LookupError& e) {
      err << "unknown individual: " << e.what() << "\n";
      return kExitConfig;
    }
    const std::string stem = "ancestry_" + std::to_string(id);
    write_file_atomic(run_dir / (stem + ".csv"), ancestry_csv(chain));
    const fs::path curve_dir = run_dir / stem;
    fs::create_directories(curve_dir);
    for (const auto& a : chain) {
      const LossCurve curve = project_binary(a.genome.loss_params, kAncestryCurveResolution);
      write_loss_curve_csv(curve, curve_dir / ("loss_g" + std::to_string(a.generation) + "_id" +
                                               std::to_string(a.id) + ".csv"));
    }
    out << "individual " << id << ": " << chain.size() << " ancestors, wrote "
        << (run_dir / (stem + ".csv")).string() << "\n";
    return kExitOk;
  });
}

int cmd_dry_run(const fs::path& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = RunConfig::load(config_path);
    const EvolutionConfig& evo = cfg.evolution;
    const RunCounters c = predict_counters(evo);
    out << "strategy: " << to_string(evo.strategy) << "\n"
        << "population: " << evo.population_size << "\n"
        << "generations: " << evo.generations << "\n"
        << "elite_count: " << evo.operators.elite_count << "\n"
        << "epochs_per_generation: " << evo.epochs_per_generation << "\n"
        << "evaluations: " << c.evaluations << "\n"
        << "unique_genomes: " << c.genomes_evaluated << "\n"
        << "trained_epochs: " << c.trained_epochs << "\n"
        << "budget_epochs: " << c.budget_epochs << "\n";
    return kExitOk;
  });
}

} // namespace epbt
