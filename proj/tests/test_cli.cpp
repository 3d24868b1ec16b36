#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "epbt/commands.hpp"
#include "epbt/errors.hpp"
#include "epbt/io.hpp"
#include "epbt/run_config.hpp"
#include "epbt/run_log.hpp"

using namespace epbt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("epbt_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string blobs_config(const fs::path& out, std::size_t generations = 5) {
  return "strategy = epbt\n"
         "dataset = blobs\n"
         "blobs_classes = 3\n"
         "blobs_samples_per_class = 60\n"
         "blobs_noise = 1.0\n"
         "hidden_layers = 8\n"
         "population = 8\n"
         "generations = " + std::to_string(generations) + "\n"
         "epochs_per_generation = 2\n"
         "novelty_period = 2\n"
         "seed = 3\n"
         "workers = 2\n"
         "output_dir = " + out.string() + "\n";
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string l;
  std::size_t n = 0;
  while (std::getline(in, l)) ++n;
  return n;
}

std::vector<std::pair<double, double>> read_curve(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,loss");
  std::vector<std::pair<double, double>> rows;
  while (std::getline(in, line)) {
    const auto c = line.find(',');
    rows.emplace_back(std::stod(line.substr(0, c)), std::stod(line.substr(c + 1)));
  }
  return rows;
}

struct Sink {
  std::ostringstream out;
  std::ostringstream err;
};

} // namespace

TEST_CASE("config parsing: defaults and derived values") {
  const RunConfig c = RunConfig::parse("population = 40\ngenerations = 25\n");
  CHECK(c.evolution.population_size == 40);
  CHECK(c.evolution.operators.elite_count == 20);
  CHECK(c.evolution.pulsation.expanded_count == 30);
  CHECK(c.evolution.pulsation.period == 5);
  CHECK(c.evolution.workers == 0);
  CHECK(c.hidden_layers == std::vector<std::size_t>{64, 32});
  CHECK(c.dataset.kind == DatasetKind::blobs);
  CHECK_FALSE(c.probe_size.has_value());
}

TEST_CASE("config parsing: every value kind") {
  const RunConfig c = RunConfig::parse(
      "# comment line\n"
      "strategy = pbt_baseline   # trailing comment\n"
      "hidden_layers = 16, 4\n"
      "milestones = 0.5,0.75\n"
      "novelty_period = off\n"
      "distillation = off\n"
      "theta_range = -2, 2\n"
      "momentum_range = 0.5,0.9\n"
      "dataset = csv\n"
      "csv_path = data.csv\n"
      "probe_size = 50\n");
  CHECK(c.evolution.strategy == Strategy::pbt_baseline);
  CHECK(c.hidden_layers == std::vector<std::size_t>{16, 4});
  CHECK(c.sgd.milestones == std::vector<double>{0.5, 0.75});
  CHECK_FALSE(c.evolution.pulsation.period.has_value());
  CHECK_FALSE(c.evolution.distillation);
  CHECK(c.evolution.ranges[5].low == -2.0);
  CHECK(c.evolution.ranges[Genome::kMomentum].high == 0.9);
  CHECK(c.dataset.csv_path == "data.csv");
  CHECK(c.probe_size == 50);
}

TEST_CASE("config parsing: errors name the line and key") {
  const auto message = [](const std::string& text) {
    try {
      RunConfig::parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("seed = 1\npopulaton = 4\n").find("line 2: unknown key 'populaton'") !=
        std::string::npos);
  CHECK(message("seed = 1\nseed = 2\n").find("line 2: key 'seed' given twice") != std::string::npos);
  CHECK(message("population = many\n").find("key 'population'") != std::string::npos);
  CHECK(message("just text\n").find("line 1") != std::string::npos);
  CHECK(message("population = 10\nelite_count = 10\n") != "no error");
  CHECK(message("dataset = csv\n") != "no error");
  CHECK(message("val_fraction = 0.6\ntest_fraction = 0.5\n") != "no error");
  CHECK(message("momentum_range = 0.5,1.0\n") != "no error");
  CHECK(message("strategy = pbt_baseline\npopulation = 3\n") != "no error");
}

TEST_CASE("dry run: published figures and small runs") {
  TempDir dir("dry");
  Sink s;
  const auto cfg = write_config(dir.path, "population = 40\nelite_count = 20\ngenerations = 25\n"
                                          "epochs_per_generation = 8\n");
  CHECK(cmd_dry_run(cfg, s.out, s.err) == kExitOk);
  CHECK(s.out.str().find("unique_genomes: 520\n") != std::string::npos);
  CHECK(s.out.str().find("budget_epochs: 8000\n") != std::string::npos);
  Sink one;
  write_config(dir.path, "population = 40\ngenerations = 1\n");
  CHECK(cmd_dry_run(cfg, one.out, one.err) == kExitOk);
  CHECK(one.out.str().find("unique_genomes: 40\n") != std::string::npos);
  Sink bad;
  write_config(dir.path, "populaton = 40\n");
  CHECK(cmd_dry_run(cfg, bad.out, bad.err) == kExitConfig);
  CHECK(bad.err.str().find("populaton") != std::string::npos);
  Sink missing;
  CHECK(cmd_dry_run(dir.path / "nope.cfg", missing.out, missing.err) == kExitConfig);
}

TEST_CASE("shipped example configs parse and validate") {
  for (const char* name : {"blobs_epbt.cfg", "blobs_pbt.cfg", "blobs_sgd.cfg"}) {
    CAPTURE(name);
    Sink s;
    CHECK(cmd_dry_run(fs::path(EPBT_CONFIG_DIR) / name, s.out, s.err) == kExitOk);
    CHECK(s.err.str().empty());
  }
}

TEST_CASE("run: five generations, reproducible, summary and checkpoint") {
  TempDir dir("run");
  const auto out_a = dir.path / "a";
  const auto out_b = dir.path / "b";
  Sink s;
  CHECK(cmd_run(write_config(dir.path, blobs_config(out_a)), {}, s.out, s.err) == kExitOk);
  CHECK(line_count(out_a / "generations.jsonl") == 5);
  CHECK(line_count(out_a / "timings.jsonl") == 5);
  CHECK(fs::exists(out_a / "summary.json"));
  CHECK(fs::exists(out_a / "checkpoint" / "state.json"));
  CHECK(fs::exists(out_a / "best_weights.bin"));
  const std::string summary = read_file(out_a / "summary.json");
  CHECK(summary.find("\"test_accuracy\"") != std::string::npos);
  CHECK(summary.find("\"validation_fitness\"") != std::string::npos);
  Sink t;
  RunOptions opts;
  opts.workers = 1;
  CHECK(cmd_run(write_config(dir.path, blobs_config(out_b)), opts, t.out, t.err) == kExitOk);
  CHECK(read_file(out_a / "generations.jsonl") == read_file(out_b / "generations.jsonl"));
}

TEST_CASE("run: environment variable overrides the output directory") {
  TempDir dir("env");
  const auto env_out = dir.path / "from_env";
  ::setenv(kOutputDirEnv, env_out.string().c_str(), 1);
  Sink s;
  const int rc = cmd_run(write_config(dir.path, blobs_config(dir.path / "ignored", 2)), {}, s.out,
                         s.err);
  ::unsetenv(kOutputDirEnv);
  CHECK(rc == kExitOk);
  CHECK(fs::exists(env_out / "generations.jsonl"));
  CHECK_FALSE(fs::exists(dir.path / "ignored"));
}

TEST_CASE("run: resume from a mid-run checkpoint reproduces the full log") {
  TempDir dir("resume");
  const auto full = dir.path / "full";
  const auto part = dir.path / "part";
  Sink s;
  REQUIRE(cmd_run(write_config(dir.path, blobs_config(full, 6)), {}, s.out, s.err) == kExitOk);

  // Recreate the state the run had after three generations.
  const RunConfig cfg = RunConfig::parse(blobs_config(part, 6));
  const Split data = build_split(cfg);
  const EvolutionConfig evo = resolve_evolution(cfg, data);
  TrainerEvaluator eval(data, build_architecture(cfg, data), cfg.sgd, evo.pulsation.probe_size,
                        probe_seed(cfg));
  EvolutionRun run(evo, eval);
  std::string log;
  for (int g = 0; g < 3; ++g) {
    log += generation_json(run.step(), evo.strategy) + "\n";
  }
  fs::create_directories(part);
  write_file_atomic(part / "generations.jsonl", log + "{\"partial\":");
  save_run_state(run.state(), 3, part / "checkpoint");

  RunOptions opts;
  opts.resume = true;
  Sink r;
  CHECK(cmd_run(write_config(dir.path, blobs_config(part, 6)), opts, r.out, r.err) == kExitOk);
  CHECK(r.out.str().find("resuming at generation 3") != std::string::npos);
  CHECK(read_file(part / "generations.jsonl") == read_file(full / "generations.jsonl"));
}

TEST_CASE("run: SGD baseline writes a per-epoch curve instead of a generation log") {
  TempDir dir("sgd");
  const auto out = dir.path / "out";
  std::string text = blobs_config(out, 3);
  text.replace(text.find("epbt"), 4, "sgd_baseline");
  Sink s;
  CHECK(cmd_run(write_config(dir.path, text), {}, s.out, s.err) == kExitOk);
  CHECK(fs::exists(out / "curve.csv"));
  CHECK_FALSE(fs::exists(out / "generations.jsonl"));
  CHECK(line_count(out / "curve.csv") == 1 + 6);
}

TEST_CASE("run: invalid configs exit with the config status") {
  TempDir dir("badrun");
  Sink s;
  CHECK(cmd_run(write_config(dir.path, "population = 8\nelite_count = 9\n"), {}, s.out, s.err) ==
        kExitConfig);
  CHECK(s.err.str().find("elite") != std::string::npos);
  Sink t;
  CHECK(cmd_run(write_config(dir.path, "dataset = csv\ncsv_path = /nonexistent.csv\n"), {}, t.out,
                t.err) == kExitConfig);
}

TEST_CASE("loss-curve command examples") {
  TempDir dir("curve");
  Sink s;
  const std::vector<double> zeros(8, 0.0);
  CHECK(cmd_loss_curve(zeros, 11, dir.path / "z.csv", s.out, s.err) == kExitOk);
  const auto z = read_curve(dir.path / "z.csv");
  REQUIRE(z.size() == 11);
  for (const auto& [x, l] : z) CHECK(l == 0.0);
  const std::vector<double> lin{0, 0, 1, 0, 0, 0, 0, 0};
  CHECK(cmd_loss_curve(lin, 7, dir.path / "l.csv", s.out, s.err) == kExitOk);
  for (const auto& [x, l] : read_curve(dir.path / "l.csv")) {
    CHECK(l == doctest::Approx(-0.5).epsilon(1e-15));
  }
  CHECK(cmd_loss_curve(lin, 1, dir.path / "bad.csv", s.out, s.err) == kExitConfig);
  CHECK(cmd_loss_curve(std::vector<double>(7, 0.0), 5, dir.path / "bad.csv", s.out, s.err) ==
        kExitConfig);
  CHECK_FALSE(fs::exists(dir.path / "bad.csv"));
}

TEST_CASE("ancestry command agrees with the generation log") {
  TempDir dir("anc");
  const auto out = dir.path / "out";
  Sink s;
  REQUIRE(cmd_run(write_config(dir.path, blobs_config(out, 6)), {}, s.out, s.err) == kExitOk);
  const auto history = load_generation_log(out / "generations.jsonl");
  for (const auto& m : history.back().members) {
    Sink a;
    REQUIRE(cmd_ancestry(out, std::to_string(m.id), a.out, a.err) == kExitOk);
    std::ifstream csv(out / ("ancestry_" + std::to_string(m.id) + ".csv"));
    std::string line;
    std::getline(csv, line);
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
      ++rows;
      std::vector<double> v;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
      REQUIRE(v.size() == 14);
      const auto gen = static_cast<std::size_t>(v[0]);
      const auto id = static_cast<IndividualId>(v[1]);
      const MemberRecord* logged = nullptr;
      for (const auto& x : history.at(gen).members) {
        if (x.id == id) logged = &x;
      }
      REQUIRE(logged != nullptr);
      const auto genes = logged->genome.genes();
      for (std::size_t i = 0; i < Genome::kGeneCount; ++i) {
        CHECK(v[2 + i] == genes[i]);
      }
      CHECK(fs::exists(out / ("ancestry_" + std::to_string(m.id)) /
                       ("loss_g" + std::to_string(gen) + "_id" + std::to_string(id) + ".csv")));
    }
    CHECK(rows >= 1);
    CHECK(rows <= history.size());
  }
  Sink best;
  CHECK(cmd_ancestry(out, "best", best.out, best.err) == kExitOk);
  Sink unknown;
  CHECK(cmd_ancestry(out, "999999", unknown.out, unknown.err) != kExitOk);
  Sink garbage;
  CHECK(cmd_ancestry(out, "abc", garbage.out, garbage.err) != kExitOk);
  Sink no_run;
  CHECK(cmd_ancestry(dir.path / "missing", "0", no_run.out, no_run.err) != kExitOk);
}
