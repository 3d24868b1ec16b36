#include "epbt/run_log.hpp"

#include <fstream>
#include <set>
#include <nlohmann/json.hpp>

#include "epbt/errors.hpp"
#include "epbt/io.hpp"

namespace epbt {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kStateVersion = 1;

Json genome_json(const Genome& g) {
  Json theta = Json::array();
  for (double t : g.loss_params.theta()) {
    theta.push_back(t);
  }
  return Json{{"theta", theta},
              {"lr_scale", g.lr_scale},
              {"lr_decay", g.lr_decay_factor},
              {"momentum", g.momentum}};
}

Genome parse_genome(const Json& j) {
  std::array<double, Genome::kGeneCount> genes{};
  const auto& theta = j.at("theta");
  if (!theta.is_array() || theta.size() != kTaylorParamCount) {
    throw FormatError("genome: theta must hold 8 numbers");
  }
  for (std::size_t i = 0; i < kTaylorParamCount; ++i) {
    genes[i] = theta[i].get<double>();
  }
  genes[Genome::kLrScale] = j.at("lr_scale").get<double>();
  genes[Genome::kLrDecay] = j.at("lr_decay").get<double>();
  genes[Genome::kMomentum] = j.at("momentum").get<double>();
  return Genome::from_genes(genes);
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> parse_optional(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return std::nullopt;
  }
  return j.at(key).get<T>();
}

std::string bits_string(const BehaviorVector& b) {
  std::string s(b.size(), '0');
  for (std::size_t i = 0; i < b.size(); ++i) {
    s[i] = b.bit(i) ? '1' : '0';
  }
  return s;
}

BehaviorVector parse_bits(const std::string& s) {
  BehaviorVector b(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1') {
      throw FormatError("behavior bits must be '0' or '1'");
    }
    b.set(i, s[i] == '1');
  }
  return b;
}

Json counters_json(const RunCounters& c) {
  return Json{{"evaluations", c.evaluations},
              {"genomes_evaluated", c.genomes_evaluated},
              {"trained_epochs", c.trained_epochs},
              {"budget_epochs", c.budget_epochs},
              {"failed_evaluations", c.failed_evaluations}};
}

RunCounters parse_counters(const Json& j) {
  RunCounters c;
  c.evaluations = j.at("evaluations").get<std::size_t>();
  c.genomes_evaluated = j.at("genomes_evaluated").get<std::size_t>();
  c.trained_epochs = j.at("trained_epochs").get<std::size_t>();
  c.budget_epochs = j.at("budget_epochs").get<std::size_t>();
  c.failed_evaluations = j.at("failed_evaluations").get<std::size_t>();
  return c;
}

} // namespace

std::string generation_json(const GenerationRecord& rec, Strategy strategy) {
  Json members = Json::array();
  for (const auto& m : rec.members) {
    members.push_back(Json{{"id", m.id},
                           {"parent_id", optional_json(m.parent_id)},
                           {"born", m.born},
                           {"genome", genome_json(m.genome)},
                           {"fitness", m.fitness},
                           {"test_accuracy", optional_json(m.test_accuracy)},
                           {"epochs_trained", m.epochs_trained}});
  }
  const Json j{{"version", kGenerationLogVersion},
               {"strategy", std::string(to_string(strategy))},
               {"generation", rec.generation},
               {"best_fitness", rec.best_fitness},
               {"median_fitness", rec.median_fitness},
               {"novelty_active", rec.novelty_active},
               {"elite_ids", rec.elite_ids},
               {"members", members}};
  return j.dump();
}

std::string timing_json(const GenerationRecord& rec) {
  return Json{{"generation", rec.generation}, {"wall_seconds", rec.wall_seconds}}.dump();
}

GenerationRecord parse_generation_json(const std::string& line) {
  try {
    const Json j = Json::parse(line);
    const int version = j.at("version").get<int>();
    if (version != kGenerationLogVersion) {
      throw FormatError("generation log: unsupported version " + std::to_string(version));
    }
    GenerationRecord rec;
    rec.generation = j.at("generation").get<std::size_t>();
    rec.best_fitness = j.at("best_fitness").get<double>();
    rec.median_fitness = j.at("median_fitness").get<double>();
    rec.novelty_active = j.at("novelty_active").get<bool>();
    rec.elite_ids = j.at("elite_ids").get<std::vector<IndividualId>>();
    for (const auto& m : j.at("members")) {
      MemberRecord r;
      r.id = m.at("id").get<IndividualId>();
      r.parent_id = parse_optional<IndividualId>(m, "parent_id");
      r.born = m.at("born").get<std::size_t>();
      r.genome = parse_genome(m.at("genome"));
      r.fitness = m.at("fitness").get<double>();
      r.test_accuracy = parse_optional<double>(m, "test_accuracy");
      r.epochs_trained = m.at("epochs_trained").get<std::size_t>();
      rec.members.push_back(std::move(r));
    }
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("generation log: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("generation log: ") + e.what());
  }
}

std::vector<GenerationRecord> load_generation_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LookupError("cannot open generation log " + path.string());
  }
  std::vector<GenerationRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    try {
      records.push_back(parse_generation_json(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void save_run_state(const RunState& state, std::size_t records_written,
                    const std::filesystem::path& dir) {
  const auto weights_dir = dir / "weights";
  std::filesystem::create_directories(weights_dir);
  Json members = Json::array();
  for (const auto& ind : state.population.members) {
    Json m{{"id", ind.id},
           {"parent_id", optional_json(ind.parent_id)},
           {"born", ind.born},
           {"genome", genome_json(ind.genome)},
           {"fitness", optional_json(ind.fitness)},
           {"behavior", ind.behavior ? Json(bits_string(*ind.behavior)) : Json(nullptr)},
           {"epochs_trained", ind.epochs_trained},
           {"test_accuracy", optional_json(ind.test_accuracy)},
           {"weights", nullptr}};
    if (ind.weights) {
      const std::string file = std::to_string(ind.id) + ".bin";
      save_weights(*ind.weights, weights_dir / file);
      m["weights"] = "weights/" + file;
    }
    members.push_back(std::move(m));
  }
  const Json j{{"version", kStateVersion},
               {"next_generation", state.next_generation},
               {"population_generation", state.population.generation},
               {"next_id", state.next_id},
               {"rng_state", state.rng_state},
               {"records_written", records_written},
               {"counters", counters_json(state.counters)},
               {"members", members}};
  write_file_atomic(dir / "state.json", j.dump(1) + "\n");

  // Files of members that left the population are no longer referenced.
  std::set<std::string> live;
  for (const auto& ind : state.population.members) {
    if (ind.weights) live.insert(std::to_string(ind.id) + ".bin");
  }
  for (const auto& entry : std::filesystem::directory_iterator(weights_dir)) {
    if (entry.is_regular_file() && !live.contains(entry.path().filename().string())) {
      std::filesystem::remove(entry.path());
    }
  }
}

LoadedRunState load_run_state(const std::filesystem::path& dir) {
  try {
    const Json j = Json::parse(read_file(dir / "state.json"));
    if (j.at("version").get<int>() != kStateVersion) {
      throw FormatError("run state: unsupported version");
    }
    LoadedRunState out;
    out.records_written = j.at("records_written").get<std::size_t>();
    RunState& s = out.state;
    s.next_generation = j.at("next_generation").get<std::size_t>();
    s.population.generation = j.at("population_generation").get<std::size_t>();
    s.next_id = j.at("next_id").get<IndividualId>();
    s.rng_state = j.at("rng_state").get<std::string>();
    s.counters = parse_counters(j.at("counters"));
    for (const auto& m : j.at("members")) {
      Individual ind;
      ind.id = m.at("id").get<IndividualId>();
      ind.parent_id = parse_optional<IndividualId>(m, "parent_id");
      ind.born = m.at("born").get<std::size_t>();
      ind.genome = parse_genome(m.at("genome"));
      ind.fitness = parse_optional<double>(m, "fitness");
      if (!m.at("behavior").is_null()) {
        ind.behavior = parse_bits(m.at("behavior").get<std::string>());
      }
      ind.epochs_trained = m.at("epochs_trained").get<std::size_t>();
      ind.test_accuracy = parse_optional<double>(m, "test_accuracy");
      if (!m.at("weights").is_null()) {
        const auto rel = m.at("weights").get<std::string>();
        ind.weights = std::make_shared<const Weights>(load_weights(dir / rel));
      }
      s.population.members.push_back(std::move(ind));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run state: ") + e.what());
  }
}

} // namespace epbt
