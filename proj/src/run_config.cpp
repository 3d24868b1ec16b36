#include "epbt/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>

#include "epbt/errors.hpp"
#include "epbt/io.hpp"

namespace epbt {

namespace {

constexpr std::uint64_t kDataStream = 3;
constexpr std::uint64_t kProbeStream = 4;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    parts.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) {
      return parts;
    }
    start = comma + 1;
  }
}

double to_double(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_uint(std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected on/off, got '" + std::string(v) + "'");
}

GeneRange to_range(std::string_view v) {
  const auto parts = split_list(v);
  if (parts.size() != 2) {
    throw ConfigError("expected 'low,high', got '" + std::string(v) + "'");
  }
  return {to_double(parts[0]), to_double(parts[1])};
}

struct ParseState {
  RunConfig cfg;
  bool elite_count_set = false;
  bool candidates_set = false;
};

using Setter = std::function<void(ParseState&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"strategy", [](ParseState& s, std::string_view v) { s.cfg.evolution.strategy = parse_strategy(v); }},
      {"dataset",
       [](ParseState& s, std::string_view v) {
         if (v == "blobs") s.cfg.dataset.kind = DatasetKind::blobs;
         else if (v == "csv") s.cfg.dataset.kind = DatasetKind::csv;
         else if (v == "idx") s.cfg.dataset.kind = DatasetKind::idx;
         else throw ConfigError("expected blobs, csv or idx, got '" + std::string(v) + "'");
       }},
      {"blobs_classes", [](ParseState& s, std::string_view v) { s.cfg.dataset.blob_classes = to_uint(v); }},
      {"blobs_samples_per_class", [](ParseState& s, std::string_view v) { s.cfg.dataset.blob_samples_per_class = to_uint(v); }},
      {"blobs_noise", [](ParseState& s, std::string_view v) { s.cfg.dataset.blob_noise = to_double(v); }},
      {"csv_path", [](ParseState& s, std::string_view v) { s.cfg.dataset.csv_path = std::string(v); }},
      {"csv_label_column", [](ParseState& s, std::string_view v) { s.cfg.dataset.csv_label_column = std::string(v); }},
      {"idx_images", [](ParseState& s, std::string_view v) { s.cfg.dataset.idx_images = std::string(v); }},
      {"idx_labels", [](ParseState& s, std::string_view v) { s.cfg.dataset.idx_labels = std::string(v); }},
      {"val_fraction", [](ParseState& s, std::string_view v) { s.cfg.dataset.val_fraction = to_double(v); }},
      {"test_fraction", [](ParseState& s, std::string_view v) { s.cfg.dataset.test_fraction = to_double(v); }},
      {"hidden_layers",
       [](ParseState& s, std::string_view v) {
         s.cfg.hidden_layers.clear();
         if (v == "none" || v.empty()) {
           return;
         }
         for (auto part : split_list(v)) {
           s.cfg.hidden_layers.push_back(to_uint(part));
         }
       }},
      {"population", [](ParseState& s, std::string_view v) { s.cfg.evolution.population_size = to_uint(v); }},
      {"generations", [](ParseState& s, std::string_view v) { s.cfg.evolution.generations = to_uint(v); }},
      {"elite_count",
       [](ParseState& s, std::string_view v) {
         s.cfg.evolution.operators.elite_count = to_uint(v);
         s.elite_count_set = true;
       }},
      {"epochs_per_generation", [](ParseState& s, std::string_view v) { s.cfg.evolution.epochs_per_generation = to_uint(v); }},
      {"batch_size", [](ParseState& s, std::string_view v) { s.cfg.sgd.batch_size = to_uint(v); }},
      {"base_lr", [](ParseState& s, std::string_view v) { s.cfg.sgd.base_lr = to_double(v); }},
      {"milestones",
       [](ParseState& s, std::string_view v) {
         s.cfg.sgd.milestones.clear();
         if (v == "none" || v.empty()) {
           return;
         }
         for (auto part : split_list(v)) {
           s.cfg.sgd.milestones.push_back(to_double(part));
         }
       }},
      {"tournament_size", [](ParseState& s, std::string_view v) { s.cfg.evolution.operators.tournament_size = to_uint(v); }},
      {"mutation_sigma", [](ParseState& s, std::string_view v) { s.cfg.evolution.operators.mutation_sigma = to_double(v); }},
      {"reset_prob", [](ParseState& s, std::string_view v) { s.cfg.evolution.operators.reset_prob = to_double(v); }},
      {"per_gene_mutation_prob", [](ParseState& s, std::string_view v) { s.cfg.evolution.operators.per_gene_mutation_prob = to_double(v); }},
      {"swap_prob", [](ParseState& s, std::string_view v) { s.cfg.evolution.operators.swap_prob = to_double(v); }},
      {"novelty_period",
       [](ParseState& s, std::string_view v) {
         if (v == "off" || v == "none") {
           s.cfg.evolution.pulsation.period.reset();
         } else {
           s.cfg.evolution.pulsation.period = to_uint(v);
         }
       }},
      {"novelty_candidates",
       [](ParseState& s, std::string_view v) {
         s.cfg.evolution.pulsation.expanded_count = to_uint(v);
         s.candidates_set = true;
       }},
      {"probe_size", [](ParseState& s, std::string_view v) { s.cfg.probe_size = to_uint(v); }},
      {"distill_alpha", [](ParseState& s, std::string_view v) { s.cfg.evolution.distill_alpha = to_double(v); }},
      {"distillation", [](ParseState& s, std::string_view v) { s.cfg.evolution.distillation = to_bool(v); }},
      {"seed", [](ParseState& s, std::string_view v) { s.cfg.evolution.seed = to_uint(v); }},
      {"workers", [](ParseState& s, std::string_view v) { s.cfg.evolution.workers = to_uint(v); }},
      {"output_dir", [](ParseState& s, std::string_view v) { s.cfg.output_dir = std::string(v); }},
      {"theta_range",
       [](ParseState& s, std::string_view v) {
         const GeneRange r = to_range(v);
         for (std::size_t i = 0; i < kTaylorParamCount; ++i) {
           s.cfg.evolution.ranges[i] = r;
         }
       }},
      {"lr_scale_range", [](ParseState& s, std::string_view v) { s.cfg.evolution.ranges[Genome::kLrScale] = to_range(v); }},
      {"lr_decay_range", [](ParseState& s, std::string_view v) { s.cfg.evolution.ranges[Genome::kLrDecay] = to_range(v); }},
      {"momentum_range", [](ParseState& s, std::string_view v) { s.cfg.evolution.ranges[Genome::kMomentum] = to_range(v); }},
      {"baseline_lr_scale", [](ParseState& s, std::string_view v) { s.cfg.sgd.lr_scale = to_double(v); }},
      {"baseline_decay", [](ParseState& s, std::string_view v) { s.cfg.sgd.decay_factor = to_double(v); }},
      {"baseline_momentum", [](ParseState& s, std::string_view v) { s.cfg.sgd.momentum = to_double(v); }},
  };
  return table;
}

} // namespace

RunConfig RunConfig::parse(std::string_view text) {
  ParseState state;
  state.cfg.evolution.workers = 0;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto newline = text.find('\n', pos);
    std::string_view line = text.substr(pos, newline == std::string_view::npos ? std::string_view::npos : newline - pos);
    pos = newline == std::string_view::npos ? text.size() + 1 : newline + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
    }
    if (!seen.emplace(key).second) {
      throw ConfigError(where + ": key '" + std::string(key) + "' given twice");
    }
    try {
      it->second(state, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": key '" + std::string(key) + "': " + e.what());
    }
  }
  auto& evo = state.cfg.evolution;
  if (!state.elite_count_set) {
    evo.operators.elite_count = evo.population_size / 2;
  }
  if (!state.candidates_set) {
    evo.pulsation.expanded_count =
        std::min(PulsationConfig::default_expanded_count(evo.operators.elite_count),
                 evo.population_size);
  }
  state.cfg.validate();
  return state.cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const LookupError& e) {
    throw ConfigError(e.what());
  }
  return parse(text);
}

void RunConfig::validate() const {
  evolution.validate();
  sgd.validate();
  for (auto h : hidden_layers) {
    if (h == 0) {
      throw ConfigError("hidden_layers: sizes must be positive");
    }
  }
  if (probe_size && *probe_size == 0) {
    throw ConfigError("probe_size must be positive");
  }
  const auto& d = dataset;
  if (!(d.val_fraction > 0.0) || !(d.test_fraction > 0.0) ||
      !(d.val_fraction + d.test_fraction < 1.0)) {
    throw ConfigError("val_fraction and test_fraction must be positive and sum below 1");
  }
  switch (d.kind) {
    case DatasetKind::blobs:
      if (d.blob_classes < 2) throw ConfigError("blobs_classes must be at least 2");
      if (d.blob_samples_per_class == 0) throw ConfigError("blobs_samples_per_class must be positive");
      if (!(d.blob_noise >= 0.0)) throw ConfigError("blobs_noise must be non-negative");
      break;
    case DatasetKind::csv:
      if (d.csv_path.empty()) throw ConfigError("csv_path is required for dataset = csv");
      break;
    case DatasetKind::idx:
      if (d.idx_images.empty() || d.idx_labels.empty()) {
        throw ConfigError("idx_images and idx_labels are required for dataset = idx");
      }
      break;
  }
}

Split build_split(const RunConfig& cfg) {
  Rng rng(mix_seed(cfg.evolution.seed, kDataStream));
  Dataset data;
  switch (cfg.dataset.kind) {
    case DatasetKind::blobs:
      data = synth_blobs(cfg.dataset.blob_classes, cfg.dataset.blob_samples_per_class,
                         cfg.dataset.blob_noise, rng);
      break;
    case DatasetKind::csv:
      data = load_csv(cfg.dataset.csv_path, cfg.dataset.csv_label_column);
      break;
    case DatasetKind::idx:
      data = load_idx(cfg.dataset.idx_images, cfg.dataset.idx_labels);
      break;
  }
  Split s = split(data, cfg.dataset.val_fraction, cfg.dataset.test_fraction, rng);
  normalize_split(s);
  return s;
}

MlpArchitecture build_architecture(const RunConfig& cfg, const Split& data) {
  MlpArchitecture arch;
  arch.layer_sizes.push_back(data.train.dims());
  arch.layer_sizes.insert(arch.layer_sizes.end(), cfg.hidden_layers.begin(),
                          cfg.hidden_layers.end());
  arch.layer_sizes.push_back(data.train.class_count);
  arch.validate();
  return arch;
}

EvolutionConfig resolve_evolution(const RunConfig& cfg, const Split& data) {
  EvolutionConfig evo = cfg.evolution;
  const std::size_t val = data.validation.size();
  if (cfg.probe_size) {
    if (*cfg.probe_size > val) {
      throw ConfigError("probe_size " + std::to_string(*cfg.probe_size) +
                        " exceeds the validation set size " + std::to_string(val));
    }
    evo.pulsation.probe_size = *cfg.probe_size;
  } else {
    evo.pulsation.probe_size = std::min<std::size_t>(400, val);
  }
  evo.validate();
  return evo;
}

std::uint64_t probe_seed(const RunConfig& cfg) { return mix_seed(cfg.evolution.seed, kProbeStream); }

} // namespace epbt
