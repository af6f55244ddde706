#include "lowdim/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lowdim/rng.hpp"

namespace lowdim {

using nlohmann::json;

std::uint64_t derived_seed(std::uint64_t master, std::uint64_t label) {
  return RngStream(master).derive(label).seed();
}

namespace {

// json.at with a ConfigError naming the missing field.
const json& need(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key))
    throw ConfigError("missing required field '" + where + "." + key + "'");
  return j.at(key);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + key + "': " + e.what());
  }
}

DatasetConfig parse_dataset(const json& j) {
  DatasetConfig d;
  d.kind = need(j, "kind", "dataset").get<std::string>();
  d.n = get_or<std::size_t>(j, "n", d.n);
  d.m = get_or<std::size_t>(j, "m", d.m);
  d.input_dim = get_or<std::size_t>(j, "input_dim", d.input_dim);
  d.rank = get_or<std::size_t>(j, "rank", d.rank);
  d.noise = get_or<double>(j, "noise", d.noise);
  d.orthogonal = get_or<bool>(j, "orthogonal", d.orthogonal);
  d.nonlinearity = get_or<double>(j, "nonlinearity", d.nonlinearity);
  d.task_rotation = get_or<double>(j, "task_rotation", d.task_rotation);
  d.margin = get_or<double>(j, "margin", d.margin);
  d.pixels_to_shuffle = get_or<std::size_t>(j, "pixels_to_shuffle", d.pixels_to_shuffle);
  if (j.contains("base")) {
    const json& b = j.at("base");
    d.base_count = get_or<std::size_t>(b, "count", d.base_count);
    d.base_dim = get_or<std::size_t>(b, "dim", d.base_dim);
    d.base_classes = get_or<std::size_t>(b, "classes", d.base_classes);
    d.base_spread = get_or<double>(b, "spread", d.base_spread);
  }
  d.path = get_or<std::string>(j, "path", "");
  d.images = get_or<std::string>(j, "images", "");
  d.labels = get_or<std::string>(j, "labels", "");
  if (j.contains("schema")) d.schema = j.at("schema");
  if (d.kind != "teacher" && d.kind != "permuted_labels" && d.kind != "shuffled_pixels" &&
      d.kind != "csv" && d.kind != "idx")
    throw ConfigError("dataset.kind '" + d.kind + "' unknown");
  if (d.n == 0 || d.m == 0) throw ConfigError("dataset.n and dataset.m must be >= 1");
  return d;
}

NetworkSpec parse_model(const json& j) {
  NetworkSpec s;
  s.input_dim = get_or<std::size_t>(j, "input_dim", 0);  // 0: filled from the dataset
  s.hidden = get_or<std::vector<std::size_t>>(j, "hidden", {});
  s.output_dim = get_or<std::size_t>(j, "output_dim", 0);
  s.activation = activation_from_string(get_or<std::string>(j, "activation", "relu"));
  return s;
}

ModeConfig parse_mode(const json& j) {
  ModeConfig m;
  m.kind = get_or<std::string>(j, "kind", m.kind);
  if (m.kind != "direct" && m.kind != "single" && m.kind != "shared" && m.kind != "transfer")
    throw ConfigError("mode.kind '" + m.kind + "' unknown");
  m.d = get_or<std::size_t>(j, "d", 0);
  m.l = get_or<std::size_t>(j, "l", 0);
  m.k = get_or<std::size_t>(j, "k", 0);
  m.k_prime = get_or<std::size_t>(j, "k_prime", 0);
  m.bundle = get_or<std::string>(j, "bundle", "");
  if (m.kind == "single" && m.d == 0) throw ConfigError("mode.d required for single mode");
  if (m.kind == "shared" && (m.l == 0 || m.k == 0))
    throw ConfigError("mode.l and mode.k required for shared mode");
  return m;
}

TrainConfig parse_training(const json& j) {
  TrainConfig t;
  t.epochs = get_or<std::size_t>(j, "epochs", 400);
  t.lr_grid = get_or<std::vector<double>>(j, "lr_grid", t.lr_grid);
  t.lr = get_or<double>(j, "lr", t.lr_grid.empty() ? 0.001 : t.lr_grid.back());
  t.weight_decay = get_or<double>(j, "weight_decay", t.weight_decay);
  t.batch_size = get_or<std::size_t>(j, "batch_size", t.batch_size);
  t.finetune_epochs = get_or<std::size_t>(j, "finetune_epochs", t.finetune_epochs);
  t.finetune_lr = get_or<double>(j, "finetune_lr", t.finetune_lr);
  t.eval_every = get_or<std::size_t>(j, "eval_every", t.eval_every);
  try {
    t.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("training: ") + e.what());
  }
  return t;
}

SearchSectionConfig parse_search(const json& j) {
  SearchSectionConfig s;
  s.d_grid = get_or<std::vector<std::size_t>>(j, "d_grid", {});
  if (j.contains("lk_grid")) {
    for (const auto& e : j.at("lk_grid")) {
      if (!e.is_array() || e.size() != 2)
        throw ConfigError("search.lk_grid entries must be [l, k] pairs");
      s.lk_grid.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
  }
  s.target_fraction = get_or<double>(j, "target_fraction", s.target_fraction);
  if (j.contains("baseline_accuracy"))
    s.baseline_accuracy = j.at("baseline_accuracy").get<double>();
  s.jobs = get_or<std::size_t>(j, "jobs", s.jobs);
  if (s.target_fraction < 0.0 || s.target_fraction > 1.0)
    throw ConfigError("search.target_fraction must lie in [0,1]");
  return s;
}

CompressionConfig parse_compression(const json& j) {
  CompressionConfig c;
  c.r_global = get_or<std::size_t>(j, "r_global", c.r_global);
  c.r_local = get_or<std::size_t>(j, "r_local", c.r_local);
  c.r_single = get_or<std::size_t>(j, "r_single", c.r_single);
  c.restarts = get_or<std::size_t>(j, "restarts", c.restarts);
  c.grids.rg_grid = get_or<std::vector<std::size_t>>(j, "rg_grid", c.grids.rg_grid);
  c.grids.rl_grid = get_or<std::vector<std::size_t>>(j, "rl_grid", c.grids.rl_grid);
  c.grids.r_single_grid = get_or<std::vector<std::size_t>>(j, "r_grid", c.grids.r_single_grid);
  c.grids.l_grid = get_or<std::vector<std::size_t>>(j, "l_grid", c.grids.l_grid);
  c.grids.k_grid = get_or<std::vector<std::size_t>>(j, "k_grid", c.grids.k_grid);
  // chosen sizes travel as grid indices, so the grids must contain them
  auto member = [](const std::vector<std::size_t>& g, std::size_t v) {
    return std::find(g.begin(), g.end(), v) != g.end();
  };
  if (!member(c.grids.rg_grid, c.r_global))
    throw ConfigError("compression.r_global is not in compression.rg_grid");
  if (!member(c.grids.rl_grid, c.r_local))
    throw ConfigError("compression.r_local is not in compression.rl_grid");
  if (!member(c.grids.r_single_grid, c.r_single))
    throw ConfigError("compression.r_single is not in compression.r_grid");
  return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  ExperimentConfig c;
  c.raw = doc;
  c.seed = get_or<std::uint64_t>(doc, "seed", c.seed);
  c.output_dir = get_or<std::string>(doc, "output_dir", c.output_dir);
  c.dataset = parse_dataset(need(doc, "dataset", ""));
  c.model = doc.contains("model") ? parse_model(doc.at("model")) : NetworkSpec{};
  c.mode = doc.contains("mode") ? parse_mode(doc.at("mode")) : ModeConfig{};
  c.training = doc.contains("training") ? parse_training(doc.at("training")) : TrainConfig{};
  c.search = doc.contains("search") ? parse_search(doc.at("search")) : SearchSectionConfig{};
  c.compression =
      doc.contains("compression") ? parse_compression(doc.at("compression")) : CompressionConfig{};
  if (doc.contains("certificate"))
    c.delta = get_or<double>(doc.at("certificate"), "delta", c.delta);
  if (!(c.delta > 0.0) || c.delta > 1.0) throw ConfigError("certificate.delta outside (0,1]");

  // default l/k encoding grids: the wide standard grids
  if (c.compression.grids.l_grid.empty())
    c.compression.grids.l_grid = {20,  30,  40,  50,  60,  70,   80,   90,   100,  120,  150,
                                  200, 300, 400, 500, 600, 700,  800,  900,  1000, 1200, 1400,
                                  1600, 1800, 2000, 2500, 3000, 3500, 4000, 5000, 6000, 7000, 8000};
  if (c.compression.grids.k_grid.empty())
    c.compression.grids.k_grid = {5, 10, 15, 20, 30, 35, 40, 50, 60, 70, 80, 90};
  c.compression.grids.lr_grid = c.training.lr_grid;
  return c;
}

namespace {

// --set a.b.c=value; value parsed as JSON when possible, else as a string.
void apply_override(json& doc, const std::string& expr) {
  const auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key.path=value, got '" + expr + "'");
  const std::string path = expr.substr(0, eq);
  const std::string value = expr.substr(eq + 1);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("--set: empty key segment in '" + path + "'");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_experiment_config(doc);
}

TaskSet build_taskset(const ExperimentConfig& config) {
  const DatasetConfig& d = config.dataset;
  const std::uint64_t seed = derived_seed(config.seed, seeds::kDataset);
  try {
    if (d.kind == "teacher") {
      TeacherOptions opt;
      opt.input_dim = d.input_dim;
      opt.n = d.n;
      opt.m = d.m;
      opt.relatedness_rank = d.rank;
      opt.noise = d.noise;
      opt.orthogonal = d.orthogonal;
      opt.nonlinearity = d.nonlinearity;
      opt.task_rotation = d.task_rotation;
      opt.margin = d.margin;
      return gen_teacher_tasks(opt, seed);
    }
    if (d.kind == "permuted_labels" || d.kind == "shuffled_pixels") {
      Dataset base;
      if (!d.images.empty()) {
        base = load_idx(d.images, d.labels);
      } else {
        // enough pool for every task's train/val/test sample
        const std::size_t per_task = d.m + (2 * d.m) / 7 + d.m / 7;
        const std::size_t count = d.base_count ? d.base_count : 2 * per_task;
        base = gen_blobs(count, d.base_dim, d.base_classes, d.base_spread,
                         derived_seed(seed, 11));
      }
      return d.kind == "permuted_labels"
                 ? gen_permuted_labels(base, d.n, d.m, seed)
                 : gen_shuffled_pixels(base, d.n, d.m, d.pixels_to_shuffle, seed);
    }
    if (d.kind == "csv") {
      if (d.path.empty()) throw ConfigError("dataset.path required for csv");
      const Dataset all = load_csv(d.path, d.schema);
      TaskSet ts;
      ts.input_dim = all.dim;
      ts.classes = all.classes;
      for (std::size_t t = 0; t < d.n; ++t)
        ts.tasks.push_back(split_pool(all, d.m, derived_seed(seed, 100 + t)));
      return ts;
    }
    if (d.kind == "idx") {
      const Dataset all = load_idx(d.images, d.labels);
      TaskSet ts;
      ts.input_dim = all.dim;
      ts.classes = all.classes;
      for (std::size_t t = 0; t < d.n; ++t)
        ts.tasks.push_back(split_pool(all, d.m, derived_seed(seed, 100 + t)));
      return ts;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  throw ConfigError("dataset.kind '" + d.kind + "' unknown");
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace lowdim
