// Command-line driver: train / search / encode / decode / certify / transfer /
// gen-data over JSON experiment configs.  Every artifact an invocation writes
// is regenerable from (config, seed) alone.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lowdim/bounds.hpp"
#include "lowdim/bundle.hpp"
#include "lowdim/config.hpp"
#include "lowdim/model.hpp"
#include "lowdim/tasks.hpp"
#include "lowdim/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lowdim;

namespace {

fs::path output_dir(const ExperimentConfig& cfg) {
  const char* root = std::getenv("LOWDIM_OUT");
  fs::path dir = root ? fs::path(root) / cfg.output_dir : fs::path(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

void echo_config(const ExperimentConfig& cfg, const fs::path& dir) {
  write_file_atomic((dir / "config.json").string(), cfg.raw.dump(2) + "\n");
}

NetworkSpec resolve_network(const ExperimentConfig& cfg, const TaskSet& tasks) {
  NetworkSpec net = cfg.model;
  if (net.input_dim == 0) net.input_dim = tasks.input_dim;
  if (net.output_dim == 0) net.output_dim = tasks.classes;
  try {
    net.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return net;
}

SubspaceModel build_model(const ExperimentConfig& cfg, const NetworkSpec& net,
                          const TaskSet& tasks) {
  const std::uint64_t theta0 = derived_seed(cfg.seed, seeds::kTheta0);
  if (cfg.mode.kind == "direct") return SubspaceModel::direct(net, theta0);
  if (cfg.mode.kind == "single")
    return SubspaceModel::single(net, theta0, cfg.mode.d,
                                 derived_seed(cfg.seed, seeds::kProjector));
  if (cfg.mode.kind == "shared")
    return SubspaceModel::shared(net, theta0, cfg.mode.l, cfg.mode.k, tasks.size(),
                                 derived_seed(cfg.seed, seeds::kBasis));
  throw ConfigError("mode.kind '" + cfg.mode.kind + "' needs cmd_transfer");
}

void write_history_csv(const fs::path& path, const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,eval_acc\n";
  for (const auto& e : history.epochs)
    os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.eval_acc << '\n';
  write_file_atomic(path.string(), os.str());
}

std::vector<SearchPoint> read_trace_csv(const fs::path& path) {
  std::vector<SearchPoint> points;
  std::ifstream is(path);
  if (!is) return points;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    SearchPoint p;
    std::getline(ss, p.mode, ',');
    std::getline(ss, cell, ',');
    p.d_or_l = std::stoul(cell);
    std::getline(ss, cell, ',');
    p.k = std::stoul(cell);
    std::getline(ss, cell, ',');
    p.lr = std::stod(cell);
    std::getline(ss, cell, ',');
    p.seed = std::stoull(cell);
    std::getline(ss, cell, ',');
    p.train_acc = std::stod(cell);
    std::getline(ss, cell, ',');
    p.eval_acc = std::stod(cell);
    std::getline(ss, cell, ',');
    p.amortized = std::stod(cell);
    points.push_back(p);
  }
  return points;
}

json search_result_json(const DimensionSearchResult& r, const std::string& mode) {
  json j;
  j["mode"] = mode;
  j["baseline_accuracy"] = r.baseline_accuracy;
  j["target_accuracy"] = r.target_accuracy;
  j["reached"] = r.reached;
  j["best_attained"] = r.best_attained;
  if (r.reached) {
    j["best"] = {{"d_or_l", r.best.d_or_l}, {"k", r.best.k},     {"lr", r.best.lr},
                 {"train_acc", r.best.train_acc}, {"eval_acc", r.best.eval_acc},
                 {"amortized", r.best.amortized}};
    j["amortized_num"] = r.amortized_num;
    j["amortized_den"] = r.amortized_den;
  }
  return j;
}

DecodedBundle load_and_decode(const std::string& path, const EncodingGrids& grids) {
  try {
    return decode_bundle(load_bundle_bytes(path), grids);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

// Zero-one training error across tasks; the empirical risk of the bounds.
double training_zero_one(const SubspaceModel& model, const TaskSet& tasks) {
  double err = 0.0;
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    const std::optional<std::size_t> task =
        model.mode() == ModeKind::shared ? std::optional<std::size_t>(j) : std::nullopt;
    err += 1.0 - evaluate(model, tasks.tasks[j].train, task);
  }
  return err / static_cast<double>(tasks.size());
}

int cmd_train(const ExperimentConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  echo_config(cfg, dir);
  const TaskSet tasks = build_taskset(cfg);
  const NetworkSpec net = resolve_network(cfg, tasks);
  SubspaceModel model = build_model(cfg, net, tasks);

  const TaskSet training_view = [&] {
    if (cfg.mode.kind == "shared") return tasks;
    if (tasks.size() != 1)
      throw ConfigError("mode '" + cfg.mode.kind + "' trains one task; set dataset.n = 1");
    return tasks;
  }();
  TrainConfig tc = cfg.training;
  tc.shuffle_seed = derived_seed(cfg.seed, seeds::kShuffle);
  const TrainHistory history = train(model, training_view, tc);

  save_checkpoint(model, (dir / "checkpoint.ldck").string());
  write_history_csv(dir / "history.csv", history);
  json metrics{{"final_train_acc", history.final_train_acc},
               {"final_eval_acc", history.final_eval_acc},
               {"train_zero_one", training_zero_one(model, tasks)},
               {"trainable_count", model.trainable_count()},
               {"mode", cfg.mode.kind}};
  if (cfg.mode.kind == "shared") metrics["amortized_count"] = model.amortized_count();
  write_file_atomic((dir / "metrics.json").string(), metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << std::endl;
  return 0;
}

int cmd_search(const ExperimentConfig& cfg, const std::string& mode) {
  const fs::path dir = output_dir(cfg);
  echo_config(cfg, dir);
  const TaskSet tasks = build_taskset(cfg);

  SearchConfig sc;
  sc.network = resolve_network(cfg, tasks);
  sc.training = cfg.training;
  sc.training.shuffle_seed = derived_seed(cfg.seed, seeds::kShuffle);
  sc.target_fraction = cfg.search.target_fraction;
  sc.baseline_accuracy = cfg.search.baseline_accuracy;
  sc.master_seed = derived_seed(cfg.seed, seeds::kSearch);
  sc.jobs = cfg.search.jobs;
  const fs::path trace_path = dir / (mode + "_trace.csv");
  sc.warm_start = read_trace_csv(trace_path);

  DimensionSearchResult result;
  if (mode == "id") {
    if (cfg.search.d_grid.empty()) throw ConfigError("search.d_grid required for id search");
    result = id_search(tasks, cfg.search.d_grid, sc);
  } else {
    if (cfg.search.lk_grid.empty()) throw ConfigError("search.lk_grid required for aid search");
    result = aid_search(tasks, cfg.search.lk_grid, sc);
  }
  write_trace_csv(trace_path.string(), result.trace);
  const json rj = search_result_json(result, mode);
  write_file_atomic((dir / (mode + "_result.json")).string(), rj.dump(2) + "\n");
  std::cout << rj.dump(2) << std::endl;
  return 0;
}

int cmd_encode(const ExperimentConfig& cfg, const std::string& checkpoint,
               const std::string& out) {
  const fs::path dir = output_dir(cfg);
  const TaskSet tasks = build_taskset(cfg);
  SubspaceModel model = load_checkpoint(checkpoint);
  if (model.mode() != ModeKind::shared)
    throw ConfigError("encode expects a shared-mode checkpoint");

  TrainConfig tc = cfg.training;
  tc.shuffle_seed = derived_seed(cfg.seed, seeds::kShuffle);
  const QuantizedModelCodebooks cbs =
      quantize_shared_model(model, tasks, cfg.compression.r_global, cfg.compression.r_local,
                            cfg.compression.restarts, tc, derived_seed(cfg.seed, seeds::kKmeans));
  const EncodedBundle bundle =
      encode_bundle(model, cbs.global, cbs.local, cfg.compression.grids, tc.lr);
  const fs::path bundle_path = out.empty() ? dir / "bundle.ldeb" : fs::path(out);
  save_bundle(bundle, bundle_path.string());
  save_checkpoint(model, (dir / "quantized.ldck").string());

  const std::size_t n = model.task_count();
  json report{{"bits_meta", bundle.meta.total},
              {"bits_multitask", bundle.multitask.total},
              {"bits_per_task", bundle.bits_per_task(n)},
              {"train_zero_one", training_zero_one(model, tasks)},
              {"bundle", bundle_path.string()}};
  write_file_atomic((dir / "encode.json").string(), report.dump(2) + "\n");
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_decode(const ExperimentConfig& cfg, const std::string& bundle_path,
               const std::string& out) {
  const DecodedBundle decoded = load_and_decode(bundle_path, cfg.compression.grids);
  if (!out.empty()) save_checkpoint(decoded.model, out);
  const std::size_t n = decoded.model.task_count();
  json report{{"bits_meta", decoded.meta.total},
              {"bits_multitask", decoded.multitask.total},
              {"bits_per_task", static_cast<double>(decoded.meta.total + decoded.multitask.total) /
                                    static_cast<double>(n)},
              {"n", n},
              {"l", decoded.model.block_dim()},
              {"k", decoded.model.basis_size()},
              {"lr", decoded.lr}};
  std::cout << report.dump(2) << std::endl;
  return 0;
}

json certify_row(const std::string& name, const BoundInputs& in, const json* single) {
  const BoundCertificate cert = certify(in);
  json row = cert.to_json();
  row["name"] = name;
  if (single) {
    const auto m = single->value("m", in.samples_per_task);
    const double emp = single->at("empirical_risk").get<double>();
    const double bits = single->at("bits").get<double>();
    row["single_task_slow"] = single_task_bound(m, in.delta, emp, bits);
    row["single_task_fast"] = single_task_fast_bound(m, in.delta, emp, bits);
  }
  return row;
}

void write_certificate_csv(const fs::path& path, const json& rows) {
  std::ostringstream os;
  os << "name,single_task_slow,single_task_fast,mtl_slow,mtl_fast,pinsker,fast_non_vacuous\n";
  for (const auto& r : rows) {
    os << r.value("name", "") << ',';
    if (r.contains("single_task_slow"))
      os << r["single_task_slow"].get<double>() << ',' << r["single_task_fast"].get<double>();
    else
      os << ',';
    os << ',' << r["slow_rate"].get<double>() << ',' << r["fast_rate"].get<double>() << ','
       << r["pinsker"].get<double>() << ',' << (r["fast_non_vacuous"].get<bool>() ? 1 : 0)
       << '\n';
  }
  write_file_atomic(path.string(), os.str());
}

int cmd_certify_raw(const std::string& inputs_path, const std::string& out_prefix, double delta) {
  std::ifstream is(inputs_path);
  if (!is) throw DataError("cannot open inputs file: " + inputs_path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(std::string("inputs parse error: ") + e.what());
  }
  json rows = json::array();
  const json list = doc.contains("rows") ? doc.at("rows") : json::array({doc});
  for (const auto& r : list) {
    BoundInputs in = bound_inputs_from_json(r);
    if (!r.contains("delta") && delta > 0) in.delta = delta;
    const json* single = r.contains("single") ? &r.at("single") : nullptr;
    rows.push_back(certify_row(r.value("name", ""), in, single));
  }
  if (!out_prefix.empty()) {
    write_file_atomic(out_prefix + ".json", rows.dump(2) + "\n");
    write_certificate_csv(out_prefix + ".csv", rows);
  }
  std::cout << rows.dump(2) << std::endl;
  return 0;
}

int cmd_certify_bundle(const ExperimentConfig& cfg, const std::string& bundle_path) {
  const fs::path dir = output_dir(cfg);
  const TaskSet tasks = build_taskset(cfg);
  const DecodedBundle decoded = load_and_decode(bundle_path, cfg.compression.grids);
  if (decoded.model.task_count() != tasks.size())
    throw DataError("bundle encodes " + std::to_string(decoded.model.task_count()) +
                    " tasks, config builds " + std::to_string(tasks.size()));

  BoundInputs in;
  in.task_count = tasks.size();
  in.samples_per_task = tasks.samples_per_task();  // min over tasks: conservative
  in.delta = cfg.delta;
  in.empirical_risk = training_zero_one(decoded.model, tasks);
  in.bits_meta = static_cast<double>(decoded.meta.total);
  in.bits_multitask = static_cast<double>(decoded.multitask.total);
  json rows = json::array({certify_row("bundle", in, nullptr)});
  write_file_atomic((dir / "certificate.json").string(), rows.dump(2) + "\n");
  write_certificate_csv(dir / "certificate.csv", rows);
  std::cout << rows.dump(2) << std::endl;
  return 0;
}

int cmd_transfer(const ExperimentConfig& cfg, const std::string& bundle_path) {
  const fs::path dir = output_dir(cfg);
  echo_config(cfg, dir);
  const TaskSet all = build_taskset(cfg);
  TaskSet one;
  one.input_dim = all.input_dim;
  one.classes = all.classes;
  one.tasks.push_back(all.tasks.front());  // the new task
  const std::size_t m = one.tasks[0].train.size();

  const DecodedBundle decoded = load_and_decode(bundle_path, cfg.compression.grids);
  const NetworkSpec net = decoded.model.network();
  if (net.input_dim != one.input_dim)
    throw DataError("new task input dimension " + std::to_string(one.input_dim) +
                    " != bundle network input " + std::to_string(net.input_dim));

  TrainConfig tc = cfg.training;
  tc.shuffle_seed = derived_seed(cfg.seed, seeds::kShuffle);
  const std::uint64_t proj_seed = derived_seed(cfg.seed, seeds::kProjector);

  auto run_variant = [&](bool with_basis, std::size_t extra_dim, const char* label) {
    std::optional<SharedBasis> basis;
    if (with_basis) basis = decoded.model.basis();
    SubspaceModel model = SubspaceModel::transfer(net, decoded.model.theta0_seed(),
                                                  std::move(basis), extra_dim, proj_seed);
    train(model, one, tc);

    // a fresh codebook over the new coefficients, always available
    SubspaceModel fresh = model;
    const Codebook fresh_cb = quantize_coefficient_model(
        fresh, one, cfg.compression.r_single, cfg.compression.restarts, tc,
        derived_seed(cfg.seed, seeds::kKmeans));

    json row{{"variant", label}};
    SubspaceModel* chosen = &fresh;
    SingleEncoding enc;
    if (with_basis) {
      // transfer may instead reuse the MTL local codebook; the 1-bit flag
      // charges whichever choice encodes shorter
      SubspaceModel reused = model;
      {
        std::vector<std::size_t> parts;
        auto ps = reused.trainables();
        for (std::size_t p = 0; p < ps.size(); ++p)
          if (!ps[p]->empty()) parts.push_back(p);
        finetune_quantized(reused, one, decoded.local_codebook, parts, {}, tc);
      }
      const SingleEncoding enc_reused = encode_transfer_coefficients(
          reused.alpha(), reused.w(), decoded.local_codebook, true, cfg.compression.grids);
      const SingleEncoding enc_fresh = encode_transfer_coefficients(
          fresh.alpha(), fresh.w(), fresh_cb, false, cfg.compression.grids);
      const bool reuse = enc_reused.bit_count <= enc_fresh.bit_count;
      if (reuse) {
        model = std::move(reused);
        chosen = &model;
      }
      enc = reuse ? enc_reused : enc_fresh;
      row["reused_codebook"] = reuse;
    } else {
      // from scratch: nothing to reuse, plain single-task encoding of w
      enc = encode_single_coefficients(fresh.w(), fresh_cb, cfg.compression.grids);
    }
    const double emp = 1.0 - evaluate(*chosen, one.tasks[0].train);
    const double bits = static_cast<double>(enc.bit_count);
    row["bits"] = enc.bit_count;
    row["empirical_risk"] = emp;
    row["eval_acc"] = evaluate(*chosen, one.tasks[0].val);
    row["bound_slow"] = transfer_bound(m, cfg.delta, emp, bits);
    row["bound_fast"] = transfer_fast_bound(m, cfg.delta, emp, bits);
    save_checkpoint(*chosen, (dir / (std::string(label) + ".ldck")).string());
    return row;
  };

  const std::size_t kp = cfg.mode.k_prime;
  json report = json::array();
  report.push_back(run_variant(true, kp, "transfer"));
  // matched from-scratch comparison: the same total dimension, no basis
  report.push_back(run_variant(false, decoded.model.basis_size() + kp, "no_transfer"));
  write_file_atomic((dir / "transfer.json").string(), report.dump(2) + "\n");
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_gen_data(const ExperimentConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  echo_config(cfg, dir);
  const TaskSet tasks = build_taskset(cfg);
  json manifest{{"input_dim", tasks.input_dim},
                {"classes", tasks.classes},
                {"n", tasks.size()},
                {"tasks", json::array()}};
  for (const auto& t : tasks.tasks)
    manifest["tasks"].push_back({{"train", t.train.size()},
                                 {"val", t.val.size()},
                                 {"test", t.test.size()},
                                 {"provenance", t.provenance}});
  write_file_atomic((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << manifest.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"low-dimensional multi-task training, compression, and certificates"};
  app.require_subcommand(1);

  std::string config_path, mode, checkpoint, bundle, out, inputs;
  std::vector<std::string> overrides;
  double delta = 0.0;

  auto add_config = [&](CLI::App* sub, bool required = true) {
    auto* opt = sub->add_option("--config", config_path, "experiment config JSON");
    if (required) opt->required();
    sub->add_option("--set", overrides, "override config fields: key.path=value");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model per the config");
  add_config(train_cmd);

  auto* search_cmd = app.add_subcommand("search", "dimension search (id or aid)");
  add_config(search_cmd);
  search_cmd->add_option("--mode", mode, "id | aid")->required()
      ->check(CLI::IsMember({"id", "aid"}));

  auto* encode_cmd = app.add_subcommand("encode", "quantize, fine-tune, and encode a checkpoint");
  add_config(encode_cmd);
  encode_cmd->add_option("--checkpoint", checkpoint, "shared-mode checkpoint")->required();
  encode_cmd->add_option("--out", out, "bundle output path");

  auto* decode_cmd = app.add_subcommand("decode", "decode a bundle back to a checkpoint");
  add_config(decode_cmd);
  decode_cmd->add_option("--bundle", bundle, "encoded bundle")->required();
  decode_cmd->add_option("--out", out, "checkpoint output path");

  auto* certify_cmd = app.add_subcommand("certify", "compute generalization certificates");
  add_config(certify_cmd, false);
  certify_cmd->add_option("--inputs", inputs, "raw bound-inputs JSON (pure arithmetic mode)");
  certify_cmd->add_option("--bundle", bundle, "encoded bundle (recomputes the training error)");
  certify_cmd->add_option("--out", out, "output prefix for raw mode");
  certify_cmd->add_option("--delta", delta, "confidence parameter for raw mode");

  auto* transfer_cmd = app.add_subcommand("transfer", "train a new task on a learned basis");
  add_config(transfer_cmd);
  transfer_cmd->add_option("--bundle", bundle, "MTL bundle with the learned basis")->required();

  auto* gen_cmd = app.add_subcommand("gen-data", "materialize the configured task set manifest");
  add_config(gen_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (certify_cmd->parsed() && !inputs.empty()) return cmd_certify_raw(inputs, out, delta);
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path, overrides);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (search_cmd->parsed()) return cmd_search(cfg, mode);
    if (encode_cmd->parsed()) return cmd_encode(cfg, checkpoint, out);
    if (decode_cmd->parsed()) return cmd_decode(cfg, bundle, out);
    if (certify_cmd->parsed()) {
      if (bundle.empty())
        throw ConfigError("certify needs --inputs (raw mode) or --bundle (+ --config)");
      if (config_path.empty()) throw ConfigError("certify --bundle needs --config for the data");
      return cmd_certify_bundle(cfg, bundle);
    }
    if (transfer_cmd->parsed()) return cmd_transfer(cfg, bundle);
    if (gen_cmd->parsed()) return cmd_gen_data(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  }
  return 0;
}
