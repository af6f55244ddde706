#include "lowdim/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "lowdim/optimizer.hpp"
#include "lowdim/rng.hpp"

namespace lowdim {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (std::find(lr_grid.begin(), lr_grid.end(), lr) == lr_grid.end())
    throw std::invalid_argument("TrainConfig: lr " + std::to_string(lr) +
                                " is not in the declared grid");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: bad weight decay");
}

namespace {

void check_task_arity(const SubspaceModel& model, const TaskSet& tasks) {
  if (model.mode() == ModeKind::shared) {
    if (tasks.size() != model.task_count())
      throw std::invalid_argument("train: shared mode wants " +
                                  std::to_string(model.task_count()) + " tasks, got " +
                                  std::to_string(tasks.size()));
  } else if (tasks.size() != 1) {
    throw std::invalid_argument("train: " + to_string(model.mode()) +
                                " mode wants exactly one task");
  }
  for (const auto& t : tasks.tasks)
    if (t.train.size() == 0) throw std::invalid_argument("train: empty training split");
}

struct BatchPlan {
  std::vector<std::vector<std::size_t>> order;  // per task, permuted indices
  std::vector<std::size_t> batch_counts;
  std::size_t steps = 0;
};

BatchPlan plan_epoch(const TaskSet& tasks, std::size_t batch_size, std::uint64_t shuffle_seed,
                     std::size_t epoch) {
  BatchPlan plan;
  const RngStream root = RngStream(shuffle_seed).derive(4000 + epoch);
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    RngStream r = root.derive(j + 1);
    plan.order.push_back(random_permutation(r, tasks.tasks[j].train.size()));
    const std::size_t m = tasks.tasks[j].train.size();
    plan.batch_counts.push_back((m + batch_size - 1) / batch_size);
  }
  plan.steps = *std::max_element(plan.batch_counts.begin(), plan.batch_counts.end());
  return plan;
}

// Gathers batch `b` (mod the task's batch count) of task j into x/y.
void gather_batch(const Dataset& data, const std::vector<std::size_t>& order,
                  std::size_t batch_count, std::size_t batch_size, std::size_t step, Tensor& x,
                  std::vector<int>& y) {
  const std::size_t b = step % batch_count;
  const std::size_t begin = b * batch_size;
  const std::size_t end = std::min(begin + batch_size, order.size());
  const std::size_t count = end - begin;
  x = Tensor({count, data.dim});
  y.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order[begin + i];
    std::copy_n(data.x.data() + src * data.dim, data.dim, x.data() + i * data.dim);
    y[i] = data.y[src];
  }
}

double accuracy_on(const SubspaceModel& model, const Dataset& data,
                   std::optional<std::size_t> task) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const std::vector<double> theta = model.realize(task);
  const LossResult zo = loss_and_grad(model.network(), theta, data.features(), data.y,
                                      LossKind::zero_one, false);
  return 1.0 - zo.value;
}

}  // namespace

double evaluate(const SubspaceModel& model, const Dataset& data,
                std::optional<std::size_t> task) {
  return accuracy_on(model, data, task);
}

double evaluate_all(const SubspaceModel& model, const TaskSet& tasks) {
  check_task_arity(model, tasks);
  if (model.mode() != ModeKind::shared) return accuracy_on(model, tasks.tasks[0].val, {});
  double acc = 0.0;
  for (std::size_t j = 0; j < tasks.size(); ++j)
    acc += accuracy_on(model, tasks.tasks[j].val, j);
  return acc / static_cast<double>(tasks.size());
}

TrainHistory train(SubspaceModel& model, const TaskSet& tasks, const TrainConfig& config) {
  config.validate();
  check_task_arity(model, tasks);
  const bool shared = model.mode() == ModeKind::shared;
  const std::size_t ntasks = tasks.size();

  auto params = model.trainables();
  std::vector<Adam> optimizers;
  optimizers.reserve(params.size());
  for (const auto* p : params) optimizers.emplace_back(config.lr, config.weight_decay, p->size());

  TrainHistory history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const BatchPlan plan = plan_epoch(tasks, config.batch_size, config.shuffle_seed, epoch);
    double epoch_loss = 0.0;
    Tensor x;
    std::vector<int> y;
    std::vector<std::vector<double>> grad_acc(params.size());

    for (std::size_t step = 0; step < plan.steps; ++step) {
      for (std::size_t p = 0; p < params.size(); ++p)
        grad_acc[p].assign(params[p]->size(), 0.0);
      double step_loss = 0.0;
      for (std::size_t j = 0; j < ntasks; ++j) {
        gather_batch(tasks.tasks[j].train, plan.order[j], plan.batch_counts[j],
                     config.batch_size, step, x, y);
        const std::optional<std::size_t> task = shared ? std::optional<std::size_t>(j)
                                                       : std::nullopt;
        const std::vector<double> theta = model.realize(task);
        const LossResult lr = loss_and_grad(model.network(), theta, x, y,
                                            LossKind::cross_entropy, true);
        if (!std::isfinite(lr.value))
          throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", task " + std::to_string(j));
        const GradBundle bundle = model.coefficient_grad(task, lr.grad);
        const double scale = 1.0 / static_cast<double>(ntasks);
        for (std::size_t p = 0; p < params.size(); ++p)
          for (std::size_t i = 0; i < grad_acc[p].size(); ++i)
            grad_acc[p][i] += scale * bundle.parts[p][i];
        step_loss += scale * lr.value;
      }
      for (std::size_t p = 0; p < params.size(); ++p)
        optimizers[p].step(*params[p], grad_acc[p]);
      epoch_loss += step_loss;
    }
    epoch_loss /= static_cast<double>(plan.steps);

    const bool last = (epoch + 1 == config.epochs);
    const bool do_eval = last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0);
    if (do_eval) {
      EpochStats stats;
      stats.epoch = epoch + 1;
      stats.train_loss = epoch_loss;
      double tr = 0.0;
      for (std::size_t j = 0; j < ntasks; ++j)
        tr += accuracy_on(model, tasks.tasks[j].train,
                          shared ? std::optional<std::size_t>(j) : std::nullopt);
      stats.train_acc = tr / static_cast<double>(ntasks);
      stats.eval_acc = evaluate_all(model, tasks);
      history.epochs.push_back(stats);
      if (last) {
        history.final_train_acc = stats.train_acc;
        history.final_eval_acc = stats.eval_acc;
      }
    }
  }
  return history;
}

void finetune_quantized(SubspaceModel& model, const TaskSet& tasks, const Codebook& codebook,
                        const std::vector<std::size_t>& constrained_parts,
                        const std::vector<std::size_t>& frozen_parts,
                        const TrainConfig& config) {
  check_task_arity(model, tasks);
  if (config.finetune_epochs == 0) return;
  const bool shared = model.mode() == ModeKind::shared;
  const std::size_t ntasks = tasks.size();

  auto params = model.trainables();
  std::vector<bool> constrained(params.size(), false), frozen(params.size(), false);
  for (std::size_t p : constrained_parts) constrained.at(p) = true;
  for (std::size_t p : frozen_parts) frozen.at(p) = true;

  // latent continuous copies behind the snapped values
  std::vector<std::vector<double>> latent(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    latent[p] = *params[p];
    if (constrained[p])
      for (double& v : *params[p]) v = codebook.snap(v);
  }

  const Sgd sgd(config.finetune_lr);
  Tensor x;
  std::vector<int> y;
  for (std::size_t epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    const BatchPlan plan = plan_epoch(tasks, config.batch_size,
                                      config.shuffle_seed ^ 0x51F7ull, epoch);
    for (std::size_t step = 0; step < plan.steps; ++step) {
      std::vector<std::vector<double>> grad_acc(params.size());
      for (std::size_t p = 0; p < params.size(); ++p)
        grad_acc[p].assign(params[p]->size(), 0.0);
      for (std::size_t j = 0; j < ntasks; ++j) {
        gather_batch(tasks.tasks[j].train, plan.order[j], plan.batch_counts[j],
                     config.batch_size, step, x, y);
        const std::optional<std::size_t> task = shared ? std::optional<std::size_t>(j)
                                                       : std::nullopt;
        const std::vector<double> theta = model.realize(task);  // snapped values
        const LossResult lr = loss_and_grad(model.network(), theta, x, y,
                                            LossKind::cross_entropy, true);
        if (!std::isfinite(lr.value))
          throw std::runtime_error("quantized fine-tune diverged at epoch " +
                                   std::to_string(epoch));
        const GradBundle bundle = model.coefficient_grad(task, lr.grad);
        const double scale = 1.0 / static_cast<double>(ntasks);
        for (std::size_t p = 0; p < params.size(); ++p)
          for (std::size_t i = 0; i < grad_acc[p].size(); ++i)
            grad_acc[p][i] += scale * bundle.parts[p][i];
      }
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (frozen[p]) continue;
        if (constrained[p]) {
          sgd.step(latent[p], grad_acc[p]);  // update the latent, re-snap
          for (std::size_t i = 0; i < latent[p].size(); ++i)
            (*params[p])[i] = codebook.snap(latent[p][i]);
        } else {
          sgd.step(*params[p], grad_acc[p]);
        }
      }
    }
  }
}

QuantizedModelCodebooks quantize_shared_model(SubspaceModel& model, const TaskSet& tasks,
                                              std::size_t r_global, std::size_t r_local,
                                              std::size_t restarts, const TrainConfig& config,
                                              std::uint64_t seed) {
  if (model.mode() != ModeKind::shared)
    throw std::invalid_argument("quantize_shared_model: shared-mode model required");
  const RngStream root(seed);

  // stage 1: global codebook over v, alphas keep training freely
  Codebook global = kmeans_1d(model.basis().v, r_global, restarts, Codebook::Kind::global,
                              root.derive(1).seed());
  finetune_quantized(model, tasks, global, {0}, {}, config);

  // stage 2: v frozen at its quantized values, alphas constrained
  std::vector<double> all_alpha;
  for (const auto& a : model.alphas()) all_alpha.insert(all_alpha.end(), a.begin(), a.end());
  Codebook local = kmeans_1d(all_alpha, r_local, restarts, Codebook::Kind::local,
                             root.derive(2).seed());
  std::vector<std::size_t> alpha_parts;
  for (std::size_t j = 0; j < model.task_count(); ++j) alpha_parts.push_back(1 + j);
  finetune_quantized(model, tasks, local, alpha_parts, {0}, config);
  return {std::move(global), std::move(local)};
}

Codebook quantize_coefficient_model(SubspaceModel& model, const TaskSet& tasks, std::size_t r,
                                    std::size_t restarts, const TrainConfig& config,
                                    std::uint64_t seed) {
  if (model.mode() == ModeKind::shared)
    throw std::invalid_argument("quantize_coefficient_model: use quantize_shared_model");
  std::vector<double> coeffs;
  std::vector<std::size_t> parts;
  auto params = model.trainables();
  for (std::size_t p = 0; p < params.size(); ++p) {
    coeffs.insert(coeffs.end(), params[p]->begin(), params[p]->end());
    if (!params[p]->empty()) parts.push_back(p);
  }
  Codebook cb = kmeans_1d(coeffs, r, restarts, Codebook::Kind::single, seed);
  finetune_quantized(model, tasks, cb, parts, {}, config);
  return cb;
}

// --- dimension searches -----------------------------------------------------

namespace {

TaskSet single_task_view(const TaskSet& tasks, std::size_t j) {
  TaskSet one;
  one.input_dim = tasks.input_dim;
  one.classes = tasks.classes;
  one.tasks.push_back(tasks.tasks[j]);
  return one;
}

const SearchPoint* find_warm(const std::vector<SearchPoint>& warm, const std::string& mode,
                             std::size_t d_or_l, std::size_t k, double lr) {
  for (const auto& p : warm)
    if (p.mode == mode && p.d_or_l == d_or_l && p.k == k && p.lr == lr) return &p;
  return nullptr;
}

// Runs candidates in waves of `jobs` threads, preserving candidate order in
// the merged trace and stopping at the first (in order) success.
template <typename Candidate, typename RunFn>
void run_waves(const std::vector<Candidate>& candidates, std::size_t jobs, RunFn run,
               DimensionSearchResult& result) {
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t wave = 0; wave < candidates.size() && !result.reached; wave += jobs) {
    const std::size_t count = std::min(jobs, candidates.size() - wave);
    std::vector<std::vector<SearchPoint>> rows(count);
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < count; ++i)
      threads.emplace_back([&, i] {
        try {
          rows[i] = run(candidates[wave + i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& t : threads) t.join();
    for (std::size_t i = 0; i < count; ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
      for (const auto& row : rows[i]) {
        result.trace.push_back(row);
        result.best_attained = std::max(result.best_attained, row.eval_acc);
      }
      // best-lr row for this candidate decides success
      const SearchPoint* best = nullptr;
      for (const auto& row : rows[i])
        if (!best || row.eval_acc > best->eval_acc) best = &row;
      if (best && best->reached && !result.reached) {
        result.reached = true;
        result.best = *best;
        break;  // later candidates in this wave are dominated by order
      }
    }
  }
}

}  // namespace

double baseline_accuracy(const NetworkSpec& network, const TaskSet& tasks,
                         const TrainConfig& config, std::uint64_t master_seed) {
  const RngStream root(master_seed);
  const std::uint64_t theta0_seed = root.derive(2).seed();
  double acc = 0.0;
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    const TaskSet one = single_task_view(tasks, j);
    double best = 0.0;
    for (double lr : config.lr_grid) {
      TrainConfig tc = config;
      tc.lr = lr;
      tc.eval_every = 0;
      SubspaceModel model = SubspaceModel::direct(network, theta0_seed);
      const TrainHistory h = train(model, one, tc);
      best = std::max(best, h.final_eval_acc);
    }
    acc += best;
  }
  return acc / static_cast<double>(tasks.size());
}

DimensionSearchResult id_search(const TaskSet& tasks, const std::vector<std::size_t>& d_grid,
                                const SearchConfig& config) {
  if (d_grid.empty()) throw std::invalid_argument("id_search: empty grid");
  config.training.validate();
  DimensionSearchResult result;
  result.baseline_accuracy =
      config.baseline_accuracy
          ? *config.baseline_accuracy
          : baseline_accuracy(config.network, tasks, config.training, config.master_seed);
  result.target_accuracy = config.target_fraction * result.baseline_accuracy;

  std::vector<std::size_t> grid = d_grid;
  std::sort(grid.begin(), grid.end());
  const RngStream root(config.master_seed);
  const std::uint64_t theta0_seed = root.derive(2).seed();

  auto run_candidate = [&](std::size_t d) {
    std::vector<SearchPoint> rows;
    for (double lr : config.training.lr_grid) {
      SearchPoint point;
      point.mode = "single";
      point.d_or_l = d;
      point.lr = lr;
      point.amortized = static_cast<double>(d);
      point.seed = theta0_seed;
      if (const SearchPoint* warm = find_warm(config.warm_start, "single", d, 0, lr)) {
        point = *warm;
        point.reached = point.eval_acc >= result.target_accuracy;
        rows.push_back(point);
        continue;
      }
      TrainConfig tc = config.training;
      tc.lr = lr;
      tc.eval_every = 0;
      double train_acc = 0.0, eval_acc = 0.0;
      for (std::size_t j = 0; j < tasks.size(); ++j) {
        const TaskSet one = single_task_view(tasks, j);
        SubspaceModel model = SubspaceModel::single(config.network, theta0_seed, d,
                                                    root.derive(100 + j).seed());
        const TrainHistory h = train(model, one, tc);
        train_acc += h.final_train_acc;
        eval_acc += h.final_eval_acc;
      }
      point.train_acc = train_acc / static_cast<double>(tasks.size());
      point.eval_acc = eval_acc / static_cast<double>(tasks.size());
      point.reached = point.eval_acc >= result.target_accuracy;
      rows.push_back(point);
    }
    return rows;
  };

  run_waves(grid, config.jobs, run_candidate, result);
  if (result.reached) {
    result.amortized_num = static_cast<std::int64_t>(result.best.d_or_l);
    result.amortized_den = 1;
  }
  return result;
}

DimensionSearchResult aid_search(const TaskSet& tasks,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& lk_grid,
                                 const SearchConfig& config) {
  if (lk_grid.empty()) throw std::invalid_argument("aid_search: empty grid");
  config.training.validate();
  const std::size_t n = tasks.size();
  if (n == 0) throw std::invalid_argument("aid_search: no tasks");

  DimensionSearchResult result;
  result.baseline_accuracy =
      config.baseline_accuracy
          ? *config.baseline_accuracy
          : baseline_accuracy(config.network, tasks, config.training, config.master_seed);
  result.target_accuracy = config.target_fraction * result.baseline_accuracy;

  // ascending amortized cost, ties toward smaller k then smaller l
  auto amortized = [n](std::pair<std::size_t, std::size_t> lk) {
    return static_cast<double>(lk.first * lk.second) / static_cast<double>(n) +
           static_cast<double>(lk.second);
  };
  std::vector<std::pair<std::size_t, std::size_t>> grid = lk_grid;
  std::sort(grid.begin(), grid.end(), [&](const auto& a, const auto& b) {
    const double aa = amortized(a), ab = amortized(b);
    if (aa != ab) return aa < ab;
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });

  const RngStream root(config.master_seed);
  const std::uint64_t theta0_seed = root.derive(2).seed();

  auto run_candidate = [&](std::pair<std::size_t, std::size_t> lk) {
    const auto [l, k] = lk;
    std::vector<SearchPoint> rows;
    for (double lr : config.training.lr_grid) {
      SearchPoint point;
      point.mode = "shared";
      point.d_or_l = l;
      point.k = k;
      point.lr = lr;
      point.amortized = amortized(lk);
      point.seed = theta0_seed;
      if (const SearchPoint* warm = find_warm(config.warm_start, "shared", l, k, lr)) {
        point = *warm;
        point.reached = point.eval_acc >= result.target_accuracy;
        rows.push_back(point);
        continue;
      }
      TrainConfig tc = config.training;
      tc.lr = lr;
      tc.eval_every = 0;
      SubspaceModel model = SubspaceModel::shared(config.network, theta0_seed, l, k, n,
                                                  root.derive(7000 + l * 131 + k).seed());
      const TrainHistory h = train(model, tasks, tc);
      point.train_acc = h.final_train_acc;
      point.eval_acc = h.final_eval_acc;
      point.reached = point.eval_acc >= result.target_accuracy;
      rows.push_back(point);
    }
    return rows;
  };

  run_waves(grid, config.jobs, run_candidate, result);
  if (result.reached) {
    const std::int64_t l = static_cast<std::int64_t>(result.best.d_or_l);
    const std::int64_t k = static_cast<std::int64_t>(result.best.k);
    const std::int64_t nn = static_cast<std::int64_t>(n);
    std::int64_t num = l * k + nn * k, den = nn;
    const std::int64_t g = std::gcd(num, den);
    result.amortized_num = num / g;
    result.amortized_den = den / g;
  }
  return result;
}

void write_trace_csv(const std::string& path, const std::vector<SearchPoint>& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file: " + path);
  os << "mode,d_or_l,k,lr,seed,train_acc,eval_acc,amortized\n";
  for (const auto& p : trace)
    os << p.mode << ',' << p.d_or_l << ',' << p.k << ',' << p.lr << ',' << p.seed << ','
       << p.train_acc << ',' << p.eval_acc << ',' << p.amortized << '\n';
}

}  // namespace lowdim
