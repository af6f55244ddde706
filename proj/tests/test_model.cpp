#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "lowdim/model.hpp"
#include "lowdim/rng.hpp"

using namespace lowdim;

namespace {

NetworkSpec toy_net() {
  NetworkSpec spec;
  spec.input_dim = 5;
  spec.hidden = {6};
  spec.output_dim = 3;
  return spec;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  const RngStream rng(seed);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal_at(i);
  return v;
}

}  // namespace

TEST_CASE("realize: zero coefficients give exactly theta0") {
  const NetworkSpec spec = toy_net();
  SubspaceModel single = SubspaceModel::single(spec, 11, 4, 21);
  const auto theta = single.realize();
  const auto theta0 = init_theta(spec, 11);
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(theta[i] == theta0[i]);

  SubspaceModel shared = SubspaceModel::shared(spec, 11, 3, 2, 4, 22);
  const auto ts = shared.realize(2);
  for (std::size_t i = 0; i < ts.size(); ++i) CHECK(ts[i] == theta0[i]);
}

TEST_CASE("realize: single mode matches dense oracle composition") {
  const NetworkSpec spec = toy_net();
  SubspaceModel m = SubspaceModel::single(spec, 1, 4, 2);
  m.w() = random_vec(4, 3);
  const auto got = m.realize();
  const auto theta0 = init_theta(spec, 1);
  const auto pw = m.projector().apply(m.w());
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(theta0[i] + pw[i]).epsilon(1e-12));
}

TEST_CASE("realize: identical alphas give identical weights") {
  const NetworkSpec spec = toy_net();
  SubspaceModel m = SubspaceModel::shared(spec, 5, 3, 2, 3, 6);
  const auto alpha = random_vec(2, 7);
  for (auto& a : m.alphas()) a = alpha;
  const auto t0 = m.realize(0), t1 = m.realize(1), t2 = m.realize(2);
  for (std::size_t i = 0; i < t0.size(); ++i) {
    CHECK(t0[i] == t1[i]);
    CHECK(t1[i] == t2[i]);
  }
}

TEST_CASE("realize: task index arity") {
  const NetworkSpec spec = toy_net();
  SubspaceModel shared = SubspaceModel::shared(spec, 5, 3, 2, 3, 6);
  CHECK_THROWS_AS(shared.realize(), std::invalid_argument);
  CHECK_THROWS_AS(shared.realize(5), std::invalid_argument);
  SubspaceModel single = SubspaceModel::single(spec, 5, 3, 6);
  CHECK_THROWS_AS(single.realize(0), std::invalid_argument);
}

TEST_CASE("realize is deterministic across reconstructions") {
  const NetworkSpec spec = toy_net();
  SubspaceModel a = SubspaceModel::shared(spec, 9, 4, 3, 2, 10);
  SubspaceModel b = SubspaceModel::shared(spec, 9, 4, 3, 2, 10);
  a.basis().v = b.basis().v = random_vec(12, 8);
  a.alphas()[1] = b.alphas()[1] = random_vec(3, 9);
  const auto ta = a.realize(1), tb = b.realize(1);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
}

TEST_CASE("coefficient_grad: zero ambient grad gives zero bundle") {
  const NetworkSpec spec = toy_net();
  SubspaceModel m = SubspaceModel::shared(spec, 3, 3, 2, 3, 4);
  m.basis().v = random_vec(6, 1);
  const GradBundle g = m.coefficient_grad(1, std::vector<double>(spec.param_count(), 0.0));
  for (const auto& part : g.parts)
    for (double v : part) CHECK(v == 0.0);
}

TEST_CASE("coefficient_grad: other tasks' alpha gradient is exactly zero") {
  const NetworkSpec spec = toy_net();
  SubspaceModel m = SubspaceModel::shared(spec, 3, 3, 2, 4, 4);
  m.basis().v = random_vec(6, 2);
  for (auto& a : m.alphas()) a = random_vec(2, 5);
  const auto g = random_vec(spec.param_count(), 6);
  const GradBundle bundle = m.coefficient_grad(2, g);
  // parts: v, alpha_0..alpha_3
  for (std::size_t j = 0; j < 4; ++j) {
    double mag = 0.0;
    for (double v : bundle.parts[1 + j]) mag += std::abs(v);
    if (j == 2)
      CHECK(mag > 0.0);
    else
      CHECK(mag == 0.0);
  }
}

TEST_CASE("coefficient_grad: end-to-end finite differences per mode") {
  const NetworkSpec spec = toy_net();
  const auto target = random_vec(spec.param_count(), 100);
  // loss = 0.5 || realize - target ||^2
  auto loss_of = [&](const SubspaceModel& m, std::optional<std::size_t> task) {
    const auto theta = m.realize(task);
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i)
      s += 0.5 * (theta[i] - target[i]) * (theta[i] - target[i]);
    return s;
  };
  auto grad_of = [&](const SubspaceModel& m, std::optional<std::size_t> task) {
    const auto theta = m.realize(task);
    std::vector<double> g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) g[i] = theta[i] - target[i];
    return m.coefficient_grad(task, g);
  };
  auto check_fd = [&](SubspaceModel& m, std::optional<std::size_t> task) {
    const GradBundle analytic = grad_of(m, task);
    auto params = m.trainables();
    const double h = 1e-5;
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p]->size(); i += 3) {
        const double orig = (*params[p])[i];
        (*params[p])[i] = orig + h;
        const double up = loss_of(m, task);
        (*params[p])[i] = orig - h;
        const double dn = loss_of(m, task);
        (*params[p])[i] = orig;
        const double fd = (up - dn) / (2 * h);
        const double got = analytic.parts[p][i];
        CHECK(std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1e-8}) < 1e-4);
      }
  };

  SubspaceModel single = SubspaceModel::single(spec, 1, 5, 2);
  single.w() = random_vec(5, 3);
  check_fd(single, {});

  SubspaceModel shared = SubspaceModel::shared(spec, 1, 3, 2, 2, 4);
  shared.basis().v = random_vec(6, 5);
  for (auto& a : shared.alphas()) a = random_vec(2, 6);
  check_fd(shared, 1);

  SharedBasis frozen(spec.param_count(), 2, 3, 7);
  frozen.v = random_vec(6, 8);
  SubspaceModel transfer = SubspaceModel::transfer(spec, 1, frozen, 4, 9);
  transfer.alpha() = random_vec(2, 10);
  transfer.w() = random_vec(4, 11);
  check_fd(transfer, {});
}

TEST_CASE("trainable counts and the amortized formula") {
  NetworkSpec spec;
  spec.input_dim = 5;
  spec.hidden = {6};
  spec.output_dim = 3;
  // l=65, k=10, n=30: 950 parameters, about 31.67 per task
  SubspaceModel m = SubspaceModel::shared(spec, 1, 65, 10, 30, 2);
  CHECK(m.trainable_count() == 950);
  std::int64_t num = 0, den = 1;
  m.amortized_count(num, den);
  CHECK(num == 95);
  CHECK(den == 3);
  CHECK(m.amortized_count() == doctest::Approx(95.0 / 3.0));

  // l=60, k=5, n=60: amortized exactly 10
  SubspaceModel f = SubspaceModel::shared(spec, 1, 60, 5, 60, 2);
  f.amortized_count(num, den);
  CHECK(num == 10);
  CHECK(den == 1);

  // k=0 forbidden; k=n=1, l=d reduces to the single-task count d+1
  CHECK_THROWS_AS(SubspaceModel::shared(spec, 1, 4, 0, 3, 2), std::invalid_argument);
  SubspaceModel degenerate = SubspaceModel::shared(spec, 1, 17, 1, 1, 2);
  CHECK(degenerate.trainable_count() == 18);
}

TEST_CASE("shared with k=n unit alphas reproduces independent single models") {
  const NetworkSpec spec = toy_net();
  const std::size_t n = 3, l = 4;
  SubspaceModel shared = SubspaceModel::shared(spec, 7, l, n, n, 13);
  shared.basis().v = random_vec(n * l, 14);
  for (std::size_t j = 0; j < n; ++j) {
    shared.alphas()[j].assign(n, 0.0);
    shared.alphas()[j][j] = 1.0;
  }
  // task j realizes theta0 + P_j v_j: an l-dimensional single-subspace model
  for (std::size_t j = 0; j < n; ++j) {
    const auto got = shared.realize(j);
    std::vector<double> coeff(n * l, 0.0);
    for (std::size_t i = 0; i < l; ++i) coeff[j * l + i] = shared.basis().v[j * l + i];
    const auto pw = shared.basis().projector.apply(coeff);
    const auto theta0 = init_theta(spec, 7);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(theta0[i] + pw[i]).epsilon(1e-10));
  }
}

TEST_CASE("checkpoint round trip per mode") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lowdim_ckpt_test";
  fs::create_directories(dir);
  const NetworkSpec spec = toy_net();

  auto roundtrip = [&](SubspaceModel& m, std::optional<std::size_t> task) {
    const std::string path = (dir / "model.ldck").string();
    save_checkpoint(m, path);
    const SubspaceModel loaded = load_checkpoint(path);
    const auto a = m.realize(task), b = loaded.realize(task);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  };

  SubspaceModel direct = SubspaceModel::direct(spec, 3);
  (*direct.trainables()[0]) = random_vec(spec.param_count(), 1);
  roundtrip(direct, {});

  SubspaceModel single = SubspaceModel::single(spec, 3, 6, 4);
  single.w() = random_vec(6, 2);
  roundtrip(single, {});

  SubspaceModel shared = SubspaceModel::shared(spec, 3, 4, 2, 3, 5);
  shared.basis().v = random_vec(8, 3);
  for (auto& a : shared.alphas()) a = random_vec(2, 4);
  roundtrip(shared, 1);

  SharedBasis frozen(spec.param_count(), 2, 4, 8);
  frozen.v = random_vec(8, 5);
  SubspaceModel transfer = SubspaceModel::transfer(spec, 3, frozen, 3, 9);
  transfer.alpha() = random_vec(2, 6);
  transfer.w() = random_vec(3, 7);
  roundtrip(transfer, {});

  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ldck").string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("transfer degenerate shapes") {
  const NetworkSpec spec = toy_net();
  // k' = 0: pure reuse of the learned basis
  SharedBasis frozen(spec.param_count(), 2, 3, 1);
  frozen.v = random_vec(6, 1);
  SubspaceModel pure = SubspaceModel::transfer(spec, 2, frozen, 0, 0);
  CHECK(pure.extra_dim() == 0);
  CHECK(pure.trainable_count() == 2);
  // k = 0: from-scratch random subspace
  SubspaceModel scratch = SubspaceModel::transfer(spec, 2, std::nullopt, 5, 3);
  CHECK(scratch.basis_size() == 0);
  CHECK(scratch.trainable_count() == 5);
  CHECK_THROWS_AS(SubspaceModel::transfer(spec, 2, std::nullopt, 0, 0), std::invalid_argument);
}
