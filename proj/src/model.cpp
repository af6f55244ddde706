#include "lowdim/model.hpp"

#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "lowdim/rng.hpp"

namespace lowdim {

using nlohmann::json;

ModeKind mode_from_string(const std::string& s) {
  if (s == "direct") return ModeKind::direct;
  if (s == "single") return ModeKind::single;
  if (s == "shared") return ModeKind::shared;
  if (s == "transfer") return ModeKind::transfer;
  throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(ModeKind m) {
  switch (m) {
    case ModeKind::direct: return "direct";
    case ModeKind::single: return "single";
    case ModeKind::shared: return "shared";
    case ModeKind::transfer: return "transfer";
  }
  return "?";
}

SubspaceModel SubspaceModel::direct(NetworkSpec spec, std::uint64_t theta0_seed) {
  spec.validate();
  SubspaceModel m;
  m.spec_ = std::move(spec);
  m.theta0_seed_ = theta0_seed;
  m.mode_ = ModeKind::direct;
  m.theta0_ = init_theta(m.spec_, theta0_seed);
  m.theta_ = m.theta0_;
  return m;
}

SubspaceModel SubspaceModel::single(NetworkSpec spec, std::uint64_t theta0_seed,
                                    std::size_t coeff_dim, std::uint64_t projector_seed) {
  spec.validate();
  SubspaceModel m;
  m.spec_ = std::move(spec);
  m.theta0_seed_ = theta0_seed;
  m.mode_ = ModeKind::single;
  m.theta0_ = init_theta(m.spec_, theta0_seed);
  m.projector_.emplace(m.spec_.param_count(), coeff_dim, projector_seed);
  m.w_.assign(coeff_dim, 0.0);  // w = 0 makes the initial model equal theta0
  return m;
}

SubspaceModel SubspaceModel::shared(NetworkSpec spec, std::uint64_t theta0_seed,
                                    std::size_t block_dim, std::size_t basis_size,
                                    std::size_t task_count, std::uint64_t basis_seed) {
  spec.validate();
  if (basis_size == 0) throw std::invalid_argument("shared mode: k must be >= 1");
  if (task_count == 0) throw std::invalid_argument("shared mode: need at least one task");
  SubspaceModel m;
  m.spec_ = std::move(spec);
  m.theta0_seed_ = theta0_seed;
  m.mode_ = ModeKind::shared;
  m.theta0_ = init_theta(m.spec_, theta0_seed);
  m.basis_.emplace(m.spec_.param_count(), basis_size, block_dim, basis_seed);
  // v ~ N(0, 1/l); alpha = 0 so every task starts at theta0.
  const RngStream vr = RngStream(basis_seed).derive(77);
  const double sc = 1.0 / std::sqrt(static_cast<double>(block_dim));
  for (std::size_t i = 0; i < m.basis_->v.size(); ++i) m.basis_->v[i] = sc * vr.normal_at(i);
  m.alphas_.assign(task_count, std::vector<double>(basis_size, 0.0));
  return m;
}

SubspaceModel SubspaceModel::transfer(NetworkSpec spec, std::uint64_t theta0_seed,
                                      std::optional<SharedBasis> frozen_basis,
                                      std::size_t extra_dim, std::uint64_t projector_seed) {
  spec.validate();
  SubspaceModel m;
  m.spec_ = std::move(spec);
  m.theta0_seed_ = theta0_seed;
  m.mode_ = ModeKind::transfer;
  m.theta0_ = init_theta(m.spec_, theta0_seed);
  if (frozen_basis) {
    if (frozen_basis->projector.ambient_dim() != m.spec_.param_count())
      throw std::invalid_argument("transfer: basis ambient dim != network parameter count");
    m.basis_ = std::move(frozen_basis);
    m.alpha_.assign(m.basis_->k, 0.0);
  }
  if (extra_dim > 0) {
    m.projector_.emplace(m.spec_.param_count(), extra_dim, projector_seed);
    m.w_.assign(extra_dim, 0.0);
  }
  if (!m.basis_ && extra_dim == 0)
    throw std::invalid_argument("transfer: k and k' cannot both be zero");
  return m;
}

std::vector<double> SubspaceModel::realize(std::optional<std::size_t> task) const {
  if (mode_ == ModeKind::shared) {
    if (!task) throw std::invalid_argument("realize: shared mode requires a task index");
    if (*task >= alphas_.size()) throw std::invalid_argument("realize: task index out of range");
  } else if (task) {
    throw std::invalid_argument("realize: task index only valid in shared mode");
  }

  switch (mode_) {
    case ModeKind::direct:
      return theta_;
    case ModeKind::single: {
      std::vector<double> theta = projector_->apply(w_);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += theta0_[i];
      return theta;
    }
    case ModeKind::shared: {
      std::vector<double> theta = basis_->combine(alphas_[*task]);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += theta0_[i];
      return theta;
    }
    case ModeKind::transfer: {
      std::vector<double> theta = theta0_;
      if (basis_) {
        const std::vector<double> qa = basis_->combine(alpha_);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += qa[i];
      }
      if (projector_) {
        const std::vector<double> pw = projector_->apply(w_);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += pw[i];
      }
      return theta;
    }
  }
  throw std::logic_error("unreachable");
}

GradBundle SubspaceModel::coefficient_grad(std::optional<std::size_t> task,
                                           std::span<const double> g) const {
  if (g.size() != spec_.param_count())
    throw std::invalid_argument("coefficient_grad: ambient gradient length mismatch");
  GradBundle out;
  switch (mode_) {
    case ModeKind::direct:
      out.parts.emplace_back(g.begin(), g.end());
      return out;
    case ModeKind::single:
      out.parts.push_back(projector_->adjoint_apply(g));
      return out;
    case ModeKind::shared: {
      if (!task || *task >= alphas_.size())
        throw std::invalid_argument("coefficient_grad: shared mode requires a valid task index");
      std::vector<double> dv(basis_->k * basis_->l, 0.0);
      std::vector<double> dalpha(basis_->k, 0.0);
      basis_->gradients(alphas_[*task], g, dv, dalpha);
      out.parts.push_back(std::move(dv));
      // dalpha routes only to the batch's task; other tasks see zero.
      for (std::size_t j = 0; j < alphas_.size(); ++j)
        out.parts.push_back(j == *task ? dalpha : std::vector<double>(basis_->k, 0.0));
      return out;
    }
    case ModeKind::transfer: {
      if (task) throw std::invalid_argument("coefficient_grad: task index only valid in shared mode");
      std::vector<double> dalpha(basis_ ? basis_->k : 0, 0.0);
      if (basis_) basis_->alpha_gradient(g, dalpha);
      out.parts.push_back(std::move(dalpha));
      out.parts.push_back(projector_ ? projector_->adjoint_apply(g) : std::vector<double>{});
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<std::vector<double>*> SubspaceModel::trainables() {
  switch (mode_) {
    case ModeKind::direct: return {&theta_};
    case ModeKind::single: return {&w_};
    case ModeKind::shared: {
      std::vector<std::vector<double>*> t{&basis_->v};
      for (auto& a : alphas_) t.push_back(&a);
      return t;
    }
    case ModeKind::transfer: return {&alpha_, &w_};
  }
  throw std::logic_error("unreachable");
}

std::vector<const std::vector<double>*> SubspaceModel::trainables() const {
  auto mut = const_cast<SubspaceModel*>(this)->trainables();
  return {mut.begin(), mut.end()};
}

std::size_t SubspaceModel::trainable_count() const {
  std::size_t n = 0;
  for (const auto* p : trainables()) n += p->size();
  return n;
}

void SubspaceModel::amortized_count(std::int64_t& num, std::int64_t& den) const {
  if (mode_ != ModeKind::shared)
    throw std::invalid_argument("amortized_count: shared mode only");
  const std::int64_t l = static_cast<std::int64_t>(basis_->l);
  const std::int64_t k = static_cast<std::int64_t>(basis_->k);
  const std::int64_t n = static_cast<std::int64_t>(alphas_.size());
  num = l * k + n * k;  // (lk + nk) / n  ==  lk/n + k
  den = n;
  const std::int64_t g = std::gcd(num, den);
  num /= g;
  den /= g;
}

double SubspaceModel::amortized_count() const {
  std::int64_t num = 0, den = 1;
  amortized_count(num, den);
  return static_cast<double>(num) / static_cast<double>(den);
}

const SharedBasis& SubspaceModel::basis() const {
  if (!basis_) throw std::logic_error("model has no shared basis");
  return *basis_;
}

SharedBasis& SubspaceModel::basis() {
  if (!basis_) throw std::logic_error("model has no shared basis");
  return *basis_;
}

const KroneckerProjector& SubspaceModel::projector() const {
  if (!projector_) throw std::logic_error("model has no random projector");
  return *projector_;
}

// --- checkpoint io ----------------------------------------------------------

namespace {

json spec_to_json(const NetworkSpec& s) {
  return json{{"input_dim", s.input_dim},
              {"hidden", s.hidden},
              {"output_dim", s.output_dim},
              {"activation", to_string(s.activation)}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  return s;
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int b = 0; b < 8; ++b) os.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
}

std::vector<double> read_doubles(std::istream& is, std::size_t count) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      const int c = is.get();
      if (c == EOF) throw std::runtime_error("checkpoint: truncated coefficient block");
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
    }
    std::memcpy(&v[i], &bits, 8);
  }
  return v;
}

}  // namespace

void save_checkpoint(const SubspaceModel& model, const std::string& path) {
  json header;
  header["version"] = 1;
  header["spec"] = spec_to_json(model.network());
  header["mode"] = to_string(model.mode());
  header["theta0_seed"] = model.theta0_seed();
  switch (model.mode()) {
    case ModeKind::direct:
      break;
    case ModeKind::single:
      header["d"] = model.projector().coeff_dim();
      header["projector_seed"] = model.projector().seed();
      break;
    case ModeKind::shared:
      header["l"] = model.block_dim();
      header["k"] = model.basis_size();
      header["n"] = model.task_count();
      header["basis_seed"] = model.basis().projector.seed();
      break;
    case ModeKind::transfer:
      header["k"] = model.basis_size();
      if (model.basis_size() > 0) {
        header["l"] = model.block_dim();
        header["basis_seed"] = model.basis().projector.seed();
      }
      header["k_prime"] = model.extra_dim();
      if (model.extra_dim() > 0) header["projector_seed"] = model.projector().seed();
      break;
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  const std::string hs = header.dump();
  os.write("LDCK", 4);
  const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  for (int b = 0; b < 4; ++b) os.put(static_cast<char>((len >> (8 * b)) & 0xFF));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto* part : model.trainables()) write_doubles(os, *part);
  if (model.mode() == ModeKind::transfer && model.basis_size() > 0)
    write_doubles(os, model.basis().v);
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

SubspaceModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "LDCK")
    throw std::runtime_error("checkpoint: bad magic bytes");
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) {
    const int c = is.get();
    if (c == EOF) throw std::runtime_error("checkpoint: truncated header length");
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  std::string hs(len, '\0');
  is.read(hs.data(), len);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  const json header = json::parse(hs);
  if (header.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported version");

  const NetworkSpec spec = spec_from_json(header.at("spec"));
  const auto seed = header.at("theta0_seed").get<std::uint64_t>();
  const ModeKind mode = mode_from_string(header.at("mode").get<std::string>());

  switch (mode) {
    case ModeKind::direct: {
      SubspaceModel m = SubspaceModel::direct(spec, seed);
      *m.trainables()[0] = read_doubles(is, spec.param_count());
      return m;
    }
    case ModeKind::single: {
      SubspaceModel m = SubspaceModel::single(spec, seed, header.at("d").get<std::size_t>(),
                                              header.at("projector_seed").get<std::uint64_t>());
      m.w() = read_doubles(is, m.projector().coeff_dim());
      return m;
    }
    case ModeKind::shared: {
      const auto l = header.at("l").get<std::size_t>();
      const auto k = header.at("k").get<std::size_t>();
      const auto n = header.at("n").get<std::size_t>();
      SubspaceModel m = SubspaceModel::shared(spec, seed, l, k, n,
                                              header.at("basis_seed").get<std::uint64_t>());
      m.basis().v = read_doubles(is, k * l);
      for (std::size_t j = 0; j < n; ++j) m.alphas()[j] = read_doubles(is, k);
      return m;
    }
    case ModeKind::transfer: {
      const auto k = header.at("k").get<std::size_t>();
      const auto kp = header.at("k_prime").get<std::size_t>();
      std::optional<SharedBasis> basis;
      if (k > 0)
        basis.emplace(spec.param_count(), k, header.at("l").get<std::size_t>(),
                      header.at("basis_seed").get<std::uint64_t>());
      const std::uint64_t pseed =
          kp > 0 ? header.at("projector_seed").get<std::uint64_t>() : 0;
      SubspaceModel m = SubspaceModel::transfer(spec, seed, std::move(basis), kp, pseed);
      m.alpha() = read_doubles(is, k);
      m.w() = read_doubles(is, kp);
      if (k > 0) m.basis().v = read_doubles(is, k * header.at("l").get<std::size_t>());
      return m;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace lowdim
