#include "lowdim/bounds.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lowdim {

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

double bernoulli_kl(double q, double p) {
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("kl: q outside [0,1]");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("kl: p outside [0,1]");
  if (q == p) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  if (p == 0.0) return q == 0.0 ? 0.0 : inf;
  if (p == 1.0) return q == 1.0 ? 0.0 : inf;
  if (q == 0.0) return -std::log1p(-p);
  if (q == 1.0) return -std::log(p);
  return q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
}

double bernoulli_kl_inv(double q, double b) {
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("kl_inv: q outside [0,1]");
  if (b < 0.0) throw std::invalid_argument("kl_inv: negative budget");
  if (b == 0.0) return q;
  if (std::isinf(b) || q >= 1.0) return 1.0;
  // kl(q|.) is increasing on [q,1]; keep the invariant kl(lo) <= b < kl(hi)
  double lo = q, hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (bernoulli_kl(q, mid) <= b)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

void BoundInputs::validate() const {
  if (task_count == 0 || samples_per_task == 0)
    throw std::invalid_argument("BoundInputs: m and n must be >= 1");
  if (!(delta > 0.0) || delta > 1.0)
    throw std::invalid_argument("BoundInputs: delta must lie in (0,1]");
  if (empirical_risk < 0.0 || empirical_risk > 1.0)
    throw std::invalid_argument("BoundInputs: empirical risk outside [0,1]");
  if (bits_meta < 0.0 || bits_multitask < 0.0)
    throw std::invalid_argument("BoundInputs: negative bit count");
}

double total_bits(const BoundInputs& in) { return in.bits_meta + in.bits_multitask; }

double single_task_bound(std::size_t m, double delta, double empirical_risk, double bits) {
  const double term = (bits * kLn2 + std::log(1.0 / delta)) / (2.0 * static_cast<double>(m));
  return std::min(1.0, empirical_risk + std::sqrt(term));
}

double single_task_fast_bound(std::size_t m, double delta, double empirical_risk, double bits) {
  const double md = static_cast<double>(m);
  const double budget = (bits * kLn2 + std::log(2.0 * std::sqrt(md) / delta)) / md;
  return bernoulli_kl_inv(empirical_risk, budget);
}

double mtl_slow_bound(const BoundInputs& in) {
  in.validate();
  const double mn = static_cast<double>(in.task_count) * static_cast<double>(in.samples_per_task);
  const double term = (total_bits(in) * kLn2 + std::log(1.0 / in.delta)) / (2.0 * mn);
  return std::min(1.0, in.empirical_risk + std::sqrt(term));
}

double mtl_fast_bound(const BoundInputs& in) {
  in.validate();
  const double mn = static_cast<double>(in.task_count) * static_cast<double>(in.samples_per_task);
  const double budget = (total_bits(in) * kLn2 + std::log(2.0 * std::sqrt(mn) / in.delta)) / mn;
  return bernoulli_kl_inv(in.empirical_risk, budget);
}

double pinsker_bound(const BoundInputs& in) {
  in.validate();
  const double mn = static_cast<double>(in.task_count) * static_cast<double>(in.samples_per_task);
  const double term = (total_bits(in) * kLn2 + std::log(2.0 * std::sqrt(mn) / in.delta)) / (2.0 * mn);
  return std::min(1.0, in.empirical_risk + std::sqrt(term));
}

double transfer_bound(std::size_t m, double delta, double empirical_risk, double bits) {
  return single_task_bound(m, delta, empirical_risk, bits);
}

double transfer_fast_bound(std::size_t m, double delta, double empirical_risk, double bits) {
  return single_task_fast_bound(m, delta, empirical_risk, bits);
}

BoundCertificate certify(const BoundInputs& in) {
  in.validate();
  BoundCertificate cert;
  cert.inputs = in;
  cert.slow_rate = mtl_slow_bound(in);
  cert.fast_rate = mtl_fast_bound(in);
  cert.pinsker = pinsker_bound(in);
  cert.slow_non_vacuous = cert.slow_rate < 1.0;
  cert.fast_non_vacuous = cert.fast_rate < 1.0;
  return cert;
}

nlohmann::json BoundCertificate::to_json() const {
  return nlohmann::json{
      {"inputs",
       {{"n", inputs.task_count},
        {"m", inputs.samples_per_task},
        {"delta", inputs.delta},
        {"empirical_risk", inputs.empirical_risk},
        {"bits_meta", inputs.bits_meta},
        {"bits_multitask", inputs.bits_multitask}}},
      {"slow_rate", slow_rate},
      {"fast_rate", fast_rate},
      {"pinsker", pinsker},
      {"slow_non_vacuous", slow_non_vacuous},
      {"fast_non_vacuous", fast_non_vacuous}};
}

BoundInputs bound_inputs_from_json(const nlohmann::json& j) {
  BoundInputs in;
  in.task_count = j.at("n").get<std::size_t>();
  in.samples_per_task = j.at("m").get<std::size_t>();
  if (j.contains("delta")) in.delta = j.at("delta").get<double>();
  in.empirical_risk = j.at("empirical_risk").get<double>();
  in.bits_meta = j.value("bits_meta", 0.0);
  in.bits_multitask = j.at("bits_multitask").get<double>();
  in.validate();
  return in;
}

}  // namespace lowdim
