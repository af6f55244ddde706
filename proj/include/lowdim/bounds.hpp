#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace lowdim {

// kl(q|p) between Bernoulli(q) and Bernoulli(p), natural logarithm,
// 0*log 0 := 0.  Mismatched boundary p returns +infinity.
double bernoulli_kl(double q, double p);

// sup{p in [q,1] : kl(q|p) <= b}, bisection to absolute tolerance 1e-9,
// clipped at 1.  Monotone nondecreasing in b.
double bernoulli_kl_inv(double q, double b);

struct BoundInputs {
  std::size_t task_count = 1;       // n
  std::size_t samples_per_task = 1; // m (minimum over tasks when unequal)
  double delta = 0.05;
  double empirical_risk = 0.0;      // zero-one training error in [0,1]
  double bits_meta = 0.0;           // l(E); fractional values allowed for
  double bits_multitask = 0.0;      // l_E;  averaged published inputs

  void validate() const;
};

struct BoundCertificate {
  BoundInputs inputs;
  double slow_rate = 1.0;     // empirical + sqrt(((l+lE) ln2 + ln 1/delta)/(2mn))
  double fast_rate = 1.0;     // kl-inverse form
  double pinsker = 1.0;       // closed-form relaxation of the fast rate
  bool slow_non_vacuous = false;
  bool fast_non_vacuous = false;

  nlohmann::json to_json() const;
};

// sum of the two bit quantities; the complexity currency of the bounds.
double total_bits(const BoundInputs& in);

// Single-task encoding-length bound: risk <= emp + sqrt((bits ln2 + ln(1/delta)) / (2m)).
double single_task_bound(std::size_t m, double delta, double empirical_risk, double bits);

// Single-task kl form: kl_inv(emp, (bits ln2 + ln(2 sqrt(m)/delta)) / m).
// Equivalent to the multi-task fast rate at n = 1.
double single_task_fast_bound(std::size_t m, double delta, double empirical_risk, double bits);

double mtl_slow_bound(const BoundInputs& in);
double mtl_fast_bound(const BoundInputs& in);
double pinsker_bound(const BoundInputs& in);

// Transfer guarantee: the single-task bounds applied to the encoding of the
// new task's (alpha, w) coefficients, codebook-reuse bit included upstream.
double transfer_bound(std::size_t m, double delta, double empirical_risk, double bits);
double transfer_fast_bound(std::size_t m, double delta, double empirical_risk, double bits);

BoundCertificate certify(const BoundInputs& in);

BoundInputs bound_inputs_from_json(const nlohmann::json& j);

}  // namespace lowdim
