#include "lowdim/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lowdim/rng.hpp"

namespace lowdim {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "elu";
}

std::vector<std::size_t> NetworkSpec::layer_widths() const {
  std::vector<std::size_t> w;
  w.push_back(input_dim);
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output_dim);
  return w;
}

std::size_t NetworkSpec::param_count() const {
  const auto w = layer_widths();
  std::size_t d = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) d += w[i] * w[i + 1] + w[i + 1];
  return d;
}

void NetworkSpec::validate() const {
  if (input_dim == 0 || output_dim == 0)
    throw std::invalid_argument("NetworkSpec: input_dim and output_dim must be >= 1");
  for (std::size_t h : hidden)
    if (h == 0) throw std::invalid_argument("NetworkSpec: zero hidden width");
}

namespace {

inline double act(double z, Activation a) {
  if (a == Activation::relu) return z > 0.0 ? z : 0.0;
  return z > 0.0 ? z : std::expm1(z);  // elu, alpha = 1
}

// derivative expressed through the pre-activation z
inline double act_grad(double z, Activation a) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  return z > 0.0 ? 1.0 : std::exp(z);
}

void check_batch(const NetworkSpec& spec, std::span<const double> theta, const Tensor& x) {
  spec.validate();
  if (theta.size() != spec.param_count())
    throw std::invalid_argument("theta length " + std::to_string(theta.size()) +
                                " != parameter count " + std::to_string(spec.param_count()));
  if (x.ndim() != 2 || x.cols() != spec.input_dim)
    throw std::invalid_argument("input batch must be batch x " + std::to_string(spec.input_dim));
}

// One affine layer: out = W x + b for every row of x.
void affine(const double* w, const double* b, const Tensor& in, Tensor& out) {
  const std::size_t batch = in.rows(), nin = in.cols(), nout = out.cols();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xi = in.data() + s * nin;
    double* yo = out.data() + s * nout;
    for (std::size_t o = 0; o < nout; ++o) {
      const double* row = w + o * nin;
      double acc = b[o];
      for (std::size_t i = 0; i < nin; ++i) acc += row[i] * xi[i];
      yo[o] = acc;
    }
  }
}

}  // namespace

Tensor forward(const NetworkSpec& spec, std::span<const double> theta, const Tensor& x) {
  check_batch(spec, theta, x);
  const auto widths = spec.layer_widths();
  const std::size_t batch = x.rows();

  Tensor cur = x;
  std::size_t off = 0;
  for (std::size_t layer = 0; layer + 1 < widths.size(); ++layer) {
    const std::size_t nin = widths[layer], nout = widths[layer + 1];
    Tensor next({batch, nout});
    affine(theta.data() + off, theta.data() + off + nin * nout, cur, next);
    off += nin * nout + nout;
    const bool last = (layer + 2 == widths.size());
    if (!last)
      for (std::size_t i = 0; i < next.numel(); ++i) next[i] = act(next[i], spec.activation);
    cur = std::move(next);
  }
  return cur;
}

LossResult loss_and_grad(const NetworkSpec& spec, std::span<const double> theta,
                         const Tensor& x, std::span<const int> labels, LossKind kind,
                         bool want_grad) {
  check_batch(spec, theta, x);
  const std::size_t batch = x.rows();
  if (labels.size() != batch)
    throw std::invalid_argument("labels size != batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= spec.output_dim)
      throw std::invalid_argument("label out of range [0, " + std::to_string(spec.output_dim) + ")");

  if (kind == LossKind::zero_one) {
    if (want_grad)
      throw std::invalid_argument("zero_one loss has no gradient");
    const Tensor logits = forward(spec, theta, x);
    std::size_t wrong = 0;
    for (std::size_t s = 0; s < batch; ++s) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < spec.output_dim; ++c)
        if (logits(s, c) > logits(s, best)) best = c;
      if (best != static_cast<std::size_t>(labels[s])) ++wrong;
    }
    return {static_cast<double>(wrong) / static_cast<double>(batch), {}, false};
  }

  // Cross-entropy pass keeping pre-activations for the backward sweep.
  const auto widths = spec.layer_widths();
  const std::size_t nlayers = widths.size() - 1;
  std::vector<Tensor> activations;  // post-activation inputs of every layer
  std::vector<Tensor> preacts;      // pre-activation values of hidden layers
  activations.reserve(nlayers + 1);
  activations.push_back(x);

  std::size_t off = 0;
  for (std::size_t layer = 0; layer < nlayers; ++layer) {
    const std::size_t nin = widths[layer], nout = widths[layer + 1];
    Tensor z({batch, nout});
    affine(theta.data() + off, theta.data() + off + nin * nout, activations.back(), z);
    off += nin * nout + nout;
    if (layer + 1 < nlayers) {
      preacts.push_back(z);
      Tensor a({batch, nout});
      for (std::size_t i = 0; i < z.numel(); ++i) a[i] = act(z[i], spec.activation);
      activations.push_back(std::move(a));
    } else {
      activations.push_back(std::move(z));  // logits
    }
  }

  const Tensor& logits = activations.back();
  double loss = 0.0;
  Tensor delta({batch, spec.output_dim});  // d mean-loss / d logits
  for (std::size_t s = 0; s < batch; ++s) {
    double mx = logits(s, 0);
    for (std::size_t c = 1; c < spec.output_dim; ++c) mx = std::max(mx, logits(s, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < spec.output_dim; ++c) sum += std::exp(logits(s, c) - mx);
    const double logsum = mx + std::log(sum);
    const int y = labels[s];
    loss += logsum - logits(s, static_cast<std::size_t>(y));
    if (want_grad) {
      for (std::size_t c = 0; c < spec.output_dim; ++c) {
        double p = std::exp(logits(s, c) - logsum);
        delta(s, c) = (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) / static_cast<double>(batch);
      }
    }
  }
  loss /= static_cast<double>(batch);

  LossResult res;
  res.value = loss;
  if (!want_grad) return res;

  res.grad.assign(theta.size(), 0.0);
  res.has_grad = true;

  // Reverse sweep.
  std::size_t tail = theta.size();
  for (std::size_t layer = nlayers; layer-- > 0;) {
    const std::size_t nin = widths[layer], nout = widths[layer + 1];
    tail -= nin * nout + nout;
    const Tensor& input = activations[layer];
    double* gw = res.grad.data() + tail;
    double* gb = gw + nin * nout;
    for (std::size_t s = 0; s < batch; ++s) {
      const double* d = delta.data() + s * nout;
      const double* in = input.data() + s * nin;
      for (std::size_t o = 0; o < nout; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        gb[o] += dv;
        double* row = gw + o * nin;
        for (std::size_t i = 0; i < nin; ++i) row[i] += dv * in[i];
      }
    }
    if (layer == 0) break;
    // propagate to previous layer through W and the activation
    Tensor prev_delta({batch, nin});
    const double* w = theta.data() + tail;
    const Tensor& z = preacts[layer - 1];
    for (std::size_t s = 0; s < batch; ++s) {
      const double* d = delta.data() + s * nout;
      double* pd = prev_delta.data() + s * nin;
      for (std::size_t i = 0; i < nin; ++i) pd[i] = 0.0;
      for (std::size_t o = 0; o < nout; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        const double* row = w + o * nin;
        for (std::size_t i = 0; i < nin; ++i) pd[i] += dv * row[i];
      }
      for (std::size_t i = 0; i < nin; ++i)
        pd[i] *= act_grad(z(s, i), spec.activation);
    }
    delta = std::move(prev_delta);
  }
  return res;
}

std::vector<double> init_theta(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<double> theta(spec.param_count());
  const auto widths = spec.layer_widths();
  RngStream root(seed);
  std::size_t off = 0;
  for (std::size_t layer = 0; layer + 1 < widths.size(); ++layer) {
    const std::size_t nin = widths[layer], nout = widths[layer + 1];
    const RngStream layer_rng = root.derive(layer + 1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(nin));
    for (std::size_t i = 0; i < nin * nout; ++i)
      theta[off + i] = scale * layer_rng.normal_at(i);
    off += nin * nout;
    for (std::size_t i = 0; i < nout; ++i) theta[off + i] = 0.0;
    off += nout;
  }
  return theta;
}

}  // namespace lowdim
