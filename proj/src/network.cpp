#include "evloop/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <unordered_set>

#include "evloop/error.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  return (in + 2 * p - k) / s + 1;
}

Shape infer_shape(const LayerSpec& spec, const Shape& in) {
  auto need_rank = [&](std::size_t r) {
    if (in.size() != r) {
      throw ShapeError("layer '" + spec.name + "' (" +
                       std::string(layer_kind_name(spec.kind)) + ") expects rank " +
                       std::to_string(r) + " input, got " + shape_to_string(in));
    }
  };
  return std::visit(
      Overloaded{
          [&](const Conv2d& c) -> Shape {
            need_rank(3);
            if (c.kernel < 1 || c.stride < 1 || c.out_channels < 1) {
              throw ArgumentError("layer '" + spec.name +
                                  "': kernel, stride and channels must be >= 1");
            }
            if (in[1] + 2 * c.padding < c.kernel || in[2] + 2 * c.padding < c.kernel) {
              throw ShapeError("layer '" + spec.name + "': kernel larger than input " +
                               shape_to_string(in));
            }
            return {c.out_channels, conv_out(in[1], c.kernel, c.stride, c.padding),
                    conv_out(in[2], c.kernel, c.stride, c.padding)};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const Dropout& d) -> Shape {
            if (!(d.p >= 0.0 && d.p < 1.0)) {
              throw ArgumentError("layer '" + spec.name + "': dropout p must be in [0, 1)");
            }
            return in;
          },
          [&](const MaxPool2d& m) -> Shape {
            need_rank(3);
            if (m.kernel < 1 || m.stride < 1) {
              throw ArgumentError("layer '" + spec.name + "': kernel/stride must be >= 1");
            }
            if (in[1] < m.kernel || in[2] < m.kernel) {
              throw ShapeError("layer '" + spec.name + "': pool window larger than input " +
                               shape_to_string(in));
            }
            return {in[0], conv_out(in[1], m.kernel, m.stride, 0),
                    conv_out(in[2], m.kernel, m.stride, 0)};
          },
          [&](const Dense& d) -> Shape {
            need_rank(1);
            if (d.out_features < 1) {
              throw ArgumentError("layer '" + spec.name + "': out_features must be >= 1");
            }
            return {d.out_features};
          },
          [&](const GlobalAvgPool&) -> Shape {
            need_rank(3);
            return {in[0]};
          },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
      },
      spec.kind);
}

// Column buffer of shape (C*k*k, Ho*Wo).
void im2col(const Real* in, std::size_t c_in, std::size_t h, std::size_t w,
            const Conv2d& conv, std::size_t ho, std::size_t wo, Real* col) {
  const std::size_t k = conv.kernel;
  const std::size_t p = ho * wo;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        Real* row = col + ((c * k + ky) * k + kx) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * conv.stride + ky) -
                                    static_cast<std::ptrdiff_t>(conv.padding);
          Real* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, Real(0));
            continue;
          }
          const Real* src = in + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * conv.stride + kx) -
                                      static_cast<std::ptrdiff_t>(conv.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                          ? Real(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im(const Real* col, std::size_t c_in, std::size_t h, std::size_t w,
            const Conv2d& conv, std::size_t ho, std::size_t wo, Real* out) {
  const std::size_t k = conv.kernel;
  const std::size_t p = ho * wo;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const Real* row = col + ((c * k + ky) * k + kx) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * conv.stride + ky) -
                                    static_cast<std::ptrdiff_t>(conv.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          Real* dst = out + (c * h + static_cast<std::size_t>(iy)) * w;
          const Real* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * conv.stride + kx) -
                                      static_cast<std::ptrdiff_t>(conv.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

struct LayerForward {
  Tensor output;
  std::vector<std::uint32_t> argmax;
  std::vector<Real> dropout_scale;
};

LayerForward forward_layer(const Network& net, std::size_t i, const Tensor& in,
                           std::uint64_t dropout_seed) {
  const LayerSpec& spec = net.layer(i);
  const LayerParams& prm = net.params(i);
  LayerForward res;
  res.output = Tensor(net.output_shape(i));
  Tensor& out = res.output;
  std::visit(
      Overloaded{
          [&](const Conv2d& c) {
            const std::size_t cin = in.dim(0), h = in.dim(1), w = in.dim(2);
            const std::size_t ho = out.dim(1), wo = out.dim(2);
            const std::size_t kk = cin * c.kernel * c.kernel;
            std::vector<Real> col(kk * ho * wo);
            im2col(in.data(), cin, h, w, c, ho, wo, col.data());
            Eigen::Map<const MatR> wmat(prm.weight.data(), c.out_channels, kk);
            Eigen::Map<const MatR> cmat(col.data(), kk, ho * wo);
            Eigen::Map<MatR> omat(out.data(), c.out_channels, ho * wo);
            omat.noalias() = wmat * cmat;
            for (std::size_t o = 0; o < c.out_channels; ++o) {
              omat.row(o).array() += prm.bias[o];
            }
          },
          [&](const Relu&) {
            for (std::size_t k = 0; k < in.size(); ++k) {
              out[k] = in[k] > Real(0) ? in[k] : Real(0);
            }
          },
          [&](const Dropout& d) {
            if (net.mode() == Mode::inference || d.p == 0.0) {
              std::copy(in.values().begin(), in.values().end(), out.values().begin());
              return;
            }
            std::mt19937_64 rng(dropout_seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
            std::bernoulli_distribution keep(1.0 - d.p);
            const Real scale = static_cast<Real>(1.0 / (1.0 - d.p));
            res.dropout_scale.resize(in.size());
            for (std::size_t k = 0; k < in.size(); ++k) {
              res.dropout_scale[k] = keep(rng) ? scale : Real(0);
              out[k] = in[k] * res.dropout_scale[k];
            }
          },
          [&](const MaxPool2d& m) {
            const std::size_t ch = in.dim(0), h = in.dim(1), w = in.dim(2);
            const std::size_t ho = out.dim(1), wo = out.dim(2);
            res.argmax.resize(out.size());
            for (std::size_t c = 0; c < ch; ++c) {
              for (std::size_t oy = 0; oy < ho; ++oy) {
                for (std::size_t ox = 0; ox < wo; ++ox) {
                  std::size_t best = (c * h + oy * m.stride) * w + ox * m.stride;
                  Real bv = in[best];
                  for (std::size_t ky = 0; ky < m.kernel; ++ky) {
                    for (std::size_t kx = 0; kx < m.kernel; ++kx) {
                      const std::size_t idx =
                          (c * h + oy * m.stride + ky) * w + ox * m.stride + kx;
                      // Strict comparison keeps the first maximum in row-major order.
                      if (in[idx] > bv) {
                        bv = in[idx];
                        best = idx;
                      }
                    }
                  }
                  const std::size_t o = (c * ho + oy) * wo + ox;
                  out[o] = bv;
                  res.argmax[o] = static_cast<std::uint32_t>(best);
                }
              }
            }
          },
          [&](const Dense& d) {
            Eigen::Map<const MatR> wmat(prm.weight.data(), d.out_features, in.size());
            Eigen::Map<const VecR> x(in.data(), in.size());
            Eigen::Map<const VecR> b(prm.bias.data(), d.out_features);
            Eigen::Map<VecR> y(out.data(), d.out_features);
            y.noalias() = wmat * x;
            y += b;
          },
          [&](const GlobalAvgPool&) {
            const std::size_t ch = in.dim(0), hw = in.dim(1) * in.dim(2);
            for (std::size_t c = 0; c < ch; ++c) {
              double s = 0.0;
              for (std::size_t k = 0; k < hw; ++k) s += in[c * hw + k];
              out[c] = static_cast<Real>(s / static_cast<double>(hw));
            }
          },
          [&](const Flatten&) {
            std::copy(in.values().begin(), in.values().end(), out.values().begin());
          },
      },
      spec.kind);
  if (!out.all_finite()) {
    throw NumericError("non-finite activation in layer '" + spec.name + "'");
  }
  return res;
}

// Returns d/d(input of layer i) given d/d(output of layer i). Parameter
// gradients are accumulated when `pgrads` is non-null; the input gradient is
// skipped when `need_input` is false.
Tensor backward_layer(const Network& net, const ForwardCache& cache, std::size_t i,
                      const Tensor& grad_out, ReluBackwardPolicy policy,
                      LayerParams* pgrads, bool need_input) {
  const LayerSpec& spec = net.layer(i);
  const LayerParams& prm = net.params(i);
  const Tensor& in = cache.activations[i];
  Tensor grad_in;
  if (need_input) grad_in = Tensor(in.shape());
  std::visit(
      Overloaded{
          [&](const Conv2d& c) {
            const std::size_t cin = in.dim(0), h = in.dim(1), w = in.dim(2);
            const std::size_t ho = grad_out.dim(1), wo = grad_out.dim(2);
            const std::size_t kk = cin * c.kernel * c.kernel;
            Eigen::Map<const MatR> gmat(grad_out.data(), c.out_channels, ho * wo);
            if (pgrads) {
              std::vector<Real> col(kk * ho * wo);
              im2col(in.data(), cin, h, w, c, ho, wo, col.data());
              Eigen::Map<const MatR> cmat(col.data(), kk, ho * wo);
              Eigen::Map<MatR> dw(pgrads->weight.data(), c.out_channels, kk);
              dw.noalias() += gmat * cmat.transpose();
              for (std::size_t o = 0; o < c.out_channels; ++o) {
                pgrads->bias[o] += gmat.row(o).sum();
              }
            }
            if (need_input) {
              Eigen::Map<const MatR> wmat(prm.weight.data(), c.out_channels, kk);
              MatR dcol = wmat.transpose() * gmat;
              col2im(dcol.data(), cin, h, w, c, ho, wo, grad_in.data());
            }
          },
          [&](const Relu&) {
            if (!need_input) return;
            if (policy == ReluBackwardPolicy::guided) {
              for (std::size_t k = 0; k < in.size(); ++k) {
                grad_in[k] = (in[k] > Real(0) && grad_out[k] > Real(0)) ? grad_out[k] : Real(0);
              }
            } else {
              for (std::size_t k = 0; k < in.size(); ++k) {
                grad_in[k] = in[k] > Real(0) ? grad_out[k] : Real(0);
              }
            }
          },
          [&](const Dropout&) {
            if (!need_input) return;
            const auto& scale = cache.dropout_scale[i];
            if (scale.empty()) {
              std::copy(grad_out.values().begin(), grad_out.values().end(),
                        grad_in.values().begin());
            } else {
              for (std::size_t k = 0; k < in.size(); ++k) grad_in[k] = grad_out[k] * scale[k];
            }
          },
          [&](const MaxPool2d&) {
            if (!need_input) return;
            const auto& am = cache.pool_argmax[i];
            for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[am[o]] += grad_out[o];
          },
          [&](const Dense& d) {
            Eigen::Map<const VecR> g(grad_out.data(), d.out_features);
            if (pgrads) {
              Eigen::Map<const VecR> x(in.data(), in.size());
              Eigen::Map<MatR> dw(pgrads->weight.data(), d.out_features, in.size());
              dw.noalias() += g * x.transpose();
              Eigen::Map<VecR> db(pgrads->bias.data(), d.out_features);
              db += g;
            }
            if (need_input) {
              Eigen::Map<const MatR> wmat(prm.weight.data(), d.out_features, in.size());
              Eigen::Map<VecR> gx(grad_in.data(), in.size());
              gx.noalias() = wmat.transpose() * g;
            }
          },
          [&](const GlobalAvgPool&) {
            if (!need_input) return;
            const std::size_t ch = in.dim(0), hw = in.dim(1) * in.dim(2);
            for (std::size_t c = 0; c < ch; ++c) {
              const Real v = grad_out[c] / static_cast<Real>(hw);
              std::fill(grad_in.data() + c * hw, grad_in.data() + (c + 1) * hw, v);
            }
          },
          [&](const Flatten&) {
            if (!need_input) return;
            std::copy(grad_out.values().begin(), grad_out.values().end(),
                      grad_in.values().begin());
          },
      },
      spec.kind);
  return grad_in;
}

void check_cache(const Network& net, const ForwardCache& cache) {
  if (cache.network_version != net.version() ||
      cache.activations.size() != net.layer_count() + 1) {
    throw InvalidCacheError("forward cache does not belong to the current network state");
  }
}

Tensor run_backward(const Network& net, const ForwardCache& cache, std::size_t stop,
                    ReluBackwardPolicy policy) {
  check_cache(net, cache);
  Tensor grad(net.output_shape(net.layer_count() - 1), Real(1));
  for (std::size_t i = net.layer_count(); i-- > stop;) {
    grad = backward_layer(net, cache, i, grad, policy, nullptr, true);
  }
  return grad;
}

}  // namespace

std::string_view layer_kind_name(const LayerKind& kind) {
  return std::visit(Overloaded{
                        [](const Conv2d&) { return std::string_view("conv2d"); },
                        [](const Relu&) { return std::string_view("relu"); },
                        [](const MaxPool2d&) { return std::string_view("maxpool2d"); },
                        [](const Dense&) { return std::string_view("dense"); },
                        [](const GlobalAvgPool&) { return std::string_view("global_avg_pool"); },
                        [](const Dropout&) { return std::string_view("dropout"); },
                        [](const Flatten&) { return std::string_view("flatten"); },
                    },
                    kind);
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (layers_.empty()) throw ArgumentError("network needs at least one layer");
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ShapeError("network input shape must be non-empty");
  }
  std::unordered_set<std::string> names;
  shapes_.push_back(input_shape_);
  for (const auto& spec : layers_) {
    if (spec.name.empty()) throw ArgumentError("layer identifiers must be non-empty");
    if (!names.insert(spec.name).second) {
      throw ArgumentError("duplicate layer identifier '" + spec.name + "'");
    }
    shapes_.push_back(infer_shape(spec, shapes_.back()));
    LayerParams prm;
    const Shape& in = shapes_[shapes_.size() - 2];
    if (const auto* c = std::get_if<Conv2d>(&spec.kind)) {
      prm.weight = Tensor({c->out_channels, in[0], c->kernel, c->kernel});
      prm.bias = Tensor({c->out_channels});
    } else if (const auto* d = std::get_if<Dense>(&spec.kind)) {
      prm.weight = Tensor({d->out_features, in[0]});
      prm.bias = Tensor({d->out_features});
    }
    params_.push_back(std::move(prm));
  }
  if (shape_size(shapes_.back()) != 1) {
    throw ShapeError("network must end in a single scalar output, got " +
                     shape_to_string(shapes_.back()));
  }
  touch();
}

void Network::init_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& prm : params_) {
    if (prm.weight.empty()) continue;
    const std::size_t fan_in = prm.weight.size() / prm.weight.dim(0);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : prm.weight.values()) v = static_cast<Real>(dist(rng));
    prm.bias.fill(Real(0));
  }
  touch();
}

std::size_t Network::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  throw LookupError("unknown layer '" + std::string(name) + "'");
}

LayerParams& Network::mutable_params(std::size_t i) {
  touch();
  return params_.at(i);
}

std::vector<LayerParams>& Network::mutable_all_params() {
  touch();
  return params_;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

void Network::set_mode(Mode mode) {
  mode_ = mode;
  touch();
}

void Network::touch() { version_ = next_version(); }

ForwardResult forward(const Network& net, const Tensor& input, const ForwardOptions& options) {
  if (input.shape() != net.input_shape()) {
    throw ShapeError("input shape " + shape_to_string(input.shape()) +
                     " does not match network input " + shape_to_string(net.input_shape()));
  }
  if (!input.all_finite()) throw NumericError("non-finite network input");
  ForwardResult res;
  ForwardCache& cache = res.cache;
  const std::size_t n = net.layer_count();
  cache.activations.reserve(n + 1);
  cache.activations.push_back(input);
  cache.pool_argmax.resize(n);
  cache.dropout_scale.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    LayerForward lf = forward_layer(net, i, cache.activations.back(), options.dropout_seed);
    cache.activations.push_back(std::move(lf.output));
    cache.pool_argmax[i] = std::move(lf.argmax);
    cache.dropout_scale[i] = std::move(lf.dropout_scale);
  }
  cache.prediction = cache.activations.back()[0];
  cache.network_version = net.version();
  res.prediction = cache.prediction;
  return res;
}

Real predict_scalar(const Network& net, const Tensor& input) {
  if (input.shape() != net.input_shape()) {
    throw ShapeError("input shape " + shape_to_string(input.shape()) +
                     " does not match network input " + shape_to_string(net.input_shape()));
  }
  if (!input.all_finite()) throw NumericError("non-finite network input");
  Tensor cur = input;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    cur = forward_layer(net, i, cur, 0).output;
  }
  return cur[0];
}

Real forward_from_layer(const Network& net, std::string_view layer_id,
                        const Tensor& activation) {
  const std::size_t start = net.layer_index(layer_id);
  if (activation.shape() != net.output_shape(start)) {
    throw ShapeError("activation shape " + shape_to_string(activation.shape()) +
                     " does not match layer '" + std::string(layer_id) + "' output " +
                     shape_to_string(net.output_shape(start)));
  }
  if (net.mode() != Mode::inference) {
    throw ArgumentError("forward_from_layer requires inference mode");
  }
  Tensor cur = activation;
  for (std::size_t i = start + 1; i < net.layer_count(); ++i) {
    cur = forward_layer(net, i, cur, 0).output;
  }
  return cur[0];
}

Tensor backward_to_input(const Network& net, const ForwardCache& cache,
                         ReluBackwardPolicy policy) {
  return run_backward(net, cache, 0, policy);
}

Tensor backward_to_layer(const Network& net, const ForwardCache& cache,
                         std::string_view layer_id, ReluBackwardPolicy policy) {
  const std::size_t idx = net.layer_index(layer_id);
  return run_backward(net, cache, idx + 1, policy);
}

std::vector<LayerParams> zeros_like_params(const Network& net) {
  std::vector<LayerParams> out;
  out.reserve(net.layer_count());
  for (const auto& p : net.all_params()) {
    LayerParams z;
    if (!p.weight.empty()) {
      z.weight = Tensor(p.weight.shape());
      z.bias = Tensor(p.bias.shape());
    }
    out.push_back(std::move(z));
  }
  return out;
}

void accumulate_parameter_gradients(const Network& net, const ForwardCache& cache,
                                    Real output_grad, std::vector<LayerParams>& grads) {
  check_cache(net, cache);
  if (grads.size() != net.layer_count()) {
    throw ShapeError("gradient buffer does not match the network layout");
  }
  // Index of the first layer that owns parameters; nothing below it needs an
  // input gradient.
  std::size_t first_param = net.layer_count();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (!net.params(i).weight.empty()) {
      first_param = i;
      break;
    }
  }
  Tensor grad(net.output_shape(net.layer_count() - 1), output_grad);
  for (std::size_t i = net.layer_count(); i-- > first_param;) {
    LayerParams* pg = net.params(i).weight.empty() ? nullptr : &grads[i];
    grad = backward_layer(net, cache, i, grad, ReluBackwardPolicy::standard, pg,
                          i > first_param);
  }
}

EVLOOP_NAMESPACE_END
