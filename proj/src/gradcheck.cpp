#include "snet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "snet/ops.hpp"

namespace snet {
namespace {

// ReLU that records its activation pattern on the first pass and replays it
// afterwards, so finite-difference probes stay on one linear piece.
template <typename T>
class FrozenRelu {
 public:
  BasicTensor<T> operator()(BasicTensor<T> x) {
    if (recording_) {
      auto& mask = masks_.emplace_back(x.numel());
      for (std::size_t i = 0; i < x.numel(); ++i) mask[i] = x.data()[i] > T(0);
    }
    const auto& mask = masks_.at(next_++);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (!mask[i]) x.data()[i] = T(0);
    }
    return x;
  }
  void freeze() {
    recording_ = false;
    next_ = 0;
  }

 private:
  std::vector<std::vector<bool>> masks_;
  std::size_t next_ = 0;
  bool recording_ = true;
};

template <typename T>
BasicTensor<T> conv(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  return ops::conv2d_same(x, p.weight, p.bias);
}

template <typename T>
double masked_loss(const model::BasicSNetModel<T>& m, const BasicTensor<T>& x, const BasicTensor<T>& y,
                   FrozenRelu<T>& relu) {
  const auto decode = [&](BasicTensor<T> g) {
    for (std::size_t i = 0; i < m.decoder.size(); ++i) {
      g = conv(g, m.decoder[i]);
      if (i + 1 < m.decoder.size()) g = relu(std::move(g));
    }
    return g;
  };
  const auto heads = m.config.loss_heads();
  double total = 0.0;
  BasicTensor<T> f = x;
  for (const auto& layer : m.encoder) f = relu(conv(f, layer));
  std::size_t next = 0;
  for (int k = 0; next < heads.size(); ++k) {
    if (k > 0) {
      const auto& convs = m.units[k - 1].convs;
      f = m.config.unit_kind == model::UnitKind::kClassic ? ops::add(f, relu(conv(f, convs[0])))
                                                          : ops::add(f, conv(relu(conv(f, convs[0])), convs[1]));
    }
    if (heads[next] == k) {
      total += ops::mse(decode(f), y);
      ++next;
    }
  }
  return total / static_cast<double>(heads.size());
}

template <typename T>
GradCheckResult run(const GradCheckOptions& opt, double eps, double tol) {
  auto m = model::init_params(opt.config, opt.seed).template cast<T>();
  const Shape shape{opt.batch, static_cast<std::size_t>(opt.config.image_channels), opt.size, opt.size};
  BasicTensor<T> x(shape), y(shape);
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (T& v : x.data()) v = static_cast<T>(u(rng));
  for (T& v : y.data()) v = static_cast<T>(u(rng));

  m.zero_grad();
  {
    BasicTape<T> tape;
    const VarId xv = tape.constant(x), yv = tape.constant(y);
    const auto heads = opt.config.loss_heads();
    const auto outs = model::forward_heads(tape, m, xv, heads);
    tape.backward(model::greedy_loss(tape, std::span<const model::HeadVar>(outs), yv, opt.config.loss_mode));
  }

  FrozenRelu<T> relu;
  masked_loss(m, x, y, relu);
  relu.freeze();

  struct Entry {
    const std::string* name;
    std::size_t index;
    double analytic, numeric;
  };
  std::vector<Entry> entries;
  double scale = 0.0;
  const auto named = m.named_parameters();
  for (const auto& [name, tensor] : named) {
    const auto numeric = fd_gradient<T>(
        [&] {
          relu.freeze();
          return masked_loss(m, x, y, relu);
        },
        tensor->data(), eps);
    const auto analytic = tensor->grad();
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      entries.push_back({&name, i, static_cast<double>(analytic[i]), numeric[i]});
      scale = std::max(scale, std::abs(numeric[i]));
    }
  }

  GradCheckResult r;
  r.tolerance = tol;
  r.checked = entries.size();
  r.floor = std::max(kRelErrorFloor, kRelativeFloor * scale);
  for (const Entry& e : entries) {
    const double err = relative_error(e.analytic, e.numeric, r.floor);
    if (err > r.max_rel_error || r.worst_param.empty()) {
      r.max_rel_error = err;
      r.worst_param = *e.name;
      r.worst_index = e.index;
      r.worst_analytic = e.analytic;
      r.worst_numeric = e.numeric;
    }
  }
  r.passed = r.max_rel_error < tol;
  return r;
}

}  // namespace

model::SNetConfig GradCheckOptions::micro_config() {
  model::SNetConfig c;
  c.channels = 4;
  c.units = 2;
  c.unit_kind = model::UnitKind::kAdvanced;
  return c;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult gradcheck(const GradCheckOptions& options) {
  options.config.validate();
  if (options.size == 0 || options.batch == 0) throw ConfigError("gradcheck input must be non-empty");
  const bool f32 = options.precision == Precision::kFloat32;
  const double eps = options.eps > 0.0 ? options.eps : (f32 ? 1e-1 : 1e-3);
  const double tol = options.tolerance > 0.0 ? options.tolerance : (f32 ? 1e-2 : 1e-4);
  return f32 ? run<float>(options, eps, tol) : run<double>(options, eps, tol);
}

}  // namespace snet
