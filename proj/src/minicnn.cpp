#include "mvdi/minicnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "mvdi/blockio.hpp"
#include "mvdi/error.hpp"

namespace mvdi::cnn {

// ---------------------------------------------------------------------------
// Architecture

Arch Arch::desk_default() {
  Arch a;
  a.input_size = 32;
  a.conv = {{8, 5, 1, 2, true}, {16, 3, 1, 1, true}};
  a.hidden = {64};
  return a;
}

namespace {

struct Shape {
  int c, h, w;
};

// Output shape after each conv layer; throws on an inconsistent chain.
std::vector<Shape> conv_shapes(const Arch& arch) {
  std::vector<Shape> out;
  Shape s{1, arch.input_size, arch.input_size};
  for (std::size_t i = 0; i < arch.conv.size(); ++i) {
    const auto& c = arch.conv[i];
    if (c.filters < 1 || c.kernel < 1 || c.stride < 1 || c.pad < 0) {
      throw ConfigError("conv layer " + std::to_string(i) + ": invalid parameters");
    }
    const int h = (s.h + 2 * c.pad - c.kernel) / c.stride + 1;
    const int w = (s.w + 2 * c.pad - c.kernel) / c.stride + 1;
    if (s.h + 2 * c.pad < c.kernel || h < 1 || w < 1) {
      throw ConfigError("conv layer " + std::to_string(i) + ": kernel larger than input");
    }
    s = {c.filters, h, w};
    if (c.pool) {
      if (h < 2 || w < 2) throw ConfigError("conv layer " + std::to_string(i) + ": too small to pool");
      s.h /= 2;
      s.w /= 2;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

void Arch::validate() const {
  if (input_size < 1) throw ConfigError("input_size must be >= 1");
  if (hidden.empty()) throw ConfigError("need at least one hidden dense layer (the feature layer)");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("dense widths must be >= 1");
  }
  conv_shapes(*this);
}

std::vector<ConvSpec> parse_conv_specs(const std::string& s) {
  std::vector<ConvSpec> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    ConvSpec c;
    c.pool = !item.empty() && (item.back() == 'P' || item.back() == 'p');
    if (c.pool) item.pop_back();
    char x = 0, sch = 0, pch = 0;
    std::istringstream is(item);
    if (!(is >> c.filters >> x >> c.kernel >> sch >> c.stride >> pch >> c.pad) || x != 'x' ||
        sch != 's' || pch != 'p' || is.peek() != EOF) {
      throw ConfigError("bad conv spec '" + item + "' (expected e.g. 8x5s1p2P)");
    }
    out.push_back(c);
  }
  return out;
}

std::string format_conv_specs(const std::vector<ConvSpec>& specs) {
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& c = specs[i];
    if (i) out += ',';
    out += std::to_string(c.filters) + "x" + std::to_string(c.kernel) + "s" +
           std::to_string(c.stride) + "p" + std::to_string(c.pad) + (c.pool ? "P" : "");
  }
  return out;
}

int ConvStack::out_dim() const {
  if (layers.empty()) return 0;
  const auto& l = layers.back();
  return l.spec.filters * l.out_h * l.out_w;
}

int MultiStreamModel::feature_dim() const {
  return streams.front().layers[streams.front().feature_layer].out;
}

MultiStreamModel::StreamView MultiStreamModel::stream(int group) const {
  if (group < 0 || group >= num_groups()) {
    throw ConfigError("stream index " + std::to_string(group) + " out of range");
  }
  return {shared, streams[group]};
}

void MultiStreamModel::validate() const {
  arch.validate();
  if (streams.empty()) throw ConfigError("model has no streams");
  const int in_dim = arch.conv.empty() ? arch.input_size * arch.input_size : shared.out_dim();
  for (const auto& s : streams) {
    if (s.layers.empty() || s.layers.front().in != in_dim) {
      throw ConfigError("stream input dim does not match conv output");
    }
    for (std::size_t i = 1; i < s.layers.size(); ++i) {
      if (s.layers[i].in != s.layers[i - 1].out) throw ConfigError("inconsistent dense chain");
    }
    if (s.layers.back().out != num_classes) throw ConfigError("logit width != num_classes");
  }
}

std::vector<std::vector<double>*> MultiStreamModel::shared_blocks() {
  std::vector<std::vector<double>*> out;
  for (auto& l : shared.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const std::vector<double>*> MultiStreamModel::shared_blocks() const {
  std::vector<const std::vector<double>*> out;
  for (const auto& l : shared.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<std::vector<double>*> MultiStreamModel::stream_blocks(int group) {
  std::vector<std::vector<double>*> out;
  for (auto& l : streams.at(group).layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const std::vector<double>*> MultiStreamModel::stream_blocks(int group) const {
  std::vector<const std::vector<double>*> out;
  for (const auto& l : streams.at(group).layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !(momentum >= 0) || !(weight_decay >= 0)) {
    throw ConfigError("learning rate, momentum and weight decay must be >= 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (iters < 0) throw ConfigError("iters must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

double init_std(int fan_in) { return std::sqrt(2.0 / fan_in); }

namespace {

// Builds the layer shapes without parameters.
MultiStreamModel skeleton(const Arch& arch, int num_groups, int num_classes) {
  arch.validate();
  if (num_groups < 1) throw ConfigError("num_groups must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  MultiStreamModel m;
  m.arch = arch;
  m.num_classes = num_classes;
  const auto shapes = conv_shapes(arch);
  Shape in{1, arch.input_size, arch.input_size};
  for (std::size_t i = 0; i < arch.conv.size(); ++i) {
    ConvLayer l;
    l.spec = arch.conv[i];
    l.in_c = in.c;
    l.in_h = in.h;
    l.in_w = in.w;
    l.conv_h = (in.h + 2 * l.spec.pad - l.spec.kernel) / l.spec.stride + 1;
    l.conv_w = (in.w + 2 * l.spec.pad - l.spec.kernel) / l.spec.stride + 1;
    l.out_h = shapes[i].h;
    l.out_w = shapes[i].w;
    l.weight.assign(static_cast<std::size_t>(l.spec.filters) * l.fan_in(), 0.0);
    l.bias.assign(l.spec.filters, 0.0);
    m.shared.layers.push_back(std::move(l));
    in = shapes[i];
  }
  const int in_dim = in.c * in.h * in.w;
  for (int g = 0; g < num_groups; ++g) {
    FcStack s;
    int prev = in_dim;
    std::vector<int> widths = arch.hidden;
    widths.push_back(num_classes);
    for (int w : widths) {
      DenseLayer d;
      d.in = prev;
      d.out = w;
      d.weight.assign(static_cast<std::size_t>(w) * prev, 0.0);
      d.bias.assign(w, 0.0);
      s.layers.push_back(std::move(d));
      prev = w;
    }
    s.feature_layer = static_cast<int>(arch.hidden.size()) - 1;
    m.streams.push_back(std::move(s));
  }
  return m;
}

}  // namespace

MultiStreamModel init_model(const Arch& arch, int num_groups, int num_classes, std::uint64_t seed) {
  auto m = skeleton(arch, num_groups, num_classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& l : m.shared.layers) {
    const double sd = init_std(l.fan_in());
    for (auto& w : l.weight) w = sd * normal(rng);
  }
  for (auto& s : m.streams) {
    for (auto& d : s.layers) {
      const double sd = init_std(d.in);
      for (auto& w : d.weight) w = sd * normal(rng);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Kernels, templated on the arithmetic type.

namespace {

template <class S>
struct Params {
  std::vector<std::span<const S>> cw, cb, fw, fb;
  std::vector<std::vector<S>> storage;  // converted copies when S != double
};

template <class S>
std::span<const S> view_of(const std::vector<double>& v, std::vector<std::vector<S>>& storage) {
  if constexpr (std::is_same_v<S, double>) {
    return v;
  } else {
    storage.emplace_back(v.begin(), v.end());
    return storage.back();
  }
}

template <class S>
Params<S> gather(const MultiStreamModel& m, int group) {
  Params<S> p;
  // Reserve so spans into storage stay valid.
  p.storage.reserve(2 * (m.shared.layers.size() + m.streams[group].layers.size()));
  for (const auto& l : m.shared.layers) {
    p.cw.push_back(view_of<S>(l.weight, p.storage));
    p.cb.push_back(view_of<S>(l.bias, p.storage));
  }
  for (const auto& d : m.streams[group].layers) {
    p.fw.push_back(view_of<S>(d.weight, p.storage));
    p.fb.push_back(view_of<S>(d.bias, p.storage));
  }
  return p;
}

template <class S>
struct Trace {
  std::vector<std::vector<S>> conv_in;  // input of each conv layer
  std::vector<std::vector<S>> conv_z;   // pre-activation
  std::vector<std::vector<int>> pool_idx;
  std::vector<std::vector<S>> dense_in;
  std::vector<std::vector<S>> dense_z;
  std::vector<std::vector<S>> dense_mask;
  std::vector<S> feature;
  std::vector<S> logits;
};

template <class S>
std::vector<S> conv_forward(const ConvLayer& l, std::span<const S> w, std::span<const S> b,
                            const std::vector<S>& x) {
  const int F = l.spec.filters, C = l.in_c, K = l.spec.kernel, st = l.spec.stride, pd = l.spec.pad;
  const int OH = l.conv_h, OW = l.conv_w, H = l.in_h, W = l.in_w;
  std::vector<S> z(static_cast<std::size_t>(F) * OH * OW);
  for (int f = 0; f < F; ++f) {
    S* zf = z.data() + static_cast<std::size_t>(f) * OH * OW;
    std::fill(zf, zf + OH * OW, b[f]);
    for (int c = 0; c < C; ++c) {
      const S* xc = x.data() + static_cast<std::size_t>(c) * H * W;
      for (int ki = 0; ki < K; ++ki) {
        for (int kj = 0; kj < K; ++kj) {
          const S wv = w[((static_cast<std::size_t>(f) * C + c) * K + ki) * K + kj];
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * st + ki - pd;
            if (iy < 0 || iy >= H) continue;
            const S* xrow = xc + static_cast<std::size_t>(iy) * W;
            S* zrow = zf + static_cast<std::size_t>(oy) * OW;
            for (int ox = 0; ox < OW; ++ox) {
              const int ix = ox * st + kj - pd;
              if (ix >= 0 && ix < W) zrow[ox] += wv * xrow[ix];
            }
          }
        }
      }
    }
  }
  return z;
}

// Rectifier + optional 2x2 max-pool; records argmax positions for backprop.
template <class S>
std::vector<S> activate_pool(const ConvLayer& l, const std::vector<S>& z, std::vector<int>& idx) {
  std::vector<S> a(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > S(0) ? z[i] : S(0);
  idx.clear();
  if (!l.spec.pool) return a;
  const int F = l.spec.filters, CH = l.conv_h, CW = l.conv_w, PH = l.out_h, PW = l.out_w;
  std::vector<S> out(static_cast<std::size_t>(F) * PH * PW);
  idx.resize(out.size());
  for (int f = 0; f < F; ++f) {
    for (int py = 0; py < PH; ++py) {
      for (int px = 0; px < PW; ++px) {
        int best = (f * CH + 2 * py) * CW + 2 * px;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int j = (f * CH + 2 * py + dy) * CW + 2 * px + dx;
            if (a[j] > a[best]) best = j;
          }
        }
        const int o = (f * PH + py) * PW + px;
        out[o] = a[best];
        idx[o] = best;
      }
    }
  }
  return out;
}

template <class S>
std::vector<S> dense_forward(const DenseLayer& d, std::span<const S> w, std::span<const S> b,
                             const std::vector<S>& x) {
  std::vector<S> z(d.out);
  for (int o = 0; o < d.out; ++o) {
    const S* row = w.data() + static_cast<std::size_t>(o) * d.in;
    S acc = b[o];
    for (int i = 0; i < d.in; ++i) acc += row[i] * x[i];
    z[o] = acc;
  }
  return z;
}

template <class S>
void run_forward(const MultiStreamModel& m, int group, const Params<S>& p,
                 std::span<const double> image, Trace<S>& tr, double dropout,
                 std::mt19937_64* rng) {
  const std::size_t in_len = static_cast<std::size_t>(m.arch.input_size) * m.arch.input_size;
  if (image.size() != in_len) {
    throw DataError("image has " + std::to_string(image.size()) + " values, expected " +
                    std::to_string(in_len));
  }
  std::vector<S> x(image.begin(), image.end());
  const auto& conv = m.shared.layers;
  tr.conv_in.resize(conv.size());
  tr.conv_z.resize(conv.size());
  tr.pool_idx.resize(conv.size());
  for (std::size_t i = 0; i < conv.size(); ++i) {
    tr.conv_in[i] = std::move(x);
    tr.conv_z[i] = conv_forward<S>(conv[i], p.cw[i], p.cb[i], tr.conv_in[i]);
    x = activate_pool<S>(conv[i], tr.conv_z[i], tr.pool_idx[i]);
  }
  const auto& fc = m.streams[group];
  const std::size_t L = fc.layers.size();
  tr.dense_in.resize(L);
  tr.dense_z.resize(L);
  tr.dense_mask.assign(L, {});
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < L; ++i) {
    tr.dense_in[i] = std::move(x);
    tr.dense_z[i] = dense_forward<S>(fc.layers[i], p.fw[i], p.fb[i], tr.dense_in[i]);
    if (i + 1 == L) break;
    x.resize(tr.dense_z[i].size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = tr.dense_z[i][k] > S(0) ? tr.dense_z[i][k] : S(0);
    if (static_cast<int>(i) == fc.feature_layer) tr.feature = x;
    if (rng && dropout > 0.0) {
      auto& mask = tr.dense_mask[i];
      mask.resize(x.size());
      const S keep_scale = S(1.0 / (1.0 - dropout));
      for (std::size_t k = 0; k < x.size(); ++k) {
        mask[k] = uni(*rng) >= dropout ? keep_scale : S(0);
        x[k] *= mask[k];
      }
    }
  }
  tr.logits = tr.dense_z.back();
}

template <class S>
struct GradAcc {
  std::vector<std::vector<S>> cw, cb, fw, fb;
};

template <class S>
void run_backward(const MultiStreamModel& m, int group, const Params<S>& p, const Trace<S>& tr,
                  std::vector<S> d, GradAcc<S>& g) {
  const auto& fc = m.streams[group];
  for (std::size_t li = fc.layers.size(); li-- > 0;) {
    const auto& l = fc.layers[li];
    if (li + 1 < fc.layers.size()) {
      // d currently holds dL/d(post-dropout activation).
      const auto& mask = tr.dense_mask[li];
      const auto& z = tr.dense_z[li];
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (!mask.empty()) d[k] *= mask[k];
        if (!(z[k] > S(0))) d[k] = S(0);
      }
    }
    const auto& x = tr.dense_in[li];
    auto& gw = g.fw[li];
    auto& gb = g.fb[li];
    std::vector<S> dx(l.in, S(0));
    for (int o = 0; o < l.out; ++o) {
      const S dz = d[o];
      if (dz == S(0)) continue;
      gb[o] += dz;
      S* grow = gw.data() + static_cast<std::size_t>(o) * l.in;
      const S* wrow = p.fw[li].data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) {
        grow[i] += dz * x[i];
        dx[i] += dz * wrow[i];
      }
    }
    d = std::move(dx);
  }
  const auto& conv = m.shared.layers;
  for (std::size_t li = conv.size(); li-- > 0;) {
    const auto& l = conv[li];
    const int F = l.spec.filters, C = l.in_c, K = l.spec.kernel, st = l.spec.stride, pd = l.spec.pad;
    const int OH = l.conv_h, OW = l.conv_w, H = l.in_h, W = l.in_w;
    std::vector<S> dz(static_cast<std::size_t>(F) * OH * OW, S(0));
    if (l.spec.pool) {
      const auto& idx = tr.pool_idx[li];
      for (std::size_t k = 0; k < idx.size(); ++k) dz[idx[k]] += d[k];
    } else {
      dz = std::move(d);
    }
    const auto& z = tr.conv_z[li];
    for (std::size_t k = 0; k < dz.size(); ++k) {
      if (!(z[k] > S(0))) dz[k] = S(0);
    }
    const auto& x = tr.conv_in[li];
    const bool need_dx = li > 0;
    std::vector<S> dx(need_dx ? static_cast<std::size_t>(C) * H * W : 0, S(0));
    auto& gw = g.cw[li];
    auto& gb = g.cb[li];
    for (int f = 0; f < F; ++f) {
      const S* dzf = dz.data() + static_cast<std::size_t>(f) * OH * OW;
      S bsum = 0;
      for (int k = 0; k < OH * OW; ++k) bsum += dzf[k];
      gb[f] += bsum;
      for (int c = 0; c < C; ++c) {
        const S* xc = x.data() + static_cast<std::size_t>(c) * H * W;
        S* dxc = need_dx ? dx.data() + static_cast<std::size_t>(c) * H * W : nullptr;
        for (int ki = 0; ki < K; ++ki) {
          for (int kj = 0; kj < K; ++kj) {
            const std::size_t wi = ((static_cast<std::size_t>(f) * C + c) * K + ki) * K + kj;
            const S wv = p.cw[li][wi];
            S acc = 0;
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * st + ki - pd;
              if (iy < 0 || iy >= H) continue;
              const S* xrow = xc + static_cast<std::size_t>(iy) * W;
              const S* dzrow = dzf + static_cast<std::size_t>(oy) * OW;
              S* dxrow = need_dx ? dxc + static_cast<std::size_t>(iy) * W : nullptr;
              for (int ox = 0; ox < OW; ++ox) {
                const int ix = ox * st + kj - pd;
                if (ix < 0 || ix >= W) continue;
                acc += dzrow[ox] * xrow[ix];
                if (need_dx) dxrow[ix] += wv * dzrow[ox];
              }
            }
            gw[wi] += acc;
          }
        }
      }
    }
    d = std::move(dx);
  }
}

template <class S>
LossGrad loss_and_grads_impl(const MultiStreamModel& m, int group, const Batch& batch,
                             const TrainConfig& cfg, std::uint64_t dropout_seed) {
  const auto p = gather<S>(m, group);
  GradAcc<S> acc;
  for (const auto& l : m.shared.layers) {
    acc.cw.emplace_back(l.weight.size(), S(0));
    acc.cb.emplace_back(l.bias.size(), S(0));
  }
  for (const auto& l : m.streams[group].layers) {
    acc.fw.emplace_back(l.weight.size(), S(0));
    acc.fb.emplace_back(l.bias.size(), S(0));
  }
  std::mt19937_64 rng(dropout_seed);
  const double B = static_cast<double>(batch.images.size());
  double loss = 0.0;
  Trace<S> tr;
  for (std::size_t n = 0; n < batch.images.size(); ++n) {
    const int y = batch.labels[n];
    run_forward<S>(m, group, p, batch.images[n], tr, cfg.dropout, cfg.dropout > 0 ? &rng : nullptr);
    const auto& z = tr.logits;
    double mx = -std::numeric_limits<double>::infinity();
    for (S v : z) mx = std::max(mx, static_cast<double>(v));
    double se = 0.0;
    for (S v : z) se += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(se);
    loss += lse - static_cast<double>(z[y]);
    std::vector<S> d(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double pk = std::exp(static_cast<double>(z[k]) - lse);
      d[k] = static_cast<S>((pk - (static_cast<int>(k) == y ? 1.0 : 0.0)) / B);
    }
    run_backward<S>(m, group, p, tr, std::move(d), acc);
  }
  loss /= B;
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");

  LossGrad out;
  out.grads.group = group;
  const double wd = cfg.weight_decay;
  double sq = 0.0;
  auto finish = [&](const std::vector<S>& gsrc, const std::vector<double>& param) {
    std::vector<double> gd(param.size());
    for (std::size_t k = 0; k < param.size(); ++k) {
      gd[k] = static_cast<double>(gsrc[k]) + wd * param[k];
      sq += param[k] * param[k];
    }
    return gd;
  };
  for (std::size_t i = 0; i < m.shared.layers.size(); ++i) {
    out.grads.shared.push_back(finish(acc.cw[i], m.shared.layers[i].weight));
    out.grads.shared.push_back(finish(acc.cb[i], m.shared.layers[i].bias));
  }
  for (std::size_t i = 0; i < m.streams[group].layers.size(); ++i) {
    out.grads.stream.push_back(finish(acc.fw[i], m.streams[group].layers[i].weight));
    out.grads.stream.push_back(finish(acc.fb[i], m.streams[group].layers[i].bias));
  }
  out.loss = loss + 0.5 * wd * sq;
  return out;
}

// Rectifier signs and pool winners over a batch; equal patterns mean the loss is
// smooth between the two parameter settings.
std::vector<int> activation_pattern(const MultiStreamModel& m, int group, const Batch& batch) {
  const auto p = gather<double>(m, group);
  std::vector<int> out;
  for (const auto& img : batch.images) {
    Trace<double> tr;
    run_forward<double>(m, group, p, img, tr, 0.0, nullptr);
    for (std::size_t i = 0; i < tr.conv_z.size(); ++i) {
      for (double z : tr.conv_z[i]) out.push_back(z > 0.0);
      out.insert(out.end(), tr.pool_idx[i].begin(), tr.pool_idx[i].end());
    }
    for (std::size_t i = 0; i + 1 < tr.dense_z.size(); ++i) {
      for (double z : tr.dense_z[i]) out.push_back(z > 0.0);
    }
  }
  return out;
}

void check_group(const MultiStreamModel& m, int group) {
  if (group < 0 || group >= m.num_groups()) {
    throw ConfigError("group " + std::to_string(group) + " out of range");
  }
}

}  // namespace

Output forward(const MultiStreamModel& model, int group, std::span<const double> image) {
  check_group(model, group);
  const auto p = gather<double>(model, group);
  Trace<double> tr;
  run_forward<double>(model, group, p, image, tr, 0.0, nullptr);
  return {std::move(tr.logits), std::move(tr.feature)};
}

std::vector<double> extract_feature(const MultiStreamModel& model, int group,
                                    std::span<const double> image) {
  return forward(model, group, image).feature;
}

LossGrad loss_and_grads(const MultiStreamModel& model, int group, const Batch& batch,
                        const TrainConfig& cfg, std::uint64_t dropout_seed) {
  cfg.validate();
  check_group(model, group);
  if (batch.images.empty()) throw DataError("empty batch");
  if (batch.images.size() != batch.labels.size()) throw DataError("batch images/labels mismatch");
  for (int y : batch.labels) {
    if (y < 0 || y >= model.num_classes) throw DataError("label out of range: " + std::to_string(y));
  }
  if (cfg.precision == Precision::f32) {
    return loss_and_grads_impl<float>(model, group, batch, cfg, dropout_seed);
  }
  return loss_and_grads_impl<double>(model, group, batch, cfg, dropout_seed);
}

LossGrad loss_and_grads(const MultiStreamModel& model, int group, const Batch& batch,
                        const TrainConfig& cfg) {
  return loss_and_grads(model, group, batch, cfg, cfg.seed);
}

Velocity Velocity::zeros_like(const MultiStreamModel& model) {
  Velocity v;
  for (const auto* b : model.shared_blocks()) v.shared.emplace_back(b->size(), 0.0);
  for (int g = 0; g < model.num_groups(); ++g) {
    std::vector<std::vector<double>> s;
    for (const auto* b : model.stream_blocks(g)) s.emplace_back(b->size(), 0.0);
    v.streams.push_back(std::move(s));
  }
  return v;
}

void sgd_step(MultiStreamModel& model, const Gradients& grads, const TrainConfig& cfg,
              Velocity& velocity) {
  check_group(model, grads.group);
  auto apply = [&](std::vector<std::vector<double>*> params,
                   const std::vector<std::vector<double>>& g, std::vector<std::vector<double>>& v) {
    if (params.size() != g.size() || params.size() != v.size()) {
      throw DataError("gradient blocks do not match model");
    }
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& p = *params[b];
      if (g[b].size() != p.size() || v[b].size() != p.size()) {
        throw DataError("gradient block size mismatch");
      }
      for (std::size_t k = 0; k < p.size(); ++k) {
        v[b][k] = cfg.momentum * v[b][k] - cfg.learning_rate * g[b][k];
        p[k] += v[b][k];
      }
    }
  };
  apply(model.shared_blocks(), grads.shared, velocity.shared);
  apply(model.stream_blocks(grads.group), grads.stream, velocity.streams.at(grads.group));
}

std::vector<LossRecord> train_round_robin(MultiStreamModel& model,
                                          const std::vector<GroupDataset>& datasets,
                                          const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  if (static_cast<int>(datasets.size()) != model.num_groups()) {
    throw DataError("need one dataset per view group");
  }
  for (std::size_t g = 0; g < datasets.size(); ++g) {
    if (datasets[g].empty()) throw DataError("empty training set for group " + std::to_string(g));
    for (const auto& item : datasets[g]) {
      if (item.candidates.empty()) throw DataError("training item without images");
    }
  }
  std::mt19937_64 rng(cfg.seed);
  // Per-group epoch order, reshuffled whenever exhausted.
  std::vector<std::vector<std::size_t>> order(datasets.size());
  std::vector<std::size_t> cursor(datasets.size(), 0);
  for (std::size_t g = 0; g < datasets.size(); ++g) {
    order[g].resize(datasets[g].size());
    for (std::size_t i = 0; i < order[g].size(); ++i) order[g][i] = i;
    std::shuffle(order[g].begin(), order[g].end(), rng);
  }
  Velocity velocity = Velocity::zeros_like(model);
  std::vector<LossRecord> trace;
  for (int it = 0; it < cfg.iters; ++it) {
    for (int g = 0; g < model.num_groups(); ++g) {
      Batch batch;
      for (int b = 0; b < cfg.batch_size; ++b) {
        if (cursor[g] == order[g].size()) {
          std::shuffle(order[g].begin(), order[g].end(), rng);
          cursor[g] = 0;
        }
        const auto& item = datasets[g][order[g][cursor[g]++]];
        std::uniform_int_distribution<std::size_t> pick(0, item.candidates.size() - 1);
        batch.images.push_back(item.candidates[pick(rng)]);
        batch.labels.push_back(item.label);
      }
      const auto lg = loss_and_grads(model, g, batch, cfg, rng());
      sgd_step(model, lg.grads, cfg, velocity);
      trace.push_back({it, g, lg.loss});
      if (observer) observer(model, it, g);
    }
  }
  return trace;
}

std::vector<BlockCheck> gradient_check(const MultiStreamModel& model, int group, const Batch& batch,
                                       double weight_decay, double h) {
  TrainConfig cfg;
  cfg.dropout = 0.0;
  cfg.weight_decay = weight_decay;
  cfg.precision = Precision::f64;
  const auto analytic = loss_and_grads(model, group, batch, cfg);

  std::vector<std::string> names;
  for (std::size_t i = 0; i < model.shared.layers.size(); ++i) {
    names.push_back("conv" + std::to_string(i) + ".weight");
    names.push_back("conv" + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i < model.streams.at(group).layers.size(); ++i) {
    const auto prefix = "g" + std::to_string(group) + ".dense" + std::to_string(i);
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
  }
  std::vector<const std::vector<double>*> grads;
  for (const auto& g : analytic.grads.shared) grads.push_back(&g);
  for (const auto& g : analytic.grads.stream) grads.push_back(&g);

  MultiStreamModel probe = model;
  const auto base = activation_pattern(model, group, batch);
  auto blocks = probe.shared_blocks();
  for (auto* b : probe.stream_blocks(group)) blocks.push_back(b);

  std::vector<BlockCheck> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    BlockCheck bc{names[b], 0.0, 0, 0};
    auto& p = *blocks[b];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p[k];
      p[k] = saved + h;
      const double up = loss_and_grads(probe, group, batch, cfg).loss;
      const bool kink_up = activation_pattern(probe, group, batch) != base;
      p[k] = saved - h;
      const double down = loss_and_grads(probe, group, batch, cfg).loss;
      const bool kink_down = activation_pattern(probe, group, batch) != base;
      p[k] = saved;
      if (kink_up || kink_down) {
        ++bc.kinks;
        continue;
      }
      ++bc.checked;
      const double num = (up - down) / (2 * h);
      const double ana = (*grads[b])[k];
      // Below the floor, central-difference roundoff dominates the quotient.
      const double scale = std::max({std::abs(num), std::abs(ana), 1e-6});
      bc.max_rel_error = std::max(bc.max_rel_error, std::abs(num - ana) / scale);
    }
    out.push_back(bc);
  }
  return out;
}

std::vector<double> prepare_input(const DynamicImage& image, int size) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw DataError("invalid dynamic image");
  }
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const int sy = std::min(image.height - 1, static_cast<int>((y + 0.5) * image.height / size));
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(image.width - 1, static_cast<int>((x + 0.5) * image.width / size));
      out[static_cast<std::size_t>(y) * size + x] =
          image.pixels[static_cast<std::size_t>(sy) * image.width + sx] / 255.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_model(const MultiStreamModel& model, const std::string& path) {
  model.validate();
  blockio::Container c;
  c.kind = blockio::Kind::cnn;
  c.header = {model.num_classes, model.num_groups(), model.arch.input_size,
              static_cast<std::int64_t>(model.arch.conv.size())};
  for (const auto& s : model.arch.conv) {
    c.header.insert(c.header.end(), {s.filters, s.kernel, s.stride, s.pad, s.pool ? 1 : 0});
  }
  c.header.push_back(static_cast<std::int64_t>(model.arch.hidden.size()));
  for (int h : model.arch.hidden) c.header.push_back(h);
  for (const auto* b : model.shared_blocks()) c.blocks.push_back(*b);
  for (int g = 0; g < model.num_groups(); ++g) {
    for (const auto* b : model.stream_blocks(g)) c.blocks.push_back(*b);
  }
  blockio::write(c, path);
}

MultiStreamModel load_model(const std::string& path) {
  const auto c = blockio::read(path, blockio::Kind::cnn);
  const auto& h = c.header;
  std::size_t i = 0;
  auto next = [&]() -> std::int64_t {
    if (i >= h.size()) throw DataError("truncated checkpoint header: " + path);
    return h[i++];
  };
  const int num_classes = static_cast<int>(next());
  const int num_groups = static_cast<int>(next());
  Arch arch;
  arch.input_size = static_cast<int>(next());
  const auto nconv = next();
  for (std::int64_t k = 0; k < nconv; ++k) {
    ConvSpec s;
    s.filters = static_cast<int>(next());
    s.kernel = static_cast<int>(next());
    s.stride = static_cast<int>(next());
    s.pad = static_cast<int>(next());
    s.pool = next() != 0;
    arch.conv.push_back(s);
  }
  const auto nhidden = next();
  for (std::int64_t k = 0; k < nhidden; ++k) arch.hidden.push_back(static_cast<int>(next()));
  auto m = skeleton(arch, num_groups, num_classes);
  std::vector<std::vector<double>*> blocks = m.shared_blocks();
  for (int g = 0; g < num_groups; ++g) {
    auto s = m.stream_blocks(g);
    blocks.insert(blocks.end(), s.begin(), s.end());
  }
  if (blocks.size() != c.blocks.size()) throw DataError("checkpoint block count mismatch: " + path);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b]->size() != c.blocks[b].size()) throw DataError("checkpoint block size mismatch: " + path);
    *blocks[b] = c.blocks[b];
  }
  return m;
}

}  // namespace mvdi::cnn
