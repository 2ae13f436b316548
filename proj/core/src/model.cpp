// Copyright 2026 The geocnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "geocnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string_view>

#include "geocnn/error.hpp"
#include "geocnn/parallel.hpp"
#include "geocnn/spatial.hpp"

namespace geocnn {

// ---------------------------------------------------------------------------
// Config

GeoCnnConfig GeoCnnConfig::modelnet() { return GeoCnnConfig{}; }

GeoCnnConfig GeoCnnConfig::micro() {
  GeoCnnConfig c;
  c.n_points = 12;
  c.in_channels = 6;
  c.num_classes = 3;
  c.knn = 4;
  c.group_widths = {8, 8};
  c.stem_width = 8;
  c.convs = {{{8, 4, 8, 0.6}, {8, 4, 8, 0.9}, {16, 4, 8, 1.3}}};
  c.mid_width = 8;
  c.final_width = 8;
  c.head_widths = {8};
  return c;
}

GeoCnnConfig GeoCnnConfig::desk() {
  GeoCnnConfig c;
  c.n_points = 256;
  c.in_channels = 6;
  c.num_classes = 4;
  c.knn = 16;
  c.group_widths = {16, 32, 64};
  c.stem_width = 32;
  c.convs = {{{32, 16, 64, 0.3}, {64, 16, 128, 0.6}, {192, 16, 128, 0.9}}};
  c.mid_width = 64;
  c.final_width = 256;
  c.head_widths = {64};
  return c;
}

void GeoCnnConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (n_points == 0) fail("n_points must be positive");
  if (in_channels != 3 && in_channels != 6) fail("in_channels must be 3 or 6");
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (knn == 0) fail("knn must be positive");
  if (group_widths.empty()) fail("group_widths must not be empty");
  for (auto w : group_widths) {
    if (w == 0) fail("group widths must be positive");
  }
  if (stem_width == 0 || mid_width == 0 || final_width == 0) fail("layer widths must be positive");
  for (auto w : head_widths) {
    if (w == 0) fail("head widths must be positive");
  }
  if (neighbor_cap == 0) fail("neighbor_cap must be positive");
  for (std::size_t i = 0; i < 3; ++i) {
    const ConvShape& s = convs[i];
    if (s.in == 0 || s.reduction == 0 || s.out == 0) {
      fail("conv" + std::to_string(i) + " channel counts must be positive");
    }
    if (!(s.radius > 0.0) || !std::isfinite(s.radius)) {
      fail("conv" + std::to_string(i) + " radius must be positive");
    }
    if (i > 0 && !(s.radius > convs[i - 1].radius)) fail("conv radii must be increasing");
  }
  if (convs[0].in != stem_width) fail("conv0 input width must equal stem_width");
  if (convs[1].in != mid_width) fail("conv1 input width must equal mid_width");
  if (convs[2].in != convs[1].out + group_widths.back()) {
    fail("conv2 input width must equal conv1 output plus the last group width (" +
         std::to_string(convs[1].out + group_widths.back()) + ")");
  }
  if (baseline && multiview_views > 0) fail("baseline and multiview are mutually exclusive");
}

GeoConvSpec GeoCnnConfig::conv_spec(std::size_t i) const {
  GeoConvSpec s;
  s.in_channels = convs.at(i).in;
  s.reduction_channels = convs[i].reduction;
  s.out_channels = convs[i].out;
  s.radius = convs[i].radius;
  s.fusion = baseline ? EdgeFusion::kAverage : EdgeFusion::kDecomposed;
  s.bias = false;
  s.reduction_norm = true;
  s.views = baseline ? 0 : multiview_views;
  return s;
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + value +
                      "'");
  }
  if (pos != v.size()) {
    throw ConfigError("config key '" + key + "': trailing characters in '" + value + "'");
  }
  return static_cast<std::size_t>(out);
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
  if (pos != v.size()) {
    throw ConfigError("config key '" + key + "': trailing characters in '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  if (trim(value).empty()) return out;
  for (const auto& part : split(value, ',')) out.push_back(parse_size(key, part));
  return out;
}

}  // namespace

bool GeoCnnConfig::set(const std::string& key, const std::string& value) {
  if (key == "n_points") {
    n_points = parse_size(key, value);
  } else if (key == "in_channels") {
    in_channels = parse_size(key, value);
  } else if (key == "num_classes") {
    num_classes = parse_size(key, value);
  } else if (key == "knn") {
    knn = parse_size(key, value);
  } else if (key == "group_widths") {
    group_widths = parse_list(key, value);
  } else if (key == "group_offsets") {
    group_offsets = parse_bool(key, value);
  } else if (key == "stem_width") {
    stem_width = parse_size(key, value);
  } else if (key == "mid_width") {
    mid_width = parse_size(key, value);
  } else if (key == "final_width") {
    final_width = parse_size(key, value);
  } else if (key == "head_widths") {
    head_widths = parse_list(key, value);
  } else if (key == "neighbor_cap") {
    neighbor_cap = parse_size(key, value);
  } else if (key == "baseline") {
    baseline = parse_bool(key, value);
  } else if (key == "multiview_views") {
    multiview_views = parse_size(key, value);
  } else if (key == "seed") {
    seed = parse_size(key, value);
  } else if (key.size() == 5 && key.starts_with("conv") && key[4] >= '0' && key[4] <= '2') {
    const auto parts = split(value, ',');
    if (parts.size() != 4) {
      throw ConfigError("config key '" + key + "': expected in,reduction,out,radius");
    }
    ConvShape& s = convs[static_cast<std::size_t>(key[4] - '0')];
    s.in = parse_size(key, parts[0]);
    s.reduction = parse_size(key, parts[1]);
    s.out = parse_size(key, parts[2]);
    s.radius = parse_double(key, parts[3]);
  } else {
    return false;
  }
  return true;
}

std::string GeoCnnConfig::to_text() const {
  std::ostringstream os;
  os << "version=1\n";
  os << "n_points=" << n_points << '\n';
  os << "in_channels=" << in_channels << '\n';
  os << "num_classes=" << num_classes << '\n';
  os << "knn=" << knn << '\n';
  os << "group_widths=" << join(group_widths) << '\n';
  os << "group_offsets=" << (group_offsets ? 1 : 0) << '\n';
  os << "stem_width=" << stem_width << '\n';
  for (std::size_t i = 0; i < 3; ++i) {
    os << "conv" << i << '=' << convs[i].in << ',' << convs[i].reduction << ',' << convs[i].out
       << ',' << format_double(convs[i].radius) << '\n';
  }
  os << "mid_width=" << mid_width << '\n';
  os << "final_width=" << final_width << '\n';
  os << "head_widths=" << join(head_widths) << '\n';
  os << "neighbor_cap=" << neighbor_cap << '\n';
  os << "baseline=" << (baseline ? 1 : 0) << '\n';
  os << "multiview_views=" << multiview_views << '\n';
  os << "seed=" << seed << '\n';
  return os.str();
}

GeoCnnConfig GeoCnnConfig::from_text(const std::string& text) {
  GeoCnnConfig c;
  bool versioned = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("model config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == "version") {
      if (parse_size(key, value) != 1) {
        throw ConfigError("model config: unsupported version " + value);
      }
      versioned = true;
    } else if (!c.set(key, value)) {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  if (!versioned) throw ConfigError("model config: missing version");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <typename T>
DenseBlockParams<T> dense_init(std::size_t in, std::size_t out, Rng& rng) {
  DenseBlockParams<T> d;
  d.fc.weight = glorot_uniform<T>(in, out, rng);
  d.bn = BatchNormParams<T>::identity(out);
  return d;
}

template <typename T>
DenseBlockParams<T> dense_zeros(std::size_t in, std::size_t out) {
  DenseBlockParams<T> d;
  d.fc.weight = Matrix<T>(in, out);
  d.bn.gamma = Matrix<T>(1, out);
  d.bn.beta = Matrix<T>(1, out);
  d.bn.running_mean = Matrix<T>(1, out);
  d.bn.running_var = Matrix<T>(1, out);
  return d;
}

template <typename U, typename T>
BatchNormParams<U> cast_bn(const BatchNormParams<T>& b) {
  return {b.gamma.template cast<U>(), b.beta.template cast<U>(),
          b.running_mean.template cast<U>(), b.running_var.template cast<U>()};
}

template <typename U, typename T>
DenseBlockParams<U> cast_dense(const DenseBlockParams<T>& d) {
  DenseBlockParams<U> out;
  out.fc.weight = d.fc.weight.template cast<U>();
  out.fc.bias = d.fc.bias.template cast<U>();
  out.bn = cast_bn<U>(d.bn);
  return out;
}

template <typename U, typename T>
GeoConvParams<U> cast_conv(const GeoConvParams<T>& p) {
  GeoConvParams<U> out;
  out.center_weight = p.center_weight.template cast<U>();
  out.center_bias = p.center_bias.template cast<U>();
  for (const auto& w : p.direction_weights) out.direction_weights.push_back(w.template cast<U>());
  out.expand_weight = p.expand_weight.template cast<U>();
  out.expand_bias = p.expand_bias.template cast<U>();
  out.norm = cast_bn<U>(p.norm);
  out.view_weights = p.view_weights.template cast<U>();
  return out;
}

/// Builds every layer by calling `dense(in, out)` / `conv(i)` in forward order.
template <typename T, typename Dense, typename Conv, typename Norm>
ModelParams<T> build_params(const GeoCnnConfig& c, Dense&& dense, Conv&& conv, Norm&& norm) {
  ModelParams<T> p;
  std::size_t width = c.group_input_width();
  for (auto w : c.group_widths) {
    p.group.push_back(dense(width, w));
    width = w;
  }
  p.stem = dense(c.in_channels, c.stem_width);
  p.conv[0] = conv(0);
  p.conv_norm[0] = norm(c.convs[0].out);
  p.mid = dense(c.convs[0].out, c.mid_width);
  p.conv[1] = conv(1);
  p.conv_norm[1] = norm(c.convs[1].out);
  p.conv[2] = conv(2);
  p.conv_norm[2] = norm(c.convs[2].out);
  p.final = dense(c.convs[2].out, c.final_width);
  width = c.final_width;
  for (auto w : c.head_widths) {
    p.head.push_back(dense(width, w));
    width = w;
  }
  return p;
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::init(const GeoCnnConfig& config) {
  config.validate();
  Rng rng(config.seed);
  ModelParams<T> p = build_params<T>(
      config, [&](std::size_t in, std::size_t out) { return dense_init<T>(in, out, rng); },
      [&](std::size_t i) { return GeoConvParams<T>::init(config.conv_spec(i), rng); },
      [](std::size_t ch) { return BatchNormParams<T>::identity(ch); });
  const std::size_t last = config.head_widths.empty() ? config.final_width : config.head_widths.back();
  p.classifier.weight = glorot_uniform<T>(last, config.num_classes, rng);
  p.classifier.bias = Matrix<T>(1, config.num_classes);
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const GeoCnnConfig& config) {
  config.validate();
  ModelParams<T> p = build_params<T>(
      config, [](std::size_t in, std::size_t out) { return dense_zeros<T>(in, out); },
      [&](std::size_t i) { return GeoConvParams<T>::zeros(config.conv_spec(i)); },
      [](std::size_t ch) { return dense_zeros<T>(1, ch).bn; });
  const std::size_t last = config.head_widths.empty() ? config.final_width : config.head_widths.back();
  p.classifier.weight = Matrix<T>(last, config.num_classes);
  p.classifier.bias = Matrix<T>(1, config.num_classes);
  return p;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  for (const auto& g : group) out.group.push_back(cast_dense<U>(g));
  out.stem = cast_dense<U>(stem);
  for (std::size_t i = 0; i < 3; ++i) {
    out.conv[i] = cast_conv<U>(conv[i]);
    out.conv_norm[i] = cast_bn<U>(conv_norm[i]);
  }
  out.mid = cast_dense<U>(mid);
  out.final = cast_dense<U>(final);
  for (const auto& h : head) out.head.push_back(cast_dense<U>(h));
  out.classifier.weight = classifier.weight.template cast<U>();
  out.classifier.bias = classifier.bias.template cast<U>();
  return out;
}

namespace {

constexpr std::array<const char*, kNumBases> kBasisNames = {"px", "nx", "py", "ny", "pz", "nz"};

template <typename M, typename P>
std::vector<NamedTensor<M>> collect_tensors(P& p) {
  std::vector<NamedTensor<M>> out;
  auto add = [&](const std::string& name, M& m, TensorRole role = TensorRole::kTrainable) {
    if (!m.empty()) out.push_back({name, &m, role});
  };
  auto bn = [&](const std::string& pre, auto& b) {
    add(pre + ".gamma", b.gamma);
    add(pre + ".beta", b.beta);
    add(pre + ".running_mean", b.running_mean, TensorRole::kRunningStat);
    add(pre + ".running_var", b.running_var, TensorRole::kRunningStat);
  };
  auto dense = [&](const std::string& pre, auto& d) {
    add(pre + ".fc.weight", d.fc.weight);
    add(pre + ".fc.bias", d.fc.bias);
    bn(pre + ".bn", d.bn);
  };
  auto conv = [&](std::size_t i) {
    const std::string pre = "conv" + std::to_string(i);
    auto& c = p.conv[i];
    add(pre + ".center.weight", c.center_weight);
    add(pre + ".center.bias", c.center_bias);
    if (c.direction_weights.size() == kNumBases) {
      for (std::size_t b = 0; b < kNumBases; ++b) {
        add(pre + ".reduce." + kBasisNames[b], c.direction_weights[b]);
      }
    } else {
      for (auto& w : c.direction_weights) add(pre + ".reduce.mean", w);
    }
    add(pre + ".expand.weight", c.expand_weight);
    add(pre + ".expand.bias", c.expand_bias);
    bn(pre + ".edge_bn", c.norm);
    add(pre + ".view_weights", c.view_weights);
    bn(pre + ".bn", p.conv_norm[i]);
  };
  for (std::size_t i = 0; i < p.group.size(); ++i) dense("group" + std::to_string(i), p.group[i]);
  dense("stem", p.stem);
  conv(0);
  dense("mid", p.mid);
  conv(1);
  conv(2);
  dense("final", p.final);
  for (std::size_t i = 0; i < p.head.size(); ++i) dense("head" + std::to_string(i), p.head[i]);
  add("classifier.weight", p.classifier.weight);
  add("classifier.bias", p.classifier.bias);
  return out;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<Matrix<T>>> named_tensors(ModelParams<T>& params) {
  return collect_tensors<Matrix<T>>(params);
}

template <typename T>
std::vector<NamedTensor<const Matrix<T>>> named_tensors(const ModelParams<T>& params) {
  return collect_tensors<const Matrix<T>>(params);
}

template <typename T>
Model<T>::Model(GeoCnnConfig config) : config_(std::move(config)) {
  config_.validate();
  params_ = ModelParams<T>::init(config_);
}

template <typename T>
Model<T>::Model(GeoCnnConfig config, ModelParams<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const ModelParams<T> ref = ModelParams<T>::zeros(config_);
  const auto want = named_tensors(ref);
  const auto have = named_tensors(params_);
  if (want.size() != have.size()) {
    throw ArgumentError("model parameters have " + std::to_string(have.size()) +
                        " tensors, config expects " + std::to_string(want.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != have[i].name || !want[i].value->same_shape(*have[i].value)) {
      throw ArgumentError("model parameter '" + have[i].name + "' does not match the config (" +
                          std::to_string(have[i].value->rows()) + "x" +
                          std::to_string(have[i].value->cols()) + ", expected '" + want[i].name +
                          "' " + std::to_string(want[i].value->rows()) + "x" +
                          std::to_string(want[i].value->cols()) + ")");
    }
  }
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : named_tensors(params_)) {
    if (t.role == TensorRole::kTrainable) n += t.value->size();
  }
  return n;
}

template <typename T>
std::size_t Model<T>::reduction_parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : params_.conv) n += c.reduction_parameter_count();
  return n;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

/// Cell size giving roughly k points per cell for a uniform spread.
double knn_cell_size(const std::vector<Point3>& pos, std::size_t k) {
  double extent = 0.0;
  for (int a = 0; a < 3; ++a) {
    float lo = pos[0][a], hi = pos[0][a];
    for (const auto& p : pos) {
      lo = std::min(lo, p[a]);
      hi = std::max(hi, p[a]);
    }
    extent = std::max(extent, static_cast<double>(hi) - lo);
  }
  const double cells =
      std::max(1.0, std::floor(std::cbrt(static_cast<double>(pos.size()) / static_cast<double>(k))));
  const double cell = extent / cells;
  return cell > 0.0 ? cell : 1.0;
}

template <typename T>
Matrix<T> dense_forward(Matrix<T> x, const DenseBlockParams<T>& p, Mode mode,
                        DenseBlockCache<T>& cache) {
  Matrix<T> z = linear_forward(x, p.fc.weight, p.fc.bias);
  cache.input = std::move(x);
  cache.normalized = batchnorm_forward(z, p.bn, mode, cache.bn);
  return relu_forward(cache.normalized);
}

template <typename T>
Matrix<T> dense_backward(const DenseBlockParams<T>& p, const DenseBlockCache<T>& cache,
                         const Matrix<T>& grad_out, DenseBlockParams<T>& grads) {
  const Matrix<T> g = relu_backward(cache.normalized, grad_out);
  auto bn = batchnorm_backward(cache.bn, p.bn, g);
  grads.bn.gamma = std::move(bn.gamma);
  grads.bn.beta = std::move(bn.beta);
  auto lin = linear_backward(cache.input, p.fc.weight, !p.fc.bias.empty(), bn.input);
  grads.fc.weight = std::move(lin.weight);
  grads.fc.bias = std::move(lin.bias);
  return std::move(lin.input);
}

void append_shifted(NeighborhoodSet& dst, NeighborhoodSet src, std::uint32_t offset) {
  for (auto& list : src.lists) {
    for (auto& q : list.indices) q += offset;
    dst.lists.push_back(std::move(list));
  }
}

}  // namespace

template <typename T>
ForwardPass<T> forward_batch(const Model<T>& model, std::span<const PointCloud* const> clouds,
                             Mode mode) {
  const GeoCnnConfig& cfg = model.config();
  const ModelParams<T>& p = model.params();
  if (clouds.empty()) throw ArgumentError("forward_batch: empty batch");
  const std::size_t n = cfg.n_points;
  const std::size_t k = cfg.knn;
  const std::size_t B = clouds.size();
  if (B * n * k > std::numeric_limits<std::uint32_t>::max()) {
    throw ArgumentError("forward_batch: batch too large");
  }
  for (std::size_t b = 0; b < B; ++b) {
    if (clouds[b]->size() != n || clouds[b]->channels() != cfg.in_channels) {
      throw ArgumentError("forward_batch: cloud " + std::to_string(b) + " has " +
                          std::to_string(clouds[b]->size()) + " points x " +
                          std::to_string(clouds[b]->channels()) + " channels, model expects " +
                          std::to_string(n) + " x " + std::to_string(cfg.in_channels));
    }
  }

  ForwardPass<T> pass;
  pass.mode = mode;
  pass.clouds = B;
  pass.points = n;
  const std::size_t rows = B * n;

  // Geometry: per-cloud k-NN groups and ball neighborhoods for each radius.
  pass.group_members.assign(rows * k, 0);
  std::vector<std::array<NeighborhoodSet, 3>> per_cloud(B);
  parallel_for(0, B, [&](std::size_t b) {
    const std::vector<Point3> pos = clouds[b]->positions();
    const SpatialIndex knn_index(pos, knn_cell_size(pos, k));
    const auto base = static_cast<std::uint32_t>(b * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto nn = knn_index.knn_query(i, k);
      std::uint32_t* dst = pass.group_members.data() + (b * n + i) * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] = base + nn[j];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const SpatialIndex ball_index(pos, cfg.convs[c].radius);
      per_cloud[b][c] = build_neighborhoods(ball_index, cfg.convs[c].radius, cfg.neighbor_cap);
    }
  });
  std::array<NeighborhoodSet, 3> nbrs;
  for (std::size_t c = 0; c < 3; ++c) {
    nbrs[c].radius = cfg.convs[c].radius;
    nbrs[c].lists.reserve(rows);
    for (std::size_t b = 0; b < B; ++b) {
      append_shifted(nbrs[c], std::move(per_cloud[b][c]), static_cast<std::uint32_t>(b * n));
    }
  }

  const std::size_t C = cfg.in_channels;
  Matrix<T> x0(rows, C);
  for (std::size_t b = 0; b < B; ++b) {
    const auto data = clouds[b]->data();
    for (std::size_t i = 0; i < n * C; ++i) x0[b * n * C + i] = static_cast<T>(data[i]);
  }

  // Branch 1: grouped FC stack, max over each group.
  const std::size_t gw = cfg.group_input_width();
  Matrix<T> g(rows * k, gw);
  parallel_for(0, rows, [&](std::size_t r) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t q = pass.group_members[r * k + j];
      auto dst = g.row(r * k + j);
      for (std::size_t c = 0; c < C; ++c) dst[c] = x0(q, c);
      if (cfg.group_offsets) {
        for (std::size_t a = 0; a < 3; ++a) dst[C + a] = x0(q, a) - x0(r, a);
      }
    }
  });
  pass.group.resize(p.group.size());
  for (std::size_t l = 0; l < p.group.size(); ++l) {
    g = dense_forward(std::move(g), p.group[l], mode, pass.group[l]);
  }
  pass.group_pool = segment_maxpool_forward(g, k);

  // Branch 2: stem and GeoConv stack.
  auto conv_forward = [&](std::size_t i, const Matrix<T>& x) {
    const GeoConvSpec spec = cfg.conv_spec(i);
    GeoConvOutput<T> out;
    if (cfg.baseline) {
      out = baseline_edge_forward(x, nbrs[i], p.conv[i], spec, mode);
    } else if (cfg.multiview_views > 0) {
      out = geoconv_forward_multiview(x, nbrs[i], p.conv[i], spec,
                                      MultiViewConfig::uniform(cfg.multiview_views), mode);
    } else {
      out = geoconv_forward(x, nbrs[i], p.conv[i], spec, mode);
    }
    pass.conv[i] = std::move(out.cache);
    pass.conv_normalized[i] = batchnorm_forward(out.output, p.conv_norm[i], mode, pass.conv_bn[i]);
    return relu_forward(pass.conv_normalized[i]);
  };

  Matrix<T> h = dense_forward(std::move(x0), p.stem, mode, pass.stem);
  h = conv_forward(0, h);
  h = dense_forward(std::move(h), p.mid, mode, pass.mid);
  h = conv_forward(1, h);

  const Matrix<T>& gf = pass.group_pool.output;
  Matrix<T> cat(rows, h.cols() + gf.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = cat.row(r);
    std::copy(h.row(r).begin(), h.row(r).end(), dst.begin());
    std::copy(gf.row(r).begin(), gf.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(h.cols()));
  }
  h = conv_forward(2, cat);
  h = dense_forward(std::move(h), p.final, mode, pass.final);
  pass.global_pool = segment_maxpool_forward(h, n);

  Matrix<T> z = pass.global_pool.output;
  pass.head.resize(p.head.size());
  for (std::size_t l = 0; l < p.head.size(); ++l) {
    z = dense_forward(std::move(z), p.head[l], mode, pass.head[l]);
  }
  pass.logits = linear_forward(z, p.classifier.weight, p.classifier.bias);
  pass.classifier_input = std::move(z);
  GEOCNN_DEBUG_FINITE(pass.logits);
  return pass;
}

template <typename T>
ForwardPass<T> forward_batch(const Model<T>& model, std::span<const PointCloud> clouds, Mode mode) {
  std::vector<const PointCloud*> ptrs;
  ptrs.reserve(clouds.size());
  for (const auto& c : clouds) ptrs.push_back(&c);
  return forward_batch(model, std::span<const PointCloud* const>(ptrs), mode);
}

template <typename T>
ModelParams<T> backward_batch(const Model<T>& model, const ForwardPass<T>& pass,
                              const Matrix<T>& grad_logits) {
  const GeoCnnConfig& cfg = model.config();
  const ModelParams<T>& p = model.params();
  if (grad_logits.rows() != pass.clouds || grad_logits.cols() != cfg.num_classes) {
    throw ArgumentError("backward_batch: gradient shape does not match the logits");
  }
  ModelParams<T> grads = ModelParams<T>::zeros(cfg);
  const std::size_t rows = pass.clouds * pass.points;

  auto cls = linear_backward(pass.classifier_input, p.classifier.weight, true, grad_logits);
  grads.classifier.weight = std::move(cls.weight);
  grads.classifier.bias = std::move(cls.bias);
  Matrix<T> gz = std::move(cls.input);
  for (std::size_t l = p.head.size(); l-- > 0;) {
    gz = dense_backward(p.head[l], pass.head[l], gz, grads.head[l]);
  }

  Matrix<T> gh = segment_maxpool_backward(pass.global_pool, rows, gz);
  gh = dense_backward(p.final, pass.final, gh, grads.final);

  auto conv_backward = [&](std::size_t i, const Matrix<T>& grad_act) {
    const Matrix<T> g1 = relu_backward(pass.conv_normalized[i], grad_act);
    auto bn = batchnorm_backward(pass.conv_bn[i], p.conv_norm[i], g1);
    grads.conv_norm[i].gamma = std::move(bn.gamma);
    grads.conv_norm[i].beta = std::move(bn.beta);
    GeoConvGrads<T> cg = geoconv_backward(pass.conv[i], p.conv[i], bn.input);
    // Running statistics are buffers, not trainable; keep the zero accumulators.
    cg.params.norm.running_mean = std::move(grads.conv[i].norm.running_mean);
    cg.params.norm.running_var = std::move(grads.conv[i].norm.running_var);
    grads.conv[i] = std::move(cg.params);
    return std::move(cg.input);
  };

  Matrix<T> gcat = conv_backward(2, gh);
  const std::size_t w1 = cfg.convs[1].out;
  const std::size_t wg = cfg.group_widths.back();
  Matrix<T> g_conv1(rows, w1);
  Matrix<T> g_group(rows, wg);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto src = gcat.row(r);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(w1), g_conv1.row(r).begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(w1), src.end(), g_group.row(r).begin());
  }

  gh = conv_backward(1, g_conv1);
  gh = dense_backward(p.mid, pass.mid, gh, grads.mid);
  gh = conv_backward(0, gh);
  dense_backward(p.stem, pass.stem, gh, grads.stem);

  Matrix<T> gg = segment_maxpool_backward(pass.group_pool, rows * cfg.knn, g_group);
  for (std::size_t l = p.group.size(); l-- > 0;) {
    gg = dense_backward(p.group[l], pass.group[l], gg, grads.group[l]);
  }
  return grads;
}

template <typename T>
void commit_running_stats(Model<T>& model, const ForwardPass<T>& pass) {
  if (pass.mode != Mode::kTrain) return;
  ModelParams<T>& p = model.params();
  for (std::size_t l = 0; l < p.group.size(); ++l) update_running_stats(p.group[l].bn, pass.group[l].bn);
  update_running_stats(p.stem.bn, pass.stem.bn);
  for (std::size_t i = 0; i < 3; ++i) {
    update_running_stats(p.conv[i].norm, pass.conv[i].bn);
    update_running_stats(p.conv_norm[i], pass.conv_bn[i]);
  }
  update_running_stats(p.mid.bn, pass.mid.bn);
  update_running_stats(p.final.bn, pass.final.bn);
  for (std::size_t l = 0; l < p.head.size(); ++l) update_running_stats(p.head[l].bn, pass.head[l].bn);
}

template <typename T>
Matrix<T> forward_cloud(const Model<T>& model, const PointCloud& cloud, Mode mode) {
  const PointCloud* one[] = {&cloud};
  return forward_batch(model, std::span<const PointCloud* const>(one), mode).logits;
}

template <typename T>
std::size_t argmax_impl(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::size_t argmax_row(std::span<const float> row) { return argmax_impl(row); }
std::size_t argmax_row(std::span<const double> row) { return argmax_impl(row); }
std::size_t argmax_row(std::span<const long double> row) { return argmax_impl(row); }

template <typename T>
BatchResult<T> forward_backward_batch(const Model<T>& model,
                                      std::span<const PointCloud* const> clouds,
                                      std::span<const std::size_t> labels, Mode mode) {
  if (labels.size() != clouds.size()) {
    throw ArgumentError("forward_backward_batch: label count does not match the batch");
  }
  BatchResult<T> result;
  result.pass = forward_batch(model, clouds, mode);
  LossResult<T> loss = softmax_cross_entropy_batch(result.pass.logits, labels);
  result.loss = loss.loss;
  result.grads = backward_batch(model, result.pass, loss.grad);
  result.logits = result.pass.logits;
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    result.predictions.push_back(argmax_row(result.logits.row(b)));
  }
  return result;
}

#define GEOCNN_INSTANTIATE_MODEL(T)                                                              \
  template struct ModelParams<T>;                                                              \
  template std::vector<NamedTensor<Matrix<T>>> named_tensors(ModelParams<T>&);                 \
  template std::vector<NamedTensor<const Matrix<T>>> named_tensors(const ModelParams<T>&);     \
  template class Model<T>;                                                                     \
  template ForwardPass<T> forward_batch(const Model<T>&, std::span<const PointCloud* const>,   \
                                        Mode);                                                 \
  template ForwardPass<T> forward_batch(const Model<T>&, std::span<const PointCloud>, Mode);   \
  template ModelParams<T> backward_batch(const Model<T>&, const ForwardPass<T>&,               \
                                         const Matrix<T>&);                                    \
  template void commit_running_stats(Model<T>&, const ForwardPass<T>&);                        \
  template Matrix<T> forward_cloud(const Model<T>&, const PointCloud&, Mode);                  \
  template BatchResult<T> forward_backward_batch(const Model<T>&,                              \
                                                 std::span<const PointCloud* const>,           \
                                                 std::span<const std::size_t>, Mode);

GEOCNN_INSTANTIATE_MODEL(float)
GEOCNN_INSTANTIATE_MODEL(double)
GEOCNN_INSTANTIATE_MODEL(long double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ModelParams<long double> ModelParams<double>::cast<long double>() const;

}  // namespace geocnn
