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

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "geocnn/checkpoint.hpp"
#include "geocnn/dataset.hpp"
#include "geocnn/error.hpp"
#include "geocnn/geoconv.hpp"
#include "geocnn/gradcheck.hpp"
#include "geocnn/model.hpp"
#include "geocnn/parallel.hpp"
#include "geocnn/pointcloud.hpp"
#include "geocnn/rng.hpp"
#include "geocnn/spatial.hpp"
#include "geocnn/train.hpp"

namespace fs = std::filesystem;
using namespace geocnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumeric = 2;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::size_t workers = 0;
};

/// key=value pairs from --config, in file order.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r");
      const auto r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  try {
    std::size_t pos = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(text, &pos, 0);
    if (pos != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ArgumentError(origin + ": invalid seed '" + text + "'");
  }
}

/// --seed, then a `seed` key in --config, then GEOCONV_SEED, then 0.
std::uint64_t resolve_seed(const GlobalOptions& g,
                           const std::vector<std::pair<std::string, std::string>>& file) {
  if (g.seed) return *g.seed;
  for (const auto& [k, v] : file) {
    if (k == "seed") return parse_seed(v, "--config");
  }
  if (const char* env = std::getenv("GEOCONV_SEED"); env && *env) {
    return parse_seed(env, "GEOCONV_SEED");
  }
  return 0;
}

void print_resolved(const std::string& command, std::uint64_t seed, const std::string& extra = {}) {
  std::cerr << "# command=" << command << "\n# seed=" << seed << "\n# workers=" << worker_count()
            << "\n";
  std::istringstream in(extra);
  std::string line;
  while (std::getline(in, line)) std::cerr << "# " << line << "\n";
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

GeoCnnConfig preset_config(const std::string& name) {
  if (name == "modelnet") return GeoCnnConfig::modelnet();
  if (name == "desk") return GeoCnnConfig::desk();
  if (name == "micro") return GeoCnnConfig::micro();
  throw ArgumentError("unknown preset '" + name + "' (modelnet, desk, micro)");
}

std::vector<PointCloud> load_manifest_clouds(const std::string& path, DatasetManifest* out) {
  DatasetManifest manifest = load_manifest(path);
  auto clouds = load_dataset(manifest, fs::path(path).parent_path());
  if (out) *out = std::move(manifest);
  return clouds;
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::string out;
  std::string classes = "sphere,cube,cylinder,cone";
  std::size_t per_class = 50;
  std::size_t points = 256;
  double jitter = 0.02;
};

int run_gen_data(const GenDataOptions& o, std::uint64_t seed) {
  if (o.per_class == 0) throw ArgumentError("--per-class must be positive");
  std::vector<ShapeKind> kinds;
  DatasetManifest manifest;
  for (const auto& name : split_list(o.classes, ',')) {
    const auto kind = parse_shape(name);
    if (!kind) throw ArgumentError("unknown shape class '" + name + "'");
    kinds.push_back(*kind);
    manifest.class_names.push_back(name);
  }
  if (kinds.empty()) throw ArgumentError("--classes is empty");
  std::ostringstream resolved;
  resolved << "classes=" << o.classes << "\nper_class=" << o.per_class << "\npoints=" << o.points
           << "\njitter=" << o.jitter;
  print_resolved("gen-data", seed, resolved.str());

  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create '" + o.out + "': " + ec.message());
  const auto clouds = synth_dataset(kinds, o.per_class, o.points, o.jitter, seed);
  for (std::size_t j = 0; j < clouds.size(); ++j) {
    const std::size_t c = j / o.per_class;
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu.gpc", manifest.class_names[c].c_str(), j % o.per_class);
    save_cloud(clouds[j], fs::path(o.out) / name);
    manifest.entries.push_back({name, static_cast<int>(c)});
  }
  save_manifest(manifest, fs::path(o.out) / "manifest.csv");
  std::cout << "wrote " << manifest.entries.size() << " clouds to " << o.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ConvertOptions {
  std::string in;
  std::string out;
  std::optional<int> label;
};

int run_convert(const ConvertOptions& o, std::uint64_t seed) {
  print_resolved("convert", seed, "in=" + o.in + "\nout=" + o.out);
  const bool from_gpc = fs::path(o.in).extension() == ".gpc";
  const bool to_gpc = fs::path(o.out).extension() == ".gpc";
  if (from_gpc && !to_gpc) {
    const PointCloud c = load_cloud(o.in);
    std::ofstream out(o.out);
    if (!out) throw IoError("cannot open '" + o.out + "' for writing");
    out << "# n=" << c.size() << " channels=" << c.channels();
    if (c.label()) out << " label=" << *c.label();
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t k = 0; k < c.channels(); ++k) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(c.at(i, k)));
        out << (k ? " " : "") << buf;
      }
      out << "\n";
    }
    if (!out) throw IoError("failed writing '" + o.out + "'");
  } else if (!from_gpc && to_gpc) {
    std::ifstream in(o.in);
    if (!in) throw IoError("cannot open '" + o.in + "'");
    PointCloud c = [&] {
      try {
        return parse_xyz_text(in, o.label);
      } catch (const LoadError& e) {
        throw LoadError(o.in + ": " + e.reason(), e.byte_offset());
      }
    }();
    save_cloud(c, o.out);
  } else {
    throw ArgumentError("convert needs exactly one .gpc side (text <-> GPC1)");
  }
  std::cout << "wrote " << o.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string train_manifest;
  std::string test_manifest;
  std::string out = "run";
  std::string preset = "modelnet";
  bool baseline = false;
  std::size_t multiview = 0;
  bool raw_group_features = false;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> points;
  std::optional<std::size_t> checkpoint_every;
  bool rotate_augment = false;
  std::string sweep_radii;
  double val_fraction = 0.2;
};

void apply_config_file(const std::vector<std::pair<std::string, std::string>>& file,
                       GeoCnnConfig& model, TrainConfig* train) {
  for (const auto& [k, v] : file) {
    if (k == "seed" || k == "preset" || k == "workers") continue;
    if (model.set(k, v)) continue;
    if (train && train->set(k, v)) continue;
    throw ConfigError("--config: unknown key '" + k + "'");
  }
}

std::string file_preset(const std::vector<std::pair<std::string, std::string>>& file,
                        const std::string& fallback) {
  for (const auto& [k, v] : file) {
    if (k == "preset") return v;
  }
  return fallback;
}

int run_train(TrainOptions o, const GlobalOptions& g, CLI::App& cmd) {
  const auto file = read_config_file(g.config_path);
  const std::uint64_t seed = resolve_seed(g, file);

  DatasetManifest manifest;
  auto raw_train = load_manifest_clouds(o.train_manifest, &manifest);
  if (raw_train.empty()) throw ArgumentError("training manifest is empty");

  const std::string preset = cmd.count("--preset") ? o.preset : file_preset(file, o.preset);
  GeoCnnConfig mc = preset_config(preset);
  mc.num_classes = manifest.num_classes();
  mc.in_channels = raw_train.front().channels();
  TrainConfig tc;
  apply_config_file(file, mc, &tc);
  if (o.baseline) mc.baseline = true;
  if (o.multiview) mc.multiview_views = o.multiview;
  if (o.raw_group_features) mc.group_offsets = false;
  if (o.points) mc.n_points = *o.points;
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.lr) tc.adam.learning_rate = *o.lr;
  if (o.rotate_augment) tc.rotate_augment = true;
  if (o.checkpoint_every) tc.checkpoint_every = *o.checkpoint_every;
  mc.seed = seed;
  tc.seed = seed;
  tc.checkpoint_dir = fs::path(o.out) / "checkpoints";
  mc.validate();
  tc.validate();

  Model<float> model(mc);
  std::ostringstream resolved;
  resolved << "preset=" << preset << "\n" << mc.to_text() << tc.to_text()
           << "parameters=" << model.parameter_count()
           << "\nreduction_parameters=" << model.reduction_parameter_count();
  print_resolved("train", seed, resolved.str());

  const auto train_set = prepare_dataset(raw_train, mc.n_points, seed);
  std::optional<std::vector<PointCloud>> test_set;
  if (!o.test_manifest.empty()) {
    test_set = prepare_dataset(load_manifest_clouds(o.test_manifest, nullptr), mc.n_points, seed);
  }
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create '" + o.out + "': " + ec.message());

  if (!o.sweep_radii.empty()) {
    std::vector<std::array<double, 3>> grid;
    for (const auto& triple : split_list(o.sweep_radii, ';')) {
      const auto parts = split_list(triple, ',');
      if (parts.size() != 3) throw ArgumentError("--sweep-radii expects r1,r2,r3;r1,r2,r3;...");
      std::array<double, 3> r{};
      for (std::size_t i = 0; i < 3; ++i) {
        try {
          r[i] = std::stod(parts[i]);
        } catch (const std::exception&) {
          throw ArgumentError("--sweep-radii: bad number '" + parts[i] + "'");
        }
      }
      grid.push_back(r);
    }
    const auto results = sweep_radii(mc, tc, train_set, grid, o.val_fraction);
    std::string csv = "r1,r2,r3,val_loss,val_acc_overall,val_acc_class\n";
    for (const auto& r : results) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%g,%g,%g,%.9g,%.6f,%.6f\n", r.radii[0], r.radii[1], r.radii[2],
                    r.validation.loss, r.validation.acc_overall, r.validation.acc_class);
      csv += buf;
    }
    write_text(csv, fs::path(o.out) / "sweep.csv");
    std::cout << csv;
    return kExitOk;
  }

  std::printf("epoch,loss,acc_overall,acc_class,seconds\n");
  auto on_epoch = [](const MetricsReport& m) {
    std::printf("%zu,%.9g,%.6f,%.6f,%.3f\n", m.epoch, m.loss, m.acc_overall, m.acc_class, m.seconds);
    std::fflush(stdout);
  };
  TrainResult result = train(std::move(model), train_set, test_set ? &*test_set : nullptr, tc, on_epoch);
  std::cerr << "# initial_loss=" << result.initial_loss << "\n";

  save_checkpoint(make_checkpoint(result.model, &result.optimizer, tc), fs::path(o.out) / "model.gck");
  write_history_csv(result.history, fs::path(o.out) / "history.csv");
  const MetricsReport& last = result.history.back();
  write_text(summary_json(last, manifest.class_names, seed, result.initial_loss),
             fs::path(o.out) / "summary.json");
  write_confusion_csv(last, manifest.class_names, fs::path(o.out) / "confusion.csv");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::string test_manifest;
  std::string out;
};

int run_eval(const EvalOptions& o, const GlobalOptions& g) {
  const auto file = read_config_file(g.config_path);
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  std::uint64_t seed = resolve_seed(g, file);
  if (!g.seed) {
    if (auto it = ckpt.metadata.find("train.seed"); it != ckpt.metadata.end()) {
      seed = parse_seed(it->second, o.checkpoint);
    }
  }
  print_resolved("eval", seed, ckpt.config.to_text());
  Model<float> model(ckpt.config, std::move(ckpt.params));
  DatasetManifest manifest;
  const auto test = prepare_dataset(load_manifest_clouds(o.test_manifest, &manifest),
                                    model.config().n_points, seed);
  MetricsReport m = evaluate(model, test);
  if (auto it = ckpt.metadata.find("train.epochs"); it != ckpt.metadata.end()) {
    m.epoch = std::stoull(it->second);
  }
  const std::string json = summary_json(m, manifest.class_names, seed);
  std::cout << json;
  if (!o.out.empty()) {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    write_text(json, fs::path(o.out) / "eval_summary.json");
    write_confusion_csv(m, manifest.class_names, fs::path(o.out) / "eval_confusion.csv");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckOptions {
  std::string scope = "all";
  std::optional<double> tolerance;
};

int run_gradcheck(const GradcheckOptions& o, const GlobalOptions& g) {
  const std::uint64_t seed = resolve_seed(g, read_config_file(g.config_path));
  std::vector<GradScope> scopes;
  if (o.scope == "all") {
    scopes = {GradScope::kOps, GradScope::kGeoConv, GradScope::kFullModel};
  } else if (auto s = parse_grad_scope(o.scope)) {
    scopes = {*s};
  } else {
    throw ArgumentError("unknown scope '" + o.scope + "' (ops, geoconv, full_model, all)");
  }
  print_resolved("gradcheck", seed, "scope=" + o.scope);
  bool ok = true;
  for (GradScope s : scopes) {
    const double tol = o.tolerance ? *o.tolerance : (s == GradScope::kFullModel ? 1e-4 : 1e-5);
    const GradCheckReport r = gradcheck_suite(s, seed, tol);
    std::cout << r.table();
    for (const auto& n : r.notes) std::cout << "# " << n << "\n";
    std::printf("# %s: max_rel=%.3e tol=%.0e %.2fs %s\n", std::string(grad_scope_name(s)).c_str(),
                r.max_rel_error(), tol, r.seconds, r.passed() ? "PASS" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------

struct BenchOptions {
  std::string op = "ball-query";
  std::size_t n = 2000;
  double radius = 0.15;
  std::size_t repeat = 10;
  std::size_t in_channels = 64;
  std::size_t reduction_channels = 64;
  std::size_t out_channels = 128;
};

struct Timing {
  double median_ms = 0.0;
  double p90_ms = 0.0;
};

template <typename Fn>
Timing time_it(std::size_t repeat, Fn&& fn) {
  std::vector<double> ms;
  for (std::size_t i = 0; i < repeat; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const auto p90 = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(ms.size()))) - 1;
  return {ms[ms.size() / 2], ms[std::min(p90, ms.size() - 1)]};
}

std::vector<Point3> bench_positions(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point3> pos(n);
  for (auto& p : pos) {
    for (auto& v : p) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return pos;
}

std::uint64_t neighborhood_checksum(const NeighborhoodSet& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& l : s.lists) {
    h = (h ^ l.size()) * 1099511628211ull;
    for (auto q : l.indices) h = (h ^ q) * 1099511628211ull;
  }
  return h;
}

NeighborhoodSet brute_force_ball(const std::vector<Point3>& pos, double r) {
  NeighborhoodSet s;
  s.radius = r;
  s.lists.resize(pos.size());
  const double r2 = r * r;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (i == j) continue;
      const double d2 = squared_distance(pos[i], pos[j]);
      if (d2 > 0.0 && d2 <= r2 && std::sqrt(d2) <= r) s.lists[i].indices.push_back(static_cast<std::uint32_t>(j));
    }
  }
  return s;
}

int run_bench(const BenchOptions& o, std::uint64_t seed) {
  if (o.n == 0) throw ArgumentError("--n must be positive");
  if (o.repeat == 0) throw ArgumentError("--repeat must be positive");
  if (!(o.radius > 0.0)) throw ArgumentError("--radius must be positive");
  std::ostringstream resolved;
  resolved << "op=" << o.op << "\nn=" << o.n << "\nradius=" << o.radius << "\nrepeat=" << o.repeat;
  print_resolved("bench", seed, resolved.str());
  const auto pos = bench_positions(o.n, seed);
  std::printf("op,impl,n,radius,repeat,median_ms,p90_ms,checksum\n");
  auto row = [&](const char* impl, const Timing& t, const std::string& checksum) {
    std::printf("%s,%s,%zu,%g,%zu,%.4f,%.4f,%s\n", o.op.c_str(), impl, o.n, o.radius, o.repeat,
                t.median_ms, t.p90_ms, checksum.c_str());
  };

  if (o.op == "ball-query") {
    std::uint64_t sum_grid = 0, sum_brute = 0;
    const Timing tg = time_it(o.repeat, [&] {
      sum_grid = neighborhood_checksum(build_neighborhoods(pos, o.radius, std::nullopt));
    });
    row("grid", tg, std::to_string(sum_grid));
    const Timing tb = time_it(o.repeat, [&] { sum_brute = neighborhood_checksum(brute_force_ball(pos, o.radius)); });
    row("brute", tb, std::to_string(sum_brute));
    return kExitOk;
  }

  if (o.op != "geoconv-fwd" && o.op != "geoconv-bwd") {
    throw ArgumentError("unknown --op '" + o.op + "' (ball-query, geoconv-fwd, geoconv-bwd)");
  }
  GeoConvSpec spec;
  spec.in_channels = o.in_channels;
  spec.reduction_channels = o.reduction_channels;
  spec.out_channels = o.out_channels;
  spec.radius = o.radius;
  Rng rng(mix_seed(seed, 1));
  const auto params = GeoConvParams<float>::init(spec, rng);
  Matrix<float> x(o.n, spec.in_channels);
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const NeighborhoodSet nbrs = build_neighborhoods(pos, o.radius, kDefaultNeighborCap);
  const Mode mode = o.n >= 2 ? Mode::kTrain : Mode::kEval;
  auto checksum = [](const Matrix<float>& m) {
    double s = 0.0;
    for (float v : m.values()) s += v;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", s);
    return std::string(buf);
  };
  if (o.op == "geoconv-fwd") {
    std::string sum;
    const Timing t = time_it(o.repeat, [&] { sum = checksum(geoconv_forward(x, nbrs, params, spec, mode).output); });
    row("batched", t, sum);
  } else {
    const auto fwd = geoconv_forward(x, nbrs, params, spec, mode);
    Matrix<float> grad(o.n, spec.out_channels);
    for (auto& v : grad.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::string sum;
    const Timing t = time_it(o.repeat, [&] { sum = checksum(geoconv_backward(fwd.cache, params, grad).input); });
    row("batched", t, sum);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_inspect(const std::string& path, std::uint64_t seed) {
  print_resolved("inspect", seed, "file=" + path);
  if (fs::path(path).extension() == ".gpc") {
    const PointCloud c = load_cloud(path);
    std::printf("GPC1 cloud: %zu points x %zu channels, label %s\n", c.size(), c.channels(),
                c.label() ? std::to_string(*c.label()).c_str() : "none");
    Point3 lo = c.position(0), hi = lo;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto p = c.position(i);
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
    std::printf("bounds: [%g, %g] x [%g, %g] x [%g, %g]\n", lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]);
    std::printf("content hash: %016llx\n", static_cast<unsigned long long>(content_hash(c)));
    return kExitOk;
  }
  const Checkpoint ckpt = load_checkpoint(path);
  const Model<float> model(ckpt.config, ckpt.params);
  std::printf("GCK1 checkpoint\n%s", ckpt.config.to_text().c_str());
  for (const auto& [k, v] : ckpt.metadata) std::printf("meta.%s=%s\n", k.c_str(), v.c_str());
  if (ckpt.optimizer) std::printf("adam_step=%lld\n", static_cast<long long>(ckpt.optimizer->step));
  std::printf("parameters=%zu\nreduction_parameters=%zu\n", model.parameter_count(),
              model.reduction_parameter_count());
  for (const auto& t : named_tensors(ckpt.params)) {
    std::printf("  %-32s %6zu x %-6zu%s\n", t.name.c_str(), t.value->rows(), t.value->cols(),
                t.role == TensorRole::kRunningStat ? "  (buffer)" : "");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geo-CNN point cloud classification toolkit"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "RNG seed (default: GEOCONV_SEED or 0)");
  app.add_option("--config", g.config_path, "key=value override file")->check(CLI::ExistingFile);
  app.add_option("--workers", g.workers, "worker threads (default: available cores)");

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic shape dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--classes", gen.classes, "comma-separated shapes");
  gen_cmd->add_option("--per-class", gen.per_class, "clouds per class");
  gen_cmd->add_option("--points", gen.points, "points per cloud");
  gen_cmd->add_option("--jitter", gen.jitter, "positional noise stddev");

  ConvertOptions conv;
  int conv_label = -1;
  auto* conv_cmd = app.add_subcommand("convert", "convert between text xyz[nxnynz] and GPC1");
  conv_cmd->add_option("--in", conv.in)->required()->check(CLI::ExistingFile);
  conv_cmd->add_option("--out", conv.out)->required();
  auto* label_opt = conv_cmd->add_option("--label", conv_label, "class label for text input");

  TrainOptions tr;
  auto* tr_cmd = app.add_subcommand("train", "train a classifier");
  tr_cmd->add_option("--train", tr.train_manifest, "training manifest.csv")->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--test", tr.test_manifest, "test manifest.csv")->check(CLI::ExistingFile);
  tr_cmd->add_option("--out", tr.out, "output directory");
  tr_cmd->add_option("--preset", tr.preset, "modelnet, desk or micro");
  tr_cmd->add_flag("--baseline", tr.baseline, "average edge fusion with one reduction matrix");
  tr_cmd->add_option("--multiview", tr.multiview, "number of uniform virtual views");
  tr_cmd->add_flag("--raw-group-features", tr.raw_group_features, "group rows without center offsets");
  tr_cmd->add_option("--epochs", tr.epochs);
  tr_cmd->add_option("--batch-size", tr.batch_size);
  tr_cmd->add_option("--lr", tr.lr);
  tr_cmd->add_option("--points", tr.points, "points per cloud after sampling");
  tr_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "epochs between checkpoints");
  tr_cmd->add_flag("--rotate-augment", tr.rotate_augment, "random z rotation per sample and epoch");
  tr_cmd->add_option("--sweep-radii", tr.sweep_radii, "grid r1,r2,r3;... evaluated on a held-out split");
  tr_cmd->add_option("--val-fraction", tr.val_fraction, "held-out fraction for --sweep-radii");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  ev_cmd->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--test", ev.test_manifest)->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--out", ev.out, "directory for eval_summary.json / eval_confusion.csv");

  GradcheckOptions gc;
  double gc_tol = 0.0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc_cmd->add_option("--scope", gc.scope, "ops, geoconv, full_model or all");
  auto* tol_opt = gc_cmd->add_option("--tolerance", gc_tol, "max relative error");

  BenchOptions bo;
  auto* bench_cmd = app.add_subcommand("bench", "kernel timings as CSV");
  bench_cmd->add_option("--op", bo.op, "ball-query, geoconv-fwd or geoconv-bwd");
  bench_cmd->add_option("--n", bo.n);
  bench_cmd->add_option("--radius", bo.radius);
  bench_cmd->add_option("--repeat", bo.repeat);
  bench_cmd->add_option("--in-channels", bo.in_channels);
  bench_cmd->add_option("--reduction-channels", bo.reduction_channels);
  bench_cmd->add_option("--out-channels", bo.out_channels);

  std::string inspect_path;
  auto* in_cmd = app.add_subcommand("inspect", "describe a .gpc cloud or .gck checkpoint");
  in_cmd->add_option("file", inspect_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (seed_opt->count()) g.seed = seed_value;
    const auto file = read_config_file(g.config_path);
    for (const auto& [k, v] : file) {
      if (k == "workers" && g.workers == 0) g.workers = static_cast<std::size_t>(parse_seed(v, "--config"));
    }
    if (g.workers) set_worker_count(g.workers);

    if (*gen_cmd) return run_gen_data(gen, resolve_seed(g, file));
    if (*conv_cmd) {
      if (label_opt->count()) conv.label = conv_label;
      return run_convert(conv, resolve_seed(g, file));
    }
    if (*tr_cmd) return run_train(tr, g, *tr_cmd);
    if (*ev_cmd) return run_eval(ev, g);
    if (*gc_cmd) {
      if (tol_opt->count()) gc.tolerance = gc_tol;
      return run_gradcheck(gc, g);
    }
    if (*bench_cmd) return run_bench(bo, resolve_seed(g, file));
    if (*in_cmd) return run_inspect(inspect_path, resolve_seed(g, file));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
