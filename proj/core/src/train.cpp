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

#include "geocnn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "geocnn/error.hpp"
#include "geocnn/rng.hpp"

namespace geocnn {

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(out);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::size_t label_of(const PointCloud& c, std::size_t num_classes, std::size_t index) {
  if (!c.label() || *c.label() < 0 || static_cast<std::size_t>(*c.label()) >= num_classes) {
    throw ArgumentError("cloud " + std::to_string(index) + " has no label in [0, " +
                        std::to_string(num_classes) + ")");
  }
  return static_cast<std::size_t>(*c.label());
}

constexpr std::size_t kEvalBatch = 16;

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train config: epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("train config: batch_size must be at least 2");
  if (!(adam.learning_rate >= 0.0) || !std::isfinite(adam.learning_rate)) {
    throw ConfigError("train config: learning rate must be finite and non-negative");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train config: Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("train config: Adam epsilon must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("train config: lr_decay must be positive");
  if (lr_decay_every == 0) throw ConfigError("train config: lr_decay_every must be positive");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) {
    throw ConfigError("train config: checkpoint_every needs a checkpoint directory");
  }
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  const auto steps = static_cast<double>((epoch - 1) / lr_decay_every);
  return adam.learning_rate * std::pow(lr_decay, steps);
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "epochs") {
    epochs = to_size(key, value);
  } else if (key == "batch_size") {
    batch_size = to_size(key, value);
  } else if (key == "lr") {
    adam.learning_rate = to_double(key, value);
  } else if (key == "beta1") {
    adam.beta1 = to_double(key, value);
  } else if (key == "beta2") {
    adam.beta2 = to_double(key, value);
  } else if (key == "eps") {
    adam.epsilon = to_double(key, value);
  } else if (key == "lr_decay") {
    lr_decay = to_double(key, value);
  } else if (key == "lr_decay_every") {
    lr_decay_every = to_size(key, value);
  } else if (key == "checkpoint_every") {
    checkpoint_every = to_size(key, value);
  } else if (key == "rotate_augment") {
    if (value == "1" || value == "true") {
      rotate_augment = true;
    } else if (value == "0" || value == "false") {
      rotate_augment = false;
    } else {
      throw ConfigError("config key 'rotate_augment': expected true/false");
    }
  } else {
    return false;
  }
  return true;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs=" << epochs << '\n'
     << "batch_size=" << batch_size << '\n'
     << "lr=" << fmt("%.17g", adam.learning_rate) << '\n'
     << "beta1=" << fmt("%.17g", adam.beta1) << '\n'
     << "beta2=" << fmt("%.17g", adam.beta2) << '\n'
     << "eps=" << fmt("%.17g", adam.epsilon) << '\n'
     << "lr_decay=" << fmt("%.17g", lr_decay) << '\n'
     << "lr_decay_every=" << lr_decay_every << '\n'
     << "checkpoint_every=" << checkpoint_every << '\n'
     << "rotate_augment=" << (rotate_augment ? 1 : 0) << '\n';
  return os.str();
}

MetricsReport compute_metrics(std::span<const std::size_t> labels,
                              std::span<const std::size_t> predictions, std::size_t num_classes) {
  if (labels.size() != predictions.size()) {
    throw ArgumentError("compute_metrics: label and prediction counts differ");
  }
  if (labels.empty()) throw ArgumentError("compute_metrics: empty set");
  MetricsReport m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw ArgumentError("compute_metrics: class index out of range");
    }
    ++m.confusion[labels[i]][predictions[i]];
    if (labels[i] == predictions[i]) ++correct;
  }
  m.acc_overall = static_cast<double>(correct) / static_cast<double>(labels.size());
  m.class_acc.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t total = 0;
    for (auto v : m.confusion[c]) total += v;
    if (total == 0) continue;
    m.class_acc[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(total);
    sum += m.class_acc[c];
    ++present;
  }
  m.acc_class = sum / static_cast<double>(present);
  return m;
}

std::vector<PointCloud> prepare_dataset(const std::vector<PointCloud>& clouds,
                                        std::size_t n_points, std::uint64_t seed) {
  std::vector<PointCloud> out;
  out.reserve(clouds.size());
  for (const auto& c : clouds) {
    if (c.size() == n_points) {
      out.push_back(normalize_unit_sphere(c));
    } else {
      out.push_back(normalize_unit_sphere(sample_points(c, n_points, mix_seed(seed, content_hash(c)))));
    }
  }
  return out;
}

namespace {

struct EvalOutcome {
  std::vector<std::size_t> predictions;
  double loss_sum = 0.0;
};

EvalOutcome run_eval(const Model<float>& model, const std::vector<PointCloud>& clouds,
                     bool with_loss) {
  EvalOutcome out;
  const std::size_t K = model.config().num_classes;
  for (std::size_t begin = 0; begin < clouds.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(clouds.size(), begin + kEvalBatch);
    std::vector<const PointCloud*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&clouds[i]);
    const auto pass = forward_batch(model, std::span<const PointCloud* const>(batch), Mode::kEval);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto row = pass.logits.row(b);
      out.predictions.push_back(argmax_row(row));
      if (with_loss) {
        out.loss_sum += softmax_cross_entropy(row, label_of(clouds[begin + b], K, begin + b)).loss;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<std::size_t> predict(const Model<float>& model, const std::vector<PointCloud>& clouds) {
  return run_eval(model, clouds, false).predictions;
}

MetricsReport evaluate(const Model<float>& model, const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) throw ArgumentError("evaluate: empty set");
  const std::size_t K = model.config().num_classes;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < clouds.size(); ++i) labels.push_back(label_of(clouds[i], K, i));
  const auto start = std::chrono::steady_clock::now();
  EvalOutcome e = run_eval(model, clouds, true);
  MetricsReport m = compute_metrics(labels, e.predictions, K);
  // Summed in dataset order; the loss is order-sensitive only at rounding level.
  m.loss = e.loss_sum / static_cast<double>(clouds.size());
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

Checkpoint make_checkpoint(const Model<float>& model, const OptimizerState* optimizer,
                           const TrainConfig& config) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.params = model.params();
  if (optimizer) ckpt.optimizer = *optimizer;
  std::istringstream in(config.to_text());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    ckpt.metadata["train." + line.substr(0, eq)] = line.substr(eq + 1);
  }
  ckpt.metadata["train.seed"] = std::to_string(config.seed);
  return ckpt;
}

namespace {

void adam_update(ModelParams<float>& params, const ModelParams<float>& grads,
                 OptimizerState& opt, double lr, const AdamConfig& base) {
  AdamConfig cfg = base;
  cfg.learning_rate = lr;
  ++opt.step;
  auto p = named_tensors(params);
  const auto g = named_tensors(grads);
  auto m = named_tensors(opt.m);
  auto v = named_tensors(opt.v);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].role != TensorRole::kTrainable) continue;
    adam_step(p[i].value->values(), g[i].value->values(), m[i].value->values(),
              v[i].value->values(), opt.step, cfg);
  }
}

}  // namespace

TrainResult train(Model<float> model, const std::vector<PointCloud>& train_set,
                  const std::vector<PointCloud>* test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() < 2) throw ArgumentError("train: need at least two training clouds");
  if (test_set && test_set->empty()) throw ArgumentError("train: empty test set");
  const std::size_t K = model.config().num_classes;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < train_set.size(); ++i) labels.push_back(label_of(train_set[i], K, i));
  const std::size_t bs = std::min(config.batch_size, train_set.size());

  OptimizerState opt = OptimizerState::zeros(model.config());
  TrainResult result{std::move(model), std::move(opt), 0.0, {}};
  Model<float>& net = result.model;

  {
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin + 2 <= train_set.size(); begin += bs) {
      const std::size_t end = std::min(train_set.size(), begin + bs);
      if (end - begin < 2) break;
      std::vector<const PointCloud*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[i]);
      const auto pass = forward_batch(net, std::span<const PointCloud* const>(batch), Mode::kTrain);
      sum += softmax_cross_entropy_batch(
                 pass.logits, std::span<const std::size_t>(labels.data() + begin, end - begin))
                 .loss;
      ++batches;
    }
    result.initial_loss = sum / static_cast<double>(batches);
  }

  std::vector<std::size_t> order(train_set.size());
  std::vector<PointCloud> rotated;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(config.seed, epoch));
    shuffle(order.begin(), order.end(), shuffle_rng);

    const std::vector<PointCloud>* source = &train_set;
    if (config.rotate_augment) {
      Rng angle_rng(mix_seed(mix_seed(config.seed, epoch), 0x524f54));
      rotated.clear();
      for (const auto& c : train_set) {
        rotated.push_back(rotate_z(c, angle_rng.uniform(0.0, 2.0 * std::numbers::pi)));
      }
      source = &rotated;
    }

    const double lr = config.learning_rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<std::size_t> seen_labels, seen_preds;
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const std::size_t end = std::min(order.size(), begin + bs);
      if (end - begin < 2) break;
      std::vector<const PointCloud*> batch;
      std::vector<std::size_t> batch_labels;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&(*source)[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      auto step = forward_backward_batch(net, std::span<const PointCloud* const>(batch),
                                         std::span<const std::size_t>(batch_labels), Mode::kTrain);
      commit_running_stats(net, step.pass);
      adam_update(net.params(), step.grads, result.optimizer, lr, config.adam);
      loss_sum += step.loss;
      ++batches;
      seen_labels.insert(seen_labels.end(), batch_labels.begin(), batch_labels.end());
      seen_preds.insert(seen_preds.end(), step.predictions.begin(), step.predictions.end());
    }

    MetricsReport report =
        test_set ? evaluate(net, *test_set) : compute_metrics(seen_labels, seen_preds, K);
    report.epoch = epoch;
    report.loss = loss_sum / static_cast<double>(batches);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(report);
    if (on_epoch) on_epoch(report);

    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      save_checkpoint(make_checkpoint(net, &result.optimizer, config),
                      config.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".gck"));
    }
  }
  return result;
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_history_csv(const std::vector<MetricsReport>& history, const std::filesystem::path& path) {
  std::string s = "epoch,loss,acc_overall,acc_class,seconds\n";
  for (const auto& m : history) {
    s += std::to_string(m.epoch) + "," + fmt("%.9g", m.loss) + "," + fmt("%.6f", m.acc_overall) +
         "," + fmt("%.6f", m.acc_class) + "," + fmt("%.3f", m.seconds) + "\n";
  }
  write_text(s, path);
}

void write_confusion_csv(const MetricsReport& report, const std::vector<std::string>& class_names,
                         const std::filesystem::path& path) {
  auto name = [&](std::size_t c) {
    return c < class_names.size() ? class_names[c] : std::to_string(c);
  };
  std::string s = "true\\pred";
  for (std::size_t c = 0; c < report.confusion.size(); ++c) s += "," + name(c);
  s += "\n";
  for (std::size_t r = 0; r < report.confusion.size(); ++r) {
    s += name(r);
    for (auto v : report.confusion[r]) s += "," + std::to_string(v);
    s += "\n";
  }
  write_text(s, path);
}

std::string summary_json(const MetricsReport& report, const std::vector<std::string>& class_names,
                         std::uint64_t seed, double initial_loss) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["epoch"] = report.epoch;
  j["loss"] = report.loss;
  j["initial_loss"] = initial_loss;
  j["acc_overall"] = report.acc_overall;
  j["acc_class"] = report.acc_class;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < report.class_acc.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    if (std::isnan(report.class_acc[c])) {
      per_class[name] = nullptr;
    } else {
      per_class[name] = report.class_acc[c];
    }
  }
  j["class_acc"] = per_class;
  j["confusion"] = report.confusion;
  j["seconds"] = report.seconds;
  return j.dump(2) + "\n";
}

std::vector<SweepResult> sweep_radii(const GeoCnnConfig& model_config,
                                     const TrainConfig& train_config,
                                     const std::vector<PointCloud>& train_set,
                                     const std::vector<std::array<double, 3>>& grid,
                                     double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ArgumentError("sweep_radii: validation fraction must lie in (0, 1)");
  }
  if (grid.empty()) throw ArgumentError("sweep_radii: empty radius grid");
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(train_config.seed, 0x53574550));
  shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(order.size())));
  if (n_val == 0 || order.size() - n_val < 2) {
    throw ArgumentError("sweep_radii: split leaves an empty validation or training part");
  }
  std::vector<PointCloud> val, fit;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : fit).push_back(train_set[order[i]]);
  }
  std::vector<SweepResult> out;
  for (const auto& radii : grid) {
    GeoCnnConfig cfg = model_config;
    for (std::size_t c = 0; c < 3; ++c) cfg.convs[c].radius = radii[c];
    TrainConfig tc = train_config;
    tc.checkpoint_every = 0;
    TrainResult r = train(Model<float>(cfg), fit, nullptr, tc);
    out.push_back({radii, evaluate(r.model, val)});
  }
  return out;
}

}  // namespace geocnn
