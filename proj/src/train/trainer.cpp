#include "hdgcn/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "hdgcn/core/error.hpp"
#include "hdgcn/core/ops.hpp"

namespace hdgcn::train {
namespace {

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw DataError("checkpoint holds a malformed generator state");
}

nlohmann::json to_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch}, {"lr", m.lr}, {"loss", m.loss}, {"top1", m.top1}, {"top5", m.top5}};
}

EpochMetrics metrics_from_json(const nlohmann::json& j) {
  return {j.at("epoch").get<int>(), j.at("lr").get<double>(), j.at("loss").get<double>(), j.at("top1").get<double>(),
          j.at("top5").get<double>()};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::filesystem::path stem_of(const std::filesystem::path& path) {
  auto p = path;
  if (p.extension() == ".hdt" || p.extension() == ".json") p.replace_extension();
  return p;
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

void write_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,lr,loss,top1,top5\n";
  char line[160];
  for (const auto& m : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", m.epoch, m.lr, m.loss, m.top1, m.top5);
    out << line;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

template <typename T>
DiffTensor<T> make_batch(const data::Dataset& ds, const std::vector<std::size_t>& order, std::size_t first,
                         std::size_t count, std::vector<int>& labels) {
  const std::size_t block = ds.sample_numel();
  std::vector<T> values(count * block);
  labels.resize(count);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t i = order[first + b];
    std::copy(ds.sample(i), ds.sample(i) + block, values.begin() + static_cast<std::ptrdiff_t>(b * block));
    labels[b] = ds.labels[i];
  }
  Shape shape{count};
  shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
  return DiffTensor<T>::constant(std::move(shape), std::move(values));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw ConfigError("warmup_epochs must lie in [0, epochs)");
  if (!(lr_min < lr_max) || lr_min < 0.0) throw ConfigError("need 0 <= lr_min < lr_max");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label_smoothing must lie in [0, 1)");
  if (!(crop_min_fraction > 0.0 && crop_min_fraction <= 1.0)) throw ConfigError("crop_min_fraction must lie in (0, 1]");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"lr_max", c.lr_max},
          {"lr_min", c.lr_min},
          {"momentum", c.momentum},
          {"nesterov", c.nesterov},
          {"weight_decay", c.weight_decay},
          {"weight_decay_exclude", c.weight_decay_exclude},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"label_smoothing", c.label_smoothing},
          {"crop_min_fraction", c.crop_min_fraction}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  static const std::vector<std::string> known{"epochs",       "warmup_epochs", "lr_max",
                                              "lr_min",       "momentum",      "nesterov",
                                              "weight_decay", "weight_decay_exclude", "batch_size",
                                              "seed",         "label_smoothing", "crop_min_fraction"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown train config key '" + key + "'");
  }
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.lr_max = j.value("lr_max", c.lr_max);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.momentum = j.value("momentum", c.momentum);
    c.nesterov = j.value("nesterov", c.nesterov);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.weight_decay_exclude = j.value("weight_decay_exclude", c.weight_decay_exclude);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
    c.crop_min_fraction = j.value("crop_min_fraction", c.crop_min_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

double lr_at(int epoch, const TrainConfig& c) {
  if (epoch < 0 || epoch >= c.epochs) {
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(c.epochs) + ")");
  }
  if (epoch < c.warmup_epochs) {
    const double start = c.lr_max / c.warmup_epochs;
    return start + (c.lr_max - start) * epoch / c.warmup_epochs;
  }
  const int span = c.epochs - 1 - c.warmup_epochs;
  const double progress = span > 0 ? static_cast<double>(epoch - c.warmup_epochs) / span : 0.0;
  return c.lr_min + 0.5 * (c.lr_max - c.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
bool SGD<T>::decays(const std::string& name) const {
  return std::none_of(config_.weight_decay_exclude.begin(), config_.weight_decay_exclude.end(),
                      [&](const std::string& s) { return name.find(s) != std::string::npos; });
}

template <typename T>
void SGD<T>::step(std::vector<Parameter<T>>& params, double lr) {
  for (auto& p : params) {
    if (!p.trainable()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericalError("non-finite gradient in parameter " + p.name());
    }
  }
  const T m = static_cast<T>(config_.momentum);
  const T step = static_cast<T>(lr);
  for (auto& p : params) {
    if (!p.trainable()) continue;
    auto values = p.values();
    auto grad = p.grad();
    const T wd = decays(p.name()) ? static_cast<T>(config_.weight_decay) : T(0);
    auto& buf = buffers_[p.name()];
    if (buf.size() != values.size()) buf.assign(values.size(), T(0));
    const bool has_grad = grad.size() == values.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = (has_grad ? grad[i] : T(0)) + wd * values[i];
      buf[i] = m * buf[i] + g;
      values[i] -= step * (config_.nesterov ? g + m * buf[i] : buf[i]);
    }
  }
}

double top_k_accuracy(const Scores& scores, std::size_t k) {
  if (scores.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    const double* row = scores.probs.data() + n * scores.classes;
    const auto y = static_cast<std::size_t>(scores.labels[n]);
    std::size_t rank = 0;
    for (std::size_t j = 0; j < scores.classes; ++j) {
      if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

template <typename T>
Scores predict(model::Network<T>& net, const data::Dataset& ds, std::size_t batch_size) {
  Scores out;
  out.classes = net.config().num_classes;
  out.labels = ds.labels;
  out.probs.reserve(ds.size() * out.classes);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;
  double loss = 0.0;
  for (std::size_t first = 0; first < ds.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, ds.size() - first);
    const auto logits = net.forward(make_batch<T>(ds, order, first, count, labels), false);
    const auto probs = ops::softmax_rows<T>(logits.values(), count, out.classes);
    for (std::size_t b = 0; b < count; ++b) {
      const double p = static_cast<double>(probs[b * out.classes + static_cast<std::size_t>(labels[b])]);
      loss -= std::log(std::max(p, 1e-300));
    }
    out.probs.insert(out.probs.end(), probs.begin(), probs.end());
  }
  out.loss = ds.size() > 0 ? loss / static_cast<double>(ds.size()) : 0.0;
  return out;
}

std::string precision_name(bool f64) { return f64 ? "f64" : "f32"; }

template <typename T>
void save_model(model::Network<T>& net, const std::filesystem::path& stem, const nlohmann::json& extra) {
  write_tensors(with_ext(stem, ".hdt"), net.state_dict());
  nlohmann::json side = extra.is_object() ? extra : nlohmann::json::object();
  side["model"] = model::to_json(net.config());
  side["precision"] = precision_name(std::is_same_v<T, double>);
  write_json(with_ext(stem, ".json"), side);
}

nlohmann::json read_sidecar(const std::filesystem::path& path) {
  const auto file = with_ext(stem_of(path), ".json");
  std::ifstream in(file);
  if (!in) throw DataError("cannot open checkpoint sidecar " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

template <typename T>
std::unique_ptr<model::Network<T>> load_model(const std::filesystem::path& path) {
  const auto side = read_sidecar(path);
  if (!side.contains("model")) throw DataError("checkpoint sidecar lacks a model config");
  const auto cfg = model::from_json(side.at("model"));
  const auto seed = side.contains("train") ? side["train"].value("seed", std::uint64_t{1}) : std::uint64_t{1};
  auto net = std::make_unique<model::Network<T>>(cfg, seed);
  net->load_state_dict(read_tensors(with_ext(stem_of(path), ".hdt")));
  return net;
}

template <typename T>
TrainResult train(model::Network<T>& net, const data::Dataset& train_set, const data::Dataset* eval_set,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_set.size() == 0) throw DataError("training set is empty");
  const auto& cfg = net.config();
  const Shape expected{cfg.in_channels, cfg.window, static_cast<std::size_t>(net.topology().num_joints)};
  if (train_set.sample_shape.size() != 4 ||
      !std::equal(expected.begin(), expected.end(), train_set.sample_shape.begin() + 1)) {
    throw DataError("training samples " + to_string(train_set.sample_shape) + " do not match the model input (M, " +
                    std::to_string(cfg.in_channels) + ", " + std::to_string(cfg.window) + ", " +
                    std::to_string(net.topology().num_joints) + ")");
  }
  for (int label : train_set.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= cfg.num_classes) {
      throw DataError("training label " + std::to_string(label) + " outside the model's classes");
    }
  }

  TrainResult result;
  SGD<T> sgd(config);
  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 crop_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);
  int start_epoch = 0;
  const bool to_disk = !options.out_dir.empty();
  if (to_disk) std::filesystem::create_directories(options.out_dir);
  const auto last = options.out_dir / "last";
  const auto best = options.out_dir / "best";

  if (to_disk && options.resume && std::filesystem::exists(with_ext(last, ".json"))) {
    const auto side = read_sidecar(last);
    const auto tensors = read_tensors(with_ext(last, ".hdt"));
    net.load_state_dict(tensors);
    const std::string prefix = "optimizer.momentum.";
    for (const auto& t : tensors) {
      if (t.name.rfind(prefix, 0) == 0) {
        sgd.buffers()[t.name.substr(prefix.size())] = std::vector<T>(t.values.begin(), t.values.end());
      }
    }
    start_epoch = side.at("epoch").get<int>();
    result.steps = side.at("steps").get<std::uint64_t>();
    result.best_top1 = side.at("best_top1").get<double>();
    result.best_epoch = side.at("best_epoch").get<int>();
    for (const auto& m : side.at("history")) result.history.push_back(metrics_from_json(m));
    set_rng_state(shuffle_rng, side.at("rng").at("shuffle").get<std::string>());
    set_rng_state(crop_rng, side.at("rng").at("crop").get<std::string>());
    set_rng_state(net.dropout_rng(), side.at("rng").at("dropout").get<std::string>());
  }

  const bool recrop = options.raw_train != nullptr && config.crop_min_fraction < 1.0;
  data::Dataset cropped;
  auto params = net.parameters();
  std::vector<std::size_t> order(train_set.size());
  std::vector<int> labels;
  const int end_epoch = options.stop_after > 0 ? std::min(config.epochs, options.stop_after) : config.epochs;
  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const double lr = lr_at(epoch, config);
    const data::Dataset* source = &train_set;
    if (recrop) {
      auto load = options.load_options;
      load.preprocess.crop_min_fraction = config.crop_min_fraction;
      cropped = train_set;
      const std::size_t block = cropped.sample_numel();
      for (std::size_t i = 0; i < options.raw_train->size(); ++i) {
        const auto seq = data::prepare_sample((*options.raw_train)[i], net.topology(), load, &crop_rng);
        std::fill_n(cropped.values.begin() + static_cast<std::ptrdiff_t>(i * block), block, 0.0f);
        std::copy_n(seq.data.begin(), std::min(block, seq.data.size()),
                    cropped.values.begin() + static_cast<std::ptrdiff_t>(i * block));
      }
      source = &cropped;
    }
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      const auto x = make_batch<T>(*source, order, first, count, labels);
      for (auto& p : params) p.zero_grad();
      auto loss = ops::softmax_cross_entropy(net.forward(x, true), std::span<const int>(labels),
                                             static_cast<T>(config.label_smoothing));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
      loss.backward();
      sgd.step(params, lr);
      loss_sum += value * static_cast<double>(count);
      ++result.steps;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.loss = loss_sum / static_cast<double>(order.size());
    const auto scores = predict(net, eval_set != nullptr ? *eval_set : train_set);
    m.top1 = top_k_accuracy(scores, 1);
    m.top5 = top_k_accuracy(scores, 5);
    result.history.push_back(m);
    const bool improved = result.best_epoch < 0 || m.top1 > result.best_top1;
    if (improved) {
      result.best_top1 = m.top1;
      result.best_epoch = epoch;
    }
    if (options.on_epoch) options.on_epoch(m);

    if (to_disk) {
      nlohmann::json side;
      side["train"] = to_json(config);
      side["epoch"] = epoch + 1;
      side["steps"] = result.steps;
      side["best_top1"] = result.best_top1;
      side["best_epoch"] = result.best_epoch;
      side["metrics"] = to_json(m);
      if (improved) save_model(net, best, side);
      auto history = nlohmann::json::array();
      for (const auto& h : result.history) history.push_back(to_json(h));
      side["history"] = history;
      side["rng"] = {{"shuffle", rng_state(shuffle_rng)},
                     {"crop", rng_state(crop_rng)},
                     {"dropout", rng_state(net.dropout_rng())}};
      auto tensors = net.state_dict();
      for (const auto& [name, buf] : sgd.buffers()) {
        tensors.push_back({"optimizer.momentum." + name, Shape{buf.size()}, std::vector<float>(buf.begin(), buf.end())});
      }
      write_tensors(with_ext(last, ".hdt"), tensors);
      side["model"] = model::to_json(cfg);
      side["precision"] = precision_name(std::is_same_v<T, double>);
      write_json(with_ext(last, ".json"), side);
      write_log(options.out_dir / "log.csv", result.history);
    }
  }

  if (to_disk && static_cast<int>(result.history.size()) == config.epochs) {
    nlohmann::json summary;
    summary["model"] = model::describe(cfg);
    summary["epochs"] = config.epochs;
    summary["steps"] = result.steps;
    summary["best_top1"] = result.best_top1;
    summary["best_epoch"] = result.best_epoch;
    summary["final"] = to_json(result.history.back());
    write_json(options.out_dir / "summary.json", summary);
  }
  return result;
}

#define HDGCN_INSTANTIATE(T)                                                                                    \
  template class SGD<T>;                                                                                        \
  template Scores predict(model::Network<T>&, const data::Dataset&, std::size_t);                               \
  template TrainResult train(model::Network<T>&, const data::Dataset&, const data::Dataset*, const TrainConfig&, \
                             const TrainOptions&);                                                              \
  template void save_model(model::Network<T>&, const std::filesystem::path&, const nlohmann::json&);            \
  template std::unique_ptr<model::Network<T>> load_model(const std::filesystem::path&);

HDGCN_INSTANTIATE(float)
HDGCN_INSTANTIATE(double)

#undef HDGCN_INSTANTIATE

}  // namespace hdgcn::train
