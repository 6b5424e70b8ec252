#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hdgcn/data/dataset.hpp"
#include "hdgcn/model/network.hpp"
#include "json.hpp"

namespace hdgcn::train {

struct TrainConfig {
  int epochs = 90;
  int warmup_epochs = 5;
  double lr_max = 0.1;
  double lr_min = 0.0001;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 0.0004;
  /// Parameters whose name contains any of these substrings get no decay.
  std::vector<std::string> weight_decay_exclude;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double label_smoothing = 0.0;
  /// Below 1 enables random temporal cropping of training samples.
  double crop_min_fraction = 1.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Linear warmup from lr_max / warmup_epochs to lr_max, then a per-epoch
/// cosine from lr_max down to lr_min at the last epoch.
double lr_at(int epoch, const TrainConfig& config);

/// SGD with momentum in the usual framework form: g += wd * p;
/// buf = momentum * buf + g; p -= lr * (nesterov ? g + momentum * buf : buf).
template <typename T>
class SGD {
 public:
  explicit SGD(const TrainConfig& config) : config_(config) {}

  /// Skips frozen parameters. Throws NumericalError naming a parameter with a
  /// non-finite gradient before anything is updated.
  void step(std::vector<Parameter<T>>& params, double lr);

  bool decays(const std::string& name) const;
  std::map<std::string, std::vector<T>>& buffers() { return buffers_; }

 private:
  TrainConfig config_;
  std::map<std::string, std::vector<T>> buffers_;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean training loss
  double top1 = 0.0;  // on the evaluation set, or the training set without one
  double top5 = 0.0;
};

struct Scores {
  std::size_t classes = 0;
  std::vector<double> probs;  // (samples, classes) softmax probabilities
  std::vector<int> labels;
  double loss = 0.0;

  std::size_t size() const { return labels.size(); }
};

double top_k_accuracy(const Scores& scores, std::size_t k);

template <typename T>
Scores predict(model::Network<T>& net, const data::Dataset& dataset, std::size_t batch_size = 32);

struct TrainOptions {
  /// Checkpoints, log.csv and summary.json go here when set.
  std::filesystem::path out_dir;
  /// Continue from out_dir/last.* when present.
  bool resume = false;
  /// Stop after this many completed epochs (0: run all).
  int stop_after = 0;
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Samples and options used to re-crop the training set every epoch.
  const std::vector<data::SkeletonSequence>* raw_train = nullptr;
  data::LoadOptions load_options;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  double best_top1 = 0.0;
  int best_epoch = -1;
  std::uint64_t steps = 0;
};

template <typename T>
TrainResult train(model::Network<T>& net, const data::Dataset& train_set, const data::Dataset* eval_set,
                  const TrainConfig& config, const TrainOptions& options = {});

std::string precision_name(bool f64);

/// Writes <stem>.hdt and the <stem>.json sidecar holding the model config.
template <typename T>
void save_model(model::Network<T>& net, const std::filesystem::path& stem, const nlohmann::json& extra = {});

/// Reads a checkpoint written by save_model or train; `path` may name the
/// .hdt file, the .json sidecar or the common stem.
template <typename T>
std::unique_ptr<model::Network<T>> load_model(const std::filesystem::path& path);

nlohmann::json read_sidecar(const std::filesystem::path& path);

}  // namespace hdgcn::train
