#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "saufno/nn/model.hpp"
#include "saufno/tensor/adam.hpp"
#include "saufno/thermal/dataset.hpp"

namespace saufno::train {

using nn::Model;
using thermal::Dataset;

// Per-channel affine maps: inputs are power density, outputs are T - t_a.
struct NormStats {
  std::vector<double> in_mean, in_std;
  std::vector<double> out_mean, out_std;

  int channels() const { return static_cast<int>(in_mean.size()); }
};

// Standard deviations below this are replaced by 1 (constant channels).
inline constexpr double kStdFloor = 1e-12;

NormStats compute_stats(const Dataset& ds);
nlohmann::json stats_to_json(const NormStats& s);
NormStats stats_from_json(const nlohmann::json& j);

// Normalized model input [n, L, H, W] for records [begin, end).
Tensor encode_inputs(const Dataset& ds, std::int64_t begin, std::int64_t end, const NormStats& s);
// Normalized target of the same layout.
Tensor encode_targets(const Dataset& ds, std::int64_t begin, std::int64_t end, const NormStats& s);

// (1/N) sum (pred - truth)^2; throws ShapeError on mismatch.
Tensor l2_loss(const Tensor& pred, const Tensor& truth);

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int epochs = 100;
  int batch_size = 8;
  double decay_factor = 0.5;  // lr multiplier every decay_interval epochs
  int decay_interval = 50;
  double finetune_lr_ratio = 0.1;
  std::uint64_t seed = 0;  // model init and shuffling
  int eval_every = 1;      // test-loss cadence in epochs; 0 disables

  void validate() const;
  double lr_at(int epoch) const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainingMeta {
  std::string dataset_id;
  std::string stage = "pretrain";  // or "finetune"
  int epoch = 0;                   // completed epochs in the current stage
  std::vector<double> train_loss;  // per epoch, normalized units
  std::vector<double> test_loss;   // per evaluated epoch, normalized units (NaN when skipped)
  NormStats stats;
  double t_a = 298.15;
  TrainConfig train;  // configuration of the current stage
};

struct Checkpoint {
  nn::ModelConfig config;
  ParameterList<float> parameters;
  AdamState optimizer;
  TrainingMeta meta;

  Model model() const;  // fresh model holding copies of the parameters
};

// Chip, resolution, sample count and seed of a dataset.
std::string dataset_id(const Dataset& ds);

struct TrainHooks {
  std::ostream* log = nullptr;
  // Called after each epoch with (epoch index, train loss, test loss or NaN).
  std::function<void(int, double, double)> on_epoch;
};

// Fresh model, statistics from `train_set`, cfg.epochs of shuffled Adam.
Checkpoint train(const nn::ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train_set,
                 const Dataset* test_set = nullptr, const TrainHooks& hooks = {});

// Continues a checkpoint for `epochs` more epochs with its optimizer state,
// producing the same parameters as an uninterrupted run.
Checkpoint resume(const Checkpoint& ckpt, int epochs, const Dataset& train_set, const Dataset* test_set = nullptr,
                  const TrainHooks& hooks = {});

// Pretrained parameters, fresh optimizer, lr = pretrain lr * finetune_lr_ratio,
// pretraining statistics kept. `cfg` supplies epochs, batch size and seed.
Checkpoint finetune(const Checkpoint& pretrained, const TrainConfig& cfg, const Dataset& high_set,
                    const Dataset* test_set = nullptr, const TrainHooks& hooks = {});

// Mean normalized l2 loss over a dataset, evaluated without the tape.
double evaluate_loss(const Model& model, const NormStats& stats, const Dataset& ds, int batch_size = 16);

// Predicted absolute temperatures (K), laid out like ds.temperature.
std::vector<float> predict(const Model& model, const NormStats& stats, const Dataset& ds, int batch_size = 16);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace saufno::train
