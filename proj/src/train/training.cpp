#include "saufno/train/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "saufno/error.hpp"
#include "saufno/tensor/autograd.hpp"
#include "saufno/tensor/ops.hpp"

namespace saufno::train {

namespace {

// Welford over every cell of one channel across all samples.
void channel_moments(const std::vector<float>& buf, const Dataset& ds, std::vector<double>& mean,
                     std::vector<double>& stddev, double offset) {
  const int L = ds.header.device_layers;
  const std::size_t plane = static_cast<std::size_t>(ds.header.H) * ds.header.W;
  mean.assign(L, 0.0);
  stddev.assign(L, 1.0);
  for (int l = 0; l < L; ++l) {
    double m = 0, m2 = 0;
    std::int64_t n = 0;
    for (std::int64_t s = 0; s < ds.header.count; ++s) {
      const float* p = buf.data() + (s * L + l) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = p[i] - offset;
        ++n;
        const double d = v - m;
        m += d / n;
        m2 += d * (v - m);
      }
    }
    mean[l] = m;
    const double sd = n > 0 ? std::sqrt(m2 / n) : 0.0;
    stddev[l] = sd > kStdFloor * std::max(1.0, std::abs(m)) ? sd : 1.0;
  }
}

Tensor encode(const std::vector<float>& buf, const Dataset& ds, std::int64_t begin, std::int64_t end,
              const std::vector<double>& mean, const std::vector<double>& stddev, double offset) {
  if (begin < 0 || end > ds.header.count || begin >= end) throw Error("InvalidSlice", "record range out of bounds");
  const int L = ds.header.device_layers;
  if (static_cast<int>(mean.size()) != L)
    throw Error("IncompatibleParameters", "normalization has " + std::to_string(mean.size()) +
                                              " channels, dataset has " + std::to_string(L));
  const std::size_t plane = static_cast<std::size_t>(ds.header.H) * ds.header.W;
  auto t = Tensor::zeros({end - begin, L, ds.header.H, ds.header.W});
  float* out = t.ptr();
  for (std::int64_t s = begin; s < end; ++s)
    for (int l = 0; l < L; ++l) {
      const float* p = buf.data() + (s * L + l) * plane;
      const double inv = 1.0 / stddev[l];
      for (std::size_t i = 0; i < plane; ++i) *out++ = static_cast<float>((p[i] - offset - mean[l]) * inv);
    }
  return t;
}

// Copies the given records of a [n, L, H, W] tensor into a batch.
Tensor gather(const Tensor& all, const std::vector<std::int64_t>& order, std::size_t begin, std::size_t end) {
  const std::int64_t rec = all.numel() / all.dim(0);
  Shape shape = all.shape();
  shape[0] = static_cast<std::int64_t>(end - begin);
  auto t = Tensor::zeros(shape);
  for (std::size_t i = begin; i < end; ++i)
    std::copy_n(all.ptr() + order[i] * rec, rec, t.ptr() + (i - begin) * rec);
  return t;
}

// Epoch-local permutation; Fisher-Yates on a counter-seeded engine so that a
// resumed run sees the same order.
std::vector<std::int64_t> epoch_order(std::int64_t n, std::uint64_t seed, int epoch) {
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  for (std::int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % static_cast<std::uint64_t>(i + 1)]);
  return order;
}

void check_compatible(const nn::ModelConfig& mc, const NormStats& stats, const Dataset& ds) {
  if (ds.header.count < 1) throw Error("InvalidDataset", "training set is empty");
  if (mc.in_channels != ds.header.device_layers || mc.out_channels != ds.header.device_layers)
    throw Error("IncompatibleParameters", "model expects " + std::to_string(mc.in_channels) +
                                              " device layers, dataset has " + std::to_string(ds.header.device_layers));
  if (stats.channels() != ds.header.device_layers)
    throw Error("IncompatibleParameters", "normalization statistics do not match the dataset channels");
}

void run_epochs(Model& model, Adam& opt, TrainingMeta& meta, int epochs, const Dataset& train_set,
                const Dataset* test_set, const TrainHooks& hooks) {
  const auto& cfg = meta.train;
  const std::int64_t n = train_set.header.count;
  const Tensor inputs = encode_inputs(train_set, 0, n, meta.stats);
  const Tensor targets = encode_targets(train_set, 0, n, meta.stats);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int e = 0; e < epochs; ++e) {
    const int epoch = meta.epoch;
    opt.set_lr(cfg.lr_at(epoch));
    const auto order = epoch_order(n, cfg.seed, epoch);
    double total = 0;
    int batch = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += bs, ++batch) {
      const std::size_t b1 = std::min(order.size(), b0 + bs);
      const Tensor x = gather(inputs, order, b0, b1);
      const Tensor y = gather(targets, order, b0, b1);
      opt.zero_grad();
      const Tensor loss = l2_loss(model.forward(x), y);
      const double value = loss.item();
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
      if (!std::isfinite(value)) throw Error("NonFiniteLoss", "loss is " + std::to_string(value) + " at " + where);
      backward(loss);
      try {
        opt.step();
      } catch (const NonFiniteGradient& g) {
        throw Error("NonFiniteLoss", std::string(g.what()) + " at " + where);
      }
      total += value * static_cast<double>(b1 - b0);
    }
    const double train_loss = total / static_cast<double>(n);
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    if (test_set && test_set->header.count > 0 && cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)
      test_loss = evaluate_loss(model, meta.stats, *test_set);
    meta.train_loss.push_back(train_loss);
    meta.test_loss.push_back(test_loss);
    meta.epoch = epoch + 1;
    if (hooks.log)
      *hooks.log << meta.stage << " epoch " << meta.epoch << " lr " << opt.lr() << " train " << train_loss
                 << " test " << test_loss << '\n';
    if (hooks.on_epoch) hooks.on_epoch(epoch, train_loss, test_loss);
  }
}

AdamOptions adam_options(const TrainConfig& cfg) {
  AdamOptions o;
  o.lr = cfg.lr;
  o.weight_decay = cfg.weight_decay;
  return o;
}

Checkpoint snapshot(const Model& model, const Adam& opt, const TrainingMeta& meta) {
  Checkpoint c;
  c.config = model.config();
  for (const auto& p : model.parameters()) c.parameters.push_back({p.name, p.tensor.clone()});
  c.optimizer = opt.state();
  c.meta = meta;
  return c;
}

}  // namespace

NormStats compute_stats(const Dataset& ds) {
  if (ds.header.count < 1) throw Error("InvalidDataset", "cannot compute statistics of an empty dataset");
  NormStats s;
  channel_moments(ds.power, ds, s.in_mean, s.in_std, 0.0);
  channel_moments(ds.temperature, ds, s.out_mean, s.out_std, ds.header.t_a);
  return s;
}

nlohmann::json stats_to_json(const NormStats& s) {
  return {{"in_mean", s.in_mean}, {"in_std", s.in_std}, {"out_mean", s.out_mean}, {"out_std", s.out_std}};
}

NormStats stats_from_json(const nlohmann::json& j) {
  NormStats s;
  j.at("in_mean").get_to(s.in_mean);
  j.at("in_std").get_to(s.in_std);
  j.at("out_mean").get_to(s.out_mean);
  j.at("out_std").get_to(s.out_std);
  const auto L = s.in_mean.size();
  if (s.in_std.size() != L || s.out_mean.size() != L || s.out_std.size() != L)
    throw Error("InvalidConfig", "normalization arrays differ in length");
  return s;
}

Tensor encode_inputs(const Dataset& ds, std::int64_t begin, std::int64_t end, const NormStats& s) {
  return encode(ds.power, ds, begin, end, s.in_mean, s.in_std, 0.0);
}

Tensor encode_targets(const Dataset& ds, std::int64_t begin, std::int64_t end, const NormStats& s) {
  return encode(ds.temperature, ds, begin, end, s.out_mean, s.out_std, ds.header.t_a);
}

Tensor l2_loss(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape())
    throw ShapeError("l2_loss: " + shape_str(pred.shape()) + " vs " + shape_str(truth.shape()));
  return ops::mse_loss(pred, truth);
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error("InvalidConfig", m); };
  if (!(lr >= 0) || !std::isfinite(lr)) bad("lr must be >= 0");
  if (!(weight_decay >= 0)) bad("weight_decay must be >= 0");
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(decay_factor > 0) || decay_factor > 1) bad("decay_factor must lie in (0, 1]");
  if (decay_interval < 1) bad("decay_interval must be >= 1");
  if (!(finetune_lr_ratio > 0) || finetune_lr_ratio >= 1) bad("finetune_lr_ratio must lie in (0, 1)");
  if (eval_every < 0) bad("eval_every must be >= 0");
}

double TrainConfig::lr_at(int epoch) const { return lr * std::pow(decay_factor, epoch / decay_interval); }

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"decay_factor", c.decay_factor},
          {"decay_interval", c.decay_interval},
          {"finetune_lr_ratio", c.finetune_lr_ratio},
          {"seed", c.seed},
          {"eval_every", c.eval_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  static const std::set<std::string> known{"lr",           "weight_decay",   "epochs",
                                           "batch_size",   "decay_factor",   "decay_interval",
                                           "finetune_lr_ratio", "seed",      "eval_every"};
  if (!j.is_object()) throw Error("InvalidConfig", "train config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw Error("InvalidConfig", "train config: unknown key '" + key + "'");
  try {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.decay_interval = j.value("decay_interval", c.decay_interval);
    c.finetune_lr_ratio = j.value("finetune_lr_ratio", c.finetune_lr_ratio);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidConfig", std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

Model Checkpoint::model() const {
  Model m(config, 0);
  m.load_values(parameters);
  return m;
}

std::string dataset_id(const Dataset& ds) {
  const auto& h = ds.header;
  return h.chip_id + "-" + std::to_string(h.H) + "x" + std::to_string(h.W) + "-n" + std::to_string(h.count) +
         "-seed" + std::to_string(h.seed);
}

Checkpoint train(const nn::ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train_set,
                 const Dataset* test_set, const TrainHooks& hooks) {
  cfg.validate();
  TrainingMeta meta;
  meta.dataset_id = dataset_id(train_set);
  meta.stats = compute_stats(train_set);
  meta.t_a = train_set.header.t_a;
  meta.train = cfg;
  Model model(model_cfg, cfg.seed);
  check_compatible(model_cfg, meta.stats, train_set);
  Adam opt(model.parameters(), adam_options(cfg));
  run_epochs(model, opt, meta, cfg.epochs, train_set, test_set, hooks);
  return snapshot(model, opt, meta);
}

Checkpoint resume(const Checkpoint& ckpt, int epochs, const Dataset& train_set, const Dataset* test_set,
                  const TrainHooks& hooks) {
  ckpt.meta.train.validate();
  Model model = ckpt.model();
  check_compatible(ckpt.config, ckpt.meta.stats, train_set);
  Adam opt(model.parameters(), adam_options(ckpt.meta.train));
  opt.load_state(ckpt.optimizer);
  TrainingMeta meta = ckpt.meta;
  run_epochs(model, opt, meta, epochs, train_set, test_set, hooks);
  return snapshot(model, opt, meta);
}

Checkpoint finetune(const Checkpoint& pretrained, const TrainConfig& cfg, const Dataset& high_set,
                    const Dataset* test_set, const TrainHooks& hooks) {
  TrainConfig stage = cfg;
  stage.lr = pretrained.meta.train.lr * cfg.finetune_lr_ratio;
  stage.validate();
  if (!(stage.lr < pretrained.meta.train.lr) && pretrained.meta.train.lr > 0)
    throw Error("InvalidConfig", "fine-tune lr must be below the pretraining lr");
  Model model = pretrained.model();
  check_compatible(pretrained.config, pretrained.meta.stats, high_set);
  Adam opt(model.parameters(), adam_options(stage));
  TrainingMeta meta;
  meta.dataset_id = dataset_id(high_set);
  meta.stage = "finetune";
  meta.stats = pretrained.meta.stats;
  meta.t_a = pretrained.meta.t_a;
  meta.train = stage;
  run_epochs(model, opt, meta, stage.epochs, high_set, test_set, hooks);
  return snapshot(model, opt, meta);
}

double evaluate_loss(const Model& model, const NormStats& stats, const Dataset& ds, int batch_size) {
  NoGradGuard guard;
  double total = 0;
  const std::int64_t n = ds.header.count;
  for (std::int64_t b0 = 0; b0 < n; b0 += batch_size) {
    const std::int64_t b1 = std::min<std::int64_t>(n, b0 + batch_size);
    const Tensor loss = l2_loss(model.forward(encode_inputs(ds, b0, b1, stats)), encode_targets(ds, b0, b1, stats));
    total += loss.item() * static_cast<double>(b1 - b0);
  }
  return total / static_cast<double>(n);
}

std::vector<float> predict(const Model& model, const NormStats& stats, const Dataset& ds, int batch_size) {
  NoGradGuard guard;
  const int L = ds.header.device_layers;
  const std::size_t plane = static_cast<std::size_t>(ds.header.H) * ds.header.W;
  std::vector<float> out(ds.power.size());
  const std::int64_t n = ds.header.count;
  for (std::int64_t b0 = 0; b0 < n; b0 += batch_size) {
    const std::int64_t b1 = std::min<std::int64_t>(n, b0 + batch_size);
    const Tensor y = model.forward(encode_inputs(ds, b0, b1, stats));
    const float* p = y.ptr();
    float* dst = out.data() + b0 * L * plane;
    for (std::int64_t s = b0; s < b1; ++s)
      for (int l = 0; l < L; ++l)
        for (std::size_t i = 0; i < plane; ++i)
          *dst++ = static_cast<float>(*p++ * stats.out_std[l] + stats.out_mean[l] + ds.header.t_a);
  }
  return out;
}

}  // namespace saufno::train
