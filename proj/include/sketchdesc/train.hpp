#pragma once

// Triplet-loss training loop: epochs of in-batch-negative triplets, Adam
// updates, a per-epoch CSV log and last/best checkpoints.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sketchdesc/adam.hpp"
#include "sketchdesc/autodiff.hpp"
#include "sketchdesc/batch.hpp"
#include "sketchdesc/checkpoint.hpp"
#include "sketchdesc/dataset.hpp"
#include "sketchdesc/network.hpp"
#include "sketchdesc/parallel.hpp"

namespace sketchdesc {

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double margin = 1.0;
  int epochs = 100;
  std::uint64_t seed = 0;
  std::string category;  // empty accepts any dataset category
  SamplingMode sampling_mode = SamplingMode::Or;
  std::size_t pairs_per_epoch = 0;  // 0 = every pair once per epoch
  std::size_t val_pairs = 1024;     // cap on pairs scored for the validation loss
  int threads = 1;
  NetConfig net;

  void validate() const {
    require(batch_size >= 2, "batch size must be at least 2");
    require(margin > 0.0, "margin must be positive");
    require(epochs >= 0, "epoch count must be non-negative");
    require(threads >= 1, "thread count must be at least 1");
    adam().validate();
    net.validate();
  }

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }

  nlohmann::json to_json() const {
    return {{"batch_size", batch_size},   {"learning_rate", learning_rate},
            {"adam_beta1", adam_beta1},   {"adam_beta2", adam_beta2},
            {"adam_epsilon", adam_epsilon}, {"margin", margin},
            {"epochs", epochs},           {"seed", seed},
            {"category", category},       {"sampling_mode", to_string(sampling_mode)},
            {"pairs_per_epoch", pairs_per_epoch}, {"val_pairs", val_pairs},
            {"threads", threads},         {"net", net.to_json()}};
  }

  // Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("batch_size", c.batch_size);
    take("learning_rate", c.learning_rate);
    take("adam_beta1", c.adam_beta1);
    take("adam_beta2", c.adam_beta2);
    take("adam_epsilon", c.adam_epsilon);
    take("margin", c.margin);
    take("epochs", c.epochs);
    take("seed", c.seed);
    take("category", c.category);
    take("pairs_per_epoch", c.pairs_per_epoch);
    take("val_pairs", c.val_pairs);
    take("threads", c.threads);
    if (j.contains("sampling_mode")) c.sampling_mode = parse_sampling_mode(j.at("sampling_mode").get<std::string>());
    if (j.contains("net")) c.net = NetConfig::from_json(j.at("net"));
    c.validate();
    return c;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a usable validation split
  double seconds = 0.0;
};

/// Network input for a batch: anchors in rows [0, B), positives in [B, 2B).
inline Tensor<float> batch_input(const TrainingPool& pool, const std::vector<Triplet>& batch, int threads = 1) {
  const int b = static_cast<int>(batch.size());
  Tensor<float> x({2 * b, 4, kPatchSide, kPatchSide});
  parallel_for(2 * batch.size(), threads, [&](std::size_t i) {
    const Triplet& t = batch[i % batch.size()];
    const MultiScalePatch p = pool.patch(i < batch.size() ? t.anchor : t.positive);
    std::copy(p.data.begin(), p.data.end(), x.data() + i * p.data.size());
  });
  return x;
}

/// Rows of (anchor, positive, negative) in the batch_input layout.
inline std::vector<ops::TripletIndex> batch_triplets(const std::vector<Triplet>& batch) {
  const int b = static_cast<int>(batch.size());
  std::vector<ops::TripletIndex> out;
  for (int i = 0; i < b; ++i) {
    require(batch[i].negative_source >= 0 && batch[i].negative_source < b, "triplet has no in-batch negative");
    out.push_back({i, b + i, b + batch[i].negative_source});
  }
  return out;
}

/// Mean triplet loss over batches, normalized with each batch's own statistics.
inline double batch_loss(SketchDescNet<float>& net, const TrainingPool& pool, const std::vector<std::vector<Triplet>>& batches,
                         double margin, int threads = 1) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& batch : batches) {
    Tape<float> tape;
    const Var d = net.forward(tape, batch_input(pool, batch, threads), Mode::BatchStats);
    total += tape.value(ops::triplet_loss(tape, d, batch_triplets(batch), margin))[0] * static_cast<double>(batch.size());
    count += batch.size();
  }
  require(count > 0, "no triplets to score");
  return total / static_cast<double>(count);
}

/// Replaces running statistics with the average of `batches` random batches'
/// statistics, without touching weights.
inline void calibrate_batch_norm(SketchDescNet<float>& net, const TrainingPool& pool, int batches, int batch_size,
                                 std::uint64_t seed, int threads = 1) {
  require(batches >= 1, "calibration needs at least one batch");
  const std::size_t size = std::min<std::size_t>(static_cast<std::size_t>(batch_size), pool.eligible_vertices());
  require(size >= 2, "calibration needs at least 2 eligible vertices");
  const double saved = net.norm_momentum();
  Rng rng = Rng::derive(seed, 0xCA1B);
  for (int i = 0; i < batches; ++i) {
    net.set_norm_momentum(1.0 / (i + 1));
    const auto batch = assemble_batch(pool, size, rng);
    Tape<float> tape;
    net.forward(tape, batch_input(pool, batch, threads), Mode::Train);
  }
  net.set_norm_momentum(saved);
}

class Trainer {
 public:
  Trainer(const Dataset& data, TrainConfig cfg) : cfg_(std::move(cfg)), net_(cfg_.net, cfg_.seed) {
    cfg_.validate();
    require(cfg_.category.empty() || cfg_.category == data.manifest.category,
            "dataset category '" + data.manifest.category + "' does not match requested '" + cfg_.category + "'");
    const auto train_shapes = data.in_split(Split::Train);
    require(!train_shapes.empty(), "dataset has an empty train split");
    train_pool_ = std::make_unique<TrainingPool>(train_shapes, cfg_.sampling_mode);
    require(train_pool_->eligible_vertices() >= 2, "train split has fewer than 2 vertices with valid cross-view pairs");
    const auto val_shapes = data.in_split(Split::Val);
    if (!val_shapes.empty()) {
      auto pool = std::make_unique<TrainingPool>(val_shapes, cfg_.sampling_mode);
      if (pool->eligible_vertices() >= 2) val_pool_ = std::move(pool);
    }
    params_ = net_.parameters();
    adam_ = AdamState<float>(params_);
    epoch_rng_ = Rng::derive(cfg_.seed, 0xE90C);
  }

  const TrainConfig& config() const { return cfg_; }
  SketchDescNet<float>& net() { return net_; }
  const TrainingPool& train_pool() const { return *train_pool_; }
  const TrainingPool* val_pool() const { return val_pool_.get(); }
  int epochs_done() const { return epoch_; }
  std::size_t skipped_steps() const { return skipped_steps_; }
  const AdamState<float>& optimizer() const { return adam_; }

  /// One optimization step; returns the batch loss before the update.
  double step(const std::vector<Triplet>& batch) {
    net_.zero_grad();
    Tape<float> tape;
    const Var d = net_.forward(tape, batch_input(*train_pool_, batch, cfg_.threads), Mode::Train);
    const Var loss = ops::triplet_loss(tape, d, batch_triplets(batch), cfg_.margin);
    const double value = tape.value(loss)[0];
    tape.backward(loss);
    try {
      adam_step(params_, adam_, cfg_.adam());
    } catch (const runtime_failure& e) {
      ++skipped_steps_;
      last_error_ = e.what();
    }
    return value;
  }

  /// One epoch of updates; returns the triplet-weighted mean batch loss.
  double train_epoch() {
    const auto batches = epoch_batches(*train_pool_, static_cast<std::size_t>(cfg_.batch_size), cfg_.pairs_per_epoch, epoch_rng_);
    require(!batches.empty(), "epoch produced no batches");
    const std::size_t skipped_before = skipped_steps_;
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& batch : batches) {
      total += step(batch) * static_cast<double>(batch.size());
      count += batch.size();
    }
    if (skipped_steps_ - skipped_before == batches.size()) throw runtime_failure("every step of the epoch was aborted: " + last_error_);
    ++epoch_;
    return total / static_cast<double>(count);
  }

  /// Loss of the current weights on a fixed sample of training pairs.
  double train_loss_estimate() {
    Rng rng = Rng::derive(cfg_.seed, 0x7A0);
    return batch_loss(net_, *train_pool_, epoch_batches(*train_pool_, cfg_.batch_size, cfg_.pairs_per_epoch, rng), cfg_.margin, cfg_.threads);
  }

  /// Loss on a fixed sample of validation pairs, NaN when there is none.
  double validation_loss() {
    if (!val_pool_) return std::numeric_limits<double>::quiet_NaN();
    Rng rng = Rng::derive(cfg_.seed, 0x7A1);
    return batch_loss(net_, *val_pool_, epoch_batches(*val_pool_, cfg_.batch_size, cfg_.val_pairs, rng), cfg_.margin, cfg_.threads);
  }

 private:
  TrainConfig cfg_;
  SketchDescNet<float> net_;
  std::vector<Parameter<float>*> params_;
  AdamState<float> adam_;
  std::unique_ptr<TrainingPool> train_pool_;
  std::unique_ptr<TrainingPool> val_pool_;
  Rng epoch_rng_;
  int epoch_ = 0;
  std::size_t skipped_steps_ = 0;
  std::string last_error_;
};

inline std::string format_log_row(const EpochRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g", r.epoch, r.train_loss, r.val_loss);
  return buf;
}

/// Metric log; wall times go to a separate file so this one is reproducible.
inline void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write training log " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (const auto& r : rows) out << format_log_row(r) << '\n';
}

inline void write_timing_log(const std::filesystem::path& path, const std::vector<EpochRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write timing log " + path.string());
  out << "epoch,seconds\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.3f\n", r.epoch, r.seconds);
    out << buf;
  }
}

inline std::vector<EpochRecord> read_training_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open training log " + path.string());
  std::string line;
  require(std::getline(in, line) && line == "epoch,train_loss,val_loss", "training log header is malformed");
  std::vector<EpochRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    EpochRecord r;
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 3, "training log row needs 3 fields: " + line);
    try {
      r.epoch = std::stoi(cells[0]);
      r.train_loss = std::stod(cells[1]);
      r.val_loss = cells[2] == "nan" || cells[2] == "-nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[2]);
    } catch (const std::exception&) {
      throw precondition_error("training log row is not numeric: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

struct TrainResult {
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_loss = 0.0;  // validation loss, or train loss without a validation split
  std::size_t skipped_steps = 0;
  std::filesystem::path log_path, timing_path, last_checkpoint, best_checkpoint;
};

/// Full run into out_dir: train_log.csv (row 0 scores the initial weights),
/// train_times.csv, last.ckpt after every epoch and best.ckpt at the lowest
/// validation loss.
inline TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  std::filesystem::create_directories(out_dir);
  Trainer trainer(data, cfg);
  TrainResult res;
  res.log_path = out_dir / "train_log.csv";
  res.timing_path = out_dir / "train_times.csv";
  res.last_checkpoint = out_dir / "last.ckpt";
  res.best_checkpoint = out_dir / "best.ckpt";
  auto record = [&](EpochRecord r) {
    res.log.push_back(r);
    write_training_log(res.log_path, res.log);
    write_timing_log(res.timing_path, res.log);
    if (on_epoch) on_epoch(r);
    const double score = std::isnan(r.val_loss) ? r.train_loss : r.val_loss;
    if (res.log.size() == 1 || score < res.best_loss) {
      res.best_loss = score;
      res.best_epoch = r.epoch;
      save_checkpoint(res.best_checkpoint, trainer.net(), cfg.seed);
    }
    save_checkpoint(res.last_checkpoint, trainer.net(), cfg.seed);
  };
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  record({0, trainer.train_loss_estimate(), trainer.validation_loss(), std::chrono::duration<double>(clock::now() - t0).count()});
  for (int e = 1; e <= cfg.epochs; ++e) {
    t0 = clock::now();
    const double loss = trainer.train_epoch();
    const double val = trainer.validation_loss();
    record({e, loss, val, std::chrono::duration<double>(clock::now() - t0).count()});
  }
  res.skipped_steps = trainer.skipped_steps();
  return res;
}

}  // namespace sketchdesc
