#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsd/ingest.hpp"
#include "vsd/model.hpp"

namespace vsd::training {

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 5;
  int max_epochs = 100;
  int early_stop_patience = 7;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch, normalized-MSE
  std::vector<double> val_loss;
  std::vector<double> wall_s;
  int best_epoch = 0;     // 1-based
  int stopped_epoch = 0;  // 1-based
  bool aborted_non_finite = false;

  void save_csv(const std::filesystem::path& path) const;
};

// Validation-loss watchdog: strict-improvement bookkeeping with best-epoch
// restoration left to the caller.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  // returns true when this epoch improved on the best value
  bool observe(int epoch, double val_loss);
  bool should_stop() const { return epochs_since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int epochs_since_best_ = 0;
};

class Adam {
 public:
  Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps);
  void step(Eigen::VectorXf& params, const Eigen::VectorXf& grad);

 private:
  Eigen::VectorXf m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Self-describing model artifact: parameters, architecture, normalization
// constants, and full training provenance for leakage checks downstream.
struct Checkpoint {
  nn::ModelConfig model;
  Eigen::VectorXf params;
  double norm_lo_kmh = ingest::kSpeedMinKmh;
  double norm_hi_kmh = ingest::kSpeedMaxKmh;
  std::vector<std::string> pose_tags;        // poses seen in training
  std::vector<std::string> trained_ids;      // train + val sequence ids
  std::uint64_t seed = 0;
  std::string job_name;

  void save(const std::filesystem::path& path) const;  // CBOR
  static Checkpoint load(const std::filesystem::path& path);
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

// Thrown when a loss turns non-finite; carries the last-good state.
struct NonFiniteAbort : NonFiniteLoss {
  NonFiniteAbort(const std::string& msg, TrainResult last_good)
      : NonFiniteLoss(msg), result(std::move(last_good)) {}
  TrainResult result;
};

// Paper recipe: Adam @3e-4, batch 5, MSE on normalized speeds, early stopping
// with patience 7 on validation loss, best-epoch weights restored at exit.
TrainResult train(const nn::ModelConfig& model_cfg, const ingest::DatasetSplit& split,
                  const ingest::ClipStore& store, const TrainConfig& cfg, const std::string& job_name = "model");

struct TrainJob {
  std::string name;                 // pose tag or "holistic"
  ingest::DatasetSplit split;
  std::vector<std::string> poses;   // provenance
};

struct TrainJobOutcome {
  std::string name;
  bool ok = false;
  std::string error;
  TrainResult result;
};

// One job per pose plus the holistic job; jobs run with seeds cfg.seed + index
// and failures do not stop the remaining jobs.
std::vector<TrainJobOutcome> train_all(const ingest::SplitSet& splits, const ingest::ClipStore& store,
                                       const nn::ModelConfig& model_cfg, const TrainConfig& cfg,
                                       int n_parallel = 1);

}  // namespace vsd::training
