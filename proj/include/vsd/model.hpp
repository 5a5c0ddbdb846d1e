#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsd/errors.hpp"
#include "vsd/ingest.hpp"
#include "vsd/rng.hpp"

namespace vsd::nn {

struct ConvBlockSpec {
  int out_channels = 16;
  bool pool_spatial = true;   // 2x2 max pool
  bool pool_temporal = false; // additional x2 along time
};

struct ModelConfig {
  int in_frames = 16;
  int in_height = 112;
  int in_width = 112;
  int in_channels = 3;
  std::vector<ConvBlockSpec> blocks{{16, true, false}, {32, true, true}, {64, true, false}, {128, true, true}};
  int head_hidden = 256;

  // 3x3x3 kernels, stride 1, same padding, ReLU, max pooling; global average
  // pool and a linear scalar head follow the blocks.
  void validate() const;

  static ModelConfig tiny();  // small enough for finite-difference checks

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Mean squared error over normalized targets.
template <typename Scalar>
Scalar mse_loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& predictions,
                const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& targets) {
  if (predictions.size() != targets.size())
    throw LengthMismatch("mse_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  if (predictions.size() == 0) throw LengthMismatch("mse_loss: empty inputs");
  return (predictions - targets).squaredNorm() / static_cast<Scalar>(predictions.size());
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mse_loss_grad(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& predictions,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& targets) {
  if (predictions.size() != targets.size())
    throw LengthMismatch("mse_loss_grad: length mismatch");
  return Scalar(2) * (predictions - targets) / static_cast<Scalar>(predictions.size());
}

// The speed-regression network: clip in, one normalized scalar out.
// Training owns an instance exclusively; predict_clip/predict are pure and
// safe to call concurrently on a const instance.
template <typename Scalar>
class SpeedNet {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  SpeedNet(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  Eigen::Index parameter_count() const { return params_.size(); }
  Vec& parameters() { return params_; }
  const Vec& parameters() const { return params_; }

  void set_train_mode(bool on) { train_mode_ = on; }
  bool train_mode() const { return train_mode_; }

  // eval-mode forward; thread-safe on a const instance
  Scalar predict_clip(std::span<const float> clip) const;
  Vec predict(const ingest::ClipBatch& batch) const;

  // training path: forward with tape, then gradient accumulation
  Scalar forward(std::span<const float> clip);
  void backward(Scalar dloss_dpred, Vec& grad);

 private:
  struct Dims {
    int c, t, h, w;
    std::size_t count() const { return static_cast<std::size_t>(c) * t * h * w; }
  };
  struct BlockPlan {
    Dims in, conv, pool;      // conv preserves t/h/w; pool divides
    int pool_t = 1;
    Eigen::Index w_offset = 0, b_offset = 0;
    Eigen::Index kernel_cols = 0;  // Cin * 27
  };

  void check_clip(std::span<const float> clip) const;
  static void clip_to_volume(std::span<const float> clip, const Dims& d, Scalar* out);
  void conv_forward(const BlockPlan& p, const Scalar* in, Scalar* out, std::vector<Scalar>& col_ws) const;
  static void pool_forward(const BlockPlan& p, const Scalar* in, Scalar* out, std::int32_t* argmax);
  Scalar head_forward(const Scalar* pooled, const BlockPlan& last, Vec& gap, Vec& hidden) const;

  ModelConfig cfg_;
  std::vector<BlockPlan> plan_;
  Eigen::Index d1w_ = 0, d1b_ = 0, d2w_ = 0, d2b_ = 0;
  Vec params_;
  bool train_mode_ = false;

  // tape (training path only)
  struct Tape {
    std::vector<std::vector<Scalar>> inputs;   // per block: input volume
    std::vector<std::vector<Scalar>> convs;    // per block: post-ReLU conv output
    std::vector<std::vector<Scalar>> pools;    // per block: pooled output
    std::vector<std::vector<std::int32_t>> argmax;
    Vec gap, hidden;
    Scalar prediction = 0;
    bool valid = false;
  };
  Tape tape_;
  std::vector<Scalar> col_ws_;  // shared im2col workspace
};

extern template class SpeedNet<float>;
extern template class SpeedNet<double>;

}  // namespace vsd::nn
