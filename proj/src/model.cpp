#include "vsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vsd::nn {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config

void ModelConfig::validate() const {
  if (in_frames < 1 || in_height < 1 || in_width < 1 || in_channels < 1)
    throw ShapeMismatch("model config: non-positive input dimensions");
  if (blocks.empty()) throw ShapeMismatch("model config: at least one conv block required");
  if (head_hidden < 1) throw ShapeMismatch("model config: head_hidden must be positive");
  int t = in_frames, h = in_height, w = in_width;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].out_channels < 1) throw ShapeMismatch("model config: non-positive channel count");
    if (blocks[b].pool_spatial) {
      h /= 2;
      w /= 2;
    }
    if (blocks[b].pool_temporal) t /= 2;
    if (t < 1 || h < 1 || w < 1) {
      std::ostringstream os;
      os << "model config: block " << b << " reduces the volume to " << t << "x" << h << "x" << w;
      throw ShapeMismatch(os.str());
    }
  }
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.in_frames = 4;
  cfg.in_height = 8;
  cfg.in_width = 8;
  cfg.blocks = {{6, true, false}, {8, true, true}};
  cfg.head_hidden = 16;
  return cfg;
}

json ModelConfig::to_json() const {
  json blocks_j = json::array();
  for (const auto& b : blocks)
    blocks_j.push_back({{"out_channels", b.out_channels},
                        {"pool_spatial", b.pool_spatial},
                        {"pool_temporal", b.pool_temporal}});
  return {{"in_frames", in_frames},   {"in_height", in_height},   {"in_width", in_width},
          {"in_channels", in_channels}, {"blocks", blocks_j},     {"head_hidden", head_hidden}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig cfg;
  cfg.in_frames = j.at("in_frames").get<int>();
  cfg.in_height = j.at("in_height").get<int>();
  cfg.in_width = j.at("in_width").get<int>();
  cfg.in_channels = j.value("in_channels", 3);
  cfg.blocks.clear();
  for (const auto& b : j.at("blocks"))
    cfg.blocks.push_back({b.at("out_channels").get<int>(), b.at("pool_spatial").get<bool>(),
                          b.at("pool_temporal").get<bool>()});
  cfg.head_hidden = j.at("head_hidden").get<int>();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// network

namespace {

// volume layout: plane (t * C + c) of H*W contiguous scalars
template <typename S>
using MatCM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename S>
using MapCM = Eigen::Map<MatCM<S>>;
template <typename S>
using ConstMapCM = Eigen::Map<const MatCM<S>>;

}  // namespace

template <typename Scalar>
SpeedNet<Scalar>::SpeedNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Eigen::Index offset = 0;
  Dims cur{cfg_.in_channels, cfg_.in_frames, cfg_.in_height, cfg_.in_width};
  std::size_t max_col = 0;
  for (const auto& spec : cfg_.blocks) {
    BlockPlan p;
    p.in = cur;
    p.conv = {spec.out_channels, cur.t, cur.h, cur.w};
    p.pool_t = spec.pool_temporal ? 2 : 1;
    p.pool = {spec.out_channels, cur.t / p.pool_t, spec.pool_spatial ? cur.h / 2 : cur.h,
              spec.pool_spatial ? cur.w / 2 : cur.w};
    p.kernel_cols = static_cast<Eigen::Index>(cur.c) * 27;
    p.w_offset = offset;
    offset += p.kernel_cols * spec.out_channels;
    p.b_offset = offset;
    offset += spec.out_channels;
    max_col = std::max(max_col, static_cast<std::size_t>(cur.h) * cur.w * p.kernel_cols);
    plan_.push_back(p);
    cur = p.pool;
  }
  d1w_ = offset;
  offset += static_cast<Eigen::Index>(cfg_.head_hidden) * cur.c;
  d1b_ = offset;
  offset += cfg_.head_hidden;
  d2w_ = offset;
  offset += cfg_.head_hidden;
  d2b_ = offset;
  offset += 1;

  params_.resize(offset);
  col_ws_.resize(max_col);

  Rng rng(combine_seed(seed, 0x6d6f64656cULL));
  for (const auto& p : plan_) {
    const double std_w = std::sqrt(2.0 / static_cast<double>(p.kernel_cols));
    for (Eigen::Index i = 0; i < p.kernel_cols * p.conv.c; ++i)
      params_[p.w_offset + i] = static_cast<Scalar>(rng.normal(0.0, std_w));
    for (int i = 0; i < p.conv.c; ++i) params_[p.b_offset + i] = Scalar(0);
  }
  const Dims& last = plan_.back().pool;
  const double std_d1 = std::sqrt(2.0 / static_cast<double>(last.c));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(cfg_.head_hidden) * last.c; ++i)
    params_[d1w_ + i] = static_cast<Scalar>(rng.normal(0.0, std_d1));
  for (int i = 0; i < cfg_.head_hidden; ++i) params_[d1b_ + i] = Scalar(0);
  const double std_d2 = std::sqrt(2.0 / static_cast<double>(cfg_.head_hidden));
  for (int i = 0; i < cfg_.head_hidden; ++i) params_[d2w_ + i] = static_cast<Scalar>(rng.normal(0.0, std_d2));
  params_[d2b_] = Scalar(0);
}

template <typename Scalar>
void SpeedNet<Scalar>::check_clip(std::span<const float> clip) const {
  const std::size_t expected =
      static_cast<std::size_t>(cfg_.in_frames) * cfg_.in_height * cfg_.in_width * cfg_.in_channels;
  if (clip.size() != expected)
    throw ShapeMismatch("SpeedNet: clip has " + std::to_string(clip.size()) + " values, expected " +
                        std::to_string(expected));
}

// clip: F,H,W,C interleaved -> volume planes (t*C + c)
template <typename Scalar>
void SpeedNet<Scalar>::clip_to_volume(std::span<const float> clip, const Dims& d, Scalar* out) {
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (int t = 0; t < d.t; ++t) {
    const float* src = clip.data() + static_cast<std::size_t>(t) * hw * d.c;
    for (int c = 0; c < d.c; ++c) {
      Scalar* dst = out + (static_cast<std::size_t>(t) * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = static_cast<Scalar>(src[i * d.c + c]);
    }
  }
}

namespace {

// col: (H*W) x (Cin*27) column-major; column ((ci*3+kt)*3+ky)*3+kx holds the
// shifted input plane for output frame `to` (zero padded borders).
template <typename Scalar>
void im2col(const Scalar* vol, int cin, int t_dim, int h, int w, int to, Scalar* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::fill(col, col + hw * static_cast<std::size_t>(cin) * 27, Scalar(0));
  for (int ci = 0; ci < cin; ++ci) {
    for (int kt = 0; kt < 3; ++kt) {
      const int ti = to + kt - 1;
      if (ti < 0 || ti >= t_dim) continue;
      const Scalar* plane = vol + (static_cast<std::size_t>(ti) * cin + ci) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        const int y_lo = std::max(0, 1 - ky);
        const int y_hi = h - 1 + std::min(0, 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          Scalar* dst_col = col + (static_cast<std::size_t>(((ci * 3 + kt) * 3 + ky)) * 3 + kx) * hw;
          const int x_lo = std::max(0, 1 - kx);
          const int x_hi = w - 1 + std::min(0, 1 - kx);
          const int len = x_hi - x_lo + 1;
          if (len <= 0) continue;
          for (int y = y_lo; y <= y_hi; ++y) {
            const Scalar* src = plane + static_cast<std::size_t>(y + ky - 1) * w + (x_lo + kx - 1);
            std::copy(src, src + len, dst_col + static_cast<std::size_t>(y) * w + x_lo);
          }
        }
      }
    }
  }
}

// scatter-add of dcol back into the input gradient volume
template <typename Scalar>
void col2im_add(const Scalar* dcol, int cin, int t_dim, int h, int w, int to, Scalar* dvol) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    for (int kt = 0; kt < 3; ++kt) {
      const int ti = to + kt - 1;
      if (ti < 0 || ti >= t_dim) continue;
      Scalar* plane = dvol + (static_cast<std::size_t>(ti) * cin + ci) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        const int y_lo = std::max(0, 1 - ky);
        const int y_hi = h - 1 + std::min(0, 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const Scalar* src_col = dcol + (static_cast<std::size_t>(((ci * 3 + kt) * 3 + ky)) * 3 + kx) * hw;
          const int x_lo = std::max(0, 1 - kx);
          const int x_hi = w - 1 + std::min(0, 1 - kx);
          const int len = x_hi - x_lo + 1;
          if (len <= 0) continue;
          for (int y = y_lo; y <= y_hi; ++y) {
            Scalar* dst = plane + static_cast<std::size_t>(y + ky - 1) * w + (x_lo + kx - 1);
            const Scalar* src = src_col + static_cast<std::size_t>(y) * w + x_lo;
            for (int i = 0; i < len; ++i) dst[i] += src[i];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
void SpeedNet<Scalar>::conv_forward(const BlockPlan& p, const Scalar* in, Scalar* out,
                                    std::vector<Scalar>& col_ws) const {
  const std::size_t hw = static_cast<std::size_t>(p.in.h) * p.in.w;
  ConstMapCM<Scalar> weights(params_.data() + p.w_offset, p.kernel_cols, p.conv.c);
  for (int t = 0; t < p.conv.t; ++t) {
    im2col(in, p.in.c, p.in.t, p.in.h, p.in.w, t, col_ws.data());
    ConstMapCM<Scalar> col(col_ws.data(), static_cast<Eigen::Index>(hw), p.kernel_cols);
    MapCM<Scalar> out_t(out + static_cast<std::size_t>(t) * p.conv.c * hw, static_cast<Eigen::Index>(hw),
                        p.conv.c);
    out_t.noalias() = col * weights;
    for (int co = 0; co < p.conv.c; ++co)
      out_t.col(co) = (out_t.col(co).array() + params_[p.b_offset + co]).max(Scalar(0));
  }
}

template <typename Scalar>
void SpeedNet<Scalar>::pool_forward(const BlockPlan& p, const Scalar* in, Scalar* out, std::int32_t* argmax) {
  const std::size_t hw_in = static_cast<std::size_t>(p.conv.h) * p.conv.w;
  const std::size_t hw_out = static_cast<std::size_t>(p.pool.h) * p.pool.w;
  const int sx = p.conv.w / p.pool.w;  // 1 or 2
  const int sy = p.conv.h / p.pool.h;
  for (int to = 0; to < p.pool.t; ++to) {
    for (int c = 0; c < p.pool.c; ++c) {
      Scalar* dst = out + (static_cast<std::size_t>(to) * p.pool.c + c) * hw_out;
      std::int32_t* amax = argmax + (static_cast<std::size_t>(to) * p.pool.c + c) * hw_out;
      for (int yo = 0; yo < p.pool.h; ++yo) {
        for (int xo = 0; xo < p.pool.w; ++xo) {
          Scalar best = -std::numeric_limits<Scalar>::infinity();
          std::int64_t best_idx = 0;
          for (int dt = 0; dt < p.pool_t; ++dt) {
            const int ti = to * p.pool_t + dt;
            const Scalar* plane = in + (static_cast<std::size_t>(ti) * p.conv.c + c) * hw_in;
            for (int dy = 0; dy < sy; ++dy) {
              for (int dx = 0; dx < sx; ++dx) {
                const std::int64_t idx = static_cast<std::int64_t>(yo * sy + dy) * p.conv.w + xo * sx + dx;
                const Scalar v = plane[idx];
                if (v > best) {
                  best = v;
                  best_idx = (static_cast<std::int64_t>(ti) * p.conv.c + c) * static_cast<std::int64_t>(hw_in) + idx;
                }
              }
            }
          }
          dst[static_cast<std::size_t>(yo) * p.pool.w + xo] = best;
          amax[static_cast<std::size_t>(yo) * p.pool.w + xo] = static_cast<std::int32_t>(best_idx);
        }
      }
    }
  }
}

template <typename Scalar>
Scalar SpeedNet<Scalar>::head_forward(const Scalar* pooled, const BlockPlan& last, Vec& gap, Vec& hidden) const {
  const std::size_t hw = static_cast<std::size_t>(last.pool.h) * last.pool.w;
  const int c = last.pool.c;
  gap.resize(c);
  gap.setZero();
  for (int t = 0; t < last.pool.t; ++t)
    for (int ci = 0; ci < c; ++ci) {
      const Scalar* plane = pooled + (static_cast<std::size_t>(t) * c + ci) * hw;
      Scalar s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += plane[i];
      gap[ci] += s;
    }
  gap /= static_cast<Scalar>(last.pool.t * hw);

  ConstMapCM<Scalar> w1(params_.data() + d1w_, c, cfg_.head_hidden);  // (in x hidden), column-major
  Eigen::Map<const Vec> b1(params_.data() + d1b_, cfg_.head_hidden);
  hidden = (w1.transpose() * gap + b1).cwiseMax(Scalar(0));
  Eigen::Map<const Vec> w2(params_.data() + d2w_, cfg_.head_hidden);
  return w2.dot(hidden) + params_[d2b_];
}

template <typename Scalar>
Scalar SpeedNet<Scalar>::predict_clip(std::span<const float> clip) const {
  check_clip(clip);
  std::vector<Scalar> col(col_ws_.size());
  std::vector<Scalar> a(plan_.front().in.count());
  clip_to_volume(clip, plan_.front().in, a.data());
  std::vector<Scalar> conv_buf, pool_buf;
  std::vector<std::int32_t> argmax;
  for (const auto& p : plan_) {
    conv_buf.resize(p.conv.count());
    conv_forward(p, a.data(), conv_buf.data(), col);
    pool_buf.resize(p.pool.count());
    argmax.resize(p.pool.count());
    pool_forward(p, conv_buf.data(), pool_buf.data(), argmax.data());
    a.swap(pool_buf);
    a.resize(p.pool.count());
  }
  Vec gap, hidden;
  return head_forward(a.data(), plan_.back(), gap, hidden);
}

template <typename Scalar>
typename SpeedNet<Scalar>::Vec SpeedNet<Scalar>::predict(const ingest::ClipBatch& batch) const {
  if (batch.frames != cfg_.in_frames || batch.height != cfg_.in_height || batch.width != cfg_.in_width ||
      batch.channels != cfg_.in_channels)
    throw ShapeMismatch("SpeedNet::predict: batch shape does not match the model input");
  Vec out(batch.batch);
  for (int b = 0; b < batch.batch; ++b) {
    out[b] = predict_clip(batch.clip(b));
    if (!std::isfinite(static_cast<double>(out[b])))
      throw NonFiniteLoss("SpeedNet::predict: non-finite output");
  }
  return out;
}

template <typename Scalar>
Scalar SpeedNet<Scalar>::forward(std::span<const float> clip) {
  check_clip(clip);
  const std::size_t n_blocks = plan_.size();
  tape_.inputs.resize(n_blocks);
  tape_.convs.resize(n_blocks);
  tape_.pools.resize(n_blocks);
  tape_.argmax.resize(n_blocks);

  tape_.inputs[0].resize(plan_[0].in.count());
  clip_to_volume(clip, plan_[0].in, tape_.inputs[0].data());
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const auto& p = plan_[b];
    tape_.convs[b].resize(p.conv.count());
    conv_forward(p, tape_.inputs[b].data(), tape_.convs[b].data(), col_ws_);
    tape_.pools[b].resize(p.pool.count());
    tape_.argmax[b].resize(p.pool.count());
    pool_forward(p, tape_.convs[b].data(), tape_.pools[b].data(), tape_.argmax[b].data());
    if (b + 1 < n_blocks) tape_.inputs[b + 1] = tape_.pools[b];
  }
  tape_.prediction = head_forward(tape_.pools.back().data(), plan_.back(), tape_.gap, tape_.hidden);
  tape_.valid = true;
  return tape_.prediction;
}

template <typename Scalar>
void SpeedNet<Scalar>::backward(Scalar dloss_dpred, Vec& grad) {
  if (!tape_.valid) throw Error("SpeedNet::backward: no forward pass recorded");
  if (grad.size() != params_.size()) {
    grad.resize(params_.size());
    grad.setZero();
  }

  const BlockPlan& last = plan_.back();
  const int c_last = last.pool.c;
  const std::size_t hw_last = static_cast<std::size_t>(last.pool.h) * last.pool.w;

  // head
  Eigen::Map<Vec> d_w2(grad.data() + d2w_, cfg_.head_hidden);
  d_w2.noalias() += dloss_dpred * tape_.hidden;
  grad[d2b_] += dloss_dpred;
  Eigen::Map<const Vec> w2(params_.data() + d2w_, cfg_.head_hidden);
  Vec dhidden = dloss_dpred * w2;
  for (int i = 0; i < cfg_.head_hidden; ++i)
    if (tape_.hidden[i] <= Scalar(0)) dhidden[i] = Scalar(0);

  MapCM<Scalar> d_w1(grad.data() + d1w_, c_last, cfg_.head_hidden);
  d_w1.noalias() += tape_.gap * dhidden.transpose();
  Eigen::Map<Vec>(grad.data() + d1b_, cfg_.head_hidden) += dhidden;
  ConstMapCM<Scalar> w1(params_.data() + d1w_, c_last, cfg_.head_hidden);
  Vec dgap = w1 * dhidden;

  // GAP broadcast
  std::vector<Scalar> dpool(last.pool.count());
  const Scalar inv = Scalar(1) / static_cast<Scalar>(last.pool.t * hw_last);
  for (int t = 0; t < last.pool.t; ++t)
    for (int ci = 0; ci < c_last; ++ci) {
      Scalar* plane = dpool.data() + (static_cast<std::size_t>(t) * c_last + ci) * hw_last;
      const Scalar v = dgap[ci] * inv;
      for (std::size_t i = 0; i < hw_last; ++i) plane[i] = v;
    }

  std::vector<Scalar> dconv, dcol, dinput;
  for (std::size_t bi = plan_.size(); bi-- > 0;) {
    const auto& p = plan_[bi];
    const std::size_t hw_in = static_cast<std::size_t>(p.in.h) * p.in.w;
    const std::size_t hw_conv = static_cast<std::size_t>(p.conv.h) * p.conv.w;

    // pool backward + ReLU mask
    dconv.assign(p.conv.count(), Scalar(0));
    const auto& amax = tape_.argmax[bi];
    for (std::size_t i = 0; i < dpool.size(); ++i) dconv[static_cast<std::size_t>(amax[i])] += dpool[i];
    const auto& conv_act = tape_.convs[bi];
    for (std::size_t i = 0; i < dconv.size(); ++i)
      if (conv_act[i] <= Scalar(0)) dconv[i] = Scalar(0);

    // conv backward
    MapCM<Scalar> d_weights(grad.data() + p.w_offset, p.kernel_cols, p.conv.c);
    ConstMapCM<Scalar> weights(params_.data() + p.w_offset, p.kernel_cols, p.conv.c);
    dcol.resize(hw_in * static_cast<std::size_t>(p.kernel_cols));
    const bool need_dinput = bi > 0;
    if (need_dinput) dinput.assign(p.in.count(), Scalar(0));
    for (int t = 0; t < p.conv.t; ++t) {
      ConstMapCM<Scalar> d_out_t(dconv.data() + static_cast<std::size_t>(t) * p.conv.c * hw_conv,
                                 static_cast<Eigen::Index>(hw_conv), p.conv.c);
      im2col(tape_.inputs[bi].data(), p.in.c, p.in.t, p.in.h, p.in.w, t, col_ws_.data());
      ConstMapCM<Scalar> col(col_ws_.data(), static_cast<Eigen::Index>(hw_in), p.kernel_cols);
      d_weights.noalias() += col.transpose() * d_out_t;
      for (int co = 0; co < p.conv.c; ++co) grad[p.b_offset + co] += d_out_t.col(co).sum();
      if (need_dinput) {
        MapCM<Scalar> dcol_m(dcol.data(), static_cast<Eigen::Index>(hw_in), p.kernel_cols);
        dcol_m.noalias() = d_out_t * weights.transpose();
        col2im_add(dcol.data(), p.in.c, p.in.t, p.in.h, p.in.w, t, dinput.data());
      }
    }
    if (need_dinput) dpool.swap(dinput);
  }
  tape_.valid = false;
}

template class SpeedNet<float>;
template class SpeedNet<double>;

}  // namespace vsd::nn
