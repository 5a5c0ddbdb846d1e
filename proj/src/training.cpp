#include "vsd/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "vsd/errors.hpp"
#include "vsd/rng.hpp"

namespace vsd::training {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("train config: learning_rate must be positive");
  if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw Error("train config: max_epochs must be >= 1");
  if (early_stop_patience < 1) throw Error("train config: patience must be >= 1");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size},   {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience}, {"seed", seed},   {"beta1", beta1},
          {"beta2", beta2},                 {"adam_eps", adam_eps}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.early_stop_patience = j.value("early_stop_patience", cfg.early_stop_patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.validate();
  return cfg;
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoFailure("TrainHistory: cannot open " + path.string());
  out << "epoch,train_loss,val_loss,wall_s\n";
  out.precision(10);
  for (std::size_t i = 0; i < train_loss.size(); ++i)
    out << (i + 1) << ',' << train_loss[i] << ',' << val_loss[i] << ',' << wall_s[i] << '\n';
  out << "# best_epoch=" << best_epoch << " stopped_epoch=" << stopped_epoch
      << " aborted_non_finite=" << (aborted_non_finite ? 1 : 0) << "\n";
}

bool EarlyStopper::observe(int epoch, double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    return true;
  }
  ++epochs_since_best_;
  return false;
}

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXf::Zero(n)), v_(Eigen::VectorXf::Zero(n)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(Eigen::VectorXf& params, const Eigen::VectorXf& grad) {
  ++t_;
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  m_ = b1 * m_ + (1.f - b1) * grad;
  v_ = b2 * v_ + (1.f - b2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  const float a = static_cast<float>(lr_ * std::sqrt(bc2) / bc1);
  params.array() -= a * m_.array() / (v_.array().sqrt() + static_cast<float>(eps_));
}

// ---------------------------------------------------------------------------
// checkpoint io

void Checkpoint::save(const std::filesystem::path& path) const {
  json j;
  j["model"] = model.to_json();
  j["norm_lo_kmh"] = norm_lo_kmh;
  j["norm_hi_kmh"] = norm_hi_kmh;
  j["pose_tags"] = pose_tags;
  j["trained_ids"] = trained_ids;
  j["seed"] = seed;
  j["job_name"] = job_name;
  std::vector<std::uint8_t> raw(params.size() * sizeof(float));
  std::memcpy(raw.data(), params.data(), raw.size());
  j["params_f32le"] = json::binary(std::move(raw));
  const auto bytes = json::to_cbor(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("Checkpoint::save: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoFailure("Checkpoint::save: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("Checkpoint::load: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw IoFailure("Checkpoint::load: " + path.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  ckpt.model = nn::ModelConfig::from_json(j.at("model"));
  ckpt.norm_lo_kmh = j.at("norm_lo_kmh").get<double>();
  ckpt.norm_hi_kmh = j.at("norm_hi_kmh").get<double>();
  ckpt.pose_tags = j.at("pose_tags").get<std::vector<std::string>>();
  ckpt.trained_ids = j.at("trained_ids").get<std::vector<std::string>>();
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.job_name = j.value("job_name", std::string{});
  const auto& bin = j.at("params_f32le").get_binary();
  ckpt.params.resize(static_cast<Eigen::Index>(bin.size() / sizeof(float)));
  std::memcpy(ckpt.params.data(), bin.data(), bin.size());
  return ckpt;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

double evaluate_mse(nn::SpeedNet<float>& net, const ingest::ClipStore& store,
                    const std::vector<std::string>& ids) {
  double sse = 0.0;
  for (const auto& id : ids) {
    const auto& clip = store.at(id);
    const double pred = net.predict_clip(clip.data);
    const double diff = pred - clip.target_norm;
    sse += diff * diff;
  }
  return sse / static_cast<double>(ids.size());
}

}  // namespace

TrainResult train(const nn::ModelConfig& model_cfg, const ingest::DatasetSplit& split,
                  const ingest::ClipStore& store, const TrainConfig& cfg, const std::string& job_name) {
  cfg.validate();
  if (split.train.empty() || split.val.empty())
    throw DataMissing("train: empty train or val split for job " + job_name);

  // leakage guard: a test id in train/val poisons every later evaluation
  {
    std::set<std::string> seen(split.train.begin(), split.train.end());
    seen.insert(split.val.begin(), split.val.end());
    for (const auto& id : split.test)
      if (seen.count(id))
        throw LeakageDetected("train: test sequence " + id + " appears in train/val for job " + job_name);
  }
  for (const auto& ids : {split.train, split.val})
    for (const auto& id : ids)
      if (!store.contains(id)) throw DataMissing("train: no clip for sequence " + id);

  nn::SpeedNet<float> net(model_cfg, cfg.seed);
  net.set_train_mode(true);
  Adam adam(net.parameter_count(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  EarlyStopper stopper(cfg.early_stop_patience);

  std::vector<std::string> order = split.train;
  std::sort(order.begin(), order.end());

  TrainHistory history;
  Eigen::VectorXf best_params = net.parameters();
  Eigen::VectorXf grad(net.parameter_count());

  std::set<std::string> pose_set;
  for (const auto& id : split.train) pose_set.insert(store.at(id).pose_tag);

  auto make_checkpoint = [&](const Eigen::VectorXf& params) {
    Checkpoint ckpt;
    ckpt.model = model_cfg;
    ckpt.params = params;
    ckpt.pose_tags.assign(pose_set.begin(), pose_set.end());
    ckpt.trained_ids = split.train;
    ckpt.trained_ids.insert(ckpt.trained_ids.end(), split.val.begin(), split.val.end());
    std::sort(ckpt.trained_ids.begin(), ckpt.trained_ids.end());
    ckpt.seed = cfg.seed;
    ckpt.job_name = job_name;
    return ckpt;
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(combine_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double sse = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t batch_end = std::min(pos + static_cast<std::size_t>(cfg.batch_size), order.size());
      const auto batch_n = static_cast<float>(batch_end - pos);
      grad.setZero();
      for (std::size_t i = pos; i < batch_end; ++i) {
        const auto& clip = store.at(order[i]);
        const float pred = net.forward(clip.data);
        const float diff = pred - clip.target_norm;
        sse += static_cast<double>(diff) * diff;
        net.backward(2.f * diff / batch_n, grad);
      }
      adam.step(net.parameters(), grad);
      pos = batch_end;
    }
    const double train_mse = sse / static_cast<double>(order.size());
    const double val_mse = evaluate_mse(net, store, split.val);
    history.train_loss.push_back(train_mse);
    history.val_loss.push_back(val_mse);
    history.wall_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    if (!std::isfinite(train_mse) || !std::isfinite(val_mse)) {
      history.aborted_non_finite = true;
      history.stopped_epoch = epoch;
      history.best_epoch = std::max(stopper.best_epoch(), 1);
      TrainResult last_good{make_checkpoint(best_params), history};
      throw NonFiniteAbort("train: non-finite loss at epoch " + std::to_string(epoch) + " for job " + job_name,
                           std::move(last_good));
    }

    if (stopper.observe(epoch, val_mse)) best_params = net.parameters();
    history.best_epoch = stopper.best_epoch();
    history.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }

  net.parameters() = best_params;  // restore best-validation weights
  net.set_train_mode(false);
  return {make_checkpoint(best_params), history};
}

std::vector<TrainJobOutcome> train_all(const ingest::SplitSet& splits, const ingest::ClipStore& store,
                                       const nn::ModelConfig& model_cfg, const TrainConfig& cfg,
                                       int n_parallel) {
  struct JobSpec {
    std::string name;
    const ingest::DatasetSplit* split;
    std::uint64_t seed;
  };
  std::vector<JobSpec> jobs;
  for (const auto& [pose, split] : splits.per_pose)
    jobs.push_back({pose, &split, cfg.seed + jobs.size()});
  jobs.push_back({"holistic", &splits.holistic, cfg.seed + jobs.size()});

  std::vector<TrainJobOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      outcomes[i].name = jobs[i].name;
      try {
        TrainConfig job_cfg = cfg;
        job_cfg.seed = jobs[i].seed;
        outcomes[i].result = train(model_cfg, *jobs[i].split, store, job_cfg, jobs[i].name);
        outcomes[i].ok = true;
      } catch (const std::exception& e) {
        outcomes[i].ok = false;
        outcomes[i].error = e.what();
      }
    }
  };
  if (n_parallel <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_parallel; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return outcomes;
}

}  // namespace vsd::training
