#include "vsd/ingest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "vsd/errors.hpp"
#include "vsd/rng.hpp"

namespace vsd::ingest {

using nlohmann::json;

// ---------------------------------------------------------------------------
// manifest

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoFailure("write_manifest: cannot open " + path.string());
  out << "sequence_id,pose_tag,json_path,frame_dir,n_frames,speed_mps\n";
  out.precision(17);
  for (const auto& e : manifest.entries)
    out << e.sequence_id << ',' << e.pose_tag << ',' << e.json_path << ',' << e.frame_dir << ','
        << e.n_frames << ',' << e.speed_mps << '\n';
  if (!out) throw IoFailure("write_manifest: write failed for " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("read_manifest: cannot open " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw IoFailure("read_manifest: empty file " + path.string());
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() == 5) cols.insert(cols.begin() + 3, "");  // empty frame_dir collapses
    if (cols.size() != 6)
      throw IoFailure("read_manifest: bad row at line " + std::to_string(line_no) + " in " + path.string());
    ManifestEntry e;
    e.sequence_id = cols[0];
    e.pose_tag = cols[1];
    e.json_path = cols[2];
    e.frame_dir = cols[3];
    e.n_frames = std::stoi(cols[4]);
    e.speed_mps = std::stod(cols[5]);
    m.entries.push_back(std::move(e));
  }
  return m;
}

// ---------------------------------------------------------------------------
// sequences

std::vector<SpeedSequence> segment_sequences(const std::vector<FrameRecord>& records) {
  std::vector<SpeedSequence> out;
  std::size_t start = 0;
  while (start < records.size()) {
    std::size_t end = start + 1;
    while (end < records.size() && records[end].player_id == records[start].player_id) ++end;
    const std::size_t n = end - start;
    if (n < 2)
      throw SchemaViolation("segment_sequences: single-record run for player_id " +
                            std::to_string(records[start].player_id));
    SpeedSequence seq;
    seq.player_id = records[start].player_id;
    seq.pose_tag = records[start].pose_tag;
    seq.records.assign(records.begin() + start, records.begin() + end);
    double vmin = records[start].velocity, vmax = records[start].velocity, sum = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      vmin = std::min(vmin, records[i].velocity);
      vmax = std::max(vmax, records[i].velocity);
      sum += records[i].velocity;
    }
    if (vmax - vmin > 0.5)
      throw InconsistentVelocity("segment_sequences: velocity spread " + std::to_string(vmax - vmin) +
                                 " m/s for player_id " + std::to_string(seq.player_id));
    seq.speed_mps = sum / static_cast<double>(n);
    seq.category = synth::category_from_type_id(records[start].player_type);
    out.push_back(std::move(seq));
    start = end;
  }
  return out;
}

SpeedSequence load_sequence(const Manifest& manifest, const ManifestEntry& entry) {
  const auto log_path = manifest.root / entry.json_path;
  auto records = parse_log(log_path, entry.pose_tag);
  auto sequences = segment_sequences(records);
  if (sequences.size() != 1)
    throw SchemaViolation("load_sequence: expected one run in " + log_path.string() + ", found " +
                          std::to_string(sequences.size()));
  SpeedSequence seq = std::move(sequences.front());
  seq.sequence_id = entry.sequence_id;
  if (!entry.frame_dir.empty()) {
    std::vector<std::filesystem::path> files;
    const auto dir = manifest.root / entry.frame_dir;
    std::error_code ec;
    for (auto it = std::filesystem::directory_iterator(dir, ec);
         !ec && it != std::filesystem::directory_iterator(); ++it)
      if (it->path().extension() == ".png") files.push_back(it->path());
    if (ec) throw DataMissing("load_sequence: cannot list " + dir.string());
    std::sort(files.begin(), files.end());
    if (files.size() != seq.records.size())
      throw DataMissing("load_sequence: " + entry.sequence_id + " has " + std::to_string(files.size()) +
                        " frames for " + std::to_string(seq.records.size()) + " records");
    for (auto& f : files) seq.frame_paths.push_back(f.string());
  }
  return seq;
}

std::vector<SpeedSequence> load_sequences(const Manifest& manifest) {
  std::vector<SpeedSequence> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(load_sequence(manifest, e));
  return out;
}

// ---------------------------------------------------------------------------
// splits

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

DatasetSplit split_pose(std::vector<std::string> ids, std::uint64_t seed, const std::string& pose_tag) {
  std::sort(ids.begin(), ids.end());
  Rng rng(combine_seed(seed, fnv1a(pose_tag)));
  rng.shuffle(ids);
  const auto n = static_cast<long long>(ids.size());
  const auto n_train = static_cast<long long>(std::llround(0.6 * n));
  const auto n_val = static_cast<long long>(std::llround(0.2 * n));
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace

SplitSet make_splits(const Manifest& manifest, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_pose;
  for (const auto& e : manifest.entries) by_pose[e.pose_tag].push_back(e.sequence_id);

  SplitSet set;
  set.seed = seed;
  set.holistic.seed = seed;
  for (auto& [pose, ids] : by_pose) {
    DatasetSplit split = split_pose(std::move(ids), seed, pose);
    set.holistic.train.insert(set.holistic.train.end(), split.train.begin(), split.train.end());
    set.holistic.val.insert(set.holistic.val.end(), split.val.begin(), split.val.end());
    set.holistic.test.insert(set.holistic.test.end(), split.test.begin(), split.test.end());
    set.per_pose.emplace(pose, std::move(split));
  }
  std::sort(set.holistic.train.begin(), set.holistic.train.end());
  std::sort(set.holistic.val.begin(), set.holistic.val.end());
  std::sort(set.holistic.test.begin(), set.holistic.test.end());
  return set;
}

namespace {

json split_to_json(const DatasetSplit& s) {
  return {{"train", s.train}, {"val", s.val}, {"test", s.test}, {"seed", s.seed}};
}

DatasetSplit split_from_json(const json& j) {
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void save_splits(const std::filesystem::path& path, const SplitSet& splits) {
  json per_pose = json::object();
  for (const auto& [pose, split] : splits.per_pose) per_pose[pose] = split_to_json(split);
  const json j{{"seed", splits.seed}, {"holistic", split_to_json(splits.holistic)}, {"per_pose", per_pose}};
  std::ofstream out(path);
  if (!out) throw IoFailure("save_splits: cannot open " + path.string());
  out << j.dump(1) << "\n";
}

SplitSet load_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("load_splits: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoFailure("load_splits: " + path.string() + ": " + e.what());
  }
  SplitSet set;
  set.seed = j.at("seed").get<std::uint64_t>();
  set.holistic = split_from_json(j.at("holistic"));
  for (const auto& [pose, sj] : j.at("per_pose").items()) set.per_pose.emplace(pose, split_from_json(sj));
  return set;
}

// ---------------------------------------------------------------------------
// clips

std::vector<std::size_t> uniform_sample_indices(std::size_t n_frames, int clip_frames) {
  if (clip_frames < 2) throw EmptySequence("uniform_sample_indices: clip needs at least 2 frames");
  if (n_frames < 2) throw EmptySequence("uniform_sample_indices: sequence needs at least 2 frames");
  std::vector<std::size_t> idx(clip_frames);
  for (int k = 0; k < clip_frames; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(n_frames - 1) / (clip_frames - 1);
    idx[k] = static_cast<std::size_t>(std::llround(pos));
  }
  return idx;
}

namespace {

Clip build_clip_common(const SpeedSequence& seq, const ClipConfig& cfg,
                       const std::function<ImageU8(std::size_t)>& frame_at, std::size_t n_frames) {
  if (n_frames < 2) throw EmptySequence("build_clip: sequence " + seq.sequence_id + " has fewer than 2 frames");
  Clip clip;
  clip.frames = cfg.frames;
  clip.height = cfg.height;
  clip.width = cfg.width;
  clip.sequence_id = seq.sequence_id;
  clip.pose_tag = seq.pose_tag;
  clip.category = seq.category;
  clip.speed_kmh = seq.speed_mps * 3.6;
  clip.target_norm = static_cast<float>(normalize_speed(clip.speed_kmh));
  const std::size_t frame_px = static_cast<std::size_t>(cfg.height) * cfg.width * 3;
  clip.data.resize(frame_px * cfg.frames);
  const auto indices = uniform_sample_indices(n_frames, cfg.frames);
  std::size_t last_index = n_frames;  // sentinel
  std::vector<float> resized;
  for (int k = 0; k < cfg.frames; ++k) {
    if (indices[k] != last_index) {
      const ImageU8 img = frame_at(indices[k]);
      resized = resize_bilinear(img, cfg.width, cfg.height);
      last_index = indices[k];
    }
    std::copy(resized.begin(), resized.end(), clip.data.begin() + frame_px * k);
  }
  return clip;
}

}  // namespace

Clip build_clip(const SpeedSequence& seq, const ClipConfig& cfg) {
  if (seq.frame_paths.size() != seq.records.size())
    throw DataMissing("build_clip: sequence " + seq.sequence_id + " has no materialized frames");
  return build_clip_common(
      seq, cfg, [&](std::size_t i) { return read_png(seq.frame_paths[i]); }, seq.frame_paths.size());
}

Clip build_clip(const SpeedSequence& seq, std::span<const ImageU8> frames, const ClipConfig& cfg) {
  return build_clip_common(
      seq, cfg, [&](std::size_t i) { return frames[i]; }, frames.size());
}

void ClipStore::insert(Clip clip) {
  if (!have_cfg_) {
    cfg_ = {clip.frames, clip.height, clip.width};
    have_cfg_ = true;
  } else if (clip.frames != cfg_.frames || clip.height != cfg_.height || clip.width != cfg_.width) {
    throw ShapeMismatch("ClipStore: clip shape differs from store shape");
  }
  const auto [it, inserted] = index_.emplace(clip.sequence_id, clips_.size());
  if (!inserted) throw Error("ClipStore: duplicate sequence_id " + clip.sequence_id);
  clips_.push_back(std::move(clip));
}

const Clip& ClipStore::at(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataMissing("ClipStore: no clip for sequence " + id);
  return clips_[it->second];
}

std::vector<std::string> ClipStore::ids() const {
  std::vector<std::string> out;
  out.reserve(clips_.size());
  for (const auto& c : clips_) out.push_back(c.sequence_id);
  std::sort(out.begin(), out.end());
  return out;
}

ClipBatch ClipStore::make_batch(std::span<const std::string> ids) const {
  ClipBatch batch;
  batch.batch = static_cast<int>(ids.size());
  batch.frames = cfg_.frames;
  batch.height = cfg_.height;
  batch.width = cfg_.width;
  const std::size_t stride = static_cast<std::size_t>(cfg_.frames) * cfg_.height * cfg_.width * 3;
  batch.data.resize(stride * ids.size());
  batch.targets.resize(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Clip& clip = at(ids[i]);
    std::copy(clip.data.begin(), clip.data.end(), batch.data.begin() + stride * i);
    batch.targets[static_cast<Eigen::Index>(i)] = clip.target_norm;
    batch.sequence_ids.push_back(clip.sequence_id);
    batch.pose_tags.push_back(clip.pose_tag);
  }
  return batch;
}

ClipStore ClipStore::from_manifest(const Manifest& manifest, const ClipConfig& cfg, int n_threads) {
  std::vector<Clip> clips(manifest.entries.size());
  std::vector<std::string> errors(manifest.entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= manifest.entries.size()) return;
      try {
        clips[i] = build_clip(load_sequence(manifest, manifest.entries[i]), cfg);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (!err.empty()) throw DataMissing("ClipStore::from_manifest: " + err);
  ClipStore store;
  for (auto& c : clips) store.insert(std::move(c));
  return store;
}

}  // namespace vsd::ingest
