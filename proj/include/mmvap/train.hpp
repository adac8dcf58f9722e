#pragma once

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "mmvap/corpus_io.hpp"
#include "mmvap/events.hpp"
#include "mmvap/features.hpp"
#include "mmvap/nn/model.hpp"
#include "mmvap/vap.hpp"

namespace mmvap {

// ---------------------------------------------------------------------------
// Session data assembly
// ---------------------------------------------------------------------------

/// All aligned 50 Hz streams of one session, trimmed to a common frame count.
struct SessionData {
  std::string session_id;
  DyadVa dyad;
  nn::Mat audio[2];  // frames x 256
  nn::Mat video[2];  // frames x visual_dims
  SessionLabels labels;
  std::vector<TurnEvent> gap_events;      // extracted at min_fto = 0
  std::vector<TurnEvent> overlap_events;

  size_t n_frames() const { return static_cast<size_t>(audio[0].rows()); }
};

inline SessionData load_session(const SessionManifest& m, FeatureSubset subset,
                                const AudioFeatureExtractor& extractor,
                                bool strict_causal = false) {
  SessionData s;
  s.session_id = m.session_id;

  std::array<VaStream, 2> va;
  std::array<nn::Mat, 2> audio, video;
  for (size_t ch = 0; ch < 2; ++ch) {
    Transcript t = parse_transcript(m.channels[ch].transcript_path);
    va[ch] = va_from_words(t.words, m.duration_s);
    AudioBuffer pcm = read_wav(m.channels[ch].audio_path);
    audio[ch] = extractor.extract(pcm).values;
    RawVisualTrack raw = parse_visual_csv(m.channels[ch].visual_csv_path);
    video[ch] = prepare_visual(raw, subset, strict_causal).values;
  }

  Eigen::Index nf = static_cast<Eigen::Index>(va[0].size());
  for (size_t ch = 0; ch < 2; ++ch) {
    nf = std::min(nf, audio[ch].rows());
    nf = std::min(nf, video[ch].rows());
  }
  for (size_t ch = 0; ch < 2; ++ch) {
    va[ch].frames.resize(static_cast<size_t>(nf));
    s.audio[ch] = audio[ch].topRows(nf);
    s.video[ch] = video[ch].topRows(nf);
  }
  s.dyad = DyadVa(va[0], va[1]);
  s.labels = labels_for_session(s.dyad);
  s.gap_events = extract_gap_events(s.dyad, 0.0);
  s.overlap_events = extract_overlap_shifts(s.dyad);
  for (auto& e : s.gap_events) e.session_id = s.session_id;
  for (auto& e : s.overlap_events) e.session_id = s.session_id;
  return s;
}

// ---------------------------------------------------------------------------
// Fold plan
// ---------------------------------------------------------------------------

struct FoldSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

struct FoldPlan {
  std::vector<std::string> test_sessions;
  std::vector<FoldSplit> folds;  // 5 folds over the non-test sessions
  uint64_t seed = 0;
};

constexpr size_t kNumFolds = 5;

/// 5% of sessions withheld for test; 5-fold cross-validation (80/20) on the
/// remainder, all at session level.
inline FoldPlan make_folds(std::vector<std::string> session_ids, uint64_t seed) {
  const size_t n = session_ids.size();
  if (n < 20) throw Error(ErrorCode::TooFewSessions, "need at least 20 sessions");
  std::sort(session_ids.begin(), session_ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(session_ids.begin(), session_ids.end(), rng);

  FoldPlan plan;
  plan.seed = seed;
  size_t n_test = std::max<size_t>(1, static_cast<size_t>(std::llround(0.05 * static_cast<double>(n))));
  plan.test_sessions.assign(session_ids.begin(), session_ids.begin() + static_cast<long>(n_test));
  std::vector<std::string> rest(session_ids.begin() + static_cast<long>(n_test), session_ids.end());

  size_t base = rest.size() / kNumFolds, extra = rest.size() % kNumFolds;
  size_t off = 0;
  for (size_t f = 0; f < kNumFolds; ++f) {
    size_t len = base + (f < extra ? 1 : 0);
    FoldSplit split;
    split.val.assign(rest.begin() + static_cast<long>(off), rest.begin() + static_cast<long>(off + len));
    for (size_t i = 0; i < rest.size(); ++i)
      if (i < off || i >= off + len) split.train.push_back(rest[i]);
    plan.folds.push_back(std::move(split));
    off += len;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

constexpr size_t kSegmentFrames = 1000;  // 20 s at 50 Hz
constexpr size_t kSegmentStepFrames = 900;  // 2 s overlap

/// A 20 s training window; labels come from the session-level VA so frames
/// near segment boundaries keep their true 2 s lookahead.
struct Segment {
  const SessionData* session = nullptr;
  size_t start_frame = 0;
  std::string provenance;  // train / val / test

  nn::ModelInput input() const {
    nn::ModelInput in;
    auto slice = [&](const nn::Mat& m) {
      return nn::Mat(m.middleRows(static_cast<Eigen::Index>(start_frame), kSegmentFrames));
    };
    in.audio_a = slice(session->audio[0]);
    in.audio_b = slice(session->audio[1]);
    in.video_a = slice(session->video[0]);
    in.video_b = slice(session->video[1]);
    return in;
  }

  std::vector<uint8_t> labels() const {
    return {session->labels.states.begin() + static_cast<long>(start_frame),
            session->labels.states.begin() + static_cast<long>(start_frame + kSegmentFrames)};
  }

  std::vector<uint8_t> valid() const {
    return {session->labels.valid.begin() + static_cast<long>(start_frame),
            session->labels.valid.begin() + static_cast<long>(start_frame + kSegmentFrames)};
  }
};

inline std::vector<Segment> segment_session(const SessionData& s, std::string provenance) {
  if (s.n_frames() < kSegmentFrames)
    throw Error(ErrorCode::SessionTooShort,
                s.session_id + " is shorter than one 20 s segment");
  std::vector<Segment> out;
  for (size_t start = 0; start + kSegmentFrames <= s.n_frames(); start += kSegmentStepFrames)
    out.push_back({&s, start, provenance});
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer and training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  size_t batch_size = 16;
  double learning_rate = 0.005;
  size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  size_t max_steps_per_epoch = 0;  // 0 = no cap
  size_t n_threads = 0;            // 0 = hardware concurrency

  void validate() const {
    if (batch_size == 0 || epochs == 0 || learning_rate < 0.0)
      throw Error(ErrorCode::ConfigError, "train config values must be positive");
  }
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<nn::Param*> params, const TrainConfig& cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      p->adam_m.setZero(p->value.rows(), p->value.cols());
      p->adam_v.setZero(p->value.rows(), p->value.cols());
    }
  }

  void step() {
    ++t_;
    double norm_sq = 0.0;
    for (auto* p : params_) norm_sq += p->grad.squaredNorm();
    double scale = 1.0;
    double norm = std::sqrt(norm_sq);
    if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;

    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : params_) {
      nn::Mat g = p->grad * scale;
      p->adam_m = cfg_.beta1 * p->adam_m + (1.0 - cfg_.beta1) * g;
      p->adam_v = cfg_.beta2 * p->adam_v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      nn::Mat mhat = p->adam_m / bc1;
      nn::Mat vhat = p->adam_v / bc2;
      p->value -= cfg_.learning_rate *
                  mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.adam_eps).matrix());
      p->zero_grad();
    }
  }

  // Allows learning-rate schedules driven by the caller.
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  double learning_rate() const { return cfg_.learning_rate; }

 private:
  std::vector<nn::Param*> params_;
  TrainConfig cfg_;
  size_t t_ = 0;
};

struct MetricsEntry {
  size_t epoch = 0;
  size_t step = 0;
  std::string split;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<MetricsEntry> log;
  double best_val_loss = std::numeric_limits<double>::infinity();
  size_t best_epoch = 0;
};

namespace detail {

struct ItemGrad {
  double loss = 0.0;
  std::vector<std::pair<nn::Param*, nn::Mat>> grads;
};

/// Evaluates loss + gradients for a batch, item-parallel; the merge into the
/// shared Param grads runs in item order so results are reproducible.
inline double batch_backward(nn::MmVapModel& model, const std::vector<const Segment*>& batch,
                             double dropout, const std::vector<uint64_t>& item_seeds,
                             size_t n_threads) {
  std::vector<ItemGrad> results(batch.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= batch.size()) return;
      std::mt19937_64 rng(item_seeds[i]);
      nn::ForwardCtx ctx;
      ctx.training = true;
      ctx.dropout = dropout;
      ctx.rng = &rng;
      nn::NodePtr logits = model.forward(ctx, batch[i]->input());
      nn::NodePtr loss = ctx.tape.cross_entropy(logits, batch[i]->labels(), batch[i]->valid());
      ctx.tape.backward(loss, /*accumulate_params=*/false);
      results[i].loss = loss->val(0, 0);
      for (const auto& [param, node] : ctx.tape.leaves())
        if (node->grad.size() != 0) results[i].grads.emplace_back(param, node->grad);
    }
  };
  size_t hw = n_threads == 0 ? static_cast<size_t>(std::thread::hardware_concurrency()) : n_threads;
  size_t nt = std::max<size_t>(1, std::min(hw, batch.size()));
  std::vector<std::thread> threads;
  for (size_t i = 0; i + 1 < nt; ++i) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  double total = 0.0;
  double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : results) {
    total += item.loss;
    for (const auto& [param, g] : item.grads) param->grad += inv * g;
  }
  return total * inv;
}

}  // namespace detail

inline double validation_loss(nn::MmVapModel& model, const std::vector<Segment>& val_segments,
                              size_t n_threads) {
  if (val_segments.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> losses(val_segments.size(), 0.0);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= val_segments.size()) return;
      nn::ForwardCtx ctx;
      ctx.training = false;
      nn::NodePtr logits = model.forward(ctx, val_segments[i].input());
      losses[i] = ctx.tape.cross_entropy(logits, val_segments[i].labels(), val_segments[i].valid())
                      ->val(0, 0);
    }
  };
  size_t hw = n_threads == 0 ? static_cast<size_t>(std::thread::hardware_concurrency()) : n_threads;
  size_t nt = std::max<size_t>(1, std::min(hw, val_segments.size()));
  std::vector<std::thread> threads;
  for (size_t i = 0; i + 1 < nt; ++i) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

/// Shuffled mini-batch training; keeps the best-validation-loss weights.
/// checkpoint_path may be empty to skip on-disk checkpoints.
inline TrainResult train(nn::MmVapModel& model, std::vector<Segment> train_segments,
                         const std::vector<Segment>& val_segments, const TrainConfig& cfg,
                         const fs::path& checkpoint_path = {},
                         std::ostream* metrics_out = nullptr) {
  cfg.validate();
  if (train_segments.empty()) throw Error(ErrorCode::EmptyMask, "no training segments");
  AdamOptimizer opt(model.params(), cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainResult result;

  auto log = [&](size_t epoch, size_t step, const std::string& split, double loss) {
    result.log.push_back({epoch, step, split, loss});
    if (metrics_out) {
      json j = {{"epoch", epoch}, {"step", step}, {"split", split}, {"loss", loss}};
      *metrics_out << j.dump() << "\n";
    }
  };

  std::vector<std::pair<nn::Mat, std::string>> best_params;  // value snapshot by name
  size_t global_step = 0;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_segments.begin(), train_segments.end(), rng);
    size_t steps = (train_segments.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.max_steps_per_epoch > 0) steps = std::min(steps, cfg.max_steps_per_epoch);
    double epoch_loss = 0.0;
    for (size_t s = 0; s < steps; ++s) {
      std::vector<const Segment*> batch;
      for (size_t i = s * cfg.batch_size; i < (s + 1) * cfg.batch_size && i < train_segments.size();
           ++i)
        batch.push_back(&train_segments[i]);
      std::vector<uint64_t> item_seeds(batch.size());
      for (auto& sd : item_seeds) sd = rng();
      double loss = detail::batch_backward(model, batch, model.config().dropout, item_seeds,
                                           cfg.n_threads);
      if (!std::isfinite(loss)) throw Error(ErrorCode::DivergedLoss, "non-finite training loss");
      if (cfg.learning_rate > 0.0) opt.step();
      else
        for (auto* p : model.params()) p->zero_grad();
      epoch_loss += loss;
      ++global_step;
      log(epoch, global_step, "train", loss);
    }
    epoch_loss /= static_cast<double>(std::max<size_t>(1, steps));

    double val = validation_loss(model, val_segments, cfg.n_threads);
    if (!val_segments.empty()) log(epoch, global_step, "val", val);
    double criterion = val_segments.empty() ? epoch_loss : val;
    if (criterion < result.best_val_loss) {
      result.best_val_loss = criterion;
      result.best_epoch = epoch;
      best_params.clear();
      for (auto* p : model.params()) best_params.emplace_back(p->value, p->name);
      if (!checkpoint_path.empty()) model.save(checkpoint_path);
    }
  }

  // Restore the best weights.
  if (!best_params.empty()) {
    auto ps = model.params();
    for (size_t i = 0; i < ps.size(); ++i) ps[i]->value = best_params[i].first;
  }
  return result;
}

}  // namespace mmvap
