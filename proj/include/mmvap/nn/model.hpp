#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "mmvap/features.hpp"
#include "mmvap/nn/layers.hpp"
#include "mmvap/vap.hpp"

namespace mmvap::nn {

enum class Fusion { AudioOnly, VideoOnly, Early, Late };

inline const char* to_string(Fusion f) {
  switch (f) {
    case Fusion::AudioOnly: return "audio_only";
    case Fusion::VideoOnly: return "video_only";
    case Fusion::Early: return "early";
    case Fusion::Late: return "late";
  }
  return "?";
}

inline Fusion fusion_from_string(const std::string& s) {
  if (s == "audio_only") return Fusion::AudioOnly;
  if (s == "video_only") return Fusion::VideoOnly;
  if (s == "early") return Fusion::Early;
  if (s == "late") return Fusion::Late;
  throw Error(ErrorCode::ConfigError, "unknown fusion mode '" + s + "'");
}

struct ModelConfig {
  Eigen::Index d_model = 256;
  Eigen::Index n_heads = 8;
  Eigen::Index ff_dim = 0;  // 0 -> 4 * d_model
  Eigen::Index n_self_layers = 3;
  Eigen::Index n_cross_layers = 1;
  Eigen::Index context_frames = 500;
  Fusion fusion = Fusion::Late;
  Eigen::Index visual_dims = 60;
  double dropout = 0.1;
  uint64_t seed = 0;
  bool tie_readout = true;

  Eigen::Index ff() const { return ff_dim > 0 ? ff_dim : 4 * d_model; }

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
      throw Error(ErrorCode::ConfigError, "d_model must be a positive multiple of n_heads");
    if (context_frames < 100)
      throw Error(ErrorCode::ConfigError, "context_frames must be >= 100");
    if (dropout < 0.0 || dropout >= 1.0)
      throw Error(ErrorCode::ConfigError, "dropout must be in [0, 1)");
    if (visual_dims != 6 && visual_dims != 17 && visual_dims != 30 && visual_dims != 60)
      throw Error(ErrorCode::ConfigError, "visual_dims must be one of 6, 17, 30, 60");
  }

  json to_json() const {
    return {{"d_model", d_model},           {"n_heads", n_heads},
            {"ff_dim", ff_dim},             {"n_self_layers", n_self_layers},
            {"n_cross_layers", n_cross_layers}, {"context_frames", context_frames},
            {"fusion", to_string(fusion)},  {"visual_dims", visual_dims},
            {"dropout", dropout},           {"seed", seed},
            {"tie_readout", tie_readout}};
  }

  static ModelConfig from_json(const json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<Eigen::Index>();
    c.n_heads = j.at("n_heads").get<Eigen::Index>();
    c.ff_dim = j.at("ff_dim").get<Eigen::Index>();
    c.n_self_layers = j.at("n_self_layers").get<Eigen::Index>();
    c.n_cross_layers = j.at("n_cross_layers").get<Eigen::Index>();
    c.context_frames = j.at("context_frames").get<Eigen::Index>();
    c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
    c.visual_dims = j.at("visual_dims").get<Eigen::Index>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.tie_readout = j.at("tie_readout").get<bool>();
    return c;
  }
};

struct ModelInput {
  Mat audio_a, audio_b;  // frames x 256
  Mat video_a, video_b;  // frames x visual_dims
};

/// The VAP / MM-VAP network family. All per-speaker processing shares weights
/// across speakers, so with the tied readout the model is equivariant under
/// the A/B state permutation.
class MmVapModel {
 public:
  explicit MmVapModel(ModelConfig cfg) : cfg_(cfg), store_(cfg.seed) {
    cfg_.validate();
    const auto d = cfg_.d_model, h = cfg_.n_heads, ff = cfg_.ff();
    const bool has_audio = cfg_.fusion != Fusion::VideoOnly;
    const bool has_video = cfg_.fusion != Fusion::AudioOnly;
    if (has_audio) audio_proj_ = Linear(store_, "audio_proj", kAudioFeatureDims, d);
    if (has_video) visual_proj_ = ProjectionMlp(store_, "visual_proj", cfg_.visual_dims, d, d);
    if (cfg_.fusion == Fusion::Late) {
      self_audio_ = SelfAttnBlock(store_, "self_audio", d, h, ff, cfg_.n_self_layers);
      self_video_ = SelfAttnBlock(store_, "self_video", d, h, ff, cfg_.n_self_layers);
    } else {
      self_main_ = SelfAttnBlock(store_, "self_main", d, h, ff, cfg_.n_self_layers);
    }
    if (cfg_.fusion == Fusion::Early || cfg_.fusion == Fusion::Late)
      av_cross_ = CrossAttnBlock(store_, "av_cross", d, h, ff, cfg_.n_cross_layers);
    ab_cross_ = CrossAttnBlock(store_, "ab_cross", d, h, ff, cfg_.n_cross_layers);
    readout_w_ = &store_.create("readout.w", 2 * d, kVapStates,
                                std::sqrt(2.0 / static_cast<double>(2 * d + kVapStates)));
    readout_b_ = &store_.create("readout.b", 1, kVapStates, 0.0);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param*> params() { return store_.all(); }
  size_t n_parameters() const { return store_.total_size(); }

  /// Per-frame 256-way logits for the two aligned input streams.
  NodePtr forward(ForwardCtx& ctx, const ModelInput& in) const {
    validate_input(in);
    auto& t = ctx.tape;
    const Eigen::Index frames = input_frames(in);
    Mat pe = positional_encoding(frames, cfg_.d_model);

    auto embed_audio = [&](const Mat& m) {
      return t.add_const(audio_proj_.apply(ctx, t.constant(m)), pe);
    };
    auto embed_video = [&](const Mat& m) {
      return t.add_const(visual_proj_.apply(ctx, t.constant(m)), pe);
    };

    NodePtr sa, sb;  // final per-speaker streams before the speaker cross block
    switch (cfg_.fusion) {
      case Fusion::AudioOnly:
        sa = self_main_.apply(ctx, embed_audio(in.audio_a));
        sb = self_main_.apply(ctx, embed_audio(in.audio_b));
        break;
      case Fusion::VideoOnly:
        sa = self_main_.apply(ctx, embed_video(in.video_a));
        sb = self_main_.apply(ctx, embed_video(in.video_b));
        break;
      case Fusion::Early:
        sa = self_main_.apply(ctx, av_cross_.joint(ctx, embed_audio(in.audio_a),
                                                   embed_video(in.video_a)));
        sb = self_main_.apply(ctx, av_cross_.joint(ctx, embed_audio(in.audio_b),
                                                   embed_video(in.video_b)));
        break;
      case Fusion::Late: {
        NodePtr fa = av_cross_.joint(ctx, self_audio_.apply(ctx, embed_audio(in.audio_a)),
                                     self_video_.apply(ctx, embed_video(in.video_a)));
        NodePtr fb = av_cross_.joint(ctx, self_audio_.apply(ctx, embed_audio(in.audio_b)),
                                     self_video_.apply(ctx, embed_video(in.video_b)));
        sa = fa;
        sb = fb;
        break;
      }
    }

    auto [ca, cb] = ab_cross_.per_speaker(ctx, sa, sb);
    NodePtr features = t.concat_cols({ca, cb});
    NodePtr w = t.leaf(*readout_w_);
    NodePtr b = t.leaf(*readout_b_);
    if (cfg_.tie_readout) {
      w = t.symmetrize(w, half_swap_perm(), state_swap_perm());
      b = t.symmetrize(b, {0}, state_swap_perm());
    }
    return t.add_row(t.matmul(features, w), b);
  }

  /// Inference helper: per-frame VAP distributions, dropout off.
  Mat infer(const ModelInput& in) const {
    ForwardCtx ctx;
    ctx.training = false;
    return softmax_rows(forward(ctx, in)->val);
  }

  // -- checkpoint ------------------------------------------------------

  static constexpr char kMagic[9] = "MMVAPCK1";

  void save(const fs::path& path) {
    fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
      out.write(kMagic, 8);
      std::string cfg = cfg_.to_json().dump();
      write_u32(out, static_cast<uint32_t>(cfg.size()));
      out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
      auto ps = store_.all();
      write_u32(out, static_cast<uint32_t>(ps.size()));
      for (Param* p : ps) {
        write_u32(out, static_cast<uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u32(out, static_cast<uint32_t>(p->value.rows()));
        write_u32(out, static_cast<uint32_t>(p->value.cols()));
        for (Eigen::Index i = 0; i < p->value.rows(); ++i)
          for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
            float v = static_cast<float>(p->value(i, j));
            out.write(reinterpret_cast<const char*>(&v), sizeof(float));
          }
      }
      if (!out) throw Error(ErrorCode::IoError, "write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
  }

  static MmVapModel load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
      throw Error(ErrorCode::CheckpointMismatch, "bad checkpoint magic");
    uint32_t cfg_len = read_u32(in);
    std::string cfg_str(cfg_len, '\0');
    in.read(cfg_str.data(), cfg_len);
    MmVapModel model(ModelConfig::from_json(json::parse(cfg_str)));
    uint32_t n = read_u32(in);
    auto ps = model.store_.all();
    if (n != ps.size()) throw Error(ErrorCode::CheckpointMismatch, "parameter count mismatch");
    for (uint32_t i = 0; i < n; ++i) {
      uint32_t name_len = read_u32(in);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      uint32_t rows = read_u32(in), cols = read_u32(in);
      if (ps[i]->name != name || ps[i]->value.rows() != rows || ps[i]->value.cols() != cols)
        throw Error(ErrorCode::CheckpointMismatch, "tensor '" + name + "' does not match config");
      for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c) {
          float v;
          in.read(reinterpret_cast<char*>(&v), sizeof(float));
          ps[i]->value(r, c) = v;
        }
    }
    if (!in) throw Error(ErrorCode::CheckpointMismatch, "truncated checkpoint");
    return model;
  }

 private:
  void validate_input(const ModelInput& in) const {
    const bool has_audio = cfg_.fusion != Fusion::VideoOnly;
    const bool has_video = cfg_.fusion != Fusion::AudioOnly;
    Eigen::Index frames = input_frames(in);
    if (has_audio) {
      if (in.audio_a.cols() != static_cast<Eigen::Index>(kAudioFeatureDims) ||
          in.audio_b.cols() != static_cast<Eigen::Index>(kAudioFeatureDims))
        throw Error(ErrorCode::ShapeMismatch, "audio features must be 256-dim");
      if (in.audio_a.rows() != frames || in.audio_b.rows() != frames)
        throw Error(ErrorCode::ShapeMismatch, "audio frame counts differ");
    }
    if (has_video) {
      if (in.video_a.cols() != cfg_.visual_dims || in.video_b.cols() != cfg_.visual_dims)
        throw Error(ErrorCode::ShapeMismatch, "visual dims do not match config");
      if (in.video_a.rows() != frames || in.video_b.rows() != frames)
        throw Error(ErrorCode::ShapeMismatch, "visual frame counts differ");
    }
    if (frames == 0) throw Error(ErrorCode::ShapeMismatch, "empty input");
  }

  Eigen::Index input_frames(const ModelInput& in) const {
    return cfg_.fusion == Fusion::VideoOnly ? in.video_a.rows() : in.audio_a.rows();
  }

  std::vector<Eigen::Index> half_swap_perm() const {
    std::vector<Eigen::Index> p(static_cast<size_t>(2 * cfg_.d_model));
    for (Eigen::Index i = 0; i < 2 * cfg_.d_model; ++i)
      p[static_cast<size_t>(i)] = (i + cfg_.d_model) % (2 * cfg_.d_model);
    return p;
  }

  static std::vector<Eigen::Index> state_swap_perm() {
    std::vector<Eigen::Index> p(kVapStates);
    for (size_t i = 0; i < kVapStates; ++i) p[i] = swap_speakers(static_cast<uint8_t>(i));
    return p;
  }

  static void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  }

  static uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }

  ModelConfig cfg_;
  ParamStore store_;
  Linear audio_proj_;
  ProjectionMlp visual_proj_;
  SelfAttnBlock self_main_, self_audio_, self_video_;
  CrossAttnBlock av_cross_, ab_cross_;
  Param* readout_w_ = nullptr;
  Param* readout_b_ = nullptr;
};

/// Masked mean cross-entropy of the true VAP states.
inline NodePtr vap_loss(ForwardCtx& ctx, NodePtr logits, const std::vector<uint8_t>& states,
                        const std::vector<uint8_t>& valid) {
  return ctx.tape.cross_entropy(logits, states, valid);
}

}  // namespace mmvap::nn
