// Command-line front end: synth / events / train / eval / fau.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numeric divergence during training.

#include <iostream>

#include <CLI11.hpp>

#include "mmvap/pipeline.hpp"
#include "mmvap/synth.hpp"

namespace {

using namespace mmvap;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError: return 2;
    case ErrorCode::DivergedLoss: return 4;
    default: return 3;
  }
}

void freeze_config(const fs::path& path, const ojson& cfg) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << cfg.dump(2) << "\n";
}

DyadVa dyad_from_manifest(const SessionManifest& m) {
  VaStream va = va_from_words(parse_transcript(m.channels[0].transcript_path).words, m.duration_s);
  VaStream vb = va_from_words(parse_transcript(m.channels[1].transcript_path).words, m.duration_s);
  return {std::move(va), std::move(vb)};
}

std::vector<TurnEvent> session_events(const SessionManifest& m) {
  DyadVa dyad = dyad_from_manifest(m);
  std::vector<TurnEvent> evs = extract_gap_events(dyad, 0.0);
  auto ov = extract_overlap_shifts(dyad);
  evs.insert(evs.end(), ov.begin(), ov.end());
  for (auto& e : evs) e.session_id = m.session_id;
  return evs;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SyntheticCorpusConfig cfg;
};

int cmd_synth(const SynthArgs& a) {
  generate_synthetic_corpus(a.cfg, a.out);
  ojson frozen{{"command", "synth"},
               {"out", a.out},
               {"n_sessions", a.cfg.n_sessions},
               {"session_duration_s", a.cfg.session_duration_s},
               {"mean_turn_s", a.cfg.mean_turn_s},
               {"gap_mean_s", a.cfg.gap.mean_s},
               {"gap_sd_s", a.cfg.gap.sd_s},
               {"overlap_rate", a.cfg.overlap_rate},
               {"visual_cue_lead_s", a.cfg.visual_cue_lead_s},
               {"visual_cue_strength", a.cfg.visual_cue_strength},
               {"seed", a.cfg.seed}};
  freeze_config(fs::path(a.out) / "synth_config.json", frozen);
  return 0;
}

struct EventsArgs {
  std::string manifest_dir;
  std::string out;
  std::vector<double> min_fto_ms{0, 250, 500, 750, 1000, 1250, 1500};
};

int cmd_events(const EventsArgs& a) {
  auto manifests = load_corpus(a.manifest_dir);
  std::vector<TurnEvent> events;
  double total_minutes = 0.0;
  for (const auto& m : manifests) {
    auto evs = session_events(m);
    events.insert(events.end(), evs.begin(), evs.end());
    total_minutes += m.duration_s / 60.0;
  }
  write_events_csv(a.out, events);

  std::vector<double> thresholds{-0.25};
  for (double ms : a.min_fto_ms) thresholds.push_back(ms / 1000.0);
  std::sort(thresholds.begin(), thresholds.end());
  auto groups = group_by_min_fto(events, thresholds);
  fs::path stats_path = fs::path(a.out).replace_extension(".stats.csv");
  std::ofstream st(stats_path);
  if (!st) throw Error(ErrorCode::IoError, "cannot write " + stats_path.string());
  st << "min_fto,n_shifts,n_holds,shifts_per_min,holds_per_min,shift_proportion\n";
  if (total_minutes > 0.0) {
    for (const auto& g : corpus_statistics(groups, total_minutes)) {
      st << fmt_double(g.min_fto_s) << ',' << g.n_shifts << ',' << g.n_holds << ','
         << fmt_double(g.shifts_per_min) << ',' << fmt_double(g.holds_per_min) << ','
         << (g.shift_proportion ? fmt_double(*g.shift_proportion) : std::string("na")) << "\n";
    }
  }
  ojson frozen{{"command", "events"},
               {"manifest_dir", a.manifest_dir},
               {"out", a.out},
               {"min_fto_ms", a.min_fto_ms}};
  freeze_config(fs::path(a.out).replace_extension(".config.json"), frozen);
  return 0;
}

struct TrainArgs {
  std::string manifest_dir;
  std::string run_dir;
  std::string fusion = "late";
  std::string subset = "all";
  size_t fold = 0;
  uint64_t seed = 1;
  long d_model = 64;
  long n_heads = 4;
  long self_layers = 3;
  long cross_layers = 1;
  long context_frames = 500;
  double dropout = 0.1;
  size_t epochs = 10;
  size_t batch = 16;
  double lr = 0.005;
  size_t max_steps = 0;
  size_t threads = 0;
};

ojson frozen_train_config(const TrainArgs& a) {
  return {{"command", "train"},     {"manifest_dir", a.manifest_dir},
          {"run_dir", a.run_dir},   {"fusion", a.fusion},
          {"subset", a.subset},     {"fold", a.fold},
          {"seed", a.seed},         {"d_model", a.d_model},
          {"n_heads", a.n_heads},   {"self_layers", a.self_layers},
          {"cross_layers", a.cross_layers}, {"context_frames", a.context_frames},
          {"dropout", a.dropout},   {"epochs", a.epochs},
          {"batch", a.batch},       {"lr", a.lr},
          {"max_steps", a.max_steps}};
}

int cmd_train(const TrainArgs& a) {
  if (a.fold >= kNumFolds) throw Error(ErrorCode::ConfigError, "fold must be in [0, 5)");
  FeatureSubset subset = subset_from_string(a.subset);
  nn::ModelConfig mc;
  mc.d_model = a.d_model;
  mc.n_heads = a.n_heads;
  mc.n_self_layers = a.self_layers;
  mc.n_cross_layers = a.cross_layers;
  mc.context_frames = a.context_frames;
  mc.fusion = nn::fusion_from_string(a.fusion);
  mc.visual_dims = static_cast<Eigen::Index>(subset_dims(subset));
  mc.dropout = a.dropout;
  mc.seed = a.seed;
  mc.validate();

  auto manifests = load_corpus(a.manifest_dir);
  std::vector<std::string> ids;
  std::map<std::string, const SessionManifest*> by_id;
  for (const auto& m : manifests) {
    ids.push_back(m.session_id);
    by_id[m.session_id] = &m;
  }
  FoldPlan plan = make_folds(ids, a.seed);
  const FoldSplit& split = plan.folds[a.fold];

  LogMelStandin extractor;
  std::map<std::string, SessionData> data;
  for (const auto& sid : split.train) data[sid] = load_session(*by_id.at(sid), subset, extractor);
  for (const auto& sid : split.val) data[sid] = load_session(*by_id.at(sid), subset, extractor);

  std::vector<Segment> train_segs, val_segs;
  for (const auto& sid : split.train) {
    auto segs = segment_session(data.at(sid), "train");
    train_segs.insert(train_segs.end(), segs.begin(), segs.end());
  }
  for (const auto& sid : split.val) {
    auto segs = segment_session(data.at(sid), "val");
    val_segs.insert(val_segs.end(), segs.begin(), segs.end());
  }

  fs::create_directories(a.run_dir);
  freeze_config(fs::path(a.run_dir) / "config.json", frozen_train_config(a));

  nn::MmVapModel model(mc);
  TrainConfig tc;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  tc.max_steps_per_epoch = a.max_steps;
  tc.n_threads = a.threads;
  std::ofstream metrics(fs::path(a.run_dir) / "metrics.jsonl");
  TrainResult res =
      train(model, train_segs, val_segs, tc, fs::path(a.run_dir) / "checkpoint.bin", &metrics);
  std::cout << "best validation loss " << res.best_val_loss << " at epoch " << res.best_epoch
            << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest_dir;
  std::string run_dir;
  std::string anchor = "mutual_silence";
  std::string subset = "all";
  double min_fto_ms = 250.0;
  size_t fold = 0;
  uint64_t seed = 1;
  size_t threads = 0;
};

int cmd_eval(const EvalArgs& a) {
  if (a.fold >= kNumFolds) throw Error(ErrorCode::ConfigError, "fold must be in [0, 5)");
  WindowAnchor anchor = anchor_from_string(a.anchor);
  FeatureSubset subset = subset_from_string(a.subset);
  nn::MmVapModel model = nn::MmVapModel::load(a.checkpoint);
  if (model.config().fusion != nn::Fusion::AudioOnly &&
      model.config().visual_dims != static_cast<Eigen::Index>(subset_dims(subset)))
    throw Error(ErrorCode::CheckpointMismatch,
                "checkpoint visual_dims do not match --subset " + a.subset);

  auto manifests = load_corpus(a.manifest_dir);
  std::vector<std::string> ids;
  std::map<std::string, const SessionManifest*> by_id;
  for (const auto& m : manifests) {
    ids.push_back(m.session_id);
    by_id[m.session_id] = &m;
  }
  FoldPlan plan = make_folds(ids, a.seed);
  LogMelStandin extractor;
  std::map<std::string, SessionData> data;
  std::vector<const SessionData*> val, test;
  for (const auto& sid : plan.folds[a.fold].val) {
    data[sid] = load_session(*by_id.at(sid), subset, extractor);
    val.push_back(&data.at(sid));
  }
  for (const auto& sid : plan.test_sessions) {
    data[sid] = load_session(*by_id.at(sid), subset, extractor);
    test.push_back(&data.at(sid));
  }

  EvalReport r = evaluate_fold(model, val, test, anchor, a.min_fto_ms / 1000.0, a.threads);
  r.subset = a.subset;
  fs::create_directories(a.run_dir);
  write_report(fs::path(a.run_dir) / "report.json", r);
  write_fto_csv(fs::path(a.run_dir) / "fto_curve.csv", r.curve);
  ojson frozen{{"command", "eval"},       {"checkpoint", a.checkpoint},
               {"manifest_dir", a.manifest_dir}, {"run_dir", a.run_dir},
               {"anchor", a.anchor},      {"subset", a.subset},
               {"min_fto_ms", a.min_fto_ms}, {"fold", a.fold},
               {"seed", a.seed}};
  freeze_config(fs::path(a.run_dir) / "config.json", frozen);
  std::cout << "balanced accuracy " << r.bacc << ", weighted F1 " << r.f1_weighted << "\n";
  return 0;
}

struct FauArgs {
  std::string manifest_dir;
  std::string out;
  double min_fto_ms = 250.0;
  uint64_t seed = 1;
};

int cmd_fau(const FauArgs& a) {
  auto manifests = load_corpus(a.manifest_dir);
  std::vector<FauSessionInput> sessions;
  for (const auto& m : manifests) {
    FauSessionInput s;
    s.session_id = m.session_id;
    s.dyad = dyad_from_manifest(m);
    s.raw[0] = parse_visual_csv(m.channels[0].visual_csv_path);
    s.raw[1] = parse_visual_csv(m.channels[1].visual_csv_path);
    sessions.push_back(std::move(s));
  }
  FauAnalysis fa = fau_event_analysis(sessions, a.seed, a.min_fto_ms / 1000.0);
  write_fau_tsv(a.out, fa);
  ojson frozen{{"command", "fau"},
               {"manifest_dir", a.manifest_dir},
               {"out", a.out},
               {"min_fto_ms", a.min_fto_ms},
               {"seed", a.seed}};
  freeze_config(fs::path(a.out).string() + ".config.json", frozen);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal predictive turn-taking pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "TOML config file with one [subcommand] section per command (flags win)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dyadic corpus");
  synth->add_option("--out", sa.out, "Output corpus directory")->required();
  synth->add_option("--n-sessions", sa.cfg.n_sessions, "Number of sessions");
  synth->add_option("--duration", sa.cfg.session_duration_s, "Session duration (s)");
  synth->add_option("--mean-turn", sa.cfg.mean_turn_s, "Mean turn length (s)");
  synth->add_option("--gap-mean", sa.cfg.gap.mean_s, "Mean inter-turn gap (s)");
  synth->add_option("--gap-sd", sa.cfg.gap.sd_s, "Gap standard deviation (s)");
  synth->add_option("--overlap-rate", sa.cfg.overlap_rate, "Fraction of shifts with overlap");
  synth->add_option("--cue-lead", sa.cfg.visual_cue_lead_s, "Visual cue lead before shifts (s)");
  synth->add_option("--cue-strength", sa.cfg.visual_cue_strength, "Visual cue amplitude");
  synth->add_option("--seed", sa.cfg.seed, "Random seed");

  EventsArgs ea;
  auto* events = app.add_subcommand("events", "Extract turn events and statistics");
  events->add_option("--manifest", ea.manifest_dir, "Corpus directory")->required();
  events->add_option("--out", ea.out, "Events CSV path")->required();
  events->add_option("--min-fto", ea.min_fto_ms, "Minimum FTO thresholds (ms)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train one cross-validation fold");
  tr->add_option("--manifest", ta.manifest_dir, "Corpus directory")->required();
  tr->add_option("--run-dir", ta.run_dir, "Output run directory")->required();
  tr->add_option("--fusion", ta.fusion, "audio_only|video_only|early|late");
  tr->add_option("--subset", ta.subset, "all|gaze|pose|faus|landmarks");
  tr->add_option("--fold", ta.fold, "Fold index 0-4");
  tr->add_option("--seed", ta.seed, "Random seed");
  tr->add_option("--d-model", ta.d_model, "Model width");
  tr->add_option("--heads", ta.n_heads, "Attention heads");
  tr->add_option("--self-layers", ta.self_layers, "Self-attention layers");
  tr->add_option("--cross-layers", ta.cross_layers, "Cross-attention layers");
  tr->add_option("--context-frames", ta.context_frames, "Evaluation context (frames)");
  tr->add_option("--dropout", ta.dropout, "Dropout rate");
  tr->add_option("--epochs", ta.epochs, "Training epochs");
  tr->add_option("--batch", ta.batch, "Batch size");
  tr->add_option("--lr", ta.lr, "Learning rate");
  tr->add_option("--max-steps", ta.max_steps, "Cap on steps per epoch (0 = none)");
  tr->add_option("--threads", ta.threads, "Worker threads (0 = auto)");

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", va.checkpoint, "Checkpoint path")->required();
  ev->add_option("--manifest", va.manifest_dir, "Corpus directory")->required();
  ev->add_option("--run-dir", va.run_dir, "Output run directory")->required();
  ev->add_option("--anchor", va.anchor, "mutual_silence|end_of_turn|pre_overlap");
  ev->add_option("--subset", va.subset, "Visual subset used at training time");
  ev->add_option("--min-fto", va.min_fto_ms, "Minimum FTO (ms)");
  ev->add_option("--fold", va.fold, "Fold index 0-4");
  ev->add_option("--seed", va.seed, "Seed used for the fold plan");
  ev->add_option("--threads", va.threads, "Worker threads (0 = auto)");

  FauArgs fa;
  auto* fau = app.add_subcommand("fau", "Facial-action-unit event analysis");
  fau->add_option("--manifest", fa.manifest_dir, "Corpus directory")->required();
  fau->add_option("--out", fa.out, "Output TSV path")->required();
  fau->add_option("--min-fto", fa.min_fto_ms, "Minimum FTO (ms)");
  fau->add_option("--seed", fa.seed, "Random seed for control sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa);
    if (events->parsed()) return cmd_events(ea);
    if (tr->parsed()) return cmd_train(ta);
    if (ev->parsed()) return cmd_eval(va);
    if (fau->parsed()) return cmd_fau(fa);
  } catch (const mmvap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
