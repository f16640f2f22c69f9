#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "lifegen/cvae.hpp"
#include "lifegen/data.hpp"
#include "lifegen/errors.hpp"
#include "lifegen/lifelong.hpp"

namespace lifegen {

enum class Strategy {
  fine_tune,
  joint,
  pseudo_rehearsal_cvae,
  lgl_no_kr,
  lgl_no_fc,
  lglvkr,
};

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::fine_tune: return "fine_tune";
    case Strategy::joint: return "joint";
    case Strategy::pseudo_rehearsal_cvae: return "pseudo_rehearsal_cvae";
    case Strategy::lgl_no_kr: return "lgl_no_kr";
    case Strategy::lgl_no_fc: return "lgl_no_fc";
    case Strategy::lglvkr: return "lglvkr";
  }
  throw BadValue("unreachable strategy tag");
}

inline Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::fine_tune, Strategy::joint,
                     Strategy::pseudo_rehearsal_cvae, Strategy::lgl_no_kr,
                     Strategy::lgl_no_fc, Strategy::lglvkr})
    if (name == strategy_name(s)) return s;
  throw BadValue("unknown strategy '" + name + "'");
}

// Which machinery each strategy switches on. One row per tag; everything
// else about the run is identical.
struct LossPlan {
  bool knowledge = false;      // pseudo-pair distillation from the snapshot
  bool feedback = false;       // re-encoded-reconstruction KL term
  bool replay = false;         // mix generated samples into the real batch
  bool reset_params = false;   // re-initialize the model at every task
  bool union_data = false;     // train on all tasks seen so far
  bool baseline_net = false;   // decoder-only raw one-hot conditioning
};

inline LossPlan plan_for(Strategy s) {
  LossPlan p;
  switch (s) {
    case Strategy::fine_tune:
      p.feedback = true;
      break;
    case Strategy::joint:
      p.feedback = true;
      p.reset_params = true;
      p.union_data = true;
      break;
    case Strategy::pseudo_rehearsal_cvae:
      p.replay = true;
      p.baseline_net = true;
      break;
    case Strategy::lgl_no_kr:
      p.feedback = true;
      break;
    case Strategy::lgl_no_fc:
      p.knowledge = true;
      break;
    case Strategy::lglvkr:
      p.knowledge = true;
      p.feedback = true;
      break;
  }
  return p;
}

// Builds the task-t training set for pseudo-rehearsal: the real data plus
// `ratio/(1-ratio)` as many generated samples, class-balanced over the
// previously learned labels.
inline LabeledDataset pseudo_rehearsal_mix(const LabeledDataset& real,
                                           const DecoderSnapshot& prev,
                                           double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0)
    throw BadValue("replay ratio must be in [0,1), got " +
                   std::to_string(ratio));
  LabeledDataset mixed = real;
  if (ratio == 0.0) return mixed;
  if (prev.empty())
    throw NoSnapshot("replay requested with no previous model");
  const auto replay_total = static_cast<std::size_t>(
      std::llround(ratio / (1.0 - ratio) * double(real.size())));
  const std::size_t per_class =
      (replay_total + prev.labels.size() - 1) / prev.labels.size();
  NoGradGuard ng;
  std::size_t emitted = 0;
  for (int c : prev.labels) {
    const std::size_t want = std::min(per_class, replay_total - emitted);
    if (want == 0) break;
    Tensor s = prev.frozen_model().sample(c, static_cast<int>(want), rng);
    mixed.pixels.insert(mixed.pixels.end(), s.data().begin(), s.data().end());
    mixed.labels.insert(mixed.labels.end(), want, c);
    emitted += want;
  }
  return mixed;
}

struct StrategyRunResult {
  std::vector<DecoderSnapshot> snapshots;  // one per task, labels accumulated
  std::vector<double> train_seconds;       // training-only wall clock per task
};

// Runs one strategy over the stream. The callback fires after each task's
// snapshot is taken (before the next task starts).
inline StrategyRunResult run_strategy(
    Strategy strat, const TaskStream& stream, int epochs,
    const TrainConfig& base_cfg, const CvaeConfig& base_model_cfg, Rng& rng,
    const std::function<void(const DecoderSnapshot&, double)>& after_task =
        {}) {
  if (stream.size() == 0) throw EmptyDataset("empty task stream");
  stream.check_disjoint();
  const LossPlan plan = plan_for(strat);

  CvaeConfig mcfg = base_model_cfg;
  if (plan.baseline_net) mcfg.both_label_paths = false;
  TrainConfig cfg = base_cfg;
  cfg.use_knowledge = plan.knowledge;
  cfg.use_feedback = plan.feedback;

  StrategyRunResult result;
  CvaeModel model(mcfg, rng);
  // One optimizer spans the stream for continuing-model strategies; carrying
  // the Adam moments across task boundaries damps the early-task disruption
  // of what the model already knows. Strategies that re-initialize the model
  // get a fresh optimizer alongside the fresh parameters.
  Adam opt(model.params(), cfg.adam);
  DecoderSnapshot prev;  // empty until a first snapshot exists
  std::vector<int> learned;
  LabeledDataset unioned;

  for (std::size_t ti = 0; ti < stream.size(); ++ti) {
    const int t = static_cast<int>(ti) + 1;
    const LabeledDataset& real = stream.tasks[ti].train;
    if (real.size() == 0)
      throw EmptyDataset("task " + std::to_string(t) + " has no data");

    const auto started = std::chrono::steady_clock::now();

    // (a reset at task 1 would be a no-op re-init, so skip it: this keeps
    // joint training bitwise equal to fine tuning on the first task)
    if (plan.reset_params && ti > 0) {
      model = CvaeModel(mcfg, rng);
      opt = Adam(model.params(), cfg.adam);
    }
    if (plan.knowledge && t >= 2) model.load_params(prev.theta);

    const LabeledDataset* train_data = &real;
    LabeledDataset scratch;
    if (plan.union_data) {
      if (ti == 0)
        unioned = real;
      else
        unioned.append(real);
      train_data = &unioned;
    } else if (plan.replay && t >= 2) {
      scratch =
          pseudo_rehearsal_mix(real, prev, double(t - 1) / double(t), rng);
      train_data = &scratch;
    }

    // the knowledge term only applies from task 2 on, and only against a
    // snapshot; run_epoch skips it when the snapshot is empty
    const LossWeights w = effective_weights(t, cfg);
    for (int e = 0; e < epochs; ++e)
      detail::run_epoch(model, *train_data, plan.knowledge ? prev : DecoderSnapshot{},
                        w, opt, cfg, rng);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();

    for (int y : dataset_labels_sorted(real)) learned.push_back(y);
    prev = make_snapshot(model, learned, t);
    result.snapshots.push_back(prev);
    result.train_seconds.push_back(seconds);
    if (after_task) after_task(prev, seconds);
  }
  return result;
}

}  // namespace lifegen
