#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lifegen/baselines.hpp"
#include "lifegen/checkpoint.hpp"
#include "lifegen/config.hpp"
#include "lifegen/metrics.hpp"

namespace lifegen {

// One metrics.csv row.
struct RunRow {
  int task = 0;
  std::string strategy;
  std::uint64_t seed = 0;
  double acc = 0;
  double frechet = 0;
  double seconds = 0;
  std::vector<int> labels;
};

inline std::string join_labels(const std::vector<int>& labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) s += '|';
    s += std::to_string(labels[i]);
  }
  return s;
}

inline constexpr const char* kCsvHeader =
    "task,strategy,seed,acc,frechet,seconds,labels";

inline std::string format_row(const RunRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%s,%llu,%.6f,%.6f,%.3f,%s", r.task,
                r.strategy.c_str(), static_cast<unsigned long long>(r.seed),
                r.acc, r.frechet, r.seconds, join_labels(r.labels).c_str());
  return buf;
}

// The full data context of a benchmark: the task stream plus the real
// train/test unions used for the reference classifier and evaluation.
struct BenchmarkData {
  TaskStream stream;
  LabeledDataset real_train;
  LabeledDataset real_test;
  int num_classes = 10;
};

inline BenchmarkData load_benchmark(const RunConfig& cfg) {
  BenchmarkData bd;
  if (cfg.dataset == "toy") {
    Rng data_rng(1234);  // toy data is fixed across seeds and strategies
    bd.stream = toy_stream(cfg.toy_tasks, cfg.toy_samples, data_rng);
  } else {
    auto [train, test] = load_mnist_dir(cfg.data_root);
    bd.stream = split_class_incremental(train, test, 10);
  }
  for (Task& t : bd.stream.tasks) {
    if (cfg.per_class_cap > 0)
      t.train = per_class_cap(t.train, cfg.per_class_cap);
    if (bd.real_train.size() == 0) {
      bd.real_train = t.train;
      bd.real_test = t.test;
    } else {
      bd.real_train.append(t.train);
      bd.real_test.append(t.test);
    }
  }
  return bd;
}

// Reference feature extractor: trained once on real data with a fixed seed,
// so every strategy and run seed shares the same feature space.
inline Classifier train_reference(const BenchmarkData& bd) {
  Rng rng(4242);
  Classifier ref(bd.real_train.image_dim(), bd.num_classes, rng);
  ref.train(bd.real_train, rng);
  return ref;
}

inline Checkpoint checkpoint_from_snapshot(const DecoderSnapshot& snap) {
  Checkpoint ck;
  ck.config = snap.config;
  ck.labels = snap.labels;
  ck.task_index = snap.task_index;
  for (const auto& [name, t] : snap.frozen_model().named_decoder_params()) {
    ck.params.emplace_back(name, t.data());
    ck.shapes.emplace_back(name, t.shape());
  }
  return ck;
}

inline DecoderSnapshot snapshot_from_checkpoint(const Checkpoint& ck) {
  CvaeModel m = model_from_checkpoint(ck);
  return make_snapshot(m, ck.labels, ck.task_index);
}

namespace detail {
inline void prepare_out_dir(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out);
  if (fs::exists(out) && !fs::is_empty(out) && !cfg.force)
    throw BadValue("output directory " + cfg.out +
                   " is not empty (use --force to overwrite)");
  fs::create_directories(out);
  std::ofstream res(out / "config.resolved");
  if (!res) throw IoError("cannot write " + (out / "config.resolved").string());
  res << cfg.resolved();
}
}  // namespace detail

// Executes one (strategy, seed) cell: trains over the stream, and after each
// task writes a checkpoint, a sample grid, and a metrics.csv row. `data` and
// `reference` may be shared across cells; pass nullptr to build them here.
inline std::vector<RunRow> execute_run(const RunConfig& cfg,
                                       const BenchmarkData* data = nullptr,
                                       const Classifier* reference = nullptr) {
  cfg.validate();
  detail::prepare_out_dir(cfg);
  namespace fs = std::filesystem;
  const fs::path out(cfg.out);

  BenchmarkData local_data;
  if (!data) {
    local_data = load_benchmark(cfg);
    data = &local_data;
  }
  std::unique_ptr<Classifier> local_ref;
  if (!reference) {
    local_ref = std::make_unique<Classifier>(train_reference(*data));
    reference = local_ref.get();
  }

  CvaeConfig mc;
  mc.latent_dim = cfg.latent_dim;
  mc.num_classes = data->num_classes;
  mc.image_dim = data->real_train.image_dim();
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.adam.lr = static_cast<float>(cfg.learning_rate);
  tc.literal_fc_sign = cfg.literal_fc_sign;
  tc.lambda_r_override = static_cast<float>(cfg.lambda_r);
  tc.lambda_f_override = static_cast<float>(cfg.lambda_f);

  std::ofstream csv(out / "metrics.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write metrics.csv in " + cfg.out);
  csv << kCsvHeader << '\n';

  std::vector<RunRow> rows;
  Rng train_rng(cfg.seed);
  const Strategy strat = parse_strategy(cfg.strategy);
  run_strategy(
      strat, data->stream, cfg.epochs, tc, mc, train_rng,
      [&](const DecoderSnapshot& snap, double seconds) {
        const int t = snap.task_index;
        save_checkpoint((out / ("task_" + std::to_string(t) + ".ckpt")).string(),
                        checkpoint_from_snapshot(snap));

        Rng eval_rng(cfg.seed * 9973 + static_cast<std::uint64_t>(t));
        MetricsReport rep = evaluate_checkpoint(
            snap, *reference, data->real_test, cfg.per_class_samples, eval_rng);

        // 10-column sample grid, one row per learned class
        const int side = data->real_train.width;
        std::vector<float> imgs;
        {
          NoGradGuard ng;
          for (int c : snap.labels) {
            Tensor s = snap.frozen_model().sample(c, 10, eval_rng);
            imgs.insert(imgs.end(), s.data().begin(), s.data().end());
          }
        }
        write_pgm((out / ("grid_task_" + std::to_string(t) + ".pgm")).string(),
                  image_grid(imgs, side, side,
                             static_cast<int>(snap.labels.size()), 10));

        RunRow row;
        row.task = t;
        row.strategy = cfg.strategy;
        row.seed = cfg.seed;
        row.acc = rep.acc_percent;
        row.frechet = rep.frechet;
        row.seconds = seconds;
        row.labels = snap.labels;
        csv << format_row(row) << '\n';
        csv.flush();
        rows.push_back(std::move(row));
      });
  return rows;
}

// Mean/std aggregation across seeds, written as summary.csv.
inline void write_summary(const std::string& path,
                          const std::vector<RunRow>& rows) {
  std::map<std::pair<std::string, int>, std::vector<const RunRow*>> cells;
  for (const RunRow& r : rows) cells[{r.strategy, r.task}].push_back(&r);

  std::ofstream csv(path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + path);
  csv << "strategy,task,n,acc_mean,acc_std,frechet_mean,frechet_std,"
         "seconds_mean\n";
  for (const auto& [key, cell] : cells) {
    const double n = double(cell.size());
    double am = 0, fm = 0, sm = 0;
    for (const RunRow* r : cell) {
      am += r->acc;
      fm += r->frechet;
      sm += r->seconds;
    }
    am /= n;
    fm /= n;
    sm /= n;
    double av = 0, fv = 0;
    for (const RunRow* r : cell) {
      av += (r->acc - am) * (r->acc - am);
      fv += (r->frechet - fm) * (r->frechet - fm);
    }
    const double as = cell.size() > 1 ? std::sqrt(av / (n - 1)) : 0.0;
    const double fs = cell.size() > 1 ? std::sqrt(fv / (n - 1)) : 0.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%zu,%.6f,%.6f,%.6f,%.6f,%.3f",
                  key.first.c_str(), key.second, cell.size(), am, as, fm, fs,
                  sm);
    csv << buf << '\n';
  }
}

// Cross product of strategies and seeds; each cell runs in its own
// subdirectory, failures are logged and skipped, and the aggregate lands in
// <out>/summary.csv.
inline std::vector<RunRow> execute_sweep(
    const RunConfig& base, const std::vector<std::uint64_t>& seeds,
    const std::vector<std::string>& strategies) {
  if (seeds.empty()) throw BadValue("sweep needs at least one seed");
  if (strategies.empty()) throw BadValue("sweep needs at least one strategy");
  namespace fs = std::filesystem;
  fs::create_directories(base.out);

  const BenchmarkData data = load_benchmark(base);
  const Classifier reference = train_reference(data);

  std::vector<RunRow> all;
  std::ofstream failures(fs::path(base.out) / "failures.log", std::ios::trunc);
  for (const std::string& strat : strategies)
    for (std::uint64_t seed : seeds) {
      RunConfig cell = base;
      cell.strategy = strat;
      cell.seed = seed;
      cell.out = (fs::path(base.out) /
                  (strat + "_seed" + std::to_string(seed)))
                     .string();
      try {
        std::vector<RunRow> rows = execute_run(cell, &data, &reference);
        all.insert(all.end(), rows.begin(), rows.end());
      } catch (const Error& e) {
        failures << strat << ",seed=" << seed << ": " << e.what() << '\n';
        failures.flush();
      }
    }
  write_summary((fs::path(base.out) / "summary.csv").string(), all);
  return all;
}

}  // namespace lifegen
