#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lifegen/runner.hpp"

using namespace lifegen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("lifegen_test_" + tag);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// metrics.csv with the wall-clock column blanked, for determinism checks
std::string stable_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) {
    std::string cell, row;
    std::istringstream ls(line);
    int col = 0;
    while (std::getline(ls, cell, ',')) {
      if (col++ == 5) cell = "-";
      if (!row.empty()) row += ',';
      row += cell;
    }
    out += row + '\n';
  }
  return out;
}

RunConfig smoke_config(const std::string& tag) {
  RunConfig cfg;
  cfg.dataset = "toy";
  cfg.toy_tasks = 3;
  cfg.toy_samples = 80;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.per_class_samples = 120;
  cfg.out = fresh_dir(tag).string();
  return cfg;
}

}  // namespace

TEST_CASE("parse_config: defaults and explicit flags") {
  unsetenv("LIFEGEN_DATA");
  RunConfig cfg = parse_config({"--out", "/tmp/x"});
  CHECK(cfg.dataset == "toy");
  CHECK(cfg.strategy == "lglvkr");
  CHECK(cfg.epochs == 5);
  CHECK(cfg.seed == 0);
  CHECK(cfg.latent_dim == 32);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.learning_rate == doctest::Approx(1e-3));
  CHECK_FALSE(cfg.literal_fc_sign);

  cfg = parse_config({"--out", "/tmp/x", "--strategy", "joint", "--epochs",
                      "7", "--seed", "3", "--latent_dim", "16",
                      "--literal_fc_sign"});
  CHECK(cfg.strategy == "joint");
  CHECK(cfg.epochs == 7);
  CHECK(cfg.seed == 3);
  CHECK(cfg.latent_dim == 16);
  CHECK(cfg.literal_fc_sign);
}

TEST_CASE("parse_config: config file with flag precedence") {
  const fs::path dir = fresh_dir("cfgfile");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.cfg");
    f << "strategy = fine_tune\n"
      << "epochs = 9\n"
      << "batch_size = 16\n";
  }
  RunConfig cfg = parse_config({"--config", (dir / "run.cfg").string(),
                                "--out", "/tmp/x", "--epochs", "2"});
  CHECK(cfg.strategy == "fine_tune");  // from file
  CHECK(cfg.batch_size == 16);         // from file
  CHECK(cfg.epochs == 2);              // flag wins over file
}

TEST_CASE("parse_config: rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config({"--out", "/tmp/x", "--no_such_flag", "1"}),
                  UnknownKey);
  const fs::path dir = fresh_dir("badcfg");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "no_such_key = 1\n";
  }
  CHECK_THROWS_AS(
      parse_config({"--config", (dir / "bad.cfg").string(), "--out", "/tmp/x"}),
      UnknownKey);

  CHECK_THROWS_AS(parse_config({"--out", "/tmp/x", "--epochs", "zero"}),
                  BadValue);
  CHECK_THROWS_AS(parse_config({"--out", "/tmp/x", "--epochs", "0"}),
                  BadValue);
  CHECK_THROWS_AS(parse_config({"--out", "/tmp/x", "--strategy", "sgd"}),
                  BadValue);
  CHECK_THROWS_AS(parse_config({"--out", "/tmp/x", "--dataset", "cifar"}),
                  BadValue);
  CHECK_THROWS_AS(parse_config({"--out", "/tmp/x", "--per_class_samples",
                                "10"}),
                  BadValue);
  CHECK_THROWS_AS(parse_config({}), BadValue);  // missing out
}

TEST_CASE("parse_config: image datasets need a data root") {
  unsetenv("LIFEGEN_DATA");
  CHECK_THROWS_AS(parse_config({"--out", "/tmp/x", "--dataset", "mnist"}),
                  MissingDataRoot);
  setenv("LIFEGEN_DATA", "/some/dir", 1);
  RunConfig cfg = parse_config({"--out", "/tmp/x", "--dataset", "mnist"});
  CHECK(cfg.data_root == "/some/dir");
  cfg = parse_config({"--out", "/tmp/x", "--dataset", "mnist", "--data_root",
                      "/other"});
  CHECK(cfg.data_root == "/other");  // flag beats environment
  unsetenv("LIFEGEN_DATA");
}

TEST_CASE("execute_run: toy run emits one row and one artifact set per task") {
  RunConfig cfg = smoke_config("run_basic");
  const auto rows = execute_run(cfg);
  REQUIRE(rows.size() == 3);
  const fs::path out(cfg.out);
  CHECK(fs::exists(out / "config.resolved"));
  for (int t = 1; t <= 3; ++t) {
    CHECK(fs::exists(out / ("task_" + std::to_string(t) + ".ckpt")));
    CHECK(fs::exists(out / ("grid_task_" + std::to_string(t) + ".pgm")));
    const RunRow& r = rows[std::size_t(t - 1)];
    CHECK(r.task == t);
    CHECK(r.strategy == "lglvkr");
    CHECK(int(r.labels.size()) == t);  // label set accumulates
    CHECK(r.acc >= 0.0);
    CHECK(r.acc <= 100.0);
    CHECK(r.frechet >= 0.0);
    CHECK(r.seconds > 0.0);
  }
  // csv matches the returned rows
  std::istringstream csv(slurp(out / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == kCsvHeader);
  for (const RunRow& r : rows) {
    std::getline(csv, line);
    CHECK(line == format_row(r));
  }
  // grids are valid binary PGMs
  CHECK(slurp(out / "grid_task_1.pgm").substr(0, 3) == "P5\n");
}

TEST_CASE("execute_run: same seed reruns are byte-identical") {
  RunConfig a = smoke_config("det_a");
  RunConfig b = smoke_config("det_b");
  execute_run(a);
  execute_run(b);
  CHECK(stable_csv(fs::path(a.out) / "metrics.csv") ==
        stable_csv(fs::path(b.out) / "metrics.csv"));
  for (int t = 1; t <= 3; ++t) {
    const std::string f = "task_" + std::to_string(t) + ".ckpt";
    CHECK(slurp(fs::path(a.out) / f) == slurp(fs::path(b.out) / f));
  }
  CHECK(slurp(fs::path(a.out) / "grid_task_3.pgm") ==
        slurp(fs::path(b.out) / "grid_task_3.pgm"));

  RunConfig c = smoke_config("det_c");
  c.seed = 7;  // a different seed must actually change the trained model
  execute_run(c);
  CHECK(slurp(fs::path(a.out) / "task_3.ckpt") !=
        slurp(fs::path(c.out) / "task_3.ckpt"));
}

TEST_CASE("execute_run: refuses a non-empty out dir unless forced") {
  RunConfig cfg = smoke_config("force");
  cfg.toy_tasks = 1;
  cfg.epochs = 1;
  execute_run(cfg);
  CHECK_THROWS_AS(execute_run(cfg), BadValue);
  cfg.force = true;
  CHECK_NOTHROW(execute_run(cfg));
}

TEST_CASE("checkpoint round trip through the runner helpers") {
  RunConfig cfg = smoke_config("ckpt_rt");
  cfg.toy_tasks = 2;
  cfg.epochs = 1;
  execute_run(cfg);
  const Checkpoint ck =
      load_checkpoint((fs::path(cfg.out) / "task_2.ckpt").string());
  CHECK(ck.task_index == 2);
  CHECK(ck.labels == std::vector<int>{0, 1});
  CHECK(ck.config.latent_dim == cfg.latent_dim);
  const DecoderSnapshot snap = snapshot_from_checkpoint(ck);
  CHECK(snap.labels == ck.labels);
  Rng rng(5);
  NoGradGuard ng;
  const Tensor s = snap.frozen_model().sample(1, 4, rng);
  CHECK(s.shape() == Shape{4, 1024});
}

TEST_CASE("execute_sweep: single-seed summary equals the run rows") {
  RunConfig base = smoke_config("sweep");
  base.toy_tasks = 2;
  base.epochs = 1;
  const auto rows =
      execute_sweep(base, {0}, {"fine_tune", "lglvkr"});
  REQUIRE(rows.size() == 4);
  const fs::path out(base.out);
  CHECK(fs::exists(out / "fine_tune_seed0" / "metrics.csv"));
  CHECK(fs::exists(out / "lglvkr_seed0" / "metrics.csv"));
  CHECK(slurp(out / "failures.log").empty());

  std::istringstream sum(slurp(out / "summary.csv"));
  std::string line;
  std::getline(sum, line);
  CHECK(line ==
        "strategy,task,n,acc_mean,acc_std,frechet_mean,frechet_std,"
        "seconds_mean");
  int checked = 0;
  while (std::getline(sum, line)) {
    std::istringstream ls(line);
    std::string strat, task, n, am, as, fm, fs_;
    std::getline(ls, strat, ',');
    std::getline(ls, task, ',');
    std::getline(ls, n, ',');
    std::getline(ls, am, ',');
    std::getline(ls, as, ',');
    std::getline(ls, fm, ',');
    std::getline(ls, fs_, ',');
    CHECK(n == "1");
    CHECK(as == "0.000000");   // one seed: zero spread
    CHECK(fs_ == "0.000000");
    // the mean of one cell is that run's row
    bool found = false;
    for (const RunRow& r : rows)
      if (r.strategy == strat && std::to_string(r.task) == task &&
          std::abs(r.acc - std::stod(am)) < 1e-6 &&
          std::abs(r.frechet - std::stod(fm)) < 1e-6)
        found = true;
    CHECK(found);
    ++checked;
  }
  CHECK(checked == 4);
}

TEST_CASE("execute_sweep: a failing cell is logged and the sweep continues") {
  RunConfig base = smoke_config("sweep_fail");
  base.toy_tasks = 2;
  base.epochs = 1;
  // pre-populate one cell dir so that cell refuses to run
  fs::create_directories(fs::path(base.out) / "lglvkr_seed0");
  {
    std::ofstream f(fs::path(base.out) / "lglvkr_seed0" / "stale");
    f << "x";
  }
  const auto rows = execute_sweep(base, {0}, {"lglvkr", "fine_tune"});
  CHECK(rows.size() == 2);  // only fine_tune ran
  const std::string log = slurp(fs::path(base.out) / "failures.log");
  CHECK(log.find("lglvkr,seed=0") != std::string::npos);
  CHECK(fs::exists(fs::path(base.out) / "fine_tune_seed0" / "metrics.csv"));
}
