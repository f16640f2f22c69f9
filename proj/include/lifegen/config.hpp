#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lifegen/baselines.hpp"
#include "lifegen/errors.hpp"

namespace lifegen {

// Fully-resolved settings of one experiment run.
struct RunConfig {
  std::string dataset = "toy";  // toy | mnist | fashion_mnist
  std::string strategy = "lglvkr";
  int epochs = 5;
  std::uint64_t seed = 0;
  int per_class_cap = 0;  // 0 = use everything
  int latent_dim = 32;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double lambda_r = -1.0;  // < 0: the t - 1 schedule
  double lambda_f = -1.0;  // < 0: constant 1
  int per_class_samples = 1000;  // generated images per class for metrics
  int toy_tasks = 3;
  int toy_samples = 200;  // per toy task
  bool literal_fc_sign = false;
  bool force = false;
  std::string out;        // output directory (required)
  std::string data_root;  // IDX directory for image datasets

  void validate() const {
    if (dataset != "toy" && dataset != "mnist" && dataset != "fashion_mnist")
      throw BadValue("dataset must be toy, mnist or fashion_mnist, got '" +
                     dataset + "'");
    parse_strategy(strategy);  // throws BadValue on an unknown tag
    if (epochs < 1) throw BadValue("epochs must be >= 1");
    if (per_class_cap < 0) throw BadValue("per_class_cap must be >= 0");
    if (latent_dim < 1) throw BadValue("latent_dim must be >= 1");
    if (batch_size < 1) throw BadValue("batch_size must be >= 1");
    if (learning_rate <= 0) throw BadValue("learning_rate must be positive");
    if (per_class_samples < 100)
      throw BadValue("per_class_samples must be >= 100");
    if (toy_tasks < 1 || toy_tasks > 10)
      throw BadValue("toy_tasks must be in [1,10]");
    if (toy_samples < 1) throw BadValue("toy_samples must be >= 1");
    if (out.empty()) throw BadValue("an output directory is required");
    if (dataset != "toy" && data_root.empty())
      throw MissingDataRoot(
          "set --data-root or the LIFEGEN_DATA environment variable for "
          "dataset '" + dataset + "'");
  }

  std::string resolved() const {
    std::ostringstream os;
    os << "dataset = " << dataset << '\n'
       << "strategy = " << strategy << '\n'
       << "epochs = " << epochs << '\n'
       << "seed = " << seed << '\n'
       << "per_class_cap = " << per_class_cap << '\n'
       << "latent_dim = " << latent_dim << '\n'
       << "batch_size = " << batch_size << '\n'
       << "learning_rate = " << learning_rate << '\n'
       << "lambda_r = " << lambda_r << '\n'
       << "lambda_f = " << lambda_f << '\n'
       << "per_class_samples = " << per_class_samples << '\n'
       << "toy_tasks = " << toy_tasks << '\n'
       << "toy_samples = " << toy_samples << '\n'
       << "literal_fc_sign = " << (literal_fc_sign ? 1 : 0) << '\n'
       << "out = " << out << '\n'
       << "data_root = " << data_root << '\n';
    return os.str();
  }
};

// Wires a RunConfig's fields into a CLI11 app; shared by the library entry
// point and the tool's subcommands. Keys in a flat `key = value` config file
// (given with --config) match the flag names; explicit flags win.
inline void attach_options(CLI::App& app, RunConfig& cfg) {
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config");
  app.add_option("--dataset", cfg.dataset);
  app.add_option("--strategy", cfg.strategy);
  app.add_option("--epochs", cfg.epochs);
  app.add_option("--seed", cfg.seed);
  app.add_option("--per_class_cap", cfg.per_class_cap);
  app.add_option("--latent_dim", cfg.latent_dim);
  app.add_option("--batch_size", cfg.batch_size);
  app.add_option("--learning_rate", cfg.learning_rate);
  app.add_option("--lambda_r", cfg.lambda_r);
  app.add_option("--lambda_f", cfg.lambda_f);
  app.add_option("--per_class_samples", cfg.per_class_samples);
  app.add_option("--toy_tasks", cfg.toy_tasks);
  app.add_option("--toy_samples", cfg.toy_samples);
  app.add_flag("--literal_fc_sign", cfg.literal_fc_sign);
  app.add_flag("--force", cfg.force);
  app.add_option("--out", cfg.out);
  app.add_option("--data_root", cfg.data_root);
}

// Parses `--key value` flags plus an optional `--config file`. Throws the
// library's error types so callers see uniform diagnostics.
inline RunConfig parse_config(const std::vector<std::string>& args) {
  RunConfig cfg;
  if (const char* env = std::getenv("LIFEGEN_DATA")) cfg.data_root = env;

  CLI::App app{"lifegen"};
  attach_options(app, cfg);
  try {
    // CLI11 wants argv in reverse order
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ConfigError& e) {
    throw UnknownKey(std::string(e.what()));
  } catch (const CLI::ExtrasError& e) {
    throw UnknownKey(std::string(e.what()));
  } catch (const CLI::ParseError& e) {
    throw BadValue(std::string(e.what()));
  }

  cfg.validate();
  return cfg;
}

}  // namespace lifegen
