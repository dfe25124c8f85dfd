// Command-line runner: train, eval, benchmark.

#include <fmt/format.h>

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fei/checkpoint.hpp"
#include "fei/errors.hpp"
#include "fei/experiment.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

// Without a config file the defaults plus overrides are used.
fei::ExperimentConfig load_config(const Common& c) {
  if (!c.config.empty()) return fei::ExperimentConfig::load(c.config, c.overrides);
  fei::ExperimentConfig cfg;
  fei::apply_overrides(cfg, c.overrides);
  cfg.validate();
  return cfg;
}

int cmd_train(const Common& c, bool resume) {
  const auto cfg = load_config(c);
  const auto out = fei::run_experiment(cfg, resume);
  std::vector<fei::ScoreSummary> rows{out.train_eval.summary};
  if (!out.test_eval.psnr.empty()) {
    rows.push_back(out.test_eval.summary);
    rows.push_back(out.fbp_test.summary);
  }
  std::cout << fei::summary_table(rows);
  std::cout << "run directory: " << out.run_dir.string() << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& run, std::string checkpoint,
             const std::string& split, bool fbp, bool save) {
  Common base = c;
  if (!run.empty() && base.config.empty()) base.config = (std::filesystem::path(run) / "config.snapshot").string();
  if (!run.empty() && checkpoint.empty() && !fbp) {
    checkpoint = (std::filesystem::path(run) / "checkpoint.ckpt").string();
  }
  if (checkpoint.empty() && !fbp) {
    throw fei::ConfigError("eval: pass --checkpoint, --run or --fbp");
  }
  if (split != "train" && split != "test") throw fei::ConfigError("eval: --split must be train or test");
  const auto cfg = load_config(base);
  const auto data = fei::prepare_data(cfg);
  const auto& set = split == "train" ? data.train : data.test;
  if (set.measurements.size() == 0) throw fei::ConfigError("eval: the " + split + " split is empty");

  std::vector<fei::ScoreSummary> rows;
  fei::EvalReport report;
  if (fbp) {
    report = fei::evaluate(nullptr, *data.op, set, "fbp " + split);
  } else {
    const auto ckpt = fei::load_checkpoint(checkpoint);
    auto model = fei::restore(ckpt);
    report = fei::evaluate(model.get(), *data.op, set,
                           ckpt.extra.value("trainer", std::string("model")) + " " + split);
  }
  rows.push_back(report.summary);
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    std::cout << fmt::format("{:>6}  {:.4f}\n", report.ids[i], report.psnr[i]);
  }
  std::cout << fei::summary_table(rows);
  if (save) {
    if (run.empty()) throw fei::ConfigError("eval: --save requires --run");
    std::ofstream out(std::filesystem::path(run) / fmt::format("eval_{}.csv", split));
    out << fei::summary_csv(rows);
  }
  return 0;
}

int cmd_benchmark(const Common& c, const std::vector<std::string>& suite, const std::string& name) {
  const auto cfg = load_config(c);
  const auto report = fei::run_benchmark(cfg, suite, name);
  std::cout << report.table();
  std::cout << "report directory: " << report.dir.string() << "\n";
  for (const auto& m : report.members) {
    if (!m.ok) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivariant-imaging trainers (EI, FEI, PnP-FEI, EQPnP-FEI)"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&common](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config,-c", common.config, "experiment config file");
    if (config_required) opt->required();
    sub->add_option("--override,-o", common.overrides, "key=value overrides")->take_all();
  };

  bool resume = false;
  auto* train = app.add_subcommand("train", "train a model from a config");
  add_common(train, true);
  train->add_flag("--resume", resume, "continue from the run's checkpoint");

  std::string run, checkpoint, split = "test";
  bool fbp = false, save = false;
  auto* eval = app.add_subcommand("eval", "score a checkpoint (or FBP) on a data split");
  add_common(eval, false);
  eval->add_option("--run", run, "run directory (uses its config.snapshot and checkpoint)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file");
  eval->add_option("--split", split, "train or test");
  eval->add_flag("--fbp", fbp, "evaluate the pseudo-inverse baseline without a network");
  eval->add_flag("--save", save, "write eval_<split>.csv into the run directory");

  std::vector<std::string> suite;
  std::string name = "benchmark";
  auto* bench = app.add_subcommand("benchmark", "train several methods under identical settings");
  add_common(bench, true);
  bench->add_option("--suite", suite, "trainer kinds, e.g. ei fei pnp_fei")->required()->delimiter(',');
  bench->add_option("--name", name, "report subdirectory under output.dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*train) return cmd_train(common, resume);
    if (*eval) return cmd_eval(common, run, checkpoint, split, fbp, save);
    if (*bench) return cmd_benchmark(common, suite, name);
  } catch (const fei::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const fei::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fei::LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fei::IngestionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fei::PluginUnavailable& e) {
    std::cerr << "denoiser unavailable: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
