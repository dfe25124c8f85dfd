#include "fei/experiment.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>

#include "fei/checkpoint.hpp"
#include "fei/errors.hpp"

namespace fei {

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  SplitSpec split;
  split.train_ids = parse_id_list(cfg.data.train_ids);
  split.test_ids = parse_id_list(cfg.data.test_ids);
  const DatasetSplits ds = load_dataset(cfg.data.source, cfg.data.size, split, cfg.seed.data);
  ExperimentData out;
  out.op = build_operator(cfg);
  const MeasurementModel model{out.op, cfg.data.noise_std};
  out.train = build_measurements(ds.train, model, cfg.seed.noise);
  if (ds.test.size() > 0) out.test = build_measurements(ds.test, model, cfg.seed.noise);
  return out;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.output.dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
      dir = std::filesystem::path(root) / dir;
    }
  }
  return dir;
}

std::string run_id_of(const ExperimentConfig& cfg) {
  return cfg.output.run_id.empty() ? cfg.trainer.kind + "-" + cfg.hash() : cfg.output.run_id;
}

EvalReport evaluate(ReconstructionNet* model, const LinearOperator& op, const EvaluationSet& set,
                    const std::string& method) {
  EvalReport r;
  r.method = method;
  const auto& ms = set.measurements;
  if (ms.size() != set.truth.size()) throw InputError("evaluate: measurement/truth size mismatch");
  if (model && model->spec().image != op.in_shape()) {
    throw InputError(fmt::format("checkpoint expects {} images but the physics produces {}",
                                 model->spec().image.str(), op.in_shape().str()));
  }
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const Image x = model ? reconstruct(*model, ms.y[i], op) : op.pinv(ms.y[i]);
    r.ids.push_back(ms.ids[i]);
    r.psnr.push_back(psnr(x, set.truth[i]));
  }
  r.summary = summarize_scores(method, r.psnr);
  return r;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

Curve curve_of(const std::string& label, const MetricLog& log, bool by_time) {
  Curve c;
  c.label = label;
  for (const auto& row : log.rows()) {
    c.x.push_back(by_time ? row.wall_time_s : static_cast<double>(row.step));
    c.y.push_back(row.psnr_ema);
  }
  return c;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, bool resume) {
  cfg.validate();
  const ExperimentData data = prepare_data(cfg);
  RunOutcome out;
  out.run_dir = resolve_output_dir(cfg) / run_id_of(cfg);
  std::filesystem::create_directories(out.run_dir);
  write_text(out.run_dir / "config.snapshot", cfg.snapshot());

  PsnrMonitor monitor(data.train.measurements.ids, data.train.truth, cfg.ema.decay);
  std::map<std::string, Image> supervision;
  for (std::size_t i = 0; i < data.train.truth.size(); ++i) {
    supervision[data.train.measurements.ids[i]] = data.train.truth[i];
  }
  TrainingOptions options;
  options.run_dir = out.run_dir;
  options.monitor = &monitor;
  if (cfg.trainer.kind == "supervised") options.supervision = &supervision;
  if (resume) {
    const auto ckpt = out.run_dir / "checkpoint.ckpt";
    if (!std::filesystem::exists(ckpt)) {
      throw ConfigError("resume: no checkpoint at '" + ckpt.string() + "'");
    }
    options.resume_from = ckpt;
  }
  out.training = run_training(cfg, *data.op, data.train.measurements, options);

  auto& model = *out.training.state.model;
  out.train_eval = evaluate(&model, *data.op, data.train, cfg.trainer.kind + " train");
  std::vector<ScoreSummary> rows{out.train_eval.summary};
  if (data.test.measurements.size() > 0) {
    out.test_eval = evaluate(&model, *data.op, data.test, cfg.trainer.kind + " test");
    out.fbp_test = evaluate(nullptr, *data.op, data.test, "fbp test");
    rows.push_back(out.test_eval.summary);
    rows.push_back(out.fbp_test.summary);
  }
  write_text(out.run_dir / "summary.csv", summary_csv(rows));
  plot_curves(out.run_dir / "curves_iter.png", {curve_of(cfg.trainer.kind, out.training.log, false)},
              "iteration", "PSNR (dB)");
  plot_curves(out.run_dir / "curves_time.png", {curve_of(cfg.trainer.kind, out.training.log, true)},
              "wall time (s)", "PSNR (dB)");
  return out;
}

std::optional<double> BenchmarkReport::speedup(const BenchmarkMember& m) const {
  for (const auto& ref : members) {
    if (ref.kind != reference) continue;
    if (!ref.steps_to_threshold || !m.steps_to_threshold) return std::nullopt;
    return static_cast<double>(*ref.steps_to_threshold) /
           static_cast<double>(*m.steps_to_threshold);
  }
  return std::nullopt;
}

std::string BenchmarkReport::table() const {
  std::string s = fmt::format("threshold: {:.4f} dB (final EMA train PSNR of {})\n", threshold,
                              reference);
  s += fmt::format("{:<12} {:>8} {:>10} {:>12} {:>12} {:>10} {:>10} {:>10}\n", "method",
                   "status", "steps", "final_psnr", "steps_to_thr", "fraction", "speedup",
                   "test_psnr");
  for (const auto& m : members) {
    if (!m.ok) {
      s += fmt::format("{:<12} {:>8}  {}\n", m.kind, "failed", m.error);
      continue;
    }
    const std::string steps = m.steps_to_threshold ? std::to_string(*m.steps_to_threshold) : "-";
    std::string fraction = "-";
    for (const auto& ref : members) {
      if (ref.kind == reference && ref.ok && m.steps_to_threshold) {
        fraction = fmt::format("{:.3f}", static_cast<double>(*m.steps_to_threshold) /
                                             static_cast<double>(ref.total_steps));
      }
    }
    const auto sp = speedup(m);
    s += fmt::format("{:<12} {:>8} {:>10} {:>12.4f} {:>12} {:>10} {:>10} {:>10.4f}\n", m.kind,
                     "ok", m.total_steps, m.final_psnr, steps, fraction,
                     sp ? fmt::format("{:.2f}x", *sp) : std::string("-"), m.test_psnr);
  }
  s += fmt::format("fbp test psnr: {:.4f} dB\n", fbp_test_psnr);
  return s;
}

BenchmarkReport run_benchmark(const ExperimentConfig& base, const std::vector<std::string>& suite,
                              const std::string& name) {
  if (suite.size() < 2) {
    throw ConfigError("benchmark: the suite must list at least two trainer kinds");
  }
  for (const auto& k : suite) parse_trainer_kind(k);
  base.validate();

  BenchmarkReport report;
  report.dir = resolve_output_dir(base) / name;
  std::filesystem::create_directories(report.dir);

  std::vector<std::pair<std::string, MetricLog>> logs;
  for (const auto& kind : suite) {
    ExperimentConfig cfg = base;
    cfg.trainer.kind = kind;
    cfg.output.dir = (std::filesystem::path(base.output.dir) / name).string();
    cfg.output.run_id = kind;
    BenchmarkMember m;
    m.kind = kind;
    try {
      const RunOutcome run = run_experiment(cfg);
      m.ok = true;
      m.run_dir = run.run_dir;
      const auto& rows = run.training.log.rows();
      m.total_steps = rows.empty() ? 0 : rows.back().step;
      m.final_psnr = rows.empty() ? 0.0 : rows.back().psnr_ema;
      m.wall_time_s = rows.empty() ? 0.0 : rows.back().wall_time_s;
      m.test_psnr = run.test_eval.summary.mean;
      report.fbp_test_psnr = run.fbp_test.summary.mean;
      logs.emplace_back(kind, run.training.log);
    } catch (const std::exception& e) {
      m.error = e.what();
    }
    report.members.push_back(m);
  }

  for (const auto& m : report.members) {
    if (m.ok) {
      report.reference = m.kind;
      report.threshold = m.final_psnr;
      break;
    }
  }
  std::vector<Curve> by_iter, by_time;
  for (auto& m : report.members) {
    if (!m.ok) continue;
    for (const auto& [kind, log] : logs) {
      if (kind != m.kind) continue;
      m.steps_to_threshold = steps_to_threshold(log, report.threshold);
      if (m.steps_to_threshold) {
        for (const auto& row : log.rows()) {
          if (row.step == *m.steps_to_threshold) m.time_to_threshold = row.wall_time_s;
        }
      }
      by_iter.push_back(curve_of(kind, log, false));
      by_time.push_back(curve_of(kind, log, true));
    }
  }
  if (!by_iter.empty()) {
    plot_curves(report.dir / "curves_iter.png", by_iter, "iteration", "PSNR (dB)");
    plot_curves(report.dir / "curves_time.png", by_time, "wall time (s)", "PSNR (dB)");
  }

  std::string csv = "method,status,total_steps,final_psnr_ema,steps_to_threshold,"
                    "time_to_threshold_s,speedup,test_psnr\n";
  for (const auto& m : report.members) {
    const auto sp = report.speedup(m);
    csv += fmt::format("{},{},{},{:.6f},{},{},{},{:.6f}\n", m.kind, m.ok ? "ok" : "failed",
                       m.total_steps, m.final_psnr,
                       m.steps_to_threshold ? std::to_string(*m.steps_to_threshold) : "",
                       m.time_to_threshold ? fmt::format("{:.6f}", *m.time_to_threshold) : "",
                       sp ? fmt::format("{:.6f}", *sp) : "", m.test_psnr);
  }
  write_text(report.dir / "benchmark.csv", csv);
  write_text(report.dir / "report.txt", report.table());
  return report;
}

}  // namespace fei
