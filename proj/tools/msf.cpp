// msf: data generation, training, evaluation, prediction, sweeps and plots.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "msf/checkpoint.hpp"
#include "msf/data.hpp"
#include "msf/error.hpp"
#include "msf/io.hpp"
#include "msf/metrics.hpp"
#include "msf/model.hpp"
#include "msf/render.hpp"
#include "msf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msf;

namespace {

// Relative dataset paths live under $MSF_DATA_DIR when it is set.
fs::path data_path(const std::string& arg) {
  const fs::path p(arg);
  const char* root = std::getenv("MSF_DATA_DIR");
  if (p.is_relative() && root && *root) return fs::path(root) / p;
  return p;
}

void require_parent_dir(const fs::path& out) {
  const fs::path parent = out.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw IoError("output directory does not exist: " + parent.string());
}

json read_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

// Options shared by train and sweep. Unset optionals fall back to the config
// file, then to the built-in defaults.
struct RunOptions {
  std::string config_file;
  std::string data;
  std::string eval_data;
  std::string ckpt_dir;
  std::optional<int64_t> levels, input_length, horizon, kernel, batch_size, steps, eval_interval;
  std::optional<std::vector<int64_t>> channels;
  std::optional<std::string> cell, fusion, loss_scope;
  std::optional<double> lr, grad_clip;
  std::optional<uint64_t> seed;
  std::optional<std::vector<double>> thresholds;
  int64_t log_every = 10;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_file, "JSON file with optional \"model\" and \"train\" sections")
      ->check(CLI::ExistingFile);
  cmd->add_option("--data", o.data, "training sequences (raw format)")->required();
  cmd->add_option("--eval-data", o.eval_data, "evaluation sequences (default: training set)");
  cmd->add_option("--ckpt-dir", o.ckpt_dir, "checkpoint and log directory");
  cmd->add_option("--levels", o.levels, "number of feature spaces k");
  cmd->add_option("--channels", o.channels, "hidden width per level")->delimiter(',');
  cmd->add_option("--cell", o.cell, "convlstm | convgru | st-lstm");
  cmd->add_option("--fusion", o.fusion, "sum | max | concat | attention");
  cmd->add_option("--kernel", o.kernel, "cell kernel size");
  cmd->add_option("--input-length", o.input_length, "warm-up frames T");
  cmd->add_option("--horizon", o.horizon, "predicted frames N");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--batch-size", o.batch_size, "sequences per step");
  cmd->add_option("--steps", o.steps, "optimizer steps");
  cmd->add_option("--eval-interval", o.eval_interval, "steps between evaluations");
  cmd->add_option("--seed", o.seed, "initialization and batching seed");
  cmd->add_option("--loss-scope", o.loss_scope, "horizon | horizon+warmup");
  cmd->add_option("--thresholds", o.thresholds, "CSI thresholds for evaluation")->delimiter(',');
  cmd->add_option("--grad-clip", o.grad_clip, "global gradient norm clip (0 disables)");
  cmd->add_option("--log-every", o.log_every, "print every n-th step record")->check(CLI::PositiveNumber);
}

struct RunSetup {
  ModelConfig model;
  TrainConfig train;
  SequenceDataset train_data;
  std::optional<SequenceDataset> eval_data;
};

RunSetup resolve_run(const RunOptions& o) {
  json file = json::object();
  if (!o.config_file.empty()) file = read_json_file(o.config_file);
  if (!file.is_object()) throw ConfigError("config file must hold a JSON object");

  RunSetup s;
  const json model_json = file.value("model", json::object());
  try {
    s.model = model_json.get<ModelConfig>();
    s.train = file.value("train", json::object()).get<TrainConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }

  if (o.levels) {
    s.model.levels = *o.levels;
    if (!o.channels && !model_json.contains("channels")) s.model.channels.assign(static_cast<size_t>(*o.levels), 64);
  }
  if (o.channels) s.model.channels = *o.channels;
  if (o.cell) s.model.cell = parse_cell_kind(*o.cell);
  if (o.fusion) s.model.fusion = parse_fusion_kind(*o.fusion);
  if (o.kernel) s.model.kernel = *o.kernel;
  if (o.input_length) s.model.input_length = *o.input_length;
  if (o.horizon) s.model.horizon = *o.horizon;
  if (o.lr) s.train.learning_rate = *o.lr;
  if (o.batch_size) s.train.batch_size = *o.batch_size;
  if (o.steps) s.train.max_steps = *o.steps;
  if (o.eval_interval) s.train.eval_interval = *o.eval_interval;
  if (o.seed) s.train.seed = *o.seed;
  if (o.loss_scope) s.train.loss_scope = parse_loss_scope(*o.loss_scope);
  if (o.thresholds) s.train.thresholds = *o.thresholds;
  if (o.grad_clip) s.train.grad_clip = *o.grad_clip;
  if (!o.ckpt_dir.empty()) s.train.checkpoint_dir = o.ckpt_dir;
  s.train.validate();

  s.train_data = load_raw_sequences(data_path(o.data));
  if (!o.eval_data.empty()) s.eval_data = load_raw_sequences(data_path(o.eval_data));

  // Frame geometry comes from the data; an explicit config value must agree.
  auto take = [&](const char* key, int64_t& field, int64_t actual) {
    if (model_json.contains(key) && field != actual) {
      throw ConfigError(std::string("config ") + key + " = " + std::to_string(field) + " but the data has " +
                        std::to_string(actual));
    }
    field = actual;
  };
  take("height", s.model.height, s.train_data.height);
  take("width", s.model.width, s.train_data.width);
  take("image_channels", s.model.image_channels, s.train_data.channels);
  s.model.validate();
  return s;
}

void print_effective_config(const RunSetup& s) {
  std::cout << json{{"model", s.model}, {"train", s.train}}.dump(2) << "\n";
}

TrainObserver progress_printer(int64_t every) {
  return [every](const json& rec) {
    if (rec.contains("metrics")) {
      const json& m = rec["metrics"];
      std::cout << "eval step " << rec["step"] << " mse " << m["mse_mean"] << " mae " << m["mae_mean"] << " ssim "
                << m["ssim_mean"] << "\n";
    } else if (rec.value("step", int64_t{0}) % every == 0) {
      std::cout << "step " << rec["step"] << " loss " << rec["loss"] << "\n";
    }
  };
}

void print_report_summary(const MetricsReport& r) {
  std::cout << "sequences " << r.sequences << " frames " << r.frames << " mse " << r.mse_mean << " mae " << r.mae_mean
            << " ssim " << r.ssim_mean << "\n";
}

// --------------------------------------------------------------------------

struct GenOptions {
  uint64_t seed = 0;
  int digits = 2;
  int64_t count = 0;
  int64_t length = 20;
  int64_t frame_size = 64;
  int64_t downscale = 1;
  int64_t first_index = 0;
  std::string mnist;
  std::string out;
};

int run_gen_data(const GenOptions& o) {
  MovingSpec spec;
  spec.seed = o.seed;
  spec.num_digits = o.digits;
  spec.count = o.count;
  spec.length = o.length;
  spec.frame_size = o.frame_size;
  spec.first_index = o.first_index;
  spec.validate();
  if (o.frame_size % o.downscale != 0 || o.downscale < 1) {
    throw ConfigError("downscale factor " + std::to_string(o.downscale) + " does not divide frame size");
  }
  const fs::path out = data_path(o.out);
  require_parent_dir(out);

  const DigitSet digits = o.mnist.empty() ? synthetic_digits() : load_idx_digits(o.mnist);
  const SequenceDataset data = downscale(generate_moving_mnist(spec, digits).data, o.downscale);
  save_raw_sequences(out, data);
  std::cout << "wrote " << data.count << " sequences of shape " << to_string(data.shape()) << " seed " << o.seed
            << " digits " << o.digits << " to " << out.string() << "\n";
  return 0;
}

int run_train(const RunOptions& o) {
  const RunSetup s = resolve_run(o);
  print_effective_config(s);
  const TrainResult r =
      train(s.model, s.train, s.train_data, s.eval_data ? &*s.eval_data : nullptr, progress_printer(o.log_every));
  std::cout << "final loss " << r.losses.back() << "\n";
  if (r.best_report) {
    std::cout << "best step " << r.best_step << ": ";
    print_report_summary(*r.best_report);
  }
  if (!s.train.checkpoint_dir.empty()) {
    std::cout << "checkpoints in " << s.train.checkpoint_dir << " (best.json, last.json, train.jsonl)\n";
  }
  return 0;
}

struct EvalOptions {
  std::string ckpt;
  std::string data;
  std::string config_file;
  std::vector<double> thresholds;
  std::string out;
  std::string csv;
  std::string csi_csv;
  bool oracle = false;
  std::optional<int64_t> input_length, horizon;
  int64_t batch_size = 16;
};

LoadedCheckpoint load_for(const std::string& ckpt, const std::string& config_file) {
  std::optional<ModelConfig> expected;
  if (!config_file.empty()) {
    const json j = read_json_file(config_file);
    try {
      expected = j.value("model", j).get<ModelConfig>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
  }
  return load_checkpoint(ckpt, expected);
}

void check_data_matches(const ModelConfig& m, const SequenceDataset& d) {
  if (d.channels != m.image_channels || d.height != m.height || d.width != m.width) {
    throw ConfigError("data frames [" + std::to_string(d.channels) + "," + std::to_string(d.height) + "," +
                      std::to_string(d.width) + "] vs model [" + std::to_string(m.image_channels) + "," +
                      std::to_string(m.height) + "," + std::to_string(m.width) + "]");
  }
  if (d.length < m.input_length + m.horizon) {
    throw DataError("sequences have " + std::to_string(d.length) + " frames, model needs " +
                    std::to_string(m.input_length + m.horizon));
  }
}

int run_eval(const EvalOptions& o) {
  for (double t : o.thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("CSI threshold outside [0, 1]: " + std::to_string(t));
  }
  for (const std::string& p : {o.out, o.csv, o.csi_csv}) {
    if (!p.empty()) require_parent_dir(p);
  }
  const SequenceDataset data = load_raw_sequences(data_path(o.data));

  MetricsReport report;
  if (o.oracle) {
    // The targets are scored against themselves.
    const int64_t t = o.input_length.value_or(10), n = o.horizon.value_or(10);
    if (t < 1 || n < 1) throw ConfigError("input length and horizon must be >= 1");
    if (data.length < t + n) throw DataError("sequences are shorter than input length + horizon");
    const Tensor target = split_io(data.all(), t, n).target;
    report = evaluate_metrics(target, target, o.thresholds);
  } else {
    if (o.ckpt.empty()) throw ConfigError("--ckpt is required unless --oracle is given");
    const LoadedCheckpoint ck = load_for(o.ckpt, o.config_file);
    check_data_matches(ck.model.config, data);
    report = evaluate_model(ck.model, data, o.batch_size, o.thresholds);
  }

  print_report_summary(report);
  for (size_t i = 0; i < report.thresholds.size(); ++i) {
    double mean = 0.0;
    for (double v : report.csi[i]) mean += v;
    std::cout << "csi@" << report.thresholds[i] << " " << mean / static_cast<double>(report.csi[i].size()) << "\n";
  }
  const std::string report_json = json(report).dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << report_json;
  } else {
    write_file_atomic(o.out, report_json);
  }
  if (!o.csv.empty()) write_file_atomic(o.csv, metrics_csv(report));
  if (!o.csi_csv.empty()) write_file_atomic(o.csi_csv, csi_csv(report));
  return 0;
}

struct PredictOptions {
  std::string ckpt;
  std::string data;
  std::string config_file;
  std::string out_frames;
  std::string grid;
  int64_t grid_rows = 8;
  int64_t batch_size = 16;
};

int run_predict(const PredictOptions& o) {
  require_parent_dir(o.out_frames);
  if (!o.grid.empty()) require_parent_dir(o.grid);
  const SequenceDataset data = load_raw_sequences(data_path(o.data));
  const LoadedCheckpoint ck = load_for(o.ckpt, o.config_file);
  const ModelConfig& cfg = ck.model.config;
  check_data_matches(cfg, data);

  const Tensor pred = predict_dataset(ck.model, data, o.batch_size);
  save_raw_sequences(o.out_frames, SequenceDataset::from_tensor(pred, "prediction"));
  std::cout << "wrote predictions of shape " << to_string(pred.shape()) << " to " << o.out_frames << "\n";

  if (!o.grid.empty()) {
    const int64_t rows = std::min(o.grid_rows, data.count);
    const SequenceDataset head = data.slice(0, rows);
    const IoSplit io = split_io(head.all(), cfg.input_length, cfg.horizon);
    const Tensor shown = SequenceDataset::from_tensor(pred).slice(0, rows).all();
    write_png(o.grid, sequence_grid(io.input, io.target, shown));
    std::cout << "wrote " << rows << "-row grid to " << o.grid << "\n";
  }
  return 0;
}

struct SweepOptions {
  RunOptions run;
  std::string axis;
  std::string out;
  std::string report_dir;
};

int run_sweep(const SweepOptions& o) {
  const SweepAxis axis = parse_sweep_axis(o.axis);
  if (!o.out.empty()) require_parent_dir(o.out);
  if (!o.report_dir.empty()) fs::create_directories(o.report_dir);
  const RunSetup s = resolve_run(o.run);
  for (const auto& [label, cfg] : sweep_configs(axis, s.model)) cfg.validate();
  print_effective_config(s);
  const auto rows = sweep(axis, s.model, s.train, s.train_data, s.eval_data ? &*s.eval_data : nullptr,
                          progress_printer(o.run.log_every));
  const std::string table = sweep_table(rows);
  std::cout << table;
  if (!o.out.empty()) write_file_atomic(o.out, table);
  if (!o.report_dir.empty()) {
    for (const auto& row : rows) {
      write_file_atomic(fs::path(o.report_dir) / (row.label + ".json"), json(row.report).dump(2) + "\n");
    }
  }
  return 0;
}

struct PlotOptions {
  std::vector<std::string> reports;
  std::string out_dir;
};

int run_plot(const PlotOptions& o) {
  std::vector<NamedReport> reports;
  for (const std::string& arg : o.reports) {
    // "label=path" or just "path" (label = file stem).
    const size_t eq = arg.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(arg) : fs::path(arg.substr(eq + 1));
    std::string label = eq == std::string::npos ? path.stem().string() : arg.substr(0, eq);
    const json j = read_json_file(path);
    NamedReport nr{std::move(label), {}};
    try {
      nr.report = j.get<MetricsReport>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": not a metrics report: " + e.what());
    }
    reports.push_back(std::move(nr));
  }
  fs::create_directories(o.out_dir);
  for (const fs::path& p : render_report_plots(reports, o.out_dir, std::cout)) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-feature-space video prediction"};
  app.require_subcommand(1);
  app.failure_message([](const CLI::App*, const CLI::Error& e) { return std::string("error: usage: ") + e.what() + "\n"; });

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate Moving MNIST sequences");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--digits", gen.digits, "digits per sequence (2 or 3)");
  gen_cmd->add_option("--count", gen.count, "number of sequences")->required();
  gen_cmd->add_option("--out", gen.out, "output file")->required();
  gen_cmd->add_option("--length", gen.length, "frames per sequence");
  gen_cmd->add_option("--frame-size", gen.frame_size, "square frame size before downscaling");
  gen_cmd->add_option("--downscale", gen.downscale, "block-average factor");
  gen_cmd->add_option("--first-index", gen.first_index, "index of the first sequence (sharding)");
  gen_cmd->add_option("--mnist", gen.mnist, "IDX image file with digit glyphs (default: built-in glyphs)")
      ->check(CLI::ExistingFile);

  RunOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_run_options(train_cmd, train_opts);

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint manifest");
  eval_cmd->add_option("--data", ev.data, "sequences to evaluate on")->required();
  eval_cmd->add_option("--config", ev.config_file, "expected model config (shape check)");
  eval_cmd->add_option("--thresholds", ev.thresholds, "CSI thresholds")->delimiter(',');
  eval_cmd->add_option("--out", ev.out, "report JSON (default: stdout)");
  eval_cmd->add_option("--csv", ev.csv, "per-frame MSE/MAE/SSIM CSV");
  eval_cmd->add_option("--csi-csv", ev.csi_csv, "per-threshold CSI CSV");
  eval_cmd->add_flag("--oracle", ev.oracle, "score the targets against themselves");
  eval_cmd->add_option("--input-length", ev.input_length, "warm-up frames in oracle mode");
  eval_cmd->add_option("--horizon", ev.horizon, "predicted frames in oracle mode");
  eval_cmd->add_option("--batch-size", ev.batch_size, "sequences per forward pass")->check(CLI::PositiveNumber);

  PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "write predicted frames");
  predict_cmd->add_option("--ckpt", pr.ckpt, "checkpoint manifest")->required();
  predict_cmd->add_option("--data", pr.data, "input sequences")->required();
  predict_cmd->add_option("--config", pr.config_file, "expected model config (shape check)");
  predict_cmd->add_option("--out-frames", pr.out_frames, "predicted sequences (raw format)")->required();
  predict_cmd->add_option("--grid", pr.grid, "PNG strip of inputs, targets and predictions");
  predict_cmd->add_option("--grid-rows", pr.grid_rows, "sequences shown in the grid")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--batch-size", pr.batch_size, "sequences per forward pass")->check(CLI::PositiveNumber);

  SweepOptions sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "train one model per axis value and compare");
  add_run_options(sweep_cmd, sw.run);
  sweep_cmd->add_option("--axis", sw.axis, "levels | fusion | cell")->required();
  sweep_cmd->add_option("--out", sw.out, "markdown table");
  sweep_cmd->add_option("--report-dir", sw.report_dir, "per-row metrics reports");

  PlotOptions pl;
  auto* plot_cmd = app.add_subcommand("plot", "plot per-frame metric curves");
  plot_cmd->add_option("--report", pl.reports, "metrics report JSON, optionally label=path")->required();
  plot_cmd->add_option("--out-dir", pl.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(train_opts);
    if (*eval_cmd) return run_eval(ev);
    if (*predict_cmd) return run_predict(pr);
    if (*sweep_cmd) return run_sweep(sw);
    if (*plot_cmd) return run_plot(pl);
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
