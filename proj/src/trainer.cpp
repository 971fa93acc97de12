#include "msf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "msf/checkpoint.hpp"
#include "msf/error.hpp"
#include "msf/io.hpp"

namespace msf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view loss_scope_name(LossScope scope) {
  return scope == LossScope::Horizon ? "horizon" : "horizon+warmup";
}

LossScope parse_loss_scope(std::string_view name) {
  if (name == "horizon") return LossScope::Horizon;
  if (name == "horizon+warmup" || name == "all") return LossScope::HorizonAndWarmup;
  throw ConfigError("unknown loss scope '" + std::string(name) + "' (expected horizon|horizon+warmup)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (eval_interval < 1) throw ConfigError("eval interval must be >= 1");
  if (batch_size < 1 || eval_batch_size < 1) throw ConfigError("batch sizes must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (plateau_decay < 0.0 || plateau_decay >= 1.0) throw ConfigError("plateau_decay must lie in [0, 1)");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("CSI thresholds must lie in [0, 1]");
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"batch_size", c.batch_size},
           {"max_steps", c.max_steps},
           {"eval_interval", c.eval_interval},
           {"eval_batch_size", c.eval_batch_size},
           {"seed", c.seed},
           {"loss_scope", std::string(loss_scope_name(c.loss_scope))},
           {"checkpoint_dir", c.checkpoint_dir},
           {"thresholds", c.thresholds},
           {"grad_clip", c.grad_clip},
           {"plateau_decay", c.plateau_decay},
           {"plateau_patience", c.plateau_patience}};
}

void from_json(const json& j, TrainConfig& c) {
  const TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.eval_batch_size = j.value("eval_batch_size", d.eval_batch_size);
  c.seed = j.value("seed", d.seed);
  c.loss_scope = parse_loss_scope(j.value("loss_scope", std::string(loss_scope_name(d.loss_scope))));
  c.checkpoint_dir = j.value("checkpoint_dir", d.checkpoint_dir);
  c.thresholds = j.value("thresholds", d.thresholds);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.plateau_decay = j.value("plateau_decay", d.plateau_decay);
  c.plateau_patience = j.value("plateau_patience", d.plateau_patience);
}

double loss_l2(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "loss_l2");
  if (pred.size() == 0) throw ContractError("loss_l2 of empty tensors");
  double total = 0.0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

Var loss_l2(std::span<const Var> frames, const Tensor& targets) {
  require_rank(targets, 5, "loss_l2 targets");
  if (static_cast<int64_t>(frames.size()) != targets.dim(1)) {
    throw ContractError("loss_l2: " + std::to_string(frames.size()) + " frames vs " +
                        std::to_string(targets.dim(1)) + " targets");
  }
  Var total;
  for (size_t t = 0; t < frames.size(); ++t) {
    Var term = ops::sum_squared_error(frames[t], targets.time_slice(static_cast<int64_t>(t)));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return ops::scale(total, 1.0 / static_cast<double>(targets.size()));
}

RolloutLoss rollout_loss(const Tensor& sequences, const ModelParams& model, LossScope scope) {
  const ModelConfig& cfg = model.config;
  IoSplit io = split_io(sequences, cfg.input_length, cfg.horizon);
  RolloutLoss out;
  out.graph = rollout_graph(io.input, model, cfg.horizon);
  if (scope == LossScope::Horizon) {
    out.loss = loss_l2(out.graph.horizon, io.target);
    return out;
  }
  // Warm-up step t predicts ground-truth frame t+1 (frames 2..T).
  std::vector<Var> frames = out.graph.warmup;
  frames.insert(frames.end(), out.graph.horizon.begin(), out.graph.horizon.end());
  const int64_t steps = cfg.input_length - 1 + cfg.horizon;
  std::vector<Tensor> targets;
  for (int64_t t = 1; t <= steps; ++t) targets.push_back(sequences.time_slice(t));
  out.loss = loss_l2(frames, Tensor::stack_time(targets));
  return out;
}

Adam::Adam(ParamList params, double learning_rate, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.var.value().size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.var.value().size()), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Var var = params_[k].var;
    if (!var.has_grad()) continue;
    const Tensor g = var.grad();
    auto value = var.mutable_value().data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[static_cast<int64_t>(i)];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[static_cast<int64_t>(i)] * g[static_cast<int64_t>(i)];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      value[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

Tensor predict_dataset(const ModelParams& model, const SequenceDataset& data, int64_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const ModelConfig& cfg = model.config;
  if (data.channels != cfg.image_channels || data.height != cfg.height || data.width != cfg.width) {
    throw ConfigError("dataset frames [" + std::to_string(data.channels) + "," + std::to_string(data.height) + "," +
                      std::to_string(data.width) + "] do not match model [" + std::to_string(cfg.image_channels) +
                      "," + std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "]");
  }
  if (data.length < cfg.input_length) {
    throw DataError("sequences have " + std::to_string(data.length) + " frames, model needs " +
                    std::to_string(cfg.input_length) + " inputs");
  }
  const int64_t frame = cfg.image_channels * cfg.height * cfg.width;
  Tensor out({data.count, cfg.horizon, cfg.image_channels, cfg.height, cfg.width});
  for (int64_t first = 0; first < data.count; first += batch_size) {
    const int64_t n = std::min(batch_size, data.count - first);
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), first);
    Tensor batch = data.batch(idx);
    Tensor inputs = data.length == cfg.input_length
                        ? batch
                        : split_io(batch, cfg.input_length, data.length - cfg.input_length).input;
    Tensor pred = rollout(inputs, model, cfg.horizon);
    std::copy(pred.data().begin(), pred.data().end(), out.ptr() + first * cfg.horizon * frame);
  }
  return out;
}

MetricsReport evaluate_model(const ModelParams& model, const SequenceDataset& data, int64_t batch_size,
                             std::vector<double> thresholds) {
  const ModelConfig& cfg = model.config;
  if (data.length < cfg.input_length + cfg.horizon) {
    throw DataError("evaluation sequences have " + std::to_string(data.length) + " frames, need " +
                    std::to_string(cfg.input_length + cfg.horizon));
  }
  MetricsAccumulator acc(std::move(thresholds));
  for (int64_t first = 0; first < data.count; first += batch_size) {
    const int64_t n = std::min(batch_size, data.count - first);
    SequenceDataset shard = data.slice(first, n);
    Tensor pred = predict_dataset(model, shard, n);
    Tensor target = split_io(shard.all(), cfg.input_length, cfg.horizon).target;
    acc.add(pred, target);
  }
  return acc.report();
}

namespace {

double global_grad_norm(const ParamList& params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.var.has_grad()) continue;
    for (const Tensor grad = p.var.grad(); double g : grad.data()) total += g * g;
  }
  return std::sqrt(total);
}

void scale_grads(const ParamList& params, double factor) {
  for (const auto& p : params) {
    if (!p.var.has_grad()) continue;
    for (double& g : p.var.node()->grad.data()) g *= factor;
  }
}

std::string jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const SequenceDataset& train_data,
                  const SequenceDataset* eval_data, const TrainObserver& observer) {
  model_config.validate();
  config.validate();
  if (train_data.count < 1) throw DataError("training dataset is empty");
  if (train_data.length < model_config.input_length + model_config.horizon) {
    throw DataError("training sequences have " + std::to_string(train_data.length) + " frames, need " +
                    std::to_string(model_config.input_length + model_config.horizon));
  }
  const SequenceDataset& eval_set = eval_data ? *eval_data : train_data;
  const fs::path ckpt_dir = config.checkpoint_dir;
  if (!ckpt_dir.empty()) fs::create_directories(ckpt_dir);

  TrainResult result{make_model(model_config, mix_seed(config.seed, 1)), {}, {}, std::nullopt, -1, std::nullopt};
  ModelParams& model = result.model;
  const ParamList params = model.params();
  quantize_to_float32(params);
  Adam adam(params, config.learning_rate, config.beta1, config.beta2, config.epsilon);

  std::vector<int64_t> order(static_cast<size_t>(train_data.count));
  size_t cursor = order.size();
  int64_t epoch = 0;
  auto next_batch = [&]() {
    std::vector<int64_t> idx;
    while (static_cast<int64_t>(idx.size()) < std::min(config.batch_size, train_data.count)) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(mix_seed(config.seed, 1000 + static_cast<uint64_t>(epoch++)));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    return idx;
  };

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  auto record = [&](json r) {
    if (observer) observer(r);
    result.log.push_back(std::move(r));
  };
  auto flush_log = [&] {
    if (!ckpt_dir.empty()) write_file_atomic(ckpt_dir / "train.jsonl", jsonl(result.log));
  };

  int64_t evals_without_gain = 0;
  auto run_eval = [&](int64_t step) {
    MetricsReport report = evaluate_model(model, eval_set, config.eval_batch_size, config.thresholds);
    record(json{{"step", step}, {"metrics", report}});
    if (!result.best_report || report.mse_mean < result.best_report->mse_mean) {
      result.best_report = report;
      result.best_step = step;
      result.best_model = clone_model(model);
      evals_without_gain = 0;
      if (!ckpt_dir.empty()) {
        save_checkpoint(ckpt_dir / "best.json", model, json{{"step", step}, {"metrics", report}});
      }
    } else if (++evals_without_gain >= config.plateau_patience && config.plateau_decay > 0.0) {
      adam.set_learning_rate(adam.learning_rate() * config.plateau_decay);
      evals_without_gain = 0;
    }
    flush_log();
  };

  for (int64_t step = 1; step <= config.max_steps; ++step) {
    const auto idx = next_batch();
    zero_grads(params);
    RolloutLoss rl = rollout_loss(train_data.batch(idx), model, config.loss_scope);
    const double loss = rl.loss.value()[0];
    backward(rl.loss);
    if (!std::isfinite(loss)) {
      json grads = json::object();
      for (const auto& p : params) {
        double s = 0.0;
        for (const Tensor grad = p.var.grad(); double g : grad.data()) s += g * g;
        grads[p.name] = std::sqrt(s);
      }
      json dump{{"step", step}, {"loss", std::to_string(loss)}, {"learning_rate", adam.learning_rate()},
                {"grad_norms", grads}};
      if (!ckpt_dir.empty()) write_file_atomic(ckpt_dir / "nan_dump.json", dump.dump(2) + "\n");
      flush_log();
      throw TrainingError("non-finite loss at step " + std::to_string(step) + " (lr " +
                          std::to_string(adam.learning_rate()) + "); diagnostic: " + dump.dump());
    }
    if (config.grad_clip > 0.0) {
      const double norm = global_grad_norm(params);
      if (norm > config.grad_clip) scale_grads(params, config.grad_clip / norm);
    }
    adam.step();
    quantize_to_float32(params);
    result.losses.push_back(loss);
    record(json{{"step", step}, {"loss", loss}, {"wall_time", elapsed()}});
    if (step % config.eval_interval == 0) run_eval(step);
  }
  if (config.max_steps == 0 || config.max_steps % config.eval_interval != 0) run_eval(config.max_steps);
  zero_grads(params);
  if (!ckpt_dir.empty()) {
    save_checkpoint(ckpt_dir / "last.json", model, json{{"step", config.max_steps}});
    flush_log();
  }
  return result;
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "levels") return SweepAxis::Levels;
  if (name == "fusion") return SweepAxis::Fusion;
  if (name == "cell") return SweepAxis::Cell;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "' (expected levels|fusion|cell)");
}

std::vector<std::pair<std::string, ModelConfig>> sweep_configs(SweepAxis axis, const ModelConfig& base) {
  std::vector<std::pair<std::string, ModelConfig>> rows;
  switch (axis) {
    case SweepAxis::Levels:
      for (int64_t k = 1; k <= 4; ++k) {
        ModelConfig c = base;
        c.levels = k;
        c.channels.resize(static_cast<size_t>(k), base.channels.empty() ? 64 : base.channels.back());
        rows.emplace_back("Model-" + std::to_string(k), c);
      }
      break;
    case SweepAxis::Fusion:
      for (auto [label, kind] : {std::pair{"sum", FusionKind::Sum}, std::pair{"attention", FusionKind::Attention},
                                 std::pair{"concatenate", FusionKind::Concat}, std::pair{"max", FusionKind::Max}}) {
        ModelConfig c = base;
        c.fusion = kind;
        rows.emplace_back(label, c);
      }
      break;
    case SweepAxis::Cell:
      for (auto [label, kind] : {std::pair{"convgru", CellKind::ConvGru}, std::pair{"st-lstm", CellKind::StLstm},
                                 std::pair{"convlstm", CellKind::ConvLstm}}) {
        ModelConfig c = base;
        c.cell = kind;
        rows.emplace_back(label, c);
      }
      break;
  }
  for (auto& [label, c] : rows) c.validate();
  return rows;
}

std::vector<SweepRow> sweep(SweepAxis axis, const ModelConfig& base, const TrainConfig& config,
                            const SequenceDataset& train_data, const SequenceDataset* eval_data,
                            const TrainObserver& observer) {
  std::vector<SweepRow> rows;
  for (const auto& [label, model_config] : sweep_configs(axis, base)) {
    TrainConfig tc = config;
    if (!config.checkpoint_dir.empty()) tc.checkpoint_dir = (fs::path(config.checkpoint_dir) / label).string();
    TrainResult r = train(model_config, tc, train_data, eval_data, [&, l = label](const json& rec) {
      if (!observer) return;
      json tagged = rec;
      tagged["row"] = l;
      observer(tagged);
    });
    rows.push_back({label, model_config, parameter_count(r.model.params()), *r.best_report});
  }
  return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "| Model | MSE | MAE | SSIM | Params |\n|---|---|---|---|---|\n";
  os << std::fixed;
  for (const auto& r : rows) {
    os << "| " << r.label << " | " << std::setprecision(1) << r.report.mse_mean << " | " << r.report.mae_mean
       << " | " << std::setprecision(3) << r.report.ssim_mean << " | " << r.parameters << " |\n";
  }
  return os.str();
}

}  // namespace msf
