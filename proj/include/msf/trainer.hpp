#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "msf/data.hpp"
#include "msf/metrics.hpp"
#include "msf/model.hpp"

namespace msf {

enum class LossScope {
  Horizon,            // predicted frames T+1..T+N only
  HorizonAndWarmup,   // plus the one-step reconstructions of frames 2..T
};

std::string_view loss_scope_name(LossScope scope);
LossScope parse_loss_scope(std::string_view name);

struct TrainConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t batch_size = 8;
  int64_t max_steps = 1000;
  int64_t eval_interval = 100;
  int64_t eval_batch_size = 16;
  uint64_t seed = 0;
  LossScope loss_scope = LossScope::Horizon;
  std::string checkpoint_dir;  // empty: keep everything in memory
  std::vector<double> thresholds;
  double grad_clip = 0.0;       // global-norm clip, 0 disables
  double plateau_decay = 0.0;   // lr factor on plateau, 0 disables
  int64_t plateau_patience = 3; // evals without improvement before decaying

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Mean of squared differences over all elements.
double loss_l2(const Tensor& pred, const Tensor& target);
// Same objective on graph predictions; `targets` is [B, n, C, H, W] and
// frames[i] is compared with targets[:, i].
Var loss_l2(std::span<const Var> frames, const Tensor& targets);

struct RolloutLoss {
  Var loss;
  RolloutGraph graph;
};

// Rolls the model over `sequences` [B, T+N, C, H, W] and builds the l2 loss
// for the configured scope.
RolloutLoss rollout_loss(const Tensor& sequences, const ModelParams& model, LossScope scope);

class Adam {
 public:
  Adam(ParamList params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  // Applies one update from the gradients currently held by the parameters.
  void step();
  int64_t steps() const { return steps_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  ParamList params_;
  double lr_, beta1_, beta2_, epsilon_;
  int64_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Runs the rollout over the whole dataset in batches; [n, N, C, H, W].
Tensor predict_dataset(const ModelParams& model, const SequenceDataset& data, int64_t batch_size = 16);

MetricsReport evaluate_model(const ModelParams& model, const SequenceDataset& data, int64_t batch_size = 16,
                             std::vector<double> thresholds = {});

struct TrainResult {
  ModelParams model;                     // parameters after the last step
  std::vector<double> losses;            // per step
  std::vector<nlohmann::json> log;       // JSON-lines records
  std::optional<MetricsReport> best_report;
  int64_t best_step = -1;
  std::optional<ModelParams> best_model;
};

// Optional per-record observer, e.g. for printing progress.
using TrainObserver = std::function<void(const nlohmann::json&)>;

// Trains from a seeded initialization. Evaluation runs every eval_interval
// steps and after the last step on `eval_data` (the training set when null);
// the best-by-MSE parameters are kept and, with a checkpoint dir, saved as
// best.json. Throws TrainingError on a non-finite loss after writing a
// diagnostic dump.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const SequenceDataset& train_data,
                  const SequenceDataset* eval_data = nullptr, const TrainObserver& observer = {});

enum class SweepAxis { Levels, Fusion, Cell };
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepRow {
  std::string label;
  ModelConfig model;
  int64_t parameters = 0;
  MetricsReport report;
};

// Row labels and configs for an axis, in table order.
std::vector<std::pair<std::string, ModelConfig>> sweep_configs(SweepAxis axis, const ModelConfig& base);

// Trains and evaluates one model per axis value under the same seed and budget.
std::vector<SweepRow> sweep(SweepAxis axis, const ModelConfig& base, const TrainConfig& config,
                            const SequenceDataset& train_data, const SequenceDataset* eval_data = nullptr,
                            const TrainObserver& observer = {});

// Markdown table: | Model | MSE | MAE | SSIM | Params |
std::string sweep_table(const std::vector<SweepRow>& rows);

}  // namespace msf
