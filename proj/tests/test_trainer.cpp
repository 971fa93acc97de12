#include "doctest.h"

#include <filesystem>
#include <sstream>
#include <unordered_set>

#include "msf/checkpoint.hpp"
#include "msf/error.hpp"
#include "msf/io.hpp"
#include "msf/trainer.hpp"
#include "test_util.hpp"

using namespace msf;
using testing::random_tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msf_test_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.levels = 2;
  cfg.channels = {4, 4};
  cfg.height = 16;
  cfg.width = 16;
  cfg.input_length = 3;
  cfg.horizon = 2;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig tc;
  tc.batch_size = 2;
  tc.max_steps = 4;
  tc.eval_interval = 2;
  tc.eval_batch_size = 3;
  tc.seed = 5;
  return tc;
}

SequenceDataset tiny_data(int64_t count, uint64_t seed) {
  return SequenceDataset::from_tensor(random_tensor({count, 5, 1, 16, 16}, seed, 0.0, 1.0));
}

bool reaches(const Var& root, const Var& target) {
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (n == target.node()) return true;
    if (!seen.insert(n).second) continue;
    for (const auto& p : n->parents)
      if (p) stack.push_back(p.get());
  }
  return false;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("loss_l2 values") {
  const Tensor a = random_tensor({1, 2, 1, 2, 2}, 1);
  CHECK(loss_l2(a, a) == 0.0);

  Tensor shifted = a;
  for (auto& v : shifted.data()) v += 0.1;
  CHECK(loss_l2(shifted, a) == doctest::Approx(0.01).epsilon(1e-12));

  const Tensor b = random_tensor({1, 2, 1, 2, 2}, 2);
  double sum = 0.0;
  for (int i = 0; i < 8; ++i) sum += (a.vec()[i] - b.vec()[i]) * (a.vec()[i] - b.vec()[i]);
  CHECK(loss_l2(a, b) == doctest::Approx(sum / 8.0).epsilon(1e-14));

  const std::vector<Var> frames{Var::constant(a.time_slice(0)), Var::constant(a.time_slice(1))};
  CHECK(loss_l2(frames, b).value()[0] == doctest::Approx(sum / 8.0).epsilon(1e-14));
  CHECK_THROWS_AS(loss_l2(a, Tensor({1, 2, 1, 2, 3})), ContractError);
}

TEST_CASE("Adam matches the hand-computed update") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const Var x = Var::parameter(Tensor({1}, {1.0}));
  Adam adam({{"x", x}}, lr, b1, b2, eps);

  // L = x^2, g = 2x.
  backward(ops::sum_all(ops::mul(x, x)));
  adam.step();
  const double x1 = 1.0 - lr * 2.0 / (2.0 + eps);
  CHECK(std::abs(x.value()[0] - x1) < 1e-10);

  x.node()->grad = Tensor();
  backward(ops::sum_all(ops::mul(x, x)));
  adam.step();
  const double g2 = 2.0 * x1;
  const double m2 = b1 * (1 - b1) * 2.0 + (1 - b1) * g2;
  const double v2 = b2 * (1 - b2) * 4.0 + (1 - b2) * g2 * g2;
  const double x2 = x1 - lr * (m2 / (1 - b1 * b1)) / (std::sqrt(v2 / (1 - b2 * b2)) + eps);
  CHECK(std::abs(x.value()[0] - x2) < 1e-10);
  CHECK(adam.steps() == 2);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  TrainConfig tc = tiny_train();
  tc.learning_rate = 0.0;
  const TrainResult r = train(tiny_model(), tc, tiny_data(3, 3));
  const ModelParams init = make_model(tiny_model(), mix_seed(tc.seed, 1));
  quantize_to_float32(init.params());
  const auto a = r.model.params(), b = init.params();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].var.value() == b[i].var.value());
}

TEST_CASE("training is reproducible under a fixed seed") {
  const SequenceDataset data = tiny_data(3, 4);
  const TrainResult a = train(tiny_model(), tiny_train(), data);
  const TrainResult b = train(tiny_model(), tiny_train(), data);
  CHECK(a.losses == b.losses);
  CHECK(a.best_report == b.best_report);
  CHECK(a.losses.size() == 4);
  TrainConfig other = tiny_train();
  other.seed = 6;
  CHECK(train(tiny_model(), other, data).losses != a.losses);
}

TEST_CASE("log records steps and periodic evaluations") {
  const TrainResult r = train(tiny_model(), tiny_train(), tiny_data(3, 5));
  int steps = 0, evals = 0;
  for (const auto& rec : r.log) {
    if (rec.contains("loss")) {
      ++steps;
      CHECK(rec.contains("wall_time"));
    }
    if (rec.contains("metrics")) {
      ++evals;
      CHECK(rec.at("metrics").at("frames") == 2);
    }
  }
  CHECK(steps == 4);
  CHECK(evals == 2);
  CHECK((r.best_step == 2 || r.best_step == 4));
  REQUIRE(r.best_model.has_value());
  CHECK(evaluate_model(*r.best_model, tiny_data(3, 5), 3) == *r.best_report);
}

TEST_CASE("horizon-only loss never reaches the warm-up predictions") {
  const ModelConfig cfg = tiny_model();
  const ModelParams model = make_model(cfg, 7);
  const Tensor seq = random_tensor({2, 5, 1, 16, 16}, 8, 0, 1);

  const RolloutLoss h = rollout_loss(seq, model, LossScope::Horizon);
  REQUIRE(h.graph.warmup.size() == 2);
  for (const Var& w : h.graph.warmup) CHECK_FALSE(reaches(h.loss, w));
  for (const Var& f : h.graph.horizon) CHECK(reaches(h.loss, f));

  const RolloutLoss hw = rollout_loss(seq, model, LossScope::HorizonAndWarmup);
  for (const Var& w : hw.graph.warmup) CHECK(reaches(hw.loss, w));

  // The warm-up terms change the gradient only when included.
  const ParamList params = model.params();
  backward(h.loss);
  const Tensor gh = params.back().var.grad();
  zero_grads(params);
  backward(hw.loss);
  const Tensor ghw = params.back().var.grad();
  zero_grads(params);
  CHECK(testing::max_abs_diff(gh, ghw) > 0.0);
}

TEST_CASE("checkpoint round trip is bitwise") {
  const fs::path dir = scratch_dir("ckpt");
  const ModelParams model = make_model(tiny_model(), 9);
  quantize_to_float32(model.params());
  save_checkpoint(dir / "m.json", model, nlohmann::json{{"note", "x"}});
  CHECK(fs::exists(dir / "m.bin"));

  const LoadedCheckpoint back = load_checkpoint(dir / "m.json", tiny_model());
  CHECK(back.model.config == model.config);
  CHECK(back.extra.at("note") == "x");
  const auto a = model.params(), b = back.model.params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(testing::bitwise_equal(a[i].var.value(), b[i].var.value()));

  const SequenceDataset data = tiny_data(2, 10);
  CHECK(evaluate_model(model, data, 2, {0.5}) == evaluate_model(back.model, data, 2, {0.5}));
}

TEST_CASE("checkpoint config mismatch lists the differing shapes") {
  const fs::path dir = scratch_dir("mismatch");
  save_checkpoint(dir / "m.json", make_model(tiny_model(), 1));
  ModelConfig other = tiny_model();
  other.channels = {4, 6};
  try {
    load_checkpoint(dir / "m.json", other);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("level0.down.weight") != std::string::npos);
    CHECK(msg.find("[6,4,3,3]") != std::string::npos);
  }
  CHECK(parameter_shape_diff(tiny_model(), tiny_model()).empty());
}

TEST_CASE("malformed or missing checkpoints") {
  const fs::path dir = scratch_dir("bad");
  save_checkpoint(dir / "m.json", make_model(tiny_model(), 1));
  SUBCASE("truncated blob") {
    const std::string blob = read_file(dir / "m.bin");
    write_file_atomic(dir / "m.bin", blob.substr(0, blob.size() - 4));
    CHECK_THROWS_AS(load_checkpoint(dir / "m.json"), DataError);
  }
  SUBCASE("not JSON") {
    write_file_atomic(dir / "m.json", "{oops");
    CHECK_THROWS_AS(load_checkpoint(dir / "m.json"), DataError);
  }
  SUBCASE("missing manifest") { CHECK_THROWS_AS(load_checkpoint(dir / "none.json"), IoError); }
}

TEST_CASE("training writes checkpoints and a JSON-lines log") {
  const fs::path dir = scratch_dir("run");
  TrainConfig tc = tiny_train();
  tc.checkpoint_dir = dir.string();
  const TrainResult r = train(tiny_model(), tc, tiny_data(3, 11));
  CHECK(fs::exists(dir / "best.json"));
  CHECK(fs::exists(dir / "last.json"));
  std::istringstream log(read_file(dir / "train.jsonl"));
  std::string line;
  size_t lines = 0;
  while (std::getline(log, line)) {
    CHECK(nlohmann::json::accept(line));
    ++lines;
  }
  CHECK(lines == r.log.size());
  const LoadedCheckpoint best = load_checkpoint(dir / "best.json");
  CHECK(best.extra.at("step") == r.best_step);
  CHECK(evaluate_model(best.model, tiny_data(3, 11), 3) == *r.best_report);
}

TEST_CASE("a diverging run aborts with a diagnostic dump") {
  const fs::path dir = scratch_dir("nan");
  TrainConfig tc = tiny_train();
  tc.learning_rate = 1e39;  // overflows float32 parameters after one step
  tc.checkpoint_dir = dir.string();
  CHECK_THROWS_AS(train(tiny_model(), tc, tiny_data(2, 12)), TrainingError);
  REQUIRE(fs::exists(dir / "nan_dump.json"));
  const auto dump = nlohmann::json::parse(read_file(dir / "nan_dump.json"));
  CHECK(dump.contains("step"));
  CHECK(dump.contains("learning_rate"));
  CHECK(dump.at("grad_norms").contains("head.weight"));
}

TEST_CASE("train config validation and JSON") {
  TrainConfig tc;
  CHECK(tc.learning_rate == 5e-4);
  tc.eval_interval = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.learning_rate = -1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.loss_scope = LossScope::HorizonAndWarmup;
  tc.thresholds = {0.5};
  const nlohmann::json j = tc;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.loss_scope == LossScope::HorizonAndWarmup);
  CHECK(back.thresholds == tc.thresholds);
  CHECK_THROWS_AS(train(tiny_model(), TrainConfig{}, SequenceDataset{}), DataError);
}

TEST_CASE("sweep axes and table") {
  ModelConfig base = tiny_model();
  base.levels = 2;
  const auto levels = sweep_configs(SweepAxis::Levels, base);
  REQUIRE(levels.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(levels[static_cast<size_t>(k)].first == "Model-" + std::to_string(k + 1));
    CHECK(levels[static_cast<size_t>(k)].second.levels == k + 1);
  }
  std::vector<std::string> labels;
  for (const auto& [l, c] : sweep_configs(SweepAxis::Fusion, base)) labels.push_back(l);
  CHECK(labels == std::vector<std::string>{"sum", "attention", "concatenate", "max"});
  labels.clear();
  for (const auto& [l, c] : sweep_configs(SweepAxis::Cell, base)) labels.push_back(l);
  CHECK(labels == std::vector<std::string>{"convgru", "st-lstm", "convlstm"});
  CHECK_THROWS_AS(parse_sweep_axis("depth"), ConfigError);

  TrainConfig tc = tiny_train();
  tc.max_steps = 1;
  tc.eval_interval = 1;
  const auto rows = sweep(SweepAxis::Cell, base, tc, tiny_data(2, 13));
  REQUIRE(rows.size() == 3);
  const std::string table = sweep_table(rows);
  CHECK(table.rfind("| Model | MSE | MAE | SSIM | Params |", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);
  CHECK(rows[0].parameters != rows[2].parameters);
}

}  // TEST_SUITE
