#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chnode/contraction.hpp"
#include "chnode/data.hpp"
#include "chnode/error.hpp"
#include "chnode/model.hpp"
#include "chnode/training.hpp"

namespace chnode {

enum class Task { blobs2d, double_circles, mnist };

std::string to_string(Task task);
Task parse_task(const std::string& name);

struct ExperimentConfig {
  Task task = Task::blobs2d;
  Arch arch = Arch::chnode;
  Index n = 2;
  Index layers = 10;
  double h = 0.1;
  double kappa = 0.1;
  bool use_L = false;
  TrainConfig train;
  std::uint64_t seed = 0;

  std::filesystem::path mnist_dir = "data/mnist_desk";
  Index n_train = 0;  // 0 = task default
  Index n_test = 0;
  bool full_mnist = false;

  std::vector<CorruptionSpec> corruptions;
  Index eval_repeats = 10;
  RobustnessOptions robustness;

  std::filesystem::path out_dir = "out";
  std::filesystem::path checkpoint;  // empty = <out_dir>/checkpoint.json
};

/// Defaults for a task: the desk-scale settings used by the experiments.
ExperimentConfig default_config(Task task);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Fields absent from the document keep the task defaults.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

struct TaskData {
  Dataset train;
  Dataset test;
};

TaskData load_task_data(const ExperimentConfig& cfg);
ModelSpec init_model(const ExperimentConfig& cfg, const Dataset& train);

struct TrainOutcome {
  ModelSpec spec;
  TrainingLog log;
  double train_acc = 0;
  double test_acc = 0;
};

TrainOutcome run_train(const ExperimentConfig& cfg, const TaskData& data);

struct EvalCell {
  std::string label;  // "nominal" or CorruptionSpec::label()
  double mean = 0;
  double stderr_ = 0;
  Index repeats = 0;
};

struct EvalTable {
  std::string arch;
  Index depth = 0;
  std::vector<EvalCell> cells;  // nominal first

  std::string to_csv() const;
  const EvalCell& at(const std::string& label) const;
};

/// Mean accuracy over `repeats` independently seeded corrupted copies per
/// corruption, with its standard error.
EvalTable run_eval(const ModelSpec& spec, const Dataset& test,
                   const std::vector<CorruptionSpec>& corruptions, Index repeats,
                   std::uint64_t seed);

std::string contraction_csv(const DecayReport& report);
/// Rows from layer N down to 0: layer, t, norm, bound (bound empty when the
/// model carries no certificate).
std::string bsm_csv(const ModelSpec& spec, const std::vector<double>& norms,
                    const std::optional<Certificate>& cert);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Exit statuses: 0 success, 1 usage/config, 2 IO, 3 numerical failure
/// (including an unverified certificate).
int exit_status(const Error& e);

int cmd_train(const ExperimentConfig& cfg, std::ostream& out);
int cmd_eval(const ExperimentConfig& cfg, std::ostream& out, bool export_idx = false);
int cmd_certify(const ExperimentConfig& cfg, std::ostream& out);
int cmd_contraction(const ExperimentConfig& cfg, const Vector& x_a, const Vector& x_b,
                    std::ostream& out);
int cmd_bsm(const ExperimentConfig& cfg, const Vector& x, std::ostream& out);
int cmd_robustness(const ExperimentConfig& cfg, std::ostream& out);

}  // namespace chnode
