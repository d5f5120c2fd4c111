// chnode: train, evaluate and certify contractive Hamiltonian networks.
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chnode/error.hpp"
#include "chnode/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string task;
  std::string arch;
  std::optional<chnode::Index> epochs;
  std::optional<chnode::Index> layers;
  std::optional<chnode::Index> width;
  std::optional<double> lr;
  std::optional<double> h;
  std::optional<double> kappa;
  std::optional<double> epsilon;
  std::optional<chnode::Index> n_train;
  std::optional<chnode::Index> n_test;
  std::optional<chnode::Index> repeats;
  std::string checkpoint;
  std::string mnist_dir;
  std::vector<std::string> corruptions;
  bool full = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "RNG seed (u64)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--task", o.task, "blobs2d | double_circles | mnist");
  cmd->add_option("--arch", o.arch, "resnet | hdnn | chnode");
  cmd->add_option("--checkpoint", o.checkpoint, "checkpoint JSON (default <out>/checkpoint.json)");
  cmd->add_option("--mnist-dir", o.mnist_dir, "directory with the four IDX files");
  cmd->add_option("--n-train", o.n_train);
  cmd->add_option("--n-test", o.n_test);
  cmd->add_flag("--full", o.full, "use every MNIST sample instead of the desk subset");
}

void add_training(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--layers,-N", o.layers);
  cmd->add_option("--width,-n", o.width);
  cmd->add_option("--lr", o.lr);
  cmd->add_option("--step", o.h, "step size h");
  cmd->add_option("--kappa", o.kappa);
  cmd->add_option("--epsilon", o.epsilon, "target contraction rate");
}

chnode::ExperimentConfig resolve(const Overrides& o) {
  using namespace chnode;
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
    if (!o.task.empty() && parse_task(o.task) != cfg.task) {
      const ExperimentConfig file = cfg;
      cfg = default_config(parse_task(o.task));
      cfg.arch = file.arch;
      cfg.seed = file.seed;
      cfg.out_dir = file.out_dir;
    }
  } else {
    cfg = default_config(o.task.empty() ? Task::blobs2d : parse_task(o.task));
  }
  if (!o.arch.empty()) cfg.arch = parse_arch(o.arch);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
  if (!o.mnist_dir.empty()) cfg.mnist_dir = o.mnist_dir;
  if (o.n_train) cfg.n_train = *o.n_train;
  if (o.n_test) cfg.n_test = *o.n_test;
  if (o.full) cfg.full_mnist = true;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.layers) cfg.layers = *o.layers;
  if (o.width) cfg.n = *o.width;
  if (o.lr) cfg.train.learning_rate = *o.lr;
  if (o.h) cfg.h = *o.h;
  if (o.kappa) cfg.kappa = *o.kappa;
  if (o.epsilon) cfg.train.epsilon_user = *o.epsilon;
  if (o.repeats) cfg.eval_repeats = *o.repeats;
  if (!o.corruptions.empty()) {
    cfg.corruptions.clear();
    for (const auto& c : o.corruptions) cfg.corruptions.push_back(parse_corruption(c));
  }
  return cfg;
}

chnode::Vector parse_point(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw chnode::Error(chnode::ErrorCode::invalid_argument,
                          "cannot parse '" + text + "' as comma-separated numbers");
    }
  }
  if (values.empty())
    throw chnode::Error(chnode::ErrorCode::invalid_argument, "empty point '" + text + "'");
  return Eigen::Map<chnode::Vector>(values.data(), static_cast<chnode::Index>(values.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contractive Hamiltonian neural ODE toolkit"};
  app.require_subcommand(1);
  Overrides o;
  std::string xa, xb, x;
  bool export_idx = false;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, log and certificate");
  add_common(train, o);
  add_training(train, o);

  auto* eval = app.add_subcommand("eval", "accuracy on clean and corrupted test data");
  add_common(eval, o);
  eval->add_option("--corruption", o.corruptions, "gaussian:VAR or salt_pepper:FRACTION (repeatable)");
  eval->add_option("--repeats", o.repeats, "corrupted copies per corruption");
  eval->add_flag("--export-idx", export_idx, "also write each corrupted MNIST test set as IDX");

  auto* certify = app.add_subcommand("certify", "recompute and verify the contraction certificate");
  add_common(certify, o);

  auto* contraction = app.add_subcommand("contraction", "distance decay between two trajectories");
  add_common(contraction, o);
  contraction->add_option("--x-a", xa, "first input, comma separated")->required();
  contraction->add_option("--x-b", xb, "second input, comma separated")->required();

  auto* bsm = app.add_subcommand("bsm", "backward sensitivity norms along a trajectory");
  add_common(bsm, o);
  bsm->add_option("--x", x, "input, comma separated")->required();

  auto* robustness = app.add_subcommand("robustness", "empirical robustness radius on the training set");
  add_common(robustness, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const chnode::ExperimentConfig cfg = resolve(o);
    if (train->parsed()) return chnode::cmd_train(cfg, std::cout);
    if (eval->parsed()) return chnode::cmd_eval(cfg, std::cout, export_idx);
    if (certify->parsed()) return chnode::cmd_certify(cfg, std::cout);
    if (contraction->parsed())
      return chnode::cmd_contraction(cfg, parse_point(xa), parse_point(xb), std::cout);
    if (bsm->parsed()) return chnode::cmd_bsm(cfg, parse_point(x), std::cout);
    if (robustness->parsed()) return chnode::cmd_robustness(cfg, std::cout);
  } catch (const chnode::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return chnode::exit_status(e);
  }
  return 1;
}
