#include "chnode/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "chnode/checkpoint.hpp"
#include "chnode/error.hpp"

namespace chnode {

using nlohmann::json;

std::string to_string(Task task) {
  switch (task) {
    case Task::blobs2d: return "blobs2d";
    case Task::double_circles: return "double_circles";
    case Task::mnist: return "mnist";
  }
  return "unknown";
}

Task parse_task(const std::string& name) {
  if (name == "blobs2d") return Task::blobs2d;
  if (name == "double_circles") return Task::double_circles;
  if (name == "mnist") return Task::mnist;
  throw Error(ErrorCode::invalid_argument,
              "unknown task '" + name + "' (expected blobs2d, double_circles or mnist)");
}

ExperimentConfig default_config(Task task) {
  ExperimentConfig cfg;
  cfg.task = task;
  switch (task) {
    case Task::blobs2d:
      cfg.n = 2;
      cfg.layers = 10;
      cfg.h = 0.05;
      cfg.kappa = 0.1;
      cfg.train.learning_rate = 0.05;
      cfg.train.epochs = 500;
      cfg.train.batch_size = 6;
      cfg.robustness = {64, 2.0, 1e-3, 0, 256};
      break;
    case Task::double_circles:
      // rings need more than two neurons; the lift zero-pads into R^8
      cfg.n = 8;
      cfg.layers = 16;
      cfg.h = 6.25e-4;
      cfg.kappa = 0.04;
      cfg.n_train = 1000;
      cfg.n_test = 1000;
      cfg.train.learning_rate = 0.5;
      cfg.train.epochs = 200;
      cfg.train.batch_size = 25;
      cfg.train.target_accuracy = 0.995;
      break;
    case Task::mnist:
      cfg.n = 32;
      cfg.layers = 4;
      cfg.h = 0.1;
      cfg.kappa = 0.05;
      cfg.n_train = 5000;
      cfg.n_test = 1000;
      cfg.train.learning_rate = 0.01;
      cfg.train.epochs = 10;
      cfg.train.batch_size = 50;
      cfg.corruptions = {{CorruptionSpec::Kind::gaussian, 0.05, 0},
                         {CorruptionSpec::Kind::gaussian, 0.2, 0},
                         {CorruptionSpec::Kind::salt_pepper, 0.05, 0},
                         {CorruptionSpec::Kind::salt_pepper, 0.2, 0}};
      break;
  }
  cfg.train.epsilon_user = 1e-9;
  return cfg;
}

namespace {

json corruption_to_json(const CorruptionSpec& c) {
  return {{"kind", c.kind == CorruptionSpec::Kind::gaussian ? "gaussian" : "salt_pepper"},
          {"sigma", c.sigma}};
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
  json corruptions = json::array();
  for (const auto& c : cfg.corruptions) corruptions.push_back(corruption_to_json(c));
  return {{"task", to_string(cfg.task)},
          {"arch", to_string(cfg.arch)},
          {"n", cfg.n},
          {"N", cfg.layers},
          {"h", cfg.h},
          {"kappa", cfg.kappa},
          {"epsilon_user", cfg.train.epsilon_user},
          {"use_L", cfg.use_L},
          {"seed", cfg.seed},
          {"train",
           {{"learning_rate", cfg.train.learning_rate},
            {"momentum", cfg.train.momentum},
            {"epochs", cfg.train.epochs},
            {"batch_size", cfg.train.batch_size},
            {"gamma_margin", cfg.train.gamma_margin},
            {"bsm_probe", cfg.train.bsm_probe},
            {"target_accuracy", cfg.train.target_accuracy}}},
          {"data",
           {{"mnist_dir", cfg.mnist_dir.string()},
            {"n_train", cfg.n_train},
            {"n_test", cfg.n_test},
            {"full_mnist", cfg.full_mnist}}},
          {"corruptions", std::move(corruptions)},
          {"eval_repeats", cfg.eval_repeats},
          {"robustness",
           {{"n_directions", cfg.robustness.n_directions},
            {"r_max", cfg.robustness.r_max},
            {"tol", cfg.robustness.tol},
            {"scan_steps", cfg.robustness.scan_steps}}},
          {"out_dir", cfg.out_dir.string()},
          {"checkpoint", cfg.checkpoint.string()}};
}

ExperimentConfig config_from_json(const json& doc) {
  try {
    if (!doc.is_object()) throw Error(ErrorCode::invalid_argument, "config must be a JSON object");
    ExperimentConfig cfg = default_config(parse_task(doc.value("task", std::string("blobs2d"))));
    cfg.arch = parse_arch(doc.value("arch", to_string(cfg.arch)));
    cfg.n = doc.value("n", cfg.n);
    cfg.layers = doc.value("N", cfg.layers);
    cfg.h = doc.value("h", cfg.h);
    cfg.kappa = doc.value("kappa", cfg.kappa);
    cfg.train.epsilon_user = doc.value("epsilon_user", cfg.train.epsilon_user);
    cfg.use_L = doc.value("use_L", cfg.use_L);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("train")) {
      const json& t = doc.at("train");
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.momentum = t.value("momentum", cfg.train.momentum);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.gamma_margin = t.value("gamma_margin", cfg.train.gamma_margin);
      cfg.train.bsm_probe = t.value("bsm_probe", cfg.train.bsm_probe);
      cfg.train.target_accuracy = t.value("target_accuracy", cfg.train.target_accuracy);
    }
    if (doc.contains("data")) {
      const json& d = doc.at("data");
      cfg.mnist_dir = d.value("mnist_dir", cfg.mnist_dir.string());
      cfg.n_train = d.value("n_train", cfg.n_train);
      cfg.n_test = d.value("n_test", cfg.n_test);
      cfg.full_mnist = d.value("full_mnist", cfg.full_mnist);
    }
    if (doc.contains("corruptions")) {
      cfg.corruptions.clear();
      for (const auto& c : doc.at("corruptions")) {
        cfg.corruptions.push_back(parse_corruption(c.at("kind").get<std::string>() + ":" +
                                                   std::to_string(c.at("sigma").get<double>())));
      }
    }
    cfg.eval_repeats = doc.value("eval_repeats", cfg.eval_repeats);
    if (doc.contains("robustness")) {
      const json& r = doc.at("robustness");
      cfg.robustness.n_directions = r.value("n_directions", cfg.robustness.n_directions);
      cfg.robustness.r_max = r.value("r_max", cfg.robustness.r_max);
      cfg.robustness.tol = r.value("tol", cfg.robustness.tol);
      cfg.robustness.scan_steps = r.value("scan_steps", cfg.robustness.scan_steps);
    }
    cfg.out_dir = doc.value("out_dir", cfg.out_dir.string());
    cfg.checkpoint = doc.value("checkpoint", cfg.checkpoint.string());
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

TaskData load_task_data(const ExperimentConfig& cfg) {
  switch (cfg.task) {
    case Task::blobs2d: {
      Dataset ds = make_blobs_2d();
      return {ds, ds};
    }
    case Task::double_circles: {
      auto [train, test] = make_double_circles(cfg.n_train > 0 ? cfg.n_train : 1000,
                                               cfg.n_test > 0 ? cfg.n_test : 1000, cfg.seed);
      return {std::move(train), std::move(test)};
    }
    case Task::mnist: {
      TaskData data{load_mnist_idx(cfg.mnist_dir / "train-images-idx3-ubyte",
                                   cfg.mnist_dir / "train-labels-idx1-ubyte"),
                    load_mnist_idx(cfg.mnist_dir / "t10k-images-idx3-ubyte",
                                   cfg.mnist_dir / "t10k-labels-idx1-ubyte")};
      data.train.num_classes = data.test.num_classes = 10;
      if (!cfg.full_mnist) {
        if (cfg.n_train > 0) data.train = data.train.head(cfg.n_train);
        if (cfg.n_test > 0) data.test = data.test.head(cfg.n_test);
      }
      return data;
    }
  }
  throw Error(ErrorCode::invalid_argument, "unknown task");
}

ModelSpec init_model(const ExperimentConfig& cfg, const Dataset& train) {
  ModelOptions opts;
  opts.arch = cfg.arch;
  opts.input_dim = train.feature_dim();
  opts.n = cfg.n;
  opts.layers = cfg.layers;
  opts.classes = train.num_classes;
  opts.h = cfg.h;
  opts.kappa = cfg.arch == Arch::chnode ? cfg.kappa : 0.0;
  opts.epsilon_user = cfg.train.epsilon_user;
  opts.lift = cfg.task == Task::mnist ? Lift::dense : Lift::identity;
  opts.use_L = cfg.use_L;
  opts.seed = cfg.seed;
  return make_model(opts);
}

TrainOutcome run_train(const ExperimentConfig& cfg, const TaskData& data) {
  TrainOutcome outcome{init_model(cfg, data.train), {}, 0, 0};
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  outcome.log = fit(outcome.spec, data.train, tc, outcome.spec.activation);
  outcome.train_acc = accuracy(outcome.spec, data.train);
  outcome.test_acc = accuracy(outcome.spec, data.test);
  return outcome;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

const EvalCell& EvalTable::at(const std::string& label) const {
  for (const auto& c : cells)
    if (c.label == label) return c;
  throw Error(ErrorCode::invalid_argument, "no evaluation column '" + label + "'");
}

std::string EvalTable::to_csv() const {
  std::ostringstream out;
  out << "arch,N";
  for (const auto& c : cells) out << ',' << c.label << ',' << c.label << "_se";
  out << '\n' << arch << ',' << depth;
  for (const auto& c : cells) out << ',' << fmt(c.mean) << ',' << fmt(c.stderr_);
  out << '\n';
  return out.str();
}

EvalTable run_eval(const ModelSpec& spec, const Dataset& test,
                   const std::vector<CorruptionSpec>& corruptions, Index repeats,
                   std::uint64_t seed) {
  if (repeats < 1) throw Error(ErrorCode::invalid_argument, "eval repeats must be >= 1");
  EvalTable table;
  table.arch = to_string(spec.arch);
  table.depth = spec.depth();
  table.cells.push_back({"nominal", accuracy(spec, test), 0.0, 1});
  for (std::size_t c = 0; c < corruptions.size(); ++c) {
    std::vector<double> accs;
    for (Index k = 0; k < repeats; ++k) {
      CorruptionSpec cs = corruptions[c];
      cs.seed = seed * 1000003ULL + static_cast<std::uint64_t>(c) * 1009ULL + static_cast<std::uint64_t>(k);
      accs.push_back(accuracy(spec, corrupt(test, cs)));
    }
    double mean = 0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double se = accs.size() > 1
                          ? std::sqrt(var / static_cast<double>(accs.size() - 1) /
                                      static_cast<double>(accs.size()))
                          : 0.0;
    table.cells.push_back({corruptions[c].label(), mean, se, repeats});
  }
  return table;
}

std::string contraction_csv(const DecayReport& report) {
  std::ostringstream out;
  out << "step,t,distance,ratio\n";
  for (std::size_t i = 0; i < report.times.size(); ++i) {
    out << i << ',' << fmt(report.times[i]) << ',' << fmt(report.distances[i]) << ','
        << fmt(report.distances[i] / report.distances.front()) << '\n';
  }
  return out.str();
}

std::string bsm_csv(const ModelSpec& spec, const std::vector<double>& norms,
                    const std::optional<Certificate>& cert) {
  std::ostringstream out;
  out << "layer,t,norm,bound\n";
  for (std::size_t k = 0; k < norms.size(); ++k) {
    const double t = spec.h * static_cast<double>(k);
    out << spec.depth() - static_cast<Index>(k) << ',' << fmt(t) << ',' << fmt(norms[k]) << ',';
    if (cert) out << fmt(std::exp(-0.5 * cert->rho * t));
    out << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

int exit_status(const Error& e) {
  switch (e.code()) {
    case ErrorCode::io:
    case ErrorCode::format: return 2;
    case ErrorCode::numerical:
    case ErrorCode::non_finite:
    case ErrorCode::epsilon_too_large: return 3;
    default: return 1;
  }
}

namespace {

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg) {
  return cfg.checkpoint.empty() ? cfg.out_dir / "checkpoint.json" : cfg.checkpoint;
}

template <typename Body>
int guarded(Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_status(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

json certify_report(const ModelSpec& spec, double tol) {
  const Certificate cert = assess_certificate(spec, spec.activation);
  json report = certificate_to_json(cert);
  report["lmi_verified"] = verify_lmi(cert, spec.J, tol);
  report["tolerance"] = tol;
  return report;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  return guarded([&] {
    const TaskData data = load_task_data(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");
    const TrainOutcome outcome = run_train(cfg, data);
    save_checkpoint(outcome.spec, cfg.out_dir / "checkpoint.json");
    outcome.log.write_csv(cfg.out_dir / "training_log.csv");
    write_text(cfg.out_dir / "accuracy.csv", "arch,N,train_acc,test_acc\n" +
                                                 to_string(cfg.arch) + "," +
                                                 std::to_string(cfg.layers) + "," +
                                                 fmt(outcome.train_acc) + "," +
                                                 fmt(outcome.test_acc) + "\n");
    out << to_string(cfg.arch) << " on " << to_string(cfg.task) << ": train "
        << outcome.train_acc << ", test " << outcome.test_acc << '\n';
    if (outcome.spec.arch == Arch::chnode) {
      const json report = certify_report(outcome.spec, 1e-8);
      write_text(cfg.out_dir / "certificate.json", report.dump(2) + "\n");
      out << "certificate verified: " << (report["lmi_verified"].get<bool>() ? "yes" : "no") << '\n';
    }
    return 0;
  });
}

int cmd_eval(const ExperimentConfig& cfg, std::ostream& out, bool export_idx) {
  return guarded([&] {
    const ModelSpec spec = load_checkpoint(checkpoint_path(cfg));
    const TaskData data = load_task_data(cfg);
    const EvalTable table = run_eval(spec, data.test, cfg.corruptions, cfg.eval_repeats, cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "eval.csv", table.to_csv());
    if (export_idx && cfg.task == Task::mnist) {
      for (const auto& c : cfg.corruptions) {
        CorruptionSpec cs = c;
        cs.seed = cfg.seed;
        const std::string stem = (cfg.out_dir / ("corrupted_" + c.label())).string();
        write_mnist_idx(corrupt(data.test, cs), 28, 28, stem + "-images-idx3-ubyte",
                        stem + "-labels-idx1-ubyte");
      }
    }
    out << table.to_csv();
    return 0;
  });
}

int cmd_certify(const ExperimentConfig& cfg, std::ostream& out) {
  return guarded([&] {
    const ModelSpec spec = load_checkpoint(checkpoint_path(cfg));
    if (spec.arch != Arch::chnode) {
      std::cerr << "error: certify needs a chnode checkpoint; " << to_string(spec.arch)
                << " models carry no contraction certificate\n";
      return 1;
    }
    const json report = certify_report(spec, 1e-8);
    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "certificate.json", report.dump(2) + "\n");
    out << report.dump(2) << '\n';
    return report["lmi_verified"].get<bool>() ? 0 : 3;
  });
}

int cmd_contraction(const ExperimentConfig& cfg, const Vector& x_a, const Vector& x_b,
                    std::ostream& out) {
  return guarded([&] {
    const ModelSpec spec = load_checkpoint(checkpoint_path(cfg));
    const DecayReport report = empirical_contraction(spec, x_a, x_b);
    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "contraction.csv", contraction_csv(report));
    out << "final/initial distance " << report.ratio << ", log-slope " << report.slope
        << (report.contracting ? " (contracting)" : " (not contracting)") << '\n';
    return 0;
  });
}

int cmd_bsm(const ExperimentConfig& cfg, const Vector& x, std::ostream& out) {
  return guarded([&] {
    const ModelSpec spec = load_checkpoint(checkpoint_path(cfg));
    std::optional<Certificate> cert;
    if (spec.arch == Arch::chnode) cert = assess_certificate(spec, spec.activation);
    const auto norms = bsm_norms(spec, x);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string csv = bsm_csv(spec, norms, cert);
    write_text(cfg.out_dir / "bsm.csv", csv);
    out << csv;
    return 0;
  });
}

int cmd_robustness(const ExperimentConfig& cfg, std::ostream& out) {
  return guarded([&] {
    const ModelSpec spec = load_checkpoint(checkpoint_path(cfg));
    const TaskData data = load_task_data(cfg);
    RobustnessOptions opts = cfg.robustness;
    opts.seed = cfg.seed;
    const double radius = robustness_radius(spec, data.train, opts);
    std::filesystem::create_directories(cfg.out_dir);
    const json report = {{"arch", to_string(spec.arch)},
                         {"epsilon_r", radius},
                         {"n_directions", opts.n_directions},
                         {"r_max", opts.r_max},
                         {"tol", opts.tol}};
    write_text(cfg.out_dir / "robustness.json", report.dump(2) + "\n");
    out << "epsilon_r = " << radius << '\n';
    return 0;
  });
}

}  // namespace chnode
