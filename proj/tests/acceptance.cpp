// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "chnode/experiment.hpp"
#include "support.hpp"

#ifndef CHNODE_MNIST_DIR
#define CHNODE_MNIST_DIR "data/mnist_desk"
#endif

using namespace chnode;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Verdict& v, double seconds) {
  std::printf("criterion %d %s: %s (%s; %.1fs)\n", id, v.pass ? "PASS" : "FAIL", title.c_str(),
              v.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

Verdict timed(int id, const std::string& title, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, title, v, secs);
  return v;
}

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, static_cast<double>(args)...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// every checkpoint with a verified certificate, for the input-output check
struct Verified {
  std::string what;
  ModelSpec spec;
  std::vector<Vector> probes;
};
std::vector<Verified> verified_models;

void remember(const std::string& what, const ModelSpec& spec, const Dataset& ds, Index probes) {
  if (spec.arch != Arch::chnode) return;
  if (!verify_lmi(assess_certificate(spec), spec.J)) return;
  const auto count = static_cast<std::size_t>(std::min<Index>(probes, ds.size()));
  verified_models.push_back({what, spec, {ds.features.begin(), ds.features.begin() + count}});
}

// ---- criterion 1
Verdict gradients() {
  std::mt19937_64 rng(2024);
  double worst = 0;
  Index models = 0;
  for (Arch arch : {Arch::resnet, Arch::hdnn, Arch::chnode}) {
    for (int t = 0; t < 50; ++t) {
      const Index n = arch == Arch::resnet ? 1 + t % 6 : 2 * (1 + t % 3);
      const Index N = 1 + t % 4;
      const Index m = 1 + (t / 4) % 4;
      const Index classes = 2 + t % 3;
      const ModelSpec s = test::random_spec(rng, arch, n, N, m, classes, arch == Arch::chnode && t % 2 == 1);
      std::vector<Vector> xs;
      std::vector<Index> ys;
      for (Index k = 0; k < 1 + t % 3; ++k) {
        xs.push_back(test::gaussian(rng, m, 1));
        ys.push_back(k % classes);
      }
      worst = std::max(worst, test::gradient_mismatch(s, xs, ys));
      ++models;
    }
  }
  return {worst <= 1e-5, fmt("%.0f models, worst relative error %.2e", static_cast<double>(models), worst)};
}

// ---- criterion 2
Verdict lmi_equivalence() {
  const Matrix J = canonical_skew(2);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ua(0.0, 0.95), uf(0.01, 0.99);
  int ok = 0;
  for (int t = 0; t < 200; ++t) {
    const double alpha = ua(rng);
    const double eps = uf(rng) * (1 - alpha * alpha);
    const HessianBounds hb{1.0, (1 + alpha) / (1 - alpha)};
    const double lambda_J = sym_eig_bounds(Matrix(J * J.transpose())).lambda_max;
    const double g = gamma_min(alpha, eps, lambda_J);
    const bool at = verify_lmi(make_certificate(hb, lambda_J, eps, g), J, 1e-8);
    const bool below = verify_lmi(make_certificate(hb, lambda_J, eps, 0.9 * g), J, 1e-8);
    ok += at && !below;
  }
  return {ok == 200, fmt("%.0f of 200 pairs: true at gamma_min, false at 0.9 gamma_min", ok)};
}

// ---- criterion 3
std::string linear_decay_csv(double* ratio) {
  const ModelSpec s = test::linear_chnode(2, 1000, 1e-3, 1.0, 0.5);
  Vector a(2), b(2);
  a << 1.0, -0.5;
  b << -0.3, 0.8;
  const DecayReport r = empirical_contraction(s, a, b);
  if (ratio) *ratio = r.ratio;
  remember("linear flow", s, Dataset{{a, b}, {0, 1}, 2, "pair", false}, 2);
  return contraction_csv(r);
}

Verdict linear_decay() {
  double ratio = 0;
  linear_decay_csv(&ratio);
  const double rel = std::abs(ratio / std::exp(-0.5) - 1);
  return {rel < 0.01, fmt("ratio %.6f vs %.6f, relative gap %.2e", ratio, std::exp(-0.5), rel)};
}

// ---- criteria 4 and 7
struct CirclesRun {
  TrainOutcome outcome;
  TaskData data;
  std::string csv;
};

CirclesRun train_circles() {
  ExperimentConfig cfg = default_config(Task::double_circles);
  cfg.arch = Arch::chnode;
  cfg.seed = 0;
  CirclesRun run{{}, load_task_data(cfg), ""};
  run.outcome = run_train(cfg, run.data);
  run.csv = run.outcome.log.to_csv() + fmt("%.12g,%.12g\n", run.outcome.train_acc, run.outcome.test_acc);
  return run;
}

CirclesRun circles;

Verdict non_exploding() {
  circles = train_circles();
  const auto& out = circles.outcome;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& row : out.log.rows) {
    lo = std::min(lo, row.bsm_min);
    hi = std::max(hi, row.bsm_max);
  }
  const double ceiling = 1 + 10 * out.spec.h;
  remember("double circles", out.spec, circles.data.test, 200);
  const bool pass = out.test_acc >= 0.97 && lo >= 0.25 && hi <= ceiling;
  return {pass, fmt("train %.4f, test %.4f, BSM norms in [%.4f, %.4f]", out.train_acc, out.test_acc, lo, hi) +
                    fmt(" over %.0f epochs, allowed [0.25, %.5f]", static_cast<double>(out.log.rows.size()), ceiling)};
}

Verdict sensitivity_bound() {
  const ModelSpec& spec = circles.outcome.spec;
  if (spec.depth() == 0) return {false, "criterion 4 produced no model"};
  const Certificate cert = assess_certificate(spec);
  Index checked = 0, violations = 0;
  double worst = -INFINITY;
  for (Index s = 0; s < std::min<Index>(200, circles.data.test.size()); ++s) {
    const BsmProfile p = bsm_profile(spec, circles.data.test.features[s], cert);
    violations += static_cast<Index>(p.violations.size());
    for (std::size_t k = 0; k < p.norms.size(); ++k) worst = std::max(worst, p.norms[k] - p.rho_bound[k]);
    ++checked;
  }
  return {violations == 0, fmt("%.0f test points x %.0f layers, rho %.3g, max(norm - bound) %.4f, slack %.5f",
                               static_cast<double>(checked), static_cast<double>(spec.depth() + 1),
                               cert.rho, worst, 10 * spec.h) +
                               fmt(", %.0f violations", static_cast<double>(violations))};
}

// ---- criterion 5
std::string blobs_csv(std::vector<double>* resnet, std::vector<double>* chnode) {
  std::ostringstream csv;
  csv << "seed,arch,epsilon_r\n";
  const Dataset blobs = make_blobs_2d();
  const TaskData data{blobs, blobs};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (Arch arch : {Arch::resnet, Arch::chnode}) {
      ExperimentConfig cfg = default_config(Task::blobs2d);
      cfg.arch = arch;
      cfg.seed = seed;
      const TrainOutcome out = run_train(cfg, data);
      RobustnessOptions opts = cfg.robustness;
      opts.seed = seed;
      const double r = robustness_radius(out.spec, blobs, opts);
      (arch == Arch::resnet ? resnet : chnode)->push_back(r);
      csv << seed << ',' << to_string(arch) << ',' << fmt("%.12g", r) << '\n';
      remember("blobs seed " + std::to_string(seed), out.spec, blobs, 6);
    }
  }
  return csv.str();
}

Verdict blobs_robustness() {
  std::vector<double> r, c;
  blobs_csv(&r, &c);
  const double ratio = median(c) / median(r);
  return {ratio > 1.5, fmt("median epsilon_r over seeds 0-9: chnode %.3f, resnet %.3f, ratio %.2f", median(c),
                           median(r), ratio)};
}

// ---- criterion 6
struct MnistCell {
  double clean, gauss, sp;
};

std::string mnist_csv(std::vector<MnistCell>* resnet, std::vector<MnistCell>* chnode) {
  std::string csv;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentConfig cfg = default_config(Task::mnist);
    cfg.mnist_dir = CHNODE_MNIST_DIR;
    cfg.seed = seed;
    cfg.corruptions = {{CorruptionSpec::Kind::gaussian, 0.05, 0}, {CorruptionSpec::Kind::salt_pepper, 0.05, 0}};
    const TaskData data = load_task_data(cfg);
    for (Arch arch : {Arch::resnet, Arch::chnode}) {
      cfg.arch = arch;
      const TrainOutcome out = run_train(cfg, data);
      const EvalTable table = run_eval(out.spec, data.test, cfg.corruptions, 10, seed);
      (arch == Arch::resnet ? resnet : chnode)
          ->push_back({table.cells[0].mean, table.cells[1].mean, table.cells[2].mean});
      csv += "seed " + std::to_string(seed) + "\n" + table.to_csv();
      remember("mnist seed " + std::to_string(seed), out.spec, data.test, 64);
    }
  }
  return csv;
}

Verdict mnist_robustness() {
  std::vector<MnistCell> r, c;
  mnist_csv(&r, &c);
  auto mean = [](const std::vector<MnistCell>& v, double MnistCell::*f) {
    double s = 0;
    for (const auto& x : v) s += x.*f;
    return s / static_cast<double>(v.size());
  };
  int seeds_ok = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    seeds_ok += c[k].clean >= 0.85 && c[k].gauss > r[k].gauss && c[k].sp > r[k].sp &&
                c[k].clean - c[k].gauss <= 0.5 * (r[k].clean - r[k].gauss) &&
                c[k].clean - c[k].sp <= 0.5 * (r[k].clean - r[k].sp);
  }
  const double rc = mean(r, &MnistCell::clean), rg = mean(r, &MnistCell::gauss), rs = mean(r, &MnistCell::sp);
  const double cc = mean(c, &MnistCell::clean), cg = mean(c, &MnistCell::gauss), cs = mean(c, &MnistCell::sp);
  const bool pass = cc >= 0.85 && cg > rg && cs > rs && cc - cg <= 0.5 * (rc - rg) && cc - cs <= 0.5 * (rc - rs);
  std::string detail = fmt("mean over 5 training seeds: chnode clean %.4f gauss %.4f s&p %.4f", cc, cg, cs) +
                       fmt("; resnet clean %.4f gauss %.4f s&p %.4f", rc, rg, rs) +
                       fmt("; drops gauss %.4f vs %.4f, s&p %.4f vs %.4f", cc - cg, rc - rg, cc - cs, rc - rs) +
                       fmt("; %.0f of 5 seeds pass on their own", seeds_ok);
  return {pass, detail};
}

// ---- criterion 8
Verdict input_output() {
  double worst = 0;
  Index points = 0;
  std::string where;
  for (const auto& v : verified_models) {
    for (const auto& x : v.probes) {
      const double top = bsm_norms(v.spec, x).back();
      if (top > worst) {
        worst = top;
        where = v.what;
      }
      ++points;
    }
  }
  const bool pass = !verified_models.empty() && worst < 1.0;
  return {pass, fmt("%.0f verified checkpoints, %.0f inputs, max ||Phi(N,0)|| %.4f",
                    static_cast<double>(verified_models.size()), static_cast<double>(points), worst) +
                    " (" + where + ")"};
}

// ---- criterion 9
Verdict reproducible() {
  std::vector<std::string> mismatched;
  if (linear_decay_csv(nullptr) != linear_decay_csv(nullptr)) mismatched.push_back("3");
  if (train_circles().csv != train_circles().csv) mismatched.push_back("4");
  std::vector<double> a, b;
  if (blobs_csv(&a, &b) != blobs_csv(&a, &b)) mismatched.push_back("5");
  std::vector<MnistCell> p, q;
  if (mnist_csv(&p, &q) != mnist_csv(&p, &q)) mismatched.push_back("6");
  std::string detail = "criteria 3-6 rerun twice, metric CSVs compared byte for byte";
  for (const auto& m : mismatched) detail += "; criterion " + m + " differs";
  return {mismatched.empty(), detail};
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto grads_start = std::chrono::steady_clock::now();
  Verdict g = gradients();
  const double grad_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - grads_start).count();
  if (grad_secs >= 60) g = {false, g.detail + ", over the one minute budget"};
  report(1, "gradients match central differences", g, grad_secs);
  timed(2, "LMI holds at gamma_min and fails at 0.9 gamma_min", lmi_equivalence);
  timed(3, "linear flow contracts at exp(-gamma kappa t)", linear_decay);
  timed(4, "double circles trains without exploding sensitivities", non_exploding);
  timed(7, "sensitivity norms respect exp(-rho t / 2) + 10 h", sensitivity_bound);
  timed(5, "blobs robustness radius ratio above 1.5", blobs_robustness);
  timed(6, "MNIST corruption robustness ordering", mnist_robustness);
  timed(8, "verified models have ||Phi(N,0)|| < 1", input_output);
  timed(9, "identical seeds give identical metric CSVs", reproducible);
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d criteria failed, %.1fs total\n", failures, total);
  return failures == 0 ? 0 : 1;
}
