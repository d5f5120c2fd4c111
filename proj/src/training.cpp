#include "chnode/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "chnode/data.hpp"
#include "chnode/error.hpp"
#include "chnode/linalg.hpp"

namespace chnode {

GradientSet GradientSet::zeros_like(const ModelSpec& spec) {
  GradientSet g;
  for (const auto& layer : spec.layers) {
    g.layers.push_back({Matrix::Zero(layer.K.rows(), layer.K.cols()), Vector::Zero(layer.b.size()),
                        Matrix::Zero(layer.L.rows(), layer.L.cols())});
  }
  g.d_input_weight = Matrix::Zero(spec.input_layer.weight.rows(), spec.input_layer.weight.cols());
  g.d_input_bias = Vector::Zero(spec.input_layer.bias.size());
  g.d_output_weight =
      Matrix::Zero(spec.output_layer.weight.rows(), spec.output_layer.weight.cols());
  g.d_output_bias = Vector::Zero(spec.output_layer.bias.size());
  return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  if (other.layers.size() != layers.size())
    throw Error(ErrorCode::dimension_mismatch, "gradient sets differ in depth");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].dK += other.layers[i].dK;
    layers[i].db += other.layers[i].db;
    layers[i].dL += other.layers[i].dL;
  }
  d_input_weight += other.d_input_weight;
  d_input_bias += other.d_input_bias;
  d_output_weight += other.d_output_weight;
  d_output_bias += other.d_output_bias;
  return *this;
}

GradientSet& GradientSet::operator*=(double s) {
  for (auto& layer : layers) {
    layer.dK *= s;
    layer.db *= s;
    layer.dL *= s;
  }
  d_input_weight *= s;
  d_input_bias *= s;
  d_output_weight *= s;
  d_output_bias *= s;
  return *this;
}

bool GradientSet::all_finite() const {
  for (const auto& layer : layers)
    if (!layer.dK.allFinite() || !layer.db.allFinite() || !layer.dL.allFinite()) return false;
  return d_input_weight.allFinite() && d_input_bias.allFinite() && d_output_weight.allFinite() &&
         d_output_bias.allFinite();
}

std::vector<TensorView> parameter_views(ModelSpec& spec) {
  std::vector<TensorView> views;
  auto add = [&views](auto& t, bool trainable) {
    views.push_back({t.data(), static_cast<Index>(t.size()), trainable});
  };
  add(spec.input_layer.weight, spec.input_layer.trainable);
  add(spec.input_layer.bias, spec.input_layer.trainable);
  for (auto& layer : spec.layers) {
    add(layer.K, true);
    add(layer.b, true);
    add(layer.L, spec.train_L);
  }
  add(spec.output_layer.weight, spec.output_layer.trainable);
  add(spec.output_layer.bias, spec.output_layer.trainable);
  return views;
}

std::vector<TensorView> gradient_views(GradientSet& grads, const ModelSpec& spec) {
  std::vector<TensorView> views;
  auto add = [&views](auto& t, bool trainable) {
    views.push_back({t.data(), static_cast<Index>(t.size()), trainable});
  };
  add(grads.d_input_weight, spec.input_layer.trainable);
  add(grads.d_input_bias, spec.input_layer.trainable);
  for (auto& layer : grads.layers) {
    add(layer.dK, true);
    add(layer.db, true);
    add(layer.dL, spec.train_L);
  }
  add(grads.d_output_weight, spec.output_layer.trainable);
  add(grads.d_output_bias, spec.output_layer.trainable);
  return views;
}

namespace {

Vector concat(const std::vector<TensorView>& views) {
  Index total = 0;
  for (const auto& v : views) total += v.size;
  Vector flat(total);
  Index offset = 0;
  for (const auto& v : views) {
    flat.segment(offset, v.size) = v.map();
    offset += v.size;
  }
  return flat;
}

}  // namespace

Vector flatten_parameters(const ModelSpec& spec) {
  ModelSpec copy = spec;
  return concat(parameter_views(copy));
}

void assign_parameters(ModelSpec& spec, const Vector& flat) {
  Index offset = 0;
  for (auto& v : parameter_views(spec)) {
    if (offset + v.size > flat.size())
      throw Error(ErrorCode::dimension_mismatch, "parameter vector too short");
    v.map() = flat.segment(offset, v.size);
    offset += v.size;
  }
  if (offset != flat.size()) throw Error(ErrorCode::dimension_mismatch, "parameter vector too long");
}

Vector flatten_gradients(const GradientSet& grads) {
  GradientSet copy = grads;
  ModelSpec dummy;  // trainability flags are irrelevant for flattening
  return concat(gradient_views(copy, dummy));
}

double cross_entropy(const Vector& probabilities, Index label) {
  if (label < 0 || label >= probabilities.size())
    throw Error(ErrorCode::invalid_argument, "label " + std::to_string(label) + " out of range");
  return -std::log(std::max(probabilities[label], 1e-15));
}

namespace {

struct LayerCache {
  Vector xi;
  Vector act;
  Vector slope;  // sigma'(K xi + b)
};

void accumulate_sample(const ModelSpec& spec, const Vector& x, Index label, GradientSet& g,
                       double& loss) {
  const Index depth = spec.depth();
  std::vector<LayerCache> cache(static_cast<std::size_t>(depth));
  Vector xi = spec.input_layer(x);
  for (Index i = 0; i < depth; ++i) {
    const LayerParams& p = spec.layers[static_cast<std::size_t>(i)];
    const Vector z = p.K * xi + p.b;
    auto& c = cache[static_cast<std::size_t>(i)];
    c.xi = xi;
    c.act = spec.activation.value(z);
    c.slope = spec.activation.derivative(z);
    xi = forward_layer(spec, i, xi);
  }
  const Vector probs = softmax(spec.output_layer(xi));
  loss += cross_entropy(probs, label);

  Vector dlogits = probs;
  dlogits[label] -= 1.0;
  g.d_output_weight.noalias() += dlogits * xi.transpose();
  g.d_output_bias += dlogits;
  Vector gxi = spec.output_layer.weight.transpose() * dlogits;

  for (Index i = depth - 1; i >= 0; --i) {
    const LayerParams& p = spec.layers[static_cast<std::size_t>(i)];
    const LayerCache& c = cache[static_cast<std::size_t>(i)];
    LayerGradient& lg = g.layers[static_cast<std::size_t>(i)];
    if (spec.arch == Arch::resnet) {
      const Vector u = c.slope.cwiseProduct(gxi);
      lg.dK.noalias() += u * c.xi.transpose();
      lg.db += u;
      gxi += p.K.transpose() * u;
      continue;
    }
    // xi' = xi + M grad H(xi) with M = hJ (hdnn) or hF (chnode); w = M^T gxi
    Vector w = spec.h * (spec.J.transpose() * gxi);
    if (spec.arch == Arch::chnode) w -= spec.h * spec.gamma * gxi;
    const Vector u = c.slope.cwiseProduct(p.K * w);
    lg.dK.noalias() += c.act * w.transpose() + u * c.xi.transpose();
    lg.db += u;
    Vector back = p.K.transpose() * u;
    if (spec.arch == Arch::chnode) {
      const Vector Lw = p.L * w;
      const Vector Lxi = p.L * c.xi;
      lg.dL.noalias() += Lw * c.xi.transpose() + Lxi * w.transpose();
      back += p.L.transpose() * Lw + spec.kappa * w;
    }
    gxi += back;
  }
  g.d_input_weight.noalias() += gxi * x.transpose();
  g.d_input_bias += gxi;
}

}  // namespace

BatchResult backprop(const ModelSpec& spec, const std::vector<Vector>& inputs,
                     const std::vector<Index>& labels) {
  if (inputs.empty() || inputs.size() != labels.size())
    throw Error(ErrorCode::invalid_argument, "backprop needs a non-empty batch with one label per input");
  BatchResult result{0.0, GradientSet::zeros_like(spec)};
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    if (inputs[s].size() != spec.input_dim())
      throw Error(ErrorCode::dimension_mismatch, "input length does not match the model");
    accumulate_sample(spec, inputs[s], labels[s], result.grads, result.loss);
  }
  const double scale = 1.0 / static_cast<double>(inputs.size());
  result.loss *= scale;
  result.grads *= scale;
  return result;
}

void sgd_step(ModelSpec& spec, const GradientSet& grads, GradientSet& velocity,
              const TrainConfig& cfg) {
  GradientSet g = grads;
  auto params = parameter_views(spec);
  auto gv = gradient_views(g, spec);
  auto vv = gradient_views(velocity, spec);
  if (params.size() != gv.size() || params.size() != vv.size())
    throw Error(ErrorCode::dimension_mismatch, "gradient structure does not match the model");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size != gv[k].size || params[k].size != vv[k].size)
      throw Error(ErrorCode::dimension_mismatch, "gradient tensor shape mismatch");
    if (!params[k].trainable) continue;
    auto v = vv[k].map();
    v = cfg.momentum * v + gv[k].map();
    params[k].map() -= cfg.learning_rate * v;
  }
}

double accuracy(const ModelSpec& spec, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  Index correct = 0;
  for (Index s = 0; s < ds.size(); ++s)
    if (predict(spec, ds.features[static_cast<std::size_t>(s)]) == ds.labels[static_cast<std::size_t>(s)])
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<double> bsm_norms(const ModelSpec& spec, const Vector& x) {
  const auto states = forward(spec, x).states;
  std::vector<double> norms{1.0};
  Matrix phi = Matrix::Identity(spec.n, spec.n);
  for (Index i = spec.depth() - 1; i >= 0; --i) {
    phi = phi * layer_jacobian(spec, i, states[static_cast<std::size_t>(i)]);
    norms.push_back(spectral_norm(phi));
  }
  return norms;
}

Matrix bsm(const ModelSpec& spec, const Vector& x, Index i) {
  if (i < 0 || i > spec.depth())
    throw Error(ErrorCode::invalid_argument, "BSM index " + std::to_string(i) + " out of range");
  const auto states = forward(spec, x).states;
  Matrix phi = Matrix::Identity(spec.n, spec.n);
  for (Index j = spec.depth() - 1; j >= i; --j)
    phi = phi * layer_jacobian(spec, j, states[static_cast<std::size_t>(j)]);
  return phi;
}

BsmProfile bsm_profile(const ModelSpec& spec, const Vector& x, const Certificate& cert) {
  BsmProfile profile;
  profile.norms = bsm_norms(spec, x);
  profile.slack = 10.0 * spec.h;
  for (std::size_t k = 0; k < profile.norms.size(); ++k) {
    const double t = spec.h * static_cast<double>(k);
    profile.rho_bound.push_back(std::exp(-0.5 * cert.rho * t));
    if (profile.norms[k] > profile.rho_bound[k] + profile.slack)
      profile.violations.push_back(spec.depth() - static_cast<Index>(k));
  }
  return profile;
}

TrainingLog fit(ModelSpec& spec, const Dataset& train, const TrainConfig& cfg,
                const Activation& act) {
  TrainingLog log;
  if (cfg.epochs <= 0) return log;
  if (!(cfg.learning_rate > 0.0) || cfg.batch_size < 1)
    throw Error(ErrorCode::invalid_argument, "learning_rate must be > 0 and batch_size >= 1");
  if (train.size() == 0) throw Error(ErrorCode::invalid_argument, "empty training set");
  if (train.feature_dim() != spec.input_dim())
    throw Error(ErrorCode::dimension_mismatch, "dataset features do not match the model input");
  if (train.num_classes > spec.num_classes())
    throw Error(ErrorCode::dimension_mismatch, "dataset has more classes than the model outputs");

  const bool certified = spec.arch == Arch::chnode;
  spec.epsilon_user = cfg.epsilon_user;
  const EpsilonPolicy policy{cfg.epsilon_user, cfg.gamma_margin};
  Certificate cert;
  if (certified) cert = update_certificate(spec, act, policy);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  GradientSet velocity = GradientSet::zeros_like(spec);
  const Index probe = std::min(cfg.bsm_probe, train.size());
  Index batch_counter = 0;
  bool any_capped = false;

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double gamma_start = spec.gamma;
    bool capped = false;
    double loss_sum = 0.0;
    Index batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Vector> xs;
      std::vector<Index> ys;
      for (std::size_t k = start; k < stop; ++k) {
        xs.push_back(train.features[order[k]]);
        ys.push_back(train.labels[order[k]]);
      }
      ++batch_counter;
      BatchResult res;
      try {
        res = backprop(spec, xs, ys);
      } catch (const Error& e) {
        throw Error(ErrorCode::numerical, "training diverged at epoch " + std::to_string(epoch) +
                                              ", batch " + std::to_string(batches + 1) + ": " +
                                              e.what());
      }
      if (!std::isfinite(res.loss) || !res.grads.all_finite()) {
        throw Error(ErrorCode::numerical, "training diverged at epoch " + std::to_string(epoch) +
                                              ", batch " + std::to_string(batches + 1));
      }
      loss_sum += res.loss;
      ++batches;
      sgd_step(spec, res.grads, velocity, cfg);
      if (!flatten_parameters(spec).allFinite()) {
        throw Error(ErrorCode::numerical, "training diverged at epoch " + std::to_string(epoch) +
                                              ", batch " + std::to_string(batches) +
                                              ": parameters left the finite range");
      }
      if (certified) {
        try {
          cert = update_certificate(spec, act, policy);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::non_finite) throw;
          throw Error(ErrorCode::numerical, "training diverged at epoch " + std::to_string(epoch) +
                                                ", batch " + std::to_string(batches) + ": " + e.what());
        }
        if (gamma_start > 0.0 && spec.gamma > cfg.gamma_growth_cap * gamma_start) {
          spec.gamma = cfg.gamma_growth_cap * gamma_start;
          cert = make_certificate({cert.c1, cert.c2}, cert.lambda_J, cert.epsilon, spec.gamma);
          capped = true;
        }
      }
    }
    any_capped = any_capped || capped;

    LogRow row;
    row.epoch = epoch;
    row.batch = batch_counter;
    row.loss = loss_sum / static_cast<double>(batches);
    row.train_acc = accuracy(spec, train);
    row.has_certificate = certified;
    row.cert = cert;
    row.gamma_capped = capped;
    row.bsm_max = 0.0;
    row.bsm_min = std::numeric_limits<double>::infinity();
    for (Index s = 0; s < probe; ++s) {
      for (double v : bsm_norms(spec, train.features[static_cast<std::size_t>(s)])) {
        row.bsm_max = std::max(row.bsm_max, v);
        row.bsm_min = std::min(row.bsm_min, v);
      }
    }
    if (certified && cfg.check_lmi_each_epoch && !capped && !verify_lmi(cert, spec.J)) {
      throw Error(ErrorCode::numerical, "LMI failed after epoch " + std::to_string(epoch));
    }
    log.rows.push_back(row);
    if (cfg.target_accuracy > 0.0 && row.train_acc >= cfg.target_accuracy) break;
  }
  // a binding cap leaves gamma below gamma_min; restore the certificate
  if (certified && any_capped) update_certificate(spec, act, policy);
  return log;
}

std::string TrainingLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,batch,loss,train_acc,c1,c2,alpha,gamma,epsilon,rho,bsm_max,bsm_min\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.batch << ',' << num(r.loss) << ',' << num(r.train_acc) << ',';
    if (r.has_certificate) {
      out << num(r.cert.c1) << ',' << num(r.cert.c2) << ',' << num(r.cert.alpha) << ','
          << num(r.cert.gamma) << ',' << num(r.cert.epsilon) << ',' << num(r.cert.rho) << ',';
    } else {
      out << ",,,,,,";
    }
    out << num(r.bsm_max) << ',' << num(r.bsm_min) << '\n';
  }
  return out.str();
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << to_csv();
}

}  // namespace chnode
