#include "gradmarket/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gradmarket/rng.hpp"

namespace gradmarket {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

RowMat batch_features(const Dataset& data, std::span<const std::size_t> rows) {
  RowMat x(rows.size(), data.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.size()) {
      throw std::invalid_argument("batch index out of range");
    }
    x.row(static_cast<Eigen::Index>(i)) =
        ConstMatMap(data.row(rows[i]), 1, data.dim);
  }
  return x;
}

std::vector<int> batch_labels(const Dataset& data, std::span<const std::size_t> rows,
                              int num_classes) {
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y[i] = data.labels[rows[i]];
    if (y[i] < 0 || y[i] >= num_classes) {
      throw std::invalid_argument("label out of range for the model");
    }
  }
  return y;
}

void check_shapes(const ModelParams& params, const Dataset& data) {
  if (params.input_dim != data.dim) {
    throw std::invalid_argument("model/data feature width mismatch");
  }
  if (params.size() != param_count(params.arch, params.input_dim,
                                   params.num_classes, params.hidden)) {
    throw std::invalid_argument("model parameter block has the wrong length");
  }
}

// Mean softmax cross entropy; optionally also d(loss)/d(logits).
double cross_entropy(const RowMat& logits, const std::vector<int>& labels,
                     RowMat* dlogits) {
  const auto b = logits.rows();
  const auto k = logits.cols();
  if (dlogits) dlogits->resize(b, k);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    const double z = e.sum();
    loss += m + std::log(z) - logits(i, labels[static_cast<std::size_t>(i)]);
    if (dlogits) {
      Eigen::RowVectorXd d = e / z;
      d(labels[static_cast<std::size_t>(i)]) -= 1.0;
      dlogits->row(i) = d / static_cast<double>(b);
    }
  }
  return loss / static_cast<double>(b);
}

struct LogregMaps {
  ConstMatMap w;
  ConstMatMap b;
};
LogregMaps logreg_maps(const ModelParams& p) {
  const int d = p.input_dim, k = p.num_classes;
  return {ConstMatMap(p.values.data(), k, d),
          ConstMatMap(p.values.data() + static_cast<std::size_t>(k) * d, 1, k)};
}

struct MlpMaps {
  ConstMatMap w1;
  ConstMatMap b1;
  ConstMatMap w2;
  ConstMatMap b2;
};
MlpMaps mlp_maps(const ModelParams& p) {
  const int d = p.input_dim, k = p.num_classes, h = p.hidden;
  const double* base = p.values.data();
  const std::size_t o1 = static_cast<std::size_t>(h) * d;
  const std::size_t o2 = o1 + h;
  const std::size_t o3 = o2 + static_cast<std::size_t>(k) * h;
  return {ConstMatMap(base, h, d), ConstMatMap(base + o1, 1, h),
          ConstMatMap(base + o2, k, h), ConstMatMap(base + o3, 1, k)};
}

}  // namespace

std::size_t param_count(ModelArch arch, int input_dim, int num_classes, int hidden) {
  const std::size_t d = static_cast<std::size_t>(input_dim);
  const std::size_t k = static_cast<std::size_t>(num_classes);
  const std::size_t h = static_cast<std::size_t>(hidden);
  return arch == ModelArch::logreg ? k * d + k : h * d + h + k * h + k;
}

ModelParams ModelParams::logreg(int input_dim, int num_classes) {
  if (input_dim < 1 || num_classes < 2) {
    throw std::invalid_argument("logreg: need input_dim >= 1 and >= 2 classes");
  }
  ModelParams p;
  p.arch = ModelArch::logreg;
  p.input_dim = input_dim;
  p.num_classes = num_classes;
  p.hidden = 0;
  p.values.assign(param_count(p.arch, input_dim, num_classes, 0), 0.0);
  return p;
}

ModelParams ModelParams::mlp(int input_dim, int num_classes, int hidden) {
  if (input_dim < 1 || num_classes < 2 || hidden < 1) {
    throw std::invalid_argument("mlp: bad shape");
  }
  ModelParams p;
  p.arch = ModelArch::mlp;
  p.input_dim = input_dim;
  p.num_classes = num_classes;
  p.hidden = hidden;
  p.values.assign(param_count(p.arch, input_dim, num_classes, hidden), 0.0);
  return p;
}

GradientVector::GradientVector(std::vector<double> values)
    : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("GradientVector: non-finite entry");
    }
  }
}

GradientVector GradientVector::zeros(std::size_t n) {
  GradientVector g;
  g.values_.assign(n, 0.0);
  return g;
}

double dot(const GradientVector& a, const GradientVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  return std::inner_product(a.values().begin(), a.values().end(),
                            b.values().begin(), 0.0);
}

double l2_norm(const GradientVector& a) { return std::sqrt(dot(a, a)); }

double l2_distance(const GradientVector& a, const GradientVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("l2_distance: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

GradientVector flatten(const ModelParams& params) {
  return GradientVector(params.values);
}

ModelParams unflatten(const ModelParams& shape, const std::vector<double>& values) {
  if (values.size() != shape.size()) {
    throw std::invalid_argument("unflatten: length mismatch");
  }
  ModelParams out = shape;
  out.values = values;
  for (double v : out.values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("unflatten: non-finite entry");
    }
  }
  return out;
}

ModelParams init_model(ModelArch arch, int input_dim, int num_classes, int hidden,
                       std::uint64_t seed) {
  if (arch == ModelArch::logreg) {
    // Softmax regression is convex; the conventional all-zeros start keeps
    // round-one gradients independent of the init stream.
    return ModelParams::logreg(input_dim, num_classes);
  }
  ModelParams p = ModelParams::mlp(input_dim, num_classes, hidden);
  Rng rng(seed);
  auto glorot = [&](std::size_t offset, std::size_t count, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < count; ++i) {
      p.values[offset + i] = rng.uniform(-limit, limit);
    }
  };
  const std::size_t d = static_cast<std::size_t>(input_dim);
  const std::size_t k = static_cast<std::size_t>(num_classes);
  const std::size_t h = static_cast<std::size_t>(hidden);
  glorot(0, h * d, input_dim, hidden);        // W1; biases stay zero
  glorot(h * d + h, k * h, hidden, num_classes);  // W2
  return p;
}

ForwardResult forward_loss(const ModelParams& params, const Dataset& data,
                           std::span<const std::size_t> rows) {
  check_shapes(params, data);
  if (rows.empty()) throw std::invalid_argument("forward_loss: empty batch");
  const RowMat x = batch_features(data, rows);
  const auto y = batch_labels(data, rows, params.num_classes);

  RowMat logits;
  if (params.arch == ModelArch::logreg) {
    const auto m = logreg_maps(params);
    logits = x * m.w.transpose();
    logits.rowwise() += m.b.row(0);
  } else {
    const auto m = mlp_maps(params);
    RowMat z1 = x * m.w1.transpose();
    z1.rowwise() += m.b1.row(0);
    const RowMat a1 = z1.cwiseMax(0.0);
    logits = a1 * m.w2.transpose();
    logits.rowwise() += m.b2.row(0);
  }

  ForwardResult out;
  out.loss = cross_entropy(logits, y, nullptr);
  out.logits.assign(logits.data(), logits.data() + logits.size());
  return out;
}

GradientVector backward(const ModelParams& params, const Dataset& data,
                        std::span<const std::size_t> rows) {
  check_shapes(params, data);
  if (rows.empty()) throw std::invalid_argument("backward: empty batch");
  const RowMat x = batch_features(data, rows);
  const auto y = batch_labels(data, rows, params.num_classes);

  std::vector<double> grad(params.size(), 0.0);
  if (params.arch == ModelArch::logreg) {
    const auto m = logreg_maps(params);
    RowMat logits = x * m.w.transpose();
    logits.rowwise() += m.b.row(0);
    RowMat dlogits;
    cross_entropy(logits, y, &dlogits);
    const int d = params.input_dim, k = params.num_classes;
    MatMap dw(grad.data(), k, d);
    MatMap db(grad.data() + static_cast<std::size_t>(k) * d, 1, k);
    dw = dlogits.transpose() * x;
    db = dlogits.colwise().sum();
  } else {
    const auto m = mlp_maps(params);
    RowMat z1 = x * m.w1.transpose();
    z1.rowwise() += m.b1.row(0);
    const RowMat a1 = z1.cwiseMax(0.0);
    RowMat logits = a1 * m.w2.transpose();
    logits.rowwise() += m.b2.row(0);
    RowMat dlogits;
    cross_entropy(logits, y, &dlogits);

    const int d = params.input_dim, k = params.num_classes, h = params.hidden;
    const std::size_t o1 = static_cast<std::size_t>(h) * d;
    const std::size_t o2 = o1 + h;
    const std::size_t o3 = o2 + static_cast<std::size_t>(k) * h;
    MatMap dw1(grad.data(), h, d);
    MatMap db1(grad.data() + o1, 1, h);
    MatMap dw2(grad.data() + o2, k, h);
    MatMap db2(grad.data() + o3, 1, k);

    dw2 = dlogits.transpose() * a1;
    db2 = dlogits.colwise().sum();
    RowMat da1 = dlogits * m.w2;
    const RowMat dz1 = (z1.array() > 0.0).select(da1, 0.0);
    dw1 = dz1.transpose() * x;
    db1 = dz1.colwise().sum();
  }
  return GradientVector(std::move(grad));
}

GradientVector local_train(const ModelParams& start, const Dataset& data,
                           int epochs, int batch_size, double lr,
                           std::uint64_t seed) {
  if (epochs < 0) throw std::invalid_argument("local_train: negative epochs");
  if (batch_size < 1) throw std::invalid_argument("local_train: bad batch size");
  if (!(lr > 0.0)) throw std::invalid_argument("local_train: bad learning rate");
  if (epochs == 0) return GradientVector::zeros(start.size());
  if (data.size() == 0) {
    throw std::invalid_argument("local_train: empty dataset");
  }
  check_shapes(start, data);

  ModelParams cur = start;
  const std::size_t p = cur.size();
  std::vector<double> m(p, 0.0), v(p, 0.0);  // fresh Adam moments per call
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  long long step = 0;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += batch_size) {
      const std::size_t len = std::min<std::size_t>(batch_size, order.size() - at);
      const auto g = backward(cur, data, std::span(order).subspan(at, len));
      ++step;
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < p; ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        cur.values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
      }
    }
  }

  std::vector<double> delta(p);
  for (std::size_t i = 0; i < p; ++i) delta[i] = cur.values[i] - start.values[i];
  return GradientVector(std::move(delta));
}

std::vector<int> predict(const ModelParams& params, const Dataset& data) {
  if (data.size() == 0) return {};
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  // Reuse the forward pass; argmax with lowest index winning ties.
  check_shapes(params, data);
  const RowMat x = batch_features(data, rows);
  RowMat logits;
  if (params.arch == ModelArch::logreg) {
    const auto m = logreg_maps(params);
    logits = x * m.w.transpose();
    logits.rowwise() += m.b.row(0);
  } else {
    const auto m = mlp_maps(params);
    RowMat z1 = x * m.w1.transpose();
    z1.rowwise() += m.b1.row(0);
    const RowMat a1 = z1.cwiseMax(0.0);
    logits = a1 * m.w2.transpose();
    logits.rowwise() += m.b2.row(0);
  }
  std::vector<int> out(data.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < params.num_classes; ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double accuracy(const ModelParams& params, const Dataset& data) {
  if (data.size() == 0) {
    throw std::invalid_argument("accuracy: empty dataset");
  }
  const auto preds = predict(params, data);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace gradmarket
