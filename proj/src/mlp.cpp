#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "nids/error.hpp"
#include "nids/learners.hpp"
#include "nids/random.hpp"

namespace nids::learners {

namespace {

using MatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

ConstMap weights_of(const DenseLayer& l) {
  return ConstMap(l.weights.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
}

ConstMap as_eigen(const Matrix& x) {
  return ConstMap(x.data().data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
}

void softmax_rows(MatrixXd& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// Activations of every layer for a batch; acts[0] is the input.
std::vector<MatrixXd> forward(const Mlp& net, const MatrixXd& input) {
  const auto& layers = net.layers();
  std::vector<MatrixXd> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(input);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    Eigen::Map<const Eigen::RowVectorXd> b(l.bias.data(), static_cast<Eigen::Index>(l.out));
    MatrixXd z = acts.back() * weights_of(l).transpose();
    z.rowwise() += b;
    if (i + 1 < layers.size()) {
      z = z.cwiseMax(0.0);
    } else {
      softmax_rows(z);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

double cross_entropy(const MatrixXd& p, std::span<const int> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s -= std::log(std::max(p(static_cast<Eigen::Index>(i), y[i]), 1e-300));
  }
  return s / static_cast<double>(y.size());
}

void check_labels(std::span<const int> y, std::size_t n_classes) {
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      fail(ErrorKind::Argument, "label " + std::to_string(label) + " out of range");
    }
  }
}

}  // namespace

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) fail(ErrorKind::Argument, "network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.size() != l.in * l.out || l.bias.size() != l.out) fail(ErrorKind::Shape, "layer size mismatch");
    if (i > 0 && layers_[i - 1].out != l.in) fail(ErrorKind::Shape, "layer widths do not chain");
  }
}

std::vector<double> Mlp::proba(std::span<const double> row) const {
  if (row.size() != n_inputs()) fail(ErrorKind::Shape, "mlp input width mismatch");
  MatrixXd in = Eigen::Map<const MatrixXd>(row.data(), 1, static_cast<Eigen::Index>(row.size()));
  const auto acts = forward(*this, in);
  const auto& p = acts.back();
  return std::vector<double>(p.data(), p.data() + p.size());
}

int Mlp::predict(std::span<const double> row) const {
  const auto p = proba(row);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

Matrix Mlp::proba(const Matrix& x) const {
  if (x.cols() != n_inputs()) fail(ErrorKind::Shape, "mlp input width mismatch");
  const auto acts = forward(*this, as_eigen(x));
  const auto& p = acts.back();
  return Matrix(x.rows(), n_classes(), std::vector<double>(p.data(), p.data() + p.size()));
}

Mlp init_mlp(std::size_t n_inputs, std::size_t n_classes, const MLPConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 0x6d6c70));
  std::vector<std::size_t> widths{n_inputs};
  widths.insert(widths.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  widths.push_back(n_classes);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer l{widths[i], widths[i + 1], std::vector<double>(widths[i] * widths[i + 1]),
                 std::vector<double>(widths[i + 1], 0.0)};
    if (l.in == 0 || l.out == 0) fail(ErrorKind::Config, "mlp layer widths must be positive");
    const double scale = std::sqrt(2.0 / static_cast<double>(l.in));
    for (auto& w : l.weights) w = scale * standard_normal(rng);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

MlpGradients mlp_gradients(const Mlp& net, const Matrix& x, std::span<const int> y) {
  if (x.rows() != y.size()) fail(ErrorKind::Shape, "label count differs from row count");
  const auto& layers = net.layers();
  const auto acts = forward(net, as_eigen(x));
  const double n = static_cast<double>(x.rows());

  MlpGradients out;
  out.loss = cross_entropy(acts.back(), y);
  out.weights.resize(layers.size());
  out.bias.resize(layers.size());

  // dL/dz for the softmax + cross-entropy output is (p - onehot) / n.
  MatrixXd delta = acts.back();
  for (std::size_t i = 0; i < y.size(); ++i) delta(static_cast<Eigen::Index>(i), y[i]) -= 1.0;
  delta /= n;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    MatrixXd gw = delta.transpose() * acts[li];
    Eigen::RowVectorXd gb = delta.colwise().sum();
    out.weights[li].assign(gw.data(), gw.data() + gw.size());
    out.bias[li].assign(gb.data(), gb.data() + gb.size());
    if (li > 0) {
      MatrixXd back = delta * weights_of(l);
      delta = back.cwiseProduct((acts[li].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

double mlp_loss(const Mlp& net, const Matrix& x, std::span<const int> y) {
  if (x.rows() != y.size()) fail(ErrorKind::Shape, "label count differs from row count");
  return cross_entropy(forward(net, as_eigen(x)).back(), y);
}

Mlp continue_mlp(Mlp net, const Matrix& x, std::span<const int> y, const MLPConfig& cfg, std::size_t first_epoch,
                 MlpLog* log) {
  if (x.rows() == 0) fail(ErrorKind::EmptyData, "cannot train on an empty matrix");
  if (x.rows() != y.size()) fail(ErrorKind::Shape, "label count differs from row count");
  if (x.cols() != net.n_inputs()) fail(ErrorKind::Shape, "mlp input width mismatch");
  if (cfg.batch_size < 1) fail(ErrorKind::Config, "mlp.batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) fail(ErrorKind::Config, "mlp.learning_rate must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) fail(ErrorKind::Config, "mlp.momentum must be in [0, 1)");
  check_labels(y, net.n_classes());

  auto& layers = net.layers();
  std::vector<std::vector<double>> vw(layers.size()), vb(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    vw[i].assign(layers[i].weights.size(), 0.0);
    vb[i].assign(layers[i].bias.size(), 0.0);
  }

  const std::size_t n = x.rows();
  std::vector<std::size_t> order(n);
  std::vector<int> batch_y;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::size_t epoch = first_epoch + e;
    Rng rng(mix_seed(cfg.seed, 1000 + epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix bx = x.select_rows(idx);
      batch_y.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) batch_y[i] = y[idx[i]];
      const auto grad = mlp_gradients(net, bx, batch_y);
      if (!std::isfinite(grad.loss)) {
        fail(ErrorKind::Divergence, "mlp loss became non-finite at epoch " + std::to_string(epoch + 1) +
                                        "; try a smaller learning rate");
      }
      loss_sum += grad.loss;
      ++batches;
      for (std::size_t li = 0; li < layers.size(); ++li) {
        auto& l = layers[li];
        for (std::size_t k = 0; k < l.weights.size(); ++k) {
          vw[li][k] = cfg.momentum * vw[li][k] - cfg.learning_rate * grad.weights[li][k];
          l.weights[k] += vw[li][k];
        }
        for (std::size_t k = 0; k < l.bias.size(); ++k) {
          vb[li][k] = cfg.momentum * vb[li][k] - cfg.learning_rate * grad.bias[li][k];
          l.bias[k] += vb[li][k];
        }
      }
    }
    const double mean = loss_sum / static_cast<double>(batches);
    if (log) log->epoch_loss.push_back(mean);
    spdlog::debug("mlp epoch {} loss {:.6f}", epoch + 1, mean);
  }
  return net;
}

Mlp train_mlp(const Matrix& x, std::span<const int> y, std::size_t n_classes, const MLPConfig& cfg, MlpLog* log) {
  if (x.rows() == 0) fail(ErrorKind::EmptyData, "cannot train on an empty matrix");
  if (cfg.epochs < 1) fail(ErrorKind::Config, "mlp.epochs must be >= 1");
  return continue_mlp(init_mlp(x.cols(), n_classes, cfg), x, y, cfg, 0, log);
}

}  // namespace nids::learners
