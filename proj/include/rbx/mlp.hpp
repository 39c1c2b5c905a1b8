#pragma once

// Small fully connected networks over an explicit flat parameter vector.
// An Mlp is only a layout: the parameters live in an Eigen::VectorXd owned by
// the model, so gradients, momentum, hashing and checkpoints all work on the
// same flat vector. Batches are column-major: one sample per column.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbx/errors.hpp"
#include "rbx/observation.hpp"
#include "rbx/rng.hpp"

namespace rbx {

enum class Activation { Identity, Tanh, Relu };

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + name + "' (expected identity, tanh or relu)");
}

struct LayerShape {
  int in = 0;
  int out = 0;
  Activation act = Activation::Identity;
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

class Mlp {
 public:
  using Matrix = Eigen::MatrixXd;
  using Vector = Eigen::VectorXd;

  // Per-layer post-activation outputs recorded by forward() for backward().
  struct Tape {
    Matrix input;
    std::vector<Matrix> outputs;
  };

  Mlp() = default;

  explicit Mlp(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ContractViolation("Mlp needs at least one layer");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0 && layers_[i].in != layers_[i - 1].out)
        throw ContractViolation("Mlp layer widths do not chain");
      offsets_.push_back(offset);
      offset += static_cast<std::size_t>(layers_[i].in) * layers_[i].out + layers_[i].out;
    }
    param_count_ = offset;
  }

  const std::vector<LayerShape>& layers() const { return layers_; }
  int input_size() const { return layers_.front().in; }
  int output_size() const { return layers_.back().out; }
  std::size_t param_count() const { return param_count_; }

  // Scaled-uniform (Glorot) weights, zero biases. The last layer's weights are
  // multiplied by `last_layer_scale`.
  void initialize(double* params, Rng& rng, double last_layer_scale = 1.0) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      double limit = std::sqrt(6.0 / (l.in + l.out));
      if (i + 1 == layers_.size()) limit *= last_layer_scale;
      double* w = params + offsets_[i];
      for (int k = 0; k < l.in * l.out; ++k) w[k] = (2.0 * uniform_real(rng) - 1.0) * limit;
      std::fill(w + l.in * l.out, w + l.in * l.out + l.out, 0.0);
    }
  }

  Matrix forward(const double* params, const Matrix& x) const {
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) h = apply_layer(params, i, h);
    return h;
  }

  Matrix forward(const double* params, const Matrix& x, Tape& tape) const {
    tape.input = x;
    tape.outputs.clear();
    const Matrix* h = &tape.input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      tape.outputs.push_back(apply_layer(params, i, *h));
      h = &tape.outputs.back();
    }
    return tape.outputs.back();
  }

  // Accumulates dL/dparams into `grad` (same layout as params) and returns
  // dL/dinput, or an empty matrix when `input_grad` is false.
  Matrix backward(const double* params, const Tape& tape, const Matrix& grad_out, double* grad,
                  bool input_grad = true) const {
    Matrix delta = grad_out;
    for (std::size_t ii = layers_.size(); ii-- > 0;) {
      const auto& l = layers_[ii];
      const Matrix& out = tape.outputs[ii];
      switch (l.act) {
        case Activation::Identity: break;
        case Activation::Tanh: delta.array() *= 1.0 - out.array().square(); break;
        case Activation::Relu: delta.array() *= (out.array() > 0.0).cast<double>(); break;
      }
      const Matrix& in = ii == 0 ? tape.input : tape.outputs[ii - 1];
      Eigen::Map<Matrix> gw(grad + offsets_[ii], l.out, l.in);
      Eigen::Map<Vector> gb(grad + offsets_[ii] + static_cast<std::size_t>(l.in) * l.out, l.out);
      gw.noalias() += delta * in.transpose();
      gb.noalias() += delta.rowwise().sum();
      if (ii == 0 && !input_grad) return {};
      delta = weights(params, ii).transpose() * delta;
    }
    return delta;
  }

  Eigen::Map<const Matrix> weights(const double* params, std::size_t layer) const {
    return {params + offsets_[layer], layers_[layer].out, layers_[layer].in};
  }
  Eigen::Map<const Vector> bias(const double* params, std::size_t layer) const {
    return {params + offsets_[layer] + static_cast<std::size_t>(layers_[layer].in) * layers_[layer].out,
            layers_[layer].out};
  }

  // Offset of a layer's weights inside the flat parameter vector.
  std::size_t offset(std::size_t layer) const { return offsets_.at(layer); }

  template <class Derived>
  static void activate(Activation act, Eigen::MatrixBase<Derived>& z) {
    switch (act) {
      case Activation::Identity: break;
      case Activation::Tanh: z = z.array().tanh().matrix(); break;
      case Activation::Relu: z = z.cwiseMax(0.0); break;
    }
  }

  nlohmann::json describe() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) layers.push_back({l.in, l.out, activation_name(l.act)});
    return {{"layers", layers}, {"param_count", param_count_}};
  }

 private:
  Matrix apply_layer(const double* params, std::size_t i, const Matrix& h) const {
    Matrix z = weights(params, i) * h;
    z.colwise() += bias(params, i);
    activate(layers_[i].act, z);
    return z;
  }

  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
};

// Stacks observations as the columns of a (cells x n) matrix.
inline Eigen::MatrixXd observations_to_matrix(std::span<const Observation> obs, int cells) {
  Eigen::MatrixXd x(cells, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    if (obs[j].size() != static_cast<std::size_t>(cells))
      throw ContractViolation("observation has " + std::to_string(obs[j].size()) + " cells, model expects " +
                              std::to_string(cells));
    const auto v = obs[j].values();
    for (int i = 0; i < cells; ++i) x(i, static_cast<Eigen::Index>(j)) = v[i];
  }
  return x;
}

// Heavy-ball SGD: v <- momentum * v - lr * g; p <- p + v.
struct MomentumSgd {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  Eigen::VectorXd velocity;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (velocity.size() != params.size()) velocity = Eigen::VectorXd::Zero(params.size());
    velocity = momentum * velocity - learning_rate * grad;
    params += velocity;
  }
};

inline std::uint64_t hash_parameters(const Eigen::VectorXd& params) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(params.size()) * sizeof(double); ++i)
    h = (h ^ bytes[i]) * 1099511628211ULL;
  return h;
}

// Checkpoint file: one line of JSON header terminated by '\n', then the named
// float64 vectors in header order, little-endian, back to back.
struct CheckpointBuffer {
  std::string name;
  Eigen::VectorXd values;
};

inline void write_checkpoint(const std::string& path, nlohmann::json header,
                             const std::vector<CheckpointBuffer>& buffers) {
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& b : buffers) listing.push_back({{"name", b.name}, {"count", b.values.size()}});
  header["format"] = "rbx-checkpoint";
  header["buffers"] = listing;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << header.dump() << '\n';
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  for (const auto& b : buffers)
    out.write(reinterpret_cast<const char*>(b.values.data()),
              static_cast<std::streamsize>(b.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for " + path);
}

struct LoadedCheckpoint {
  nlohmann::json header;
  std::vector<CheckpointBuffer> buffers;

  const Eigen::VectorXd& buffer(const std::string& name) const {
    for (const auto& b : buffers)
      if (b.name == name) return b.values;
    throw DecodeError("checkpoint has no buffer '" + name + "'");
  }
};

inline LoadedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw DecodeError("checkpoint header missing");
  LoadedCheckpoint ck;
  try {
    ck.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (ck.header.value("format", "") != "rbx-checkpoint") throw DecodeError("not an rbx checkpoint");
  for (const auto& entry : ck.header.at("buffers")) {
    CheckpointBuffer b{entry.at("name").get<std::string>(), Eigen::VectorXd(entry.at("count").get<Eigen::Index>())};
    in.read(reinterpret_cast<char*>(b.values.data()), static_cast<std::streamsize>(b.values.size() * sizeof(double)));
    if (!in) throw DecodeError("checkpoint truncated in buffer '" + b.name + "'");
    ck.buffers.push_back(std::move(b));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DecodeError("checkpoint has trailing bytes");
  return ck;
}

}  // namespace rbx
