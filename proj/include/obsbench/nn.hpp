#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsbench/rng.hpp"

namespace obsbench::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  long long size() const { return static_cast<long long>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  // Row-major indexers; hot loops index data directly instead.
  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  double at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  double& at(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double at(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
};

enum class Activation { identity, sigmoid, tanh };

double sigmoid(double x);
double activate(Activation a, double x);
// Derivative expressed through the activation's own output value.
double activate_grad_from_output(Activation a, double y);

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LayerSpec {
  enum class Kind { conv, maxpool, dense, lstm, activation, flatten };
  Kind kind = Kind::flatten;

  // conv: valid cross-correlation, stride 1, input/output layout (H, W, C)
  int filter_h = 0, filter_w = 0, in_channels = 0, out_channels = 0;
  // maxpool: non-overlapping window, trailing remainder rows/cols truncated
  int pool_h = 0, pool_w = 0;
  // dense: affine map with a fused activation
  int in_features = 0, out_features = 0;
  // lstm: input sequence (T, input_size) -> (T, hidden) or final hidden state
  int input_size = 0, hidden_size = 0;
  bool return_sequence = false;

  Activation activation = Activation::identity;

  static LayerSpec Conv(int fh, int fw, int cin, int cout);
  static LayerSpec MaxPool(int ph, int pw);
  static LayerSpec Dense(int in, int out, Activation act);
  static LayerSpec Lstm(int input, int hidden, bool return_sequence);
  static LayerSpec Act(Activation act);
  static LayerSpec Flatten();
};

std::string kind_name(LayerSpec::Kind kind);

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual const LayerSpec& spec() const = 0;
  // Shape transfer; throws on geometry the layer cannot accept.
  virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;
  // Forward caches whatever backward needs; backward accumulates parameter
  // gradients (+=) and returns the gradient with respect to its input.
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<ParamRef> params() { return {}; }
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(const LayerSpec& spec);
  int layer_count() const { return static_cast<int>(layers_.size()); }
  Layer& layer(int i) { return *layers_[static_cast<std::size_t>(i)]; }
  const Layer& layer(int i) const { return *layers_[static_cast<std::size_t>(i)]; }

  // Walks shapes through every layer; returns the output shape.
  std::vector<int> validate(const std::vector<int>& input_shape) const;

  Tensor forward(const Tensor& x);
  // dloss: gradient of the scalar loss w.r.t. the network output.
  void backward(const Tensor& dloss);

  std::vector<ParamRef> params();
  void zero_grad();
  long long parameter_count();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct Loss {
  double value = 0.0;
  Tensor grad;
};

// Mean over all components; gradient is 2*(pred - target)/count.
Loss mse_loss(const Tensor& pred, const Tensor& target);

// Uniform Xavier/Glorot init, biases zero. Deterministic given the rng state:
// layers in order, parameters in declaration order, values row-major.
void xavier_init(Network& net, Rng& rng);
double xavier_bound(const LayerSpec& spec, const std::string& param_name);

struct OptimizerConfig {
  enum class Method { adam, sgd };
  Method method = Method::adam;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, Network& net);
  // Applies one update using grad * grad_scale; training accumulates raw
  // per-sample gradients and passes 1/batch_size here.
  void step(double grad_scale = 1.0);
  void reset();

 private:
  OptimizerConfig cfg_;
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

// Standalone LSTM cell, shared by the Lstm layer's unrolled forward pass.
struct LstmState {
  std::vector<double> h, c;
};

struct LstmCellParams {
  // Gate weights over the concatenated [h_{t-1}, x_t]; rows are hidden units.
  Tensor Wi, Wf, Wo, Wc;
  Tensor bi, bf, bo, bc;
};

LstmState lstm_cell(const std::vector<double>& x, const LstmState& prev,
                    const LstmCellParams& p);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

}  // namespace obsbench::nn
