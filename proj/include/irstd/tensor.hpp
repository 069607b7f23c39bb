#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "irstd/rng.hpp"

namespace irstd {

// Dense double tensor with reverse-mode autodiff. Each op links its output
// node to its inputs; backward() walks the graph in reverse topological
// order. Single-threaded per graph.
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, same size as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates this->grad into the parents' grad buffers.
    std::function<void(Node&)> backprop;

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
  };

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t size() const { return node_->size(); }
  bool is_scalar() const { return size() == 1; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() { node_->ensure_grad(); return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { if (node_) node_->grad.assign(node_->data.size(), 0.0); }

  // Scalar value accessor; throws if not a scalar.
  double value() const;

  std::shared_ptr<Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

int64_t shape_size(const std::vector<int>& shape);

// Elementwise binary ops; shapes must match, or one side may be a scalar
// (size-1) tensor which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
Tensor abs_op(const Tensor& a);
Tensor atan_op(const Tensor& a);

// Sum over all elements -> scalar.
Tensor sum(const Tensor& a);
// Sum over the given axes; the reduced axes are removed from the shape
// (a full reduction yields a scalar).
Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes);

// Scalar min/max with subgradient routed to the selected input (ties -> a).
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

// input NCHW, weight OIKK, bias O; cross-correlation.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0);
// Spatial dims must be divisible by factor; gradient goes to the first
// maximal element in row-major window order.
Tensor max_pool2d(const Tensor& input, int factor);
// Half-pixel-center bilinear upsampling; factor 1 is the identity.
Tensor upsample_bilinear(const Tensor& input, int factor);
// NCHW inputs with identical N, H, W concatenated along channels.
Tensor concat_channels(const std::vector<Tensor>& inputs);
// Per-(n,c) normalization over the spatial dims.
Tensor instance_norm(const Tensor& input, double eps = 1e-5);
// Same data, new shape (sizes must agree); backward is the identity.
Tensor reshape(const Tensor& input, std::vector<int> new_shape);

// Reverse-mode sweep from a scalar loss; accumulates into leaf .grad().
void backward(const Tensor& loss);

// Max over coordinates of |analytic - numeric| / max(1, |numeric|) against
// central finite differences. When max_coords > 0, a random subset of
// coordinates is probed (for large parameter tensors).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-5, int max_coords = -1, Rng* rng = nullptr);

}  // namespace irstd
