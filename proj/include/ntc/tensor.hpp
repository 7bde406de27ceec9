// Dense float32 NCHW tensor with reverse-mode autodiff over a dynamic tape.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ntc {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VerifyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Shape {
  int n = 1, c = 1, h = 1, w = 1;
  int64_t numel() const { return int64_t(n) * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {

// One tape node. Children hold shared_ptrs to parents, so dropping the loss
// tensor frees the whole graph while leaf parameters stay alive in the model.
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;

  std::vector<float>& grad_buf() {
    if (grad.empty()) grad.assign(value.size(), 0.f);
    return grad;
  }
};

std::shared_ptr<Node> make_node(Shape s);

}  // namespace detail

// Whether ops record backprop closures (thread-local).
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.f);
  Tensor(Shape s, std::vector<float> vals);

  // Leaf with requires_grad set: a trainable parameter.
  static Tensor parameter(Shape s, std::vector<float> vals);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->shape.numel(); }

  std::span<float> values() { return node_->value; }
  std::span<const float> values() const { return node_->value; }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> grad_mutable() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.f); }

  float at(int n, int c, int h, int w) const;
  float item() const;  // value of a single-element tensor

  // Value copy detached from the tape.
  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse pass from a scalar loss: seeds grad 1 and runs recorded closures in
// reverse creation order (a valid reverse-topological order of the tape).
void backward(const Tensor& loss);

}  // namespace ntc
