#include "ntc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace ntc {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

namespace detail {

namespace {
std::atomic<uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;
}  // namespace

std::shared_ptr<Node> make_node(Shape s) {
  auto n = std::make_shared<Node>();
  n->shape = s;
  n->value.assign(size_t(s.numel()), 0.f);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace detail

bool grad_enabled() { return detail::g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(detail::g_grad_enabled) {
  detail::g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = prev_; }

Tensor::Tensor(Shape s, float fill) : node_(detail::make_node(s)) {
  if (fill != 0.f) std::fill(node_->value.begin(), node_->value.end(), fill);
}

Tensor::Tensor(Shape s, std::vector<float> vals) : node_(detail::make_node(s)) {
  if (int64_t(vals.size()) != s.numel())
    throw ShapeError("tensor init: " + std::to_string(vals.size()) +
                     " values for shape " + s.str());
  node_->value = std::move(vals);
}

Tensor Tensor::parameter(Shape s, std::vector<float> vals) {
  Tensor t(s, std::move(vals));
  t.node_->requires_grad = true;
  return t;
}

float Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = node_->shape;
  return node_->value[((int64_t(n) * s.c + c) * s.h + h) * s.w + w];
}

float Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() on non-scalar tensor " + shape().str());
  return node_->value[0];
}

Tensor Tensor::detach() const {
  Tensor t(shape());
  t.node_->value = node_->value;
  return t;
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got " +
                     loss.shape().str());
  // Collect the reachable subgraph, then run closures by descending id:
  // every op output has a larger id than its inputs, making this a valid
  // reverse-topological order with deterministic accumulation.
  std::vector<detail::Node*> nodes;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p.get());
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::Node* a, const detail::Node* b) {
              return a->id > b->id;
            });
  // Op outputs start each pass fresh; leaf parameters keep accumulating so
  // repeated backward calls between optimizer steps sum their gradients.
  for (detail::Node* n : nodes)
    if (n->backprop) n->grad.clear();
  loss.node()->grad_buf()[0] = 1.f;
  for (detail::Node* n : nodes)
    if (n->backprop) n->backprop();
}

}  // namespace ntc
