#include "msaff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace msaff {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

uint64_t next_seq() {
  static std::atomic<uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

void Node::accumulate(std::size_t input_index, std::size_t offset, double g) {
  Node& in = *inputs[input_index];
  if (!in.requires_grad) return;
  in.grad_buffer()[offset] += g;
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
  }
}

void check_finite(const std::vector<double>& data, const char* what) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value in ") + what);
    }
  }
}

}  // namespace

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (static_cast<int64_t>(data.size()) != numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  check_finite(data, "leaf tensor");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = detail::next_seq();
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  std::vector<double> data(static_cast<std::size_t>(numel(shape)), 0.0);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::vector<double> data(static_cast<std::size_t>(numel(shape)), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
  check_shape(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(static_cast<std::size_t>(numel(shape)));
  for (double& v : data) v = dist(rng);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw UsageError("shape() on undefined tensor");
  return node_->shape;
}

int64_t Tensor::size() const { return static_cast<int64_t>(data().size()); }

const std::vector<double>& Tensor::data() const {
  if (!node_) throw UsageError("data() on undefined tensor");
  return node_->value;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
  const auto& d = data();
  if (d.size() != 1) {
    throw UsageError("item() on tensor of size " + std::to_string(d.size()));
  }
  return d[0];
}

double Tensor::at(std::initializer_list<int> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) +
                     " does not match tensor rank " + std::to_string(s.size()));
  }
  int64_t offset = 0;
  std::size_t axis = 0;
  for (int i : index) {
    if (i < 0 || i >= s[axis]) {
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of " + shape_str(s));
    }
    offset = offset * s[axis] + i;
    ++axis;
  }
  return data()[static_cast<std::size_t>(offset)];
}

Tensor Tensor::grad() const {
  if (!node_) throw UsageError("grad() on undefined tensor");
  if (node_->grad.size() != node_->value.size()) {
    return Tensor::zeros(node_->shape);
  }
  return Tensor::from_data(node_->shape, node_->grad);
}

Tensor Tensor::detach() const {
  if (!node_) return Tensor();
  return Tensor::from_data(node_->shape, node_->value);
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined()) return g;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : node->inputs) {
      if (seen.insert(in.get()).second) stack.push_back(in);
    }
    g.order_.push_back(std::move(node));
  }
  std::sort(g.order_.begin(), g.order_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return g;
}

void Graph::run_backward() {
  // Reverse creation order: every node's grad is complete before its
  // backward closure distributes it to inputs.
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.backward && node.requires_grad) {
      node.grad_buffer();  // nodes never touched by upstream flow keep zeros
      node.backward(node);
    }
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw UsageError("backward() on undefined tensor");
  if (loss.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  Graph g = Graph::trace(loss);
  loss.node()->grad_buffer()[0] = 1.0;
  g.run_backward();
}

}  // namespace msaff
