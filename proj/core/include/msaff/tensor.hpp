#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "msaff/errors.hpp"

namespace msaff {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One record of the define-by-run graph. Nodes are created in forward order;
// `seq` gives an implicit topological order (inputs always precede outputs).
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward
  bool requires_grad = false;
  uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // accumulates into inputs' grad

  void accumulate(std::size_t input_index, std::size_t offset, double g);
  std::vector<double>& grad_buffer();
};

uint64_t next_seq();

}  // namespace detail

// Dense row-major tensor of doubles. Values are immutable after creation;
// ops build new tensors and record backward closures when any input
// requires gradients.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim() const { return static_cast<int>(shape().size()); }
  int64_t size() const;
  const std::vector<double>& data() const;
  bool requires_grad() const;

  double item() const;  // scalar (size-1) tensors only
  double at(std::initializer_list<int> index) const;

  // Gradient accumulated by the last backward pass; zeros if untouched.
  Tensor grad() const;
  // Value copy detached from the graph.
  Tensor detach() const;

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// The backward view of a forward trace: every node reachable from a root,
// ordered by creation sequence. Traversal visits each node exactly once.
class Graph {
 public:
  static Graph trace(const Tensor& root);
  std::size_t node_count() const { return order_.size(); }
  void run_backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

// Reverse-mode differentiation from a scalar loss. Populates grad() on every
// requires_grad tensor reachable from `loss`.
void backward(const Tensor& loss);

}  // namespace msaff
