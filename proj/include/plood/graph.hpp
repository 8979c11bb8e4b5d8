// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "plood/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace plood::ad {

using NodeId = std::size_t;
class Gradients;

enum class OpKind
{
  Input,
  MatMul,
  Conv2d, // 3x3, stride 1, same padding, per-channel bias
  MaxPool2,
  Add, // same shape, or rank-1 right operand broadcast along the last axis
  Mul,
  Relu,
  Softmax, // over the last axis
  Log,
  Mean,
  Concat, // along the last axis
  Reshape,
};

char const *op_name(OpKind kind);

/// Static computation graph with cached activations.
///
/// Nodes are appended in construction order, which is also the topological
/// order: every input id is smaller than its consumer. Shapes are validated at
/// evaluation time so one graph serves any batch size.
///
/// Binding or mutating a leaf invalidates the nodes created after it, so a
/// partially evaluated graph can be resumed with `forward(upto)`. Nodes whose
/// inputs kept their version are not recomputed.
class Graph
{
public:
  /// Leaf that receives gradients (data input).
  NodeId input(std::string name);
  /// Leaf that receives gradients and is reported by `parameters()`.
  NodeId parameter(std::string name);
  /// Leaf that never receives gradients.
  NodeId constant(std::string name);

  NodeId matmul(NodeId a, NodeId b);
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias);
  NodeId max_pool2(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId softmax(NodeId a);
  /// Natural log of max(x, floor); floor 0 means no clamping.
  NodeId log(NodeId a, double floor = 0.0);
  NodeId mean(NodeId a);
  NodeId concat(NodeId a, NodeId b);
  NodeId reshape(NodeId a, Shape trailing);

  void   mark_output(NodeId id, std::string name);
  NodeId find(std::string const &name) const;

  void bind(NodeId leaf, Tensor value);
  void bind(std::string const &name, Tensor value);
  /// Direct access to a leaf value for in-place edits; invalidates consumers.
  Tensor &mutable_leaf(NodeId leaf);

  /// Evaluates every pending node up to and including `upto`.
  void forward(NodeId upto);
  void forward();

  /// Binds named inputs, evaluates the whole graph, returns the marked outputs.
  std::map<std::string, Tensor> evaluate(std::map<std::string, Tensor> const &inputs);

  Tensor const &value(NodeId id) const;
  bool          evaluated(NodeId id) const { return id < evaluated_; }

  std::size_t         size() const { return nodes_.size(); }
  OpKind              kind(NodeId id) const { return nodes_.at(id).kind; }
  bool                is_leaf(NodeId id) const { return kind(id) == OpKind::Input; }
  bool                requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::string const  &name(NodeId id) const { return nodes_.at(id).name; }
  std::vector<NodeId> parameters() const;
  std::vector<NodeId> const &inputs_of(NodeId id) const { return nodes_.at(id).inputs; }

private:
  struct Node
  {
    OpKind              kind = OpKind::Input;
    std::vector<NodeId> inputs;
    std::string         name;
    bool                requires_grad = false;
    bool                is_parameter = false;
    double              floor = 0.0;
    Shape               trailing; // reshape target, excluding the leading axis
    Tensor              value;
    RowMatrix           col;    // conv im2col cache
    std::vector<Index>  argmax; // pool cache
    std::uint64_t       version = 0;
    std::vector<std::uint64_t> seen; // input versions at the last compute
  };

  NodeId push(Node node);
  NodeId leaf(std::string name, bool grad, bool param);
  void   compute(NodeId id);
  void   invalidate_from(NodeId id);

  friend Gradients backward(Graph &graph, NodeId output, Tensor const &seed);
  std::vector<Node>             nodes_;
  std::map<std::string, NodeId> names_;
  NodeId                        evaluated_ = 0;
  std::uint64_t                 clock_ = 0;
};

/// Gradients by node id; only nodes that require gradients are populated.
class Gradients
{
public:
  explicit Gradients(std::size_t n)
    : grads_(n)
  {
  }
  bool          has(NodeId id) const { return grads_.at(id).has_value(); }
  Tensor const &operator[](NodeId id) const;
  Tensor       &at(NodeId id);
  std::optional<Tensor> &slot(NodeId id) { return grads_.at(id); }

private:
  std::vector<std::optional<Tensor>> grads_;
};

/// Reverse accumulation from `output` seeded with `seed`.
Gradients backward(Graph &graph, NodeId output, Tensor const &seed);

struct GradientCheck
{
  double      max_relative_error = 0.0;
  NodeId      worst_node = 0;
  Index       worst_index = 0;
  std::size_t checked = 0;
};

/// Central differences of a scalar output with respect to every parameter leaf.
Gradients numeric_gradients(Graph &graph, NodeId output, double eps);

/// max |analytic - numeric| / max(1, |numeric|) over every parameter entry.
GradientCheck compare_gradients(Graph const &graph, Gradients const &analytic, Gradients const &numeric);

/// Evaluates, differentiates and compares against central differences.
/// Throws if the output is not a scalar or eps is not positive.
GradientCheck gradient_check(Graph &graph, NodeId output, double eps);
GradientCheck gradient_check(Graph &graph, std::map<std::string, Tensor> const &inputs, NodeId output, double eps);

} // namespace plood::ad
