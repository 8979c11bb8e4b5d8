// SPDX-License-Identifier: Apache-2.0
#include "plood/graph.hpp"

#include "plood/error.hpp"

#include <algorithm>
#include <cmath>

namespace plood::ad {

char const *op_name(OpKind kind)
{
  switch (kind) {
  case OpKind::Input: return "input";
  case OpKind::MatMul: return "matmul";
  case OpKind::Conv2d: return "conv2d";
  case OpKind::MaxPool2: return "max_pool2";
  case OpKind::Add: return "add";
  case OpKind::Mul: return "mul";
  case OpKind::Relu: return "relu";
  case OpKind::Softmax: return "softmax";
  case OpKind::Log: return "log";
  case OpKind::Mean: return "mean";
  case OpKind::Concat: return "concat";
  case OpKind::Reshape: return "reshape";
  }
  return "unknown";
}

NodeId Graph::push(Node node)
{
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) { throw GraphError(nodes_.size(), "input id " + std::to_string(in) + " does not exist"); }
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::leaf(std::string name, bool grad, bool param)
{
  if (names_.count(name)) { throw GraphError(nodes_.size(), "duplicate name '" + name + "'"); }
  Node n;
  n.kind = OpKind::Input;
  n.name = name;
  n.requires_grad = grad;
  n.is_parameter = param;
  NodeId const id = push(std::move(n));
  names_[std::move(name)] = id;
  return id;
}

NodeId Graph::input(std::string name) { return leaf(std::move(name), true, false); }
NodeId Graph::parameter(std::string name) { return leaf(std::move(name), true, true); }
NodeId Graph::constant(std::string name) { return leaf(std::move(name), false, false); }

namespace {
template <typename Node, typename... Ids>
Node make_node(OpKind kind, Ids... in)
{
  Node n;
  n.kind = kind;
  n.inputs = {static_cast<NodeId>(in)...};
  return n;
}
} // namespace

NodeId Graph::matmul(NodeId a, NodeId b) { return push(make_node<Node>(OpKind::MatMul, a, b)); }
NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b) { return push(make_node<Node>(OpKind::Conv2d, x, w, b)); }
NodeId Graph::max_pool2(NodeId x) { return push(make_node<Node>(OpKind::MaxPool2, x)); }
NodeId Graph::add(NodeId a, NodeId b) { return push(make_node<Node>(OpKind::Add, a, b)); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(make_node<Node>(OpKind::Mul, a, b)); }
NodeId Graph::relu(NodeId a) { return push(make_node<Node>(OpKind::Relu, a)); }
NodeId Graph::softmax(NodeId a) { return push(make_node<Node>(OpKind::Softmax, a)); }
NodeId Graph::log(NodeId a, double floor)
{
  auto n = make_node<Node>(OpKind::Log, a);
  n.floor = floor;
  return push(std::move(n));
}
NodeId Graph::mean(NodeId a) { return push(make_node<Node>(OpKind::Mean, a)); }
NodeId Graph::concat(NodeId a, NodeId b) { return push(make_node<Node>(OpKind::Concat, a, b)); }
NodeId Graph::reshape(NodeId a, Shape trailing)
{
  auto n = make_node<Node>(OpKind::Reshape, a);
  n.trailing = std::move(trailing);
  return push(std::move(n));
}

void Graph::mark_output(NodeId id, std::string name)
{
  if (id >= nodes_.size()) { throw GraphError(id, "no such node"); }
  if (names_.count(name)) { throw GraphError(id, "duplicate name '" + name + "'"); }
  names_[std::move(name)] = id;
}

NodeId Graph::find(std::string const &name) const
{
  auto it = names_.find(name);
  if (it == names_.end()) { throw Error("graph: no node named '" + name + "'"); }
  return it->second;
}

void Graph::invalidate_from(NodeId id) { evaluated_ = std::min(evaluated_, id); }

void Graph::bind(NodeId id, Tensor value)
{
  if (id >= nodes_.size() || !is_leaf(id)) { throw GraphError(id, "bind target is not a leaf"); }
  nodes_[id].value = std::move(value);
  nodes_[id].version = ++clock_;
  invalidate_from(id);
}

void Graph::bind(std::string const &name, Tensor value) { bind(find(name), std::move(value)); }

Tensor &Graph::mutable_leaf(NodeId id)
{
  if (id >= nodes_.size() || !is_leaf(id)) { throw GraphError(id, "not a leaf"); }
  nodes_[id].version = ++clock_;
  invalidate_from(id);
  return nodes_[id].value;
}

Tensor const &Graph::value(NodeId id) const
{
  if (id >= evaluated_) { throw GraphError(id, "value requested before evaluation"); }
  return nodes_[id].value;
}

std::vector<NodeId> Graph::parameters() const
{
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_parameter) { out.push_back(i); }
  }
  return out;
}

void Graph::forward(NodeId upto)
{
  if (upto >= nodes_.size()) { throw GraphError(upto, "no such node"); }
  for (; evaluated_ <= upto; ++evaluated_) {
    Node &n = nodes_[evaluated_];
    if (n.kind == OpKind::Input) {
      compute(evaluated_);
      continue;
    }
    bool fresh = n.version != 0 && n.seen.size() == n.inputs.size();
    for (std::size_t k = 0; fresh && k < n.inputs.size(); ++k) {
      fresh = n.seen[k] == nodes_[n.inputs[k]].version;
    }
    if (fresh) { continue; }
    compute(evaluated_);
    n.seen.resize(n.inputs.size());
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      n.seen[k] = nodes_[n.inputs[k]].version;
    }
    n.version = ++clock_;
  }
}

void Graph::forward()
{
  if (!nodes_.empty()) { forward(nodes_.size() - 1); }
}

std::map<std::string, Tensor> Graph::evaluate(std::map<std::string, Tensor> const &inputs)
{
  for (auto const &[name, t] : inputs) {
    bind(name, t);
  }
  forward();
  std::map<std::string, Tensor> out;
  for (auto const &[name, id] : names_) {
    if (!is_leaf(id)) { out.emplace(name, nodes_[id].value); }
  }
  return out;
}

namespace {

// `describe` only runs on failure.
template <typename Describe>
void require(bool ok, NodeId id, OpKind kind, Describe const &describe)
{
  if (!ok) { throw ShapeError(id, std::string(op_name(kind)) + ": " + describe()); }
}

} // namespace

void Graph::compute(NodeId id)
{
  Node &n = nodes_[id];
  auto  in = [&](std::size_t k) -> Tensor const & { return nodes_[n.inputs[k]].value; };
  auto  shapes = [&]() {
    std::string s;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      s += (k ? " " : "") + to_string(in(k).shape());
    }
    return s;
  };

  switch (n.kind) {
  case OpKind::Input:
    if (n.value.empty()) { throw GraphError(id, "input '" + n.name + "' is unbound"); }
    break;
  case OpKind::MatMul: {
    Tensor const &a = in(0), &b = in(1);
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), id, n.kind, shapes);
    n.value = Tensor({a.dim(0), b.dim(1)});
    n.value.matrix().noalias() = a.matrix() * b.matrix();
    break;
  }
  case OpKind::Conv2d: {
    Tensor const &x = in(0), &w = in(1), &b = in(2);
    require(x.rank() == 4 && w.rank() == 4 && b.rank() == 1 && w.dim(1) == x.dim(1) && w.dim(2) == 3 &&
              w.dim(3) == 3 && b.dim(0) == w.dim(0),
            id, n.kind, shapes);
    Index const N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), HW = H * W;
    // The unfolded input only depends on x; weight-only updates reuse it.
    bool const x_unchanged = !n.seen.empty() && n.seen[0] == nodes_[n.inputs[0]].version &&
                             n.col.rows() == C * 9 && n.col.cols() == N * HW;
    if (!x_unchanged) {
      n.col = RowMatrix::Zero(C * 9, N * HW);
      RowMatrix &col = n.col;
      for (Index c = 0; c < C; ++c) {
        for (Index ky = 0; ky < 3; ++ky) {
          for (Index kx = 0; kx < 3; ++kx) {
            Index const row = c * 9 + ky * 3 + kx;
            for (Index s = 0; s < N; ++s) {
              double const *src = x.data().data() + (s * C + c) * HW;
              double       *dst = col.row(row).data() + s * HW;
              for (Index y = 0; y < H; ++y) {
                Index const sy = y + ky - 1;
                if (sy < 0 || sy >= H) { continue; }
                for (Index xx = 0; xx < W; ++xx) {
                  Index const sx = xx + kx - 1;
                  if (sx >= 0 && sx < W) { dst[y * W + xx] = src[sy * W + sx]; }
                }
              }
            }
          }
        }
      }
    }
    ConstRowMatrixMap wm(w.data().data(), O, C * 9);
    RowMatrix         prod = wm * n.col;
    n.value = Tensor({N, O, H, W});
    for (Index s = 0; s < N; ++s) {
      for (Index o = 0; o < O; ++o) {
        Eigen::Map<Eigen::VectorXd>(n.value.data().data() + (s * O + o) * HW, HW) =
          prod.row(o).segment(s * HW, HW).transpose().array() + b[o];
      }
    }
    break;
  }
  case OpKind::MaxPool2: {
    Tensor const &x = in(0);
    require(x.rank() == 4 && x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0, id, n.kind, shapes);
    Index const N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), Ho = H / 2, Wo = W / 2;
    n.value = Tensor({N, C, Ho, Wo});
    n.argmax.assign(static_cast<std::size_t>(n.value.size()), 0);
    Index k = 0;
    for (Index plane = 0; plane < N * C; ++plane) {
      Index const base = plane * H * W;
      for (Index y = 0; y < Ho; ++y) {
        for (Index xx = 0; xx < Wo; ++xx, ++k) {
          Index best = base + 2 * y * W + 2 * xx;
          for (Index dy = 0; dy < 2; ++dy) {
            for (Index dx = 0; dx < 2; ++dx) {
              Index const j = base + (2 * y + dy) * W + 2 * xx + dx;
              if (x[j] > x[best]) { best = j; }
            }
          }
          n.value[k] = x[best];
          n.argmax[static_cast<std::size_t>(k)] = best;
        }
      }
    }
    break;
  }
  case OpKind::Add: {
    Tensor const &a = in(0), &b = in(1);
    if (a.shape() == b.shape()) {
      n.value = Tensor(a.shape(), a.data() + b.data());
    } else {
      require(b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape().back(), id, n.kind, shapes);
      n.value = a;
      n.value.matrix().rowwise() += b.data().transpose();
    }
    break;
  }
  case OpKind::Mul: {
    Tensor const &a = in(0), &b = in(1);
    require(a.shape() == b.shape(), id, n.kind, shapes);
    n.value = Tensor(a.shape(), a.data().cwiseProduct(b.data()));
    break;
  }
  case OpKind::Relu: n.value = Tensor(in(0).shape(), in(0).data().cwiseMax(0.0)); break;
  case OpKind::Softmax: {
    Tensor const &a = in(0);
    require(a.rank() >= 1, id, n.kind, shapes);
    n.value = a;
    auto m = n.value.matrix();
    for (Index r = 0; r < m.rows(); ++r) {
      m.row(r).array() -= m.row(r).maxCoeff();
      m.row(r) = m.row(r).array().exp();
      m.row(r) /= m.row(r).sum();
    }
    break;
  }
  case OpKind::Log:
    n.value = Tensor(in(0).shape(), in(0).data().array().max(n.floor).log().matrix());
    break;
  case OpKind::Mean:
    require(in(0).size() > 0, id, n.kind, shapes);
    n.value = Tensor({1}, {in(0).data().mean()});
    break;
  case OpKind::Concat: {
    Tensor const &a = in(0), &b = in(1);
    require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0), id, n.kind, shapes);
    n.value = Tensor({a.dim(0), a.dim(1) + b.dim(1)});
    n.value.matrix() << a.matrix(), b.matrix();
    break;
  }
  case OpKind::Reshape: {
    Tensor const &a = in(0);
    Shape         s{a.rank() ? a.dim(0) : 1};
    s.insert(s.end(), n.trailing.begin(), n.trailing.end());
    require(a.rank() >= 1 && shape_size(s) == a.size(), id, n.kind, [&] { return shapes() + " -> " + to_string(s); });
    n.value = Tensor(std::move(s), a.data());
    break;
  }
  }

  if (!n.value.all_finite()) {
    throw NumericError(id, std::string(op_name(n.kind)) + ": non-finite value in output");
  }
}

Tensor const &Gradients::operator[](NodeId id) const
{
  if (!has(id)) { throw Error("no gradient for node " + std::to_string(id)); }
  return *grads_[id];
}

Tensor &Gradients::at(NodeId id)
{
  if (!has(id)) { throw Error("no gradient for node " + std::to_string(id)); }
  return *grads_[id];
}

namespace {

void accumulate(std::optional<Tensor> &slot, Tensor g)
{
  if (slot) {
    slot->data() += g.data();
  } else {
    slot = std::move(g);
  }
}

} // namespace

Gradients backward(Graph &graph, NodeId output, Tensor const &seed)
{
  auto &nodes = graph.nodes_;
  if (output >= nodes.size()) { throw GraphError(output, "no such node"); }
  if (!graph.evaluated(output)) { throw GraphError(output, "backward requested before forward"); }
  if (seed.shape() != nodes[output].value.shape()) {
    throw ShapeError(output, "seed shape " + to_string(seed.shape()) + " does not match output " +
                               to_string(nodes[output].value.shape()));
  }

  Gradients grads(nodes.size());
  grads.slot(output) = seed;

  for (NodeId id = output + 1; id-- > 0;) {
    auto &n = nodes[id];
    if (!grads.has(id) || n.kind == OpKind::Input) { continue; }
    Tensor const &dy = grads[id];
    auto          src = [&](std::size_t k) -> Tensor const & { return nodes[n.inputs[k]].value; };
    auto          wants = [&](std::size_t k) { return nodes[n.inputs[k]].requires_grad; };
    auto          send = [&](std::size_t k, Tensor g) { accumulate(grads.slot(n.inputs[k]), std::move(g)); };

    switch (n.kind) {
    case OpKind::MatMul: {
      if (wants(0)) {
        Tensor g(src(0).shape());
        g.matrix().noalias() = dy.matrix() * src(1).matrix().transpose();
        send(0, std::move(g));
      }
      if (wants(1)) {
        Tensor g(src(1).shape());
        g.matrix().noalias() = src(0).matrix().transpose() * dy.matrix();
        send(1, std::move(g));
      }
      break;
    }
    case OpKind::Conv2d: {
      Tensor const &x = src(0), &w = src(1);
      Index const   N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), HW = H * W;
      RowMatrix     dout(O, N * HW);
      for (Index s = 0; s < N; ++s) {
        for (Index o = 0; o < O; ++o) {
          dout.row(o).segment(s * HW, HW) =
            Eigen::Map<Eigen::VectorXd const>(dy.data().data() + (s * O + o) * HW, HW).transpose();
        }
      }
      if (wants(1)) {
        Tensor g(w.shape());
        RowMatrixMap(g.data().data(), O, C * 9).noalias() = dout * n.col.transpose();
        send(1, std::move(g));
      }
      if (wants(2)) { send(2, Tensor({O}, dout.rowwise().sum())); }
      if (wants(0)) {
        RowMatrix dcol = ConstRowMatrixMap(w.data().data(), O, C * 9).transpose() * dout;
        Tensor    g(x.shape());
        for (Index c = 0; c < C; ++c) {
          for (Index ky = 0; ky < 3; ++ky) {
            for (Index kx = 0; kx < 3; ++kx) {
              Index const row = c * 9 + ky * 3 + kx;
              for (Index s = 0; s < N; ++s) {
                double       *dst = g.data().data() + (s * C + c) * HW;
                double const *srcp = dcol.row(row).data() + s * HW;
                for (Index y = 0; y < H; ++y) {
                  Index const sy = y + ky - 1;
                  if (sy < 0 || sy >= H) { continue; }
                  for (Index xx = 0; xx < W; ++xx) {
                    Index const sx = xx + kx - 1;
                    if (sx >= 0 && sx < W) { dst[sy * W + sx] += srcp[y * W + xx]; }
                  }
                }
              }
            }
          }
        }
        send(0, std::move(g));
      }
      break;
    }
    case OpKind::MaxPool2: {
      if (wants(0)) {
        Tensor g(src(0).shape());
        for (std::size_t k = 0; k < n.argmax.size(); ++k) {
          g[n.argmax[k]] += dy[static_cast<Index>(k)];
        }
        send(0, std::move(g));
      }
      break;
    }
    case OpKind::Add: {
      if (wants(0)) { send(0, Tensor(src(0).shape(), dy.data())); }
      if (wants(1)) {
        if (src(1).shape() == dy.shape()) {
          send(1, dy);
        } else {
          send(1, Tensor(src(1).shape(), dy.matrix().colwise().sum().transpose()));
        }
      }
      break;
    }
    case OpKind::Mul: {
      if (wants(0)) { send(0, Tensor(dy.shape(), dy.data().cwiseProduct(src(1).data()))); }
      if (wants(1)) { send(1, Tensor(dy.shape(), dy.data().cwiseProduct(src(0).data()))); }
      break;
    }
    case OpKind::Relu: {
      if (wants(0)) {
        Tensor g = dy;
        g.data() = (n.value.data().array() > 0.0).select(dy.data(), 0.0);
        send(0, std::move(g));
      }
      break;
    }
    case OpKind::Softmax: {
      if (wants(0)) {
        Tensor g(dy.shape());
        auto   y = n.value.matrix();
        auto   d = dy.matrix();
        auto   gm = g.matrix();
        for (Index r = 0; r < y.rows(); ++r) {
          double const dot = d.row(r).dot(y.row(r));
          gm.row(r) = y.row(r).array() * (d.row(r).array() - dot);
        }
        send(0, std::move(g));
      }
      break;
    }
    case OpKind::Log: {
      if (wants(0)) {
        auto const x = src(0).data().array();
        Tensor     g(dy.shape());
        g.data() = (x > n.floor).select(dy.data().array() / x, 0.0).matrix();
        send(0, std::move(g));
      }
      break;
    }
    case OpKind::Mean: {
      if (wants(0)) { send(0, Tensor::filled(src(0).shape(), dy[0] / static_cast<double>(src(0).size()))); }
      break;
    }
    case OpKind::Concat: {
      Index const ca = src(0).dim(1), cb = src(1).dim(1);
      if (wants(0)) { send(0, from_matrix(dy.matrix().leftCols(ca))); }
      if (wants(1)) { send(1, from_matrix(dy.matrix().rightCols(cb))); }
      break;
    }
    case OpKind::Reshape: {
      if (wants(0)) { send(0, Tensor(src(0).shape(), dy.data())); }
      break;
    }
    default: throw GraphError(id, std::string("backward not supported for ") + op_name(n.kind));
    }
  }
  return grads;
}

Gradients numeric_gradients(Graph &graph, NodeId output, double eps)
{
  if (!(eps > 0.0)) { throw Error("gradient check: eps must be positive"); }
  graph.forward(output);
  if (graph.value(output).size() != 1) { throw ShapeError(output, "gradient check needs a scalar output"); }

  Gradients grads(graph.size());
  for (NodeId p : graph.parameters()) {
    if (p > output) { continue; }
    Tensor g(graph.mutable_leaf(p).shape());
    for (Index k = 0; k < g.size(); ++k) {
      double const orig = graph.mutable_leaf(p)[k];
      graph.mutable_leaf(p)[k] = orig + eps;
      graph.forward(output);
      double const up = graph.value(output)[0];
      graph.mutable_leaf(p)[k] = orig - eps;
      graph.forward(output);
      double const down = graph.value(output)[0];
      graph.mutable_leaf(p)[k] = orig;
      g[k] = (up - down) / (2.0 * eps);
    }
    grads.slot(p) = std::move(g);
  }
  graph.forward(output);
  return grads;
}

GradientCheck compare_gradients(Graph const &graph, Gradients const &analytic, Gradients const &numeric)
{
  GradientCheck out;
  for (NodeId p : graph.parameters()) {
    if (!numeric.has(p)) { continue; }
    Tensor const &num = numeric[p];
    if (!analytic.has(p)) { throw GraphError(p, "parameter has no analytic gradient"); }
    Tensor const &ana = analytic[p];
    if (ana.shape() != num.shape()) { throw ShapeError(p, "gradient shapes disagree"); }
    for (Index k = 0; k < num.size(); ++k) {
      double const err = std::abs(ana[k] - num[k]) / std::max(1.0, std::abs(num[k]));
      if (err > out.max_relative_error || out.checked == 0) {
        out.max_relative_error = std::max(out.max_relative_error, err);
        out.worst_node = p;
        out.worst_index = k;
      }
      ++out.checked;
    }
  }
  return out;
}

GradientCheck gradient_check(Graph &graph, NodeId output, double eps)
{
  if (!(eps > 0.0)) { throw Error("gradient check: eps must be positive"); }
  graph.forward(output);
  if (graph.value(output).size() != 1) { throw ShapeError(output, "gradient check needs a scalar output"); }
  Gradients const analytic = backward(graph, output, Tensor({1}, {1.0}));
  Gradients const numeric = numeric_gradients(graph, output, eps);
  return compare_gradients(graph, analytic, numeric);
}

GradientCheck gradient_check(Graph &graph, std::map<std::string, Tensor> const &inputs, NodeId output, double eps)
{
  for (auto const &[name, t] : inputs) {
    graph.bind(name, t);
  }
  return gradient_check(graph, output, eps);
}

} // namespace plood::ad
