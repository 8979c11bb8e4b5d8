// SPDX-License-Identifier: Apache-2.0
#include "plood/tensor.hpp"

#include "plood/error.hpp"

#include <cstring>
#include <numeric>

namespace plood {

Index shape_size(Shape const &shape)
{
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string to_string(Shape const &shape)
{
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) { s += ","; }
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape)
  : shape_(std::move(shape))
  , data_(Eigen::VectorXd::Zero(shape_size(shape_)))
{
}

Tensor::Tensor(Shape shape, Eigen::VectorXd data)
  : shape_(std::move(shape))
  , data_(std::move(data))
{
  if (shape_size(shape_) != data_.size()) {
    throw Error("tensor: shape " + to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                " values");
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
  : Tensor(std::move(shape), Eigen::Map<Eigen::VectorXd const>(values.begin(), static_cast<Index>(values.size())))
{
}

Tensor Tensor::filled(Shape shape, double value)
{
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

RowMatrixMap Tensor::matrix()
{
  Index const cols = shape_.empty() ? 1 : shape_.back();
  Index const rows = cols == 0 ? 0 : size() / cols;
  return RowMatrixMap(data_.data(), rows, cols);
}

ConstRowMatrixMap Tensor::matrix() const
{
  Index const cols = shape_.empty() ? 1 : shape_.back();
  Index const rows = cols == 0 ? 0 : size() / cols;
  return ConstRowMatrixMap(data_.data(), rows, cols);
}

bool operator==(Tensor const &a, Tensor const &b)
{
  return a.shape_ == b.shape_ &&
         std::memcmp(a.data_.data(), b.data_.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

} // namespace plood
