// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plood {

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Raised by graph evaluation; carries the offending node.
class GraphError : public Error
{
public:
  GraphError(std::size_t node, std::string const &what)
    : Error("node " + std::to_string(node) + ": " + what)
    , node_(node)
  {
  }
  std::size_t node() const { return node_; }

private:
  std::size_t node_;
};

class ShapeError : public GraphError
{
public:
  using GraphError::GraphError;
};

class NumericError : public GraphError
{
public:
  using GraphError::GraphError;
};

class FormatError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

// Error tagged with the pipeline stage it escaped from.
class StageError : public Error
{
public:
  StageError(std::string stage, std::string const &what)
    : Error("[" + stage + "] " + what)
    , stage_(std::move(stage))
  {
  }
  std::string const &stage() const { return stage_; }

private:
  std::string stage_;
};

} // namespace plood
