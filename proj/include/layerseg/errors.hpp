#pragma once

#include <stdexcept>
#include <string>

namespace layerseg {

// Error taxonomy shared by every module. The CLI maps these onto exit codes:
// InvalidArgument -> 2, IoError -> 3, NumericError -> 4.

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A query point does not lie on any scene surface.
class OutOfDomain : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The scanner produced no points.
class EmptyScan : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric was requested for a layer without any defined class.
class UndefinedLayer : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace layerseg
