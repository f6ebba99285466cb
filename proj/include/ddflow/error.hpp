#ifndef DDFLOW_ERROR_HPP_
#define DDFLOW_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace ddflow {

/// Raised when a value that must be finite (loss, gradient, coordinate) is not.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddflow

#endif  // DDFLOW_ERROR_HPP_
