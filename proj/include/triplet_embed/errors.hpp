#pragma once

#include <stdexcept>
#include <string>

namespace triplet_embed {

// Malformed or inconsistent input data (files, shapes, indices).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, singular systems, divergence.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace triplet_embed
