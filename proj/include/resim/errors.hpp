#pragma once

#include <stdexcept>
#include <string>

namespace resim {

/// Bad user input: unreadable files, malformed configs, missing fields.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A lookup by key (frame index, class, preset name) found nothing.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimization or numerics broke down (non-finite loss, etc.).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace resim
