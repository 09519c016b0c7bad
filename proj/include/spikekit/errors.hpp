#pragma once

#include <stdexcept>
#include <string>

namespace spikekit {

/// Shapes that do not line up (matmul inner dims, elementwise operands, reshapes).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (non-scalar loss, invalid spec, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or Inf appeared in the output of a public operation.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integer activations that cannot be unfolded into a valid spike train.
class FoldingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spike-driven inference diverged from the integer-training path.
class EquivalenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed IDX / SPKF / JSON input. Carries the byte offset when known.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, long long offset = -1)
      : std::runtime_error(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")"
                                       : what),
        offset_(offset) {}
  long long offset() const noexcept { return offset_; }

 private:
  long long offset_;
};

}  // namespace spikekit
