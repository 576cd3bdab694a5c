#pragma once

#include <stdexcept>
#include <string>

namespace qramsim {

//! Operand sizes disagree (bit-string length, matrix dimension, qubit count).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

//! A request exceeds a configured size cap (qubits, table bits, integer width).
struct CapError : std::length_error {
  using std::length_error::length_error;
};

//! Caller-side precondition failed (bad parameter range, spectrum guard).
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

//! A copy budget or round limit was exhausted.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//! A numerical invariant (trace, hermiticity, positivity, exactness) broke.
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qramsim
