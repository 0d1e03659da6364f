#pragma once

#include <stdexcept>
#include <string>

namespace wfsim {

// Error categories; the CLI maps these onto distinct exit codes.
enum class Errc {
  invalid_config,
  shape_mismatch,
  missing_buffer,
  unknown_opcode,
  arity_mismatch,
  duplicate_kernel,
  bad_bytecode,
  bad_slice,
  alias_violation,
  bad_argument,
  non_finite,
  unstable,
  breakdown,
  non_convergence,
  oracle_bound,
  io_error,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace wfsim
