#pragma once

#include <stdexcept>
#include <string>

namespace hajek {

// Machine-checkable failure categories. `validation` covers malformed or
// inconsistent input; `numeric` covers computations that cannot proceed on
// otherwise well-formed data (singular designs, infeasible policies, ...).
enum class errc {
  empty_input,
  duplicate_unit,
  degenerate_stratum,
  nonfinite_value,
  zero_total_weight,
  empty_arm,
  weight_mismatch,
  unknown_unit,
  missing_assignment,
  not_paired,
  arm_too_small,
  policy_infeasible,
  singular_design,
  leverage_one,
  zero_variance,
  no_acceptance_point,
  domain_error,
  bad_df,
  too_many_assignments,
  config_error,
  parse_error,
  empty_replicates,
};

enum class err_kind { validation, numeric };

class error : public std::runtime_error {
 public:
  error(errc code, err_kind kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(kind) {}
  errc code() const noexcept { return code_; }
  err_kind kind() const noexcept { return kind_; }

 private:
  errc code_;
  err_kind kind_;
};

[[noreturn]] inline void fail_validation(errc code, const std::string& what) {
  throw error(code, err_kind::validation, what);
}

[[noreturn]] inline void fail_numeric(errc code, const std::string& what) {
  throw error(code, err_kind::numeric, what);
}

}  // namespace hajek
