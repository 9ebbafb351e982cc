#pragma once

// Finite-difference verification of the analytic gradients.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdp/autodiff.hpp"

namespace sdp::gradcheck {

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  std::size_t entries = 0;
  bool passed = false;
};

struct CheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
};

double relative_error(double analytic, double numeric, double floor);

// `loss` must build a scalar from `inputs` on the given tape and be a pure
// function of the input values (dropout masks included).
CheckResult check(const std::string& name, const std::function<ad::Tensor(ad::Tape&)>& loss,
                  const std::vector<ad::Tensor>& inputs, const CheckOptions& options = {});

// Every autodiff op, every layer, and the full parser loss on a 3-token
// sentence (factorized with all input channels, and unfactorized).
std::vector<CheckResult> run_suite(std::uint64_t seed, const CheckOptions& options = {});

void write_results(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace sdp::gradcheck
