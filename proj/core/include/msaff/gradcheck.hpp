#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msaff/tensor.hpp"

namespace msaff {

struct GradcheckOptions {
  double eps = 1e-4;   // central-difference step
  double atol = 1e-3;
  double rtol = 1e-2;  // pass iff |a-f| <= max(atol, rtol*max(|a|,|f|))
  int trials = 5;      // random trials per light component
  uint64_t seed = 101;
  int model_coords_per_leaf = 2;  // coordinate subsample for the end-to-end row
  std::string corrupt_component;  // test hook: scales that row's analytic grads
};

struct GradcheckRow {
  std::string component;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  bool pass = true;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Central finite differences vs reverse-mode gradients for a scalar function
// of the given leaves. max_coords_per_leaf 0 checks every coordinate.
GradcheckRow check_scalar_fn(const std::string& component, const ScalarFn& fn,
                             const std::vector<Tensor>& leaves, const GradcheckOptions& opt,
                             int max_coords_per_leaf = 0);

// Every differentiable numerics op plus AFFM fusion, the three MSSTFE
// branches, both encoders, the triplet loss, and the end-to-end micro model.
std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckOptions& opt);

// Differentiable numerics ops the suite must cover, by row name.
const std::vector<std::string>& differentiable_op_manifest();
bool covers_manifest(const std::vector<GradcheckRow>& rows);

}  // namespace msaff
