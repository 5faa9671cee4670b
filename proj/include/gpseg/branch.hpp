#pragma once

#include <string>
#include <vector>

#include "gpseg/model.hpp"

namespace gpseg {

/// Per-β record along a continuation run.
struct BranchDiagnostics {
  double beta = 0.0;
  double energy = 0.0;
  double residual = 0.0;
  int morse_index = -1;  // -1 when not computed
  int nullity = -1;
  double morse_tol = 0.0;
  double segregation = 0.0;
  double h1_u = 0.0;
  double h1_v = 0.0;
  int nodal_components = -1;
  double nodal_delta = 0.0;
  int newton_iterations = 0;
};

struct Branch {
  std::vector<double> betas;
  std::vector<StatePair> states;
  std::vector<BranchDiagnostics> diagnostics;
  /// False when continuation stopped early; `failure` then says why.
  bool complete = true;
  std::string failure;
  /// Index changes between neighbours whose nullity was 0 at both ends.
  std::vector<std::string> warnings;

  std::size_t size() const { return betas.size(); }
};

}  // namespace gpseg
