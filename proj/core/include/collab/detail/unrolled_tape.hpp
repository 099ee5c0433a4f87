#pragma once

#include <vector>

#include "collab/graph_learning.hpp"

namespace collab::detail {

/// Intermediate values of one unrolled_forward call, kept for reverse mode.
struct UnrolledTape {
  std::vector<Vector> iterates;      // w^0 .. w^K
  std::vector<Vector> preactivation; // v^1 .. v^K (after projection, before ReLU)
  double norm = 0.0;                 // ‖w^K‖₁
  bool degenerate = false;
};

UnrolledOutput unrolled_forward_taped(const DistanceMatrix& distances, const UnrolledModel& model,
                                      UnrolledTape* tape);

/// Gradients of a scalar objective with respect to P and D, given its
/// gradient with respect to the normalized output weights.
struct UnrolledGradients {
  Vector importance;  // length M
  Matrix distances;   // M×N
};

UnrolledGradients unrolled_backward(const DistanceMatrix& distances, const UnrolledModel& model,
                                    const UnrolledTape& tape, const Vector& grad_weights);

}  // namespace collab::detail
