#pragma once

#include <vector>

#include "gkg/tape.hpp"

// Differentiable primitives. Every op reads operand values from the tape,
// appends its output, and (when recording) a vector-Jacobian closure.
namespace gkg::ops {

// out[n,j] = sum_i x[n,i] * w[i,j] + b[j]
Var affine(Tape& tape, Var x, Var w, Var b);

// Elementwise x + y. y may also be a rank-1 row broadcast over x's rows.
Var add(Tape& tape, Var x, Var y);
Var mul(Tape& tape, Var x, Var y);
Var scale(Tape& tape, Var x, double factor);
Var sum(Tape& tape, Var x);

Var sigmoid(Tape& tape, Var x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Var gelu(Tape& tape, Var x);

Var concat_last_dim(Tape& tape, const std::vector<Var>& xs);
// [N x C] -> [C]
Var mean_pool_rows(Tape& tape, Var x);
// Elementwise maximum over same-shape operands; ties go to the lowest
// operand index and only that operand receives gradient.
Var max_over_set(Tape& tape, const std::vector<Var>& xs);
// Each row divided by max(||row||_2, eps).
Var row_normalize(Tape& tape, Var x, double eps);
Var reshape(Tape& tape, Var x, Shape shape);
// out[r] = sum_j x[r,j] * w[r,j] + b[r]: one independent linear map per row.
Var rowwise_affine(Tape& tape, Var x, Var w, Var b);

// Plain-tensor versions used outside a tape.
Tensor sigmoid(const Tensor& x);
double sigmoid(double x);
double gelu(double x);
double gelu_grad(double x);

}  // namespace gkg::ops
