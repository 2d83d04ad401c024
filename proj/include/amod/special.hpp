#pragma once

namespace amod {

// Logarithmic derivative of the gamma function for x > 0, accurate to ~1e-12.
// Used by the backward pass of lgamma nodes.
double digamma(double x);

}  // namespace amod
