#pragma once

#include <vector>

#include "csepose/diff/tape.hpp"

namespace csepose::diff {

// Registered op set. Binary elementwise ops broadcast numpy-style (trailing
// alignment); reductions keep the reduced axis with size 1.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var matmul(Var a, Var b);              // [m,k] x [k,n] -> [m,n]
Var exp(Var a);
Var log(Var a);
Var power(Var a, double p);            // elementwise x^p
Var sum(Var a);                        // all elements -> scalar
Var sum(Var a, int axis);              // keepdims
Var mean(Var a);
Var mean(Var a, int axis);
Var max_along(Var a, int axis);        // keepdims; ties -> lowest index
Var min_along(Var a, int axis);
Var softmax(Var a, int axis);
Var cosine_similarity(Var a, Var b);   // [p,d] x [n,d] -> [p,n] cosine matrix
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope = 0.1);
Var concat(const std::vector<Var>& parts, int axis);
Var gather_rows(Var a, std::vector<std::int64_t> indices);  // along axis 0
Var reshape(Var a, Shape target);
Var broadcast_to(Var a, Shape target);
Var clamp(Var a, double lo, double hi);
Var smooth_l1(Var a);                  // elementwise huber, delta = 1
Var l2_norm(Var a);                    // scalar sqrt(sum x^2)
Var transpose(Var a);                  // 2-D
Var affine(Var a, double k, double b); // k*x + b

// Conveniences built on the ops above.
Var scale(Var a, double k);
Var neg(Var a);
Var tanh_bounded(Var a, double bound);  // bound * tanh(x), via sigmoid
Var dot_rows(Var a, Var b);             // [n,d],[n,d] -> [n,1] row dot products
Var cross_rows(Var a, Var b);           // [n,3],[n,3] -> [n,3]
Var slice_rows(Var a, std::int64_t lo, std::int64_t hi);
Var sqnorm_rows(Var a);                 // [n,d] -> [n,1] squared row norms

Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op);

}  // namespace csepose::diff
