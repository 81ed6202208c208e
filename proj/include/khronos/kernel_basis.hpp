#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace khronos {

/// Uniform knot vector on [0,1] extended by two knots past each end.
///
/// n_elements segments of width h = 1/n_elements induce n_elements+5 knots
/// at (i-2)*h for i = 0..n_elements+4, carrying n_basis = n_elements+2
/// quadratic B-splines that form a partition of unity on [0,1].
/// Basis i is supported on [knots[i], knots[i+3]].
struct KnotGrid {
    int n_elements = 0;
    double h = 0.0;
    int n_basis = 0;
    std::vector<double> knots;
};

/// Build the extended uniform knot grid. Rejects n_elements < 1.
KnotGrid build_knots(int n_elements);

/// The three basis functions overlapping a point, plus their values.
/// Indices first, first+1, first+2 are the only (possibly) nonzero bases.
struct BasisTriple {
    int first = 0;
    std::array<double, 3> value{};
};

/// Values of the three active quadratic B-splines at x in [0,1].
/// Closed-form per-element evaluation; equals Cox-de Boor at degree 2.
BasisTriple eval_basis_local(const KnotGrid& grid, double x);

/// First derivatives of the three active bases at x.
BasisTriple eval_basis_deriv_local(const KnotGrid& grid, double x);

/// Dense vector of all n_basis values B_i(x). Sum is 1 to machine precision.
std::vector<double> eval_basis(const KnotGrid& grid, double x);

/// Dense vector of all n_basis derivatives dB_i/dx. Sum is 0.
std::vector<double> eval_basis_deriv(const KnotGrid& grid, double x);

/// Running count of local basis evaluations (values + derivatives).
/// Lets tests assert that grid evaluation is O(sum of axis lengths), not
/// O(number of grid nodes).
std::uint64_t basis_eval_count() noexcept;
void reset_basis_eval_count() noexcept;

}  // namespace khronos
