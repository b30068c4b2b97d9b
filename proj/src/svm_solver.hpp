#pragma once

#include <span>

#include "touchauth/classifiers.hpp"

namespace touchauth::detail {

/// gamma = 1 / (n_features * variance of all entries); 1 when the
/// variance is zero.
double svm_gamma_scale(const Matrix& x);

/// Soft-margin RBF machine solved by SMO with second-order working-set
/// selection, stopping when the maximal KKT violation drops below `tol`.
/// The Platt link is then fitted on the training margins.
SvmState train_svm(const Matrix& x, std::span<const int> y, double C, double tol);

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma);

/// Logistic link parameters (A, B) with P = 1 / (1 + exp(A f + B)),
/// fitted by Newton's method with backtracking on smoothed targets.
std::pair<double, double> fit_platt(std::span<const double> decision, std::span<const int> y);

double platt_probability(double decision, double a, double b);

} // namespace touchauth::detail
