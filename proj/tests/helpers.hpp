#pragma once

// Shared helpers for the test suite: an independent naive polynomial
// oracle (kept free of the library's normalization/cancellation path) and
// deterministic random generators.

#include <complex>
#include <random>
#include <vector>

#include "dvpp/transfer_function.hpp"

namespace testutil {

// --- naive polynomial oracle (descending coefficients) ---

inline std::vector<double> oracle_add(std::vector<double> a, std::vector<double> b) {
    if (a.size() < b.size()) std::swap(a, b);
    for (std::size_t i = 0; i < b.size(); ++i) a[a.size() - b.size() + i] += b[i];
    return a;
}

inline std::vector<double> oracle_mul(const std::vector<double>& a,
                                      const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

inline std::complex<double> oracle_eval(const std::vector<double>& p,
                                        std::complex<double> s) {
    std::complex<double> acc = 0.0;
    for (double c : p) acc = acc * s + c;
    return acc;
}

// --- comparisons ---

inline bool coeffs_close(const dvpp::Poly& got, const dvpp::Poly& want, double tol) {
    if (got.size() != want.size()) return false;
    double scale = 1.0;
    for (double c : want) scale = std::max(scale, std::abs(c));
    for (std::size_t i = 0; i < got.size(); ++i)
        if (std::abs(got[i] - want[i]) > tol * scale) return false;
    return true;
}

inline bool tf_close(const dvpp::TransferFunction& got, const dvpp::TransferFunction& want,
                     double tol) {
    return coeffs_close(got.num(), want.num(), tol) && coeffs_close(got.den(), want.den(), tol);
}

/// Rational-function equality by cross multiplication, robust to different
/// (uncancelled) representations of the same function.
inline bool tf_equal_value(const dvpp::TransferFunction& a, const dvpp::TransferFunction& b,
                           double tol) {
    auto lhs = dvpp::poly::mul(a.num(), b.den());
    auto rhs = dvpp::poly::mul(b.num(), a.den());
    return coeffs_close(lhs, rhs, tol);
}

// --- deterministic random inputs ---

inline dvpp::Poly random_poly(std::mt19937& rng, int max_degree, double lo = -10.0,
                              double hi = 10.0) {
    std::uniform_int_distribution<int> deg(0, max_degree);
    std::uniform_real_distribution<double> coeff(lo, hi);
    const int n = deg(rng);
    dvpp::Poly p(static_cast<std::size_t>(n) + 1);
    for (double& c : p) c = coeff(rng);
    if (std::abs(p[0]) < 0.5) p[0] = p[0] < 0 ? p[0] - 0.5 : p[0] + 0.5;
    return p;
}

inline dvpp::TransferFunction random_tf(std::mt19937& rng, int max_degree = 4) {
    return dvpp::TransferFunction(random_poly(rng, max_degree), random_poly(rng, max_degree));
}

/// Random proper stable transfer function built from negative real poles,
/// for tests that need realizable dynamics.
inline dvpp::TransferFunction random_stable_tf(std::mt19937& rng, int max_order = 2,
                                               bool strictly_proper = false) {
    std::uniform_int_distribution<int> ord(1, max_order);
    std::uniform_real_distribution<double> pole(0.2, 20.0);
    std::uniform_real_distribution<double> gain_mag(0.2, 5.0);
    std::bernoulli_distribution sign(0.5);
    const int n = ord(rng);
    dvpp::Poly den{1.0};
    for (int i = 0; i < n; ++i) den = dvpp::poly::mul(den, {1.0, pole(rng)});
    std::uniform_int_distribution<int> numdeg(0, strictly_proper ? n - 1 : n);
    dvpp::Poly num{(sign(rng) ? 1.0 : -1.0) * gain_mag(rng)};
    const int m = numdeg(rng);
    for (int i = 0; i < m; ++i) num = dvpp::poly::mul(num, {1.0, pole(rng)});
    return dvpp::TransferFunction(num, den);
}

}  // namespace testutil
