#pragma once

// Rational transfer-function algebra over the Laplace variable s.
// Coefficients are dense real lists in descending powers; denominators are
// kept monic. Degrees in this domain stay small (<= ~10), so exact
// polynomial arithmetic plus root-matched cancellation is both simple and
// accurate.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

namespace dvpp {

using Complex = std::complex<double>;

/// Polynomial coefficients in descending powers of s. The zero polynomial
/// is represented as {0}.
using Poly = std::vector<double>;

/// Poles with real part >= -kStabilityEps are reported as not stable, so
/// pure integrators surface explicitly instead of passing as stable.
inline constexpr double kStabilityEps = 1e-9;

/// Absolute root-matching tolerance for pole/zero cancellation after
/// arithmetic (applied on monic-normalized operands).
inline constexpr double kCancelEps = 1e-9;

namespace poly {

inline Poly trimmed(Poly p) {
    std::size_t lead = 0;
    while (lead + 1 < p.size() && p[lead] == 0.0) ++lead;
    p.erase(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(lead));
    if (p.empty()) p.push_back(0.0);
    return p;
}

inline bool is_zero(const Poly& p) {
    return std::all_of(p.begin(), p.end(), [](double c) { return c == 0.0; });
}

inline int degree(const Poly& p) {
    return static_cast<int>(trimmed(p).size()) - 1;
}

inline Poly add(const Poly& a, const Poly& b) {
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        out[out.size() - a.size() + i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i)
        out[out.size() - b.size() + i] += b[i];
    return trimmed(std::move(out));
}

inline Poly scaled(Poly p, double k) {
    for (double& c : p) c *= k;
    return p;
}

inline Poly sub(const Poly& a, const Poly& b) { return add(a, scaled(b, -1.0)); }

inline Poly mul(const Poly& a, const Poly& b) {
    if (is_zero(a) || is_zero(b)) return {0.0};
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            out[i + j] += a[i] * b[j];
    return trimmed(std::move(out));
}

inline Complex eval(const Poly& p, Complex s) {
    Complex acc = 0.0;
    for (double c : p) acc = acc * s + c;
    return acc;
}

/// Roots via companion-matrix eigenvalues. Empty for constants.
inline std::vector<Complex> roots(const Poly& p_in) {
    Poly p = trimmed(p_in);
    if (p.size() < 2 || is_zero(p)) return {};
    const int n = static_cast<int>(p.size()) - 1;
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) companion(i, n - 1) = -p[p.size() - 1 - i] / p[0];
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, /*computeEigenvectors=*/false);
    std::vector<Complex> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = solver.eigenvalues()[i];
    return out;
}

/// Long division by (s - r) for real r, dropping the remainder.
inline Poly deflated_real(const Poly& p, double r) {
    if (p.size() < 2) return p;
    Poly q(p.size() - 1, 0.0);
    double carry = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        carry = p[i] + carry * r;
        q[i] = carry;
    }
    return trimmed(std::move(q));
}

/// Long division by the real quadratic s^2 - 2*Re(r)*s + |r|^2, dropping the
/// remainder. Used to deflate a conjugate root pair while keeping real
/// coefficients.
inline Poly deflated_pair(const Poly& p, Complex r) {
    if (p.size() < 3) return p;
    const double b = -2.0 * r.real();
    const double c = std::norm(r);
    Poly q(p.size() - 2, 0.0);
    double w0 = 0.0, w1 = 0.0;  // running quotient terms q[i-1], q[i-2]
    for (std::size_t i = 0; i < q.size(); ++i) {
        double qi = p[i] - b * w0 - c * w1;
        q[i] = qi;
        w1 = w0;
        w0 = qi;
    }
    return trimmed(std::move(q));
}

}  // namespace poly

/// Report produced by analyze(): propriety, pole locations, stability
/// against kStabilityEps, and DC gain (nullopt when there is a pole at the
/// origin).
struct StabilityReport {
    bool is_proper = false;
    bool is_strictly_proper = false;
    int relative_degree = 0;
    bool is_stable = false;
    bool is_marginally_stable = false;  // simple imaginary-axis poles only
    std::optional<double> dc_gain;
    std::vector<Complex> poles;
};

/// Real-coefficient rational function of s. Immutable value type: the
/// denominator is monic, both polynomials are trimmed, and construction
/// rejects non-finite coefficients and zero denominators.
class TransferFunction {
public:
    /// Zero transfer function 0/1.
    TransferFunction() : num_{0.0}, den_{1.0} {}

    TransferFunction(Poly num, Poly den) {
        num_ = poly::trimmed(std::move(num));
        den_ = poly::trimmed(std::move(den));
        if (poly::is_zero(den_))
            throw std::invalid_argument("transfer function denominator is the zero polynomial");
        auto finite = [](const Poly& p) {
            return std::all_of(p.begin(), p.end(), [](double c) { return std::isfinite(c); });
        };
        if (!finite(num_) || !finite(den_))
            throw std::invalid_argument("transfer function coefficients must be finite");
        if (poly::is_zero(num_)) {
            num_ = {0.0};
            den_ = {1.0};
            return;
        }
        const double lead = den_[0];
        for (double& c : num_) c /= lead;
        for (double& c : den_) c /= lead;
        den_[0] = 1.0;  // exactly monic
    }

    static TransferFunction gain(double k) { return TransferFunction({k}, {1.0}); }

    const Poly& num() const { return num_; }
    const Poly& den() const { return den_; }

    bool is_zero() const { return poly::is_zero(num_); }

    int relative_degree() const { return poly::degree(den_) - poly::degree(num_); }
    bool is_proper() const { return relative_degree() >= 0; }

    /// Evaluate at a complex frequency point.
    Complex operator()(Complex s) const { return poly::eval(num_, s) / poly::eval(den_, s); }

    friend TransferFunction operator-(const TransferFunction& a) {
        return TransferFunction(poly::scaled(a.num_, -1.0), a.den_);
    }
    friend TransferFunction operator+(const TransferFunction& a, const TransferFunction& b) {
        return make_cancelled(
            poly::add(poly::mul(a.num_, b.den_), poly::mul(b.num_, a.den_)),
            poly::mul(a.den_, b.den_));
    }
    friend TransferFunction operator-(const TransferFunction& a, const TransferFunction& b) {
        return a + (-b);
    }
    friend TransferFunction operator*(const TransferFunction& a, const TransferFunction& b) {
        return make_cancelled(poly::mul(a.num_, b.num_), poly::mul(a.den_, b.den_));
    }
    friend TransferFunction operator/(const TransferFunction& a, const TransferFunction& b) {
        if (b.is_zero()) throw std::domain_error("division by the zero transfer function");
        return make_cancelled(poly::mul(a.num_, b.den_), poly::mul(a.den_, b.num_));
    }

    friend TransferFunction operator*(double k, const TransferFunction& a) {
        return TransferFunction(poly::scaled(a.num_, k), a.den_);
    }

private:
    /// Cross-multiplied agreement of two num/den representations at fixed
    /// probe points; used to guarantee cancellation never changes the
    /// function value. Deflating a complete root cluster is accurate to
    /// roughly machine precision, so the gate sits well below any honest
    /// coefficient tolerance.
    static bool same_function(const Poly& n1, const Poly& d1, const Poly& n2, const Poly& d2) {
        static const Complex probes[] = {{0.37, 0.0},   {0.0, 1.31},  {-0.567, 0.89},
                                         {2.13, -0.41}, {0.0, 17.3}};
        for (Complex s : probes) {
            Complex lhs = poly::eval(n1, s) * poly::eval(d2, s);
            Complex rhs = poly::eval(n2, s) * poly::eval(d1, s);
            double scale = std::abs(lhs) + std::abs(rhs);
            if (std::abs(lhs - rhs) > 1e-11 * scale) return false;
        }
        return true;
    }

    /// Deflate a polynomial by a conjugate-closed multiset of its computed
    /// roots: real roots as linear factors, complex ones pair-wise as real
    /// quadratics. Roots whose conjugate partner is missing are skipped.
    static Poly deflate_all(Poly p, std::vector<Complex> roots) {
        std::vector<bool> used(roots.size(), false);
        for (std::size_t i = 0; i < roots.size(); ++i) {
            if (used[i]) continue;
            const Complex r = roots[i];
            const double imag_tol = 1e-7 * (1.0 + std::abs(r));
            if (std::abs(r.imag()) <= imag_tol) {
                p = poly::deflated_real(p, r.real());
                used[i] = true;
                continue;
            }
            std::size_t partner = roots.size();
            for (std::size_t j = i + 1; j < roots.size(); ++j) {
                if (!used[j] && std::abs(roots[j] - std::conj(r)) <= 1e-4 * (1.0 + std::abs(r))) {
                    partner = j;
                    break;
                }
            }
            if (partner == roots.size()) {
                used[i] = true;  // unpaired complex root: leave the factor alone
                continue;
            }
            p = poly::deflated_pair(p, r);
            used[i] = used[partner] = true;
        }
        return p;
    }

    /// Normalize, then cancel common factors found by root matching. The
    /// strict pass matches within kCancelEps. Repeated common factors split
    /// their computed roots by ~sqrt(eps), wider than kCancelEps, so a
    /// relaxed second pass matches whole clusters; it is accepted only when
    /// the deflated function verifiably equals the original, so genuinely
    /// distinct near-cancellations are never collapsed.
    static TransferFunction make_cancelled(Poly num, Poly den) {
        TransferFunction tf(std::move(num), std::move(den));
        if (tf.is_zero() || tf.num_.size() < 2 || tf.den_.size() < 2) return tf;

        auto nroots = poly::roots(tf.num_);
        auto droots = poly::roots(tf.den_);

        auto match_pass = [&](std::vector<bool>& nused, std::vector<bool>& dused, bool relaxed,
                              std::vector<Complex>& matched_n, std::vector<Complex>& matched_d) {
            bool any = false;
            for (std::size_t i = 0; i < nroots.size(); ++i) {
                if (nused[i]) continue;
                const double tol =
                    relaxed ? 1e-4 * (1.0 + std::abs(nroots[i])) : kCancelEps;
                std::size_t best = droots.size();
                double best_dist = tol;
                for (std::size_t j = 0; j < droots.size(); ++j) {
                    if (dused[j]) continue;
                    double dist = std::abs(nroots[i] - droots[j]);
                    if (dist <= best_dist) {
                        best_dist = dist;
                        best = j;
                    }
                }
                if (best < droots.size()) {
                    nused[i] = true;
                    dused[best] = true;
                    matched_n.push_back(nroots[i]);
                    matched_d.push_back(droots[best]);
                    any = true;
                }
            }
            return any;
        };

        std::vector<bool> nused(nroots.size(), false), dused(droots.size(), false);
        std::vector<Complex> strict_n, strict_d;
        bool any_strict = match_pass(nused, dused, false, strict_n, strict_d);

        TransferFunction result = tf;
        if (any_strict) {
            TransferFunction candidate(deflate_all(tf.num_, strict_n),
                                       deflate_all(tf.den_, strict_d));
            if (same_function(candidate.num_, candidate.den_, tf.num_, tf.den_))
                result = std::move(candidate);
        }

        std::vector<Complex> relaxed_n, relaxed_d;
        if (match_pass(nused, dused, true, relaxed_n, relaxed_d)) {
            for (Complex r : strict_n) relaxed_n.push_back(r);
            for (Complex r : strict_d) relaxed_d.push_back(r);
            TransferFunction candidate(deflate_all(tf.num_, relaxed_n),
                                       deflate_all(tf.den_, relaxed_d));
            if (same_function(candidate.num_, candidate.den_, tf.num_, tf.den_))
                result = std::move(candidate);
        }
        return result;
    }

    Poly num_, den_;
};

/// Swap numerator and denominator. The numerator must not be identically
/// zero.
inline TransferFunction invert(const TransferFunction& a) {
    if (a.is_zero()) throw std::domain_error("cannot invert the zero transfer function");
    return TransferFunction(a.den(), a.num());
}

/// Make an improper transfer function proper by appending 1/(tau*s + 1)^k
/// with k = -relative_degree. Proper inputs are returned unchanged; the DC
/// gain is preserved exactly.
inline TransferFunction causalize(const TransferFunction& a, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("causalization time constant must be positive");
    int k = -a.relative_degree();
    if (k <= 0) return a;
    Poly den = a.den();
    for (int i = 0; i < k; ++i) den = poly::mul(den, {tau, 1.0});
    return TransferFunction(a.num(), std::move(den));
}

/// Propriety, poles, stability and DC gain of a transfer function.
inline StabilityReport analyze(const TransferFunction& a) {
    StabilityReport r;
    r.relative_degree = a.relative_degree();
    r.is_proper = r.relative_degree >= 0;
    r.is_strictly_proper = r.relative_degree >= 1;
    r.poles = poly::roots(a.den());
    r.is_stable = std::all_of(r.poles.begin(), r.poles.end(),
                              [](Complex p) { return p.real() < -kStabilityEps; });
    if (!r.is_stable) {
        bool none_unstable = std::all_of(r.poles.begin(), r.poles.end(),
                                         [](Complex p) { return p.real() <= kStabilityEps; });
        bool axis_simple = true;
        for (std::size_t i = 0; i < r.poles.size() && axis_simple; ++i) {
            if (std::abs(r.poles[i].real()) > kStabilityEps) continue;
            for (std::size_t j = 0; j < r.poles.size(); ++j) {
                if (j != i && std::abs(r.poles[i] - r.poles[j]) <= kStabilityEps) {
                    axis_simple = false;
                    break;
                }
            }
        }
        r.is_marginally_stable = none_unstable && axis_simple;
    }
    const double den0 = a.den().back();
    if (den0 != 0.0)
        r.dc_gain = a.num().back() / den0;
    return r;
}

/// Evaluate a(j*omega) per sample. Samples landing on an imaginary-axis
/// pole come out non-finite, which is the caller's flag.
inline std::vector<Complex> freq_response(const TransferFunction& a,
                                          const std::vector<double>& omegas) {
    for (double w : omegas)
        if (!(w > 0.0) || !std::isfinite(w))
            throw std::invalid_argument("frequencies must be positive and finite");
    std::vector<Complex> out;
    out.reserve(omegas.size());
    for (double w : omegas) out.push_back(a(Complex(0.0, w)));
    return out;
}

/// Log-spaced frequency grid [lo, hi] with n points (n >= 2).
inline std::vector<double> log_grid(double lo, double hi, int n) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2)
        throw std::invalid_argument("log grid requires 0 < lo < hi and n >= 2");
    std::vector<double> out(static_cast<std::size_t>(n));
    const double l0 = std::log10(lo), l1 = std::log10(hi);
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = std::pow(10.0, l0 + (l1 - l0) * i / (n - 1));
    return out;
}

}  // namespace dvpp
