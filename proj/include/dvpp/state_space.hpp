#pragma once

// Controllable-canonical state-space realization and discrete-time LTI
// propagation of SISO transfer functions.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvpp/transfer_function.hpp"

namespace dvpp {

/// x' = A x + B u, y = C x + D u. n = 0 collapses to a pure gain D.
struct StateSpaceModel {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;

    int order() const { return static_cast<int>(A.rows()); }
};

/// Named, uniformly sampled signal trace (per-unit values).
struct SignalTrace {
    std::string name;
    double dt = 0.0;
    std::vector<double> samples;
};

/// Controllable canonical realization of a proper transfer function.
/// Improper inputs are rejected; causalize them first.
inline StateSpaceModel realize(const TransferFunction& tf) {
    if (!tf.is_proper())
        throw std::domain_error(
            "cannot realize an improper transfer function; causalize it first");
    const Poly& den = tf.den();  // monic by construction
    const int n = poly::degree(den);

    // Pad the numerator to degree n, split off the feedthrough.
    Poly num(static_cast<std::size_t>(n) + 1, 0.0);
    const std::size_t off = num.size() - tf.num().size();
    for (std::size_t i = 0; i < tf.num().size(); ++i) num[off + i] = tf.num()[i];

    StateSpaceModel m;
    m.D = num[0];
    m.A = Eigen::MatrixXd::Zero(n, n);
    m.B = Eigen::VectorXd::Zero(n);
    m.C = Eigen::RowVectorXd::Zero(n);
    if (n == 0) return m;

    for (int i = 0; i + 1 < n; ++i) m.A(i, i + 1) = 1.0;
    for (int i = 0; i < n; ++i) m.A(n - 1, i) = -den[static_cast<std::size_t>(n - i)];
    m.B(n - 1) = 1.0;

    // Remainder num - D*den, state x_i pairs with s^(i-1).
    for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(n - i);  // coefficient of s^i
        m.C(i) = num[k] - m.D * den[k];
    }
    return m;
}

/// Discrete update x[k+1] = Ad x[k] + Bd u[k], y[k] = Cd x[k] + Dd u[k]
/// realizing the bilinear (trapezoidal) map of a continuous model.
struct DiscreteStateSpace {
    Eigen::MatrixXd Ad;
    Eigen::VectorXd Bd;
    Eigen::RowVectorXd Cd;
    double Dd = 0.0;

    int order() const { return static_cast<int>(Ad.rows()); }
};

/// Bilinear transform at step dt (no frequency prewarping): preserves
/// stability and DC gain exactly.
inline DiscreteStateSpace discretize_bilinear(const StateSpaceModel& m, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("step size must be positive");
    DiscreteStateSpace d;
    const int n = m.order();
    if (n == 0) {
        d.Ad.resize(0, 0);
        d.Bd.resize(0);
        d.Cd.resize(0);
        d.Dd = m.D;
        return d;
    }
    const double alpha = dt / 2.0;
    Eigen::MatrixXd ima = Eigen::MatrixXd::Identity(n, n) - alpha * m.A;
    Eigen::MatrixXd ima_inv = ima.inverse();  // orders here are tiny
    d.Ad = ima_inv * (Eigen::MatrixXd::Identity(n, n) + alpha * m.A);
    d.Bd = ima_inv * (m.B * dt);
    d.Cd = m.C * ima_inv;
    d.Dd = m.D + alpha * (m.C * ima_inv * m.B)(0, 0);
    return d;
}

/// Stateful runner for one discretized block.
class DiscreteBlock {
public:
    DiscreteBlock() = default;
    DiscreteBlock(const StateSpaceModel& m, double dt)
        : sys_(discretize_bilinear(m, dt)), x_(Eigen::VectorXd::Zero(sys_.order())) {}

    /// Output contribution from the stored state (input-independent part).
    double state_output() const { return sys_.order() ? (sys_.Cd * x_)(0, 0) : 0.0; }
    double feedthrough() const { return sys_.Dd; }
    double output(double u) const { return state_output() + sys_.Dd * u; }

    void advance(double u) {
        if (sys_.order()) x_ = sys_.Ad * x_ + sys_.Bd * u;
    }

    double max_state_norm() const { return sys_.order() ? x_.cwiseAbs().maxCoeff() : 0.0; }

private:
    DiscreteStateSpace sys_;
    Eigen::VectorXd x_;
};

/// Propagate an input trace through the bilinear discretization of a model.
/// Global error is O(dt^2) against the continuous response for band-limited
/// inputs.
inline SignalTrace lti_response(const StateSpaceModel& model, const SignalTrace& input,
                                double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("step size must be positive");
    if (std::abs(dt - input.dt) > 1e-12 * dt)
        throw std::invalid_argument("step size must match the input trace");
    if (model.A.rows() != model.A.cols() || model.B.size() != model.A.rows() ||
        model.C.size() != model.A.rows())
        throw std::invalid_argument("state-space dimensions are inconsistent");

    DiscreteBlock block(model, dt);
    SignalTrace out;
    out.name = input.name;
    out.dt = dt;
    out.samples.reserve(input.samples.size());
    for (double u : input.samples) {
        out.samples.push_back(block.output(u));
        block.advance(u);
    }
    return out;
}

}  // namespace dvpp
