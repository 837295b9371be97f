#pragma once

// Frequency-domain residuals of the aggregation identities and
// time-domain measured-vs-desired match metrics.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvpp/design.hpp"
#include "dvpp/simulation.hpp"
#include "dvpp/transfer_function.hpp"

namespace dvpp {

struct ResidualReport {
    std::vector<double> omega_grid;
    std::vector<double> errors;  // relative, per frequency
    double max_rel_error = 0.0;
    AggregationConvention convention = AggregationConvention::sum_of_tf;
};

/// Relative deviation of the (direct or inverse) device sum from its target
/// over a log-spaced frequency band.
inline ResidualReport aggregation_residual(const std::vector<TransferFunction>& t_list,
                                           const TransferFunction& target,
                                           AggregationConvention convention, double omega_lo,
                                           double omega_hi, int n_points) {
    if (t_list.empty()) throw std::invalid_argument("device list must not be empty");
    ResidualReport report;
    report.convention = convention;
    report.omega_grid = log_grid(omega_lo, omega_hi, n_points);
    report.errors.reserve(report.omega_grid.size());
    for (double w : report.omega_grid) {
        const Complex s(0.0, w);
        Complex sum = 0.0;
        for (const auto& t : t_list) {
            Complex v = t(s);
            sum += convention == AggregationConvention::sum_of_inverse ? 1.0 / v : v;
        }
        const Complex want = target(s);
        const double err = std::abs(sum - want) / std::max(std::abs(want), 1e-12);
        report.errors.push_back(err);
        report.max_rel_error = std::max(report.max_rel_error, err);
    }
    return report;
}

/// Max |d(df)/dt| with the first differences smoothed over a moving window.
inline double rocof_max(const std::vector<double>& df, double dt, double smooth_s = 0.05) {
    if (df.size() < 2) return 0.0;
    const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(smooth_s / dt)));
    std::vector<double> diff(df.size() - 1);
    for (std::size_t i = 0; i + 1 < df.size(); ++i) diff[i] = (df[i + 1] - df[i]) / dt;
    double worst = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
        acc += diff[i];
        if (i >= w) acc -= diff[i - w];
        if (i + 1 >= w) worst = std::max(worst, std::abs(acc) / static_cast<double>(w));
    }
    return worst;
}

struct MatchThresholds {
    double nrmse_max = 0.02;
    double steady_state_max = 0.02;  // pu
};

/// Band and threshold settings consumed by the verify pipeline.
struct VerificationSettings {
    double omega_lo = 0.01;
    double omega_hi = 10.0;
    int n_points = 200;
    double residual_max = 0.05;  // causalized aggregation residual bound
    MatchThresholds match;
    double settle_skip_s = 0.2;
};

struct ChannelMetrics {
    std::string channel;
    double nrmse = 0.0;                 // normalized by peak |reference|
    double steady_state_error = 0.0;    // measured minus reference, final 10%
    bool nrmse_pass = true;
    bool steady_state_pass = true;
};

struct MatchReport {
    std::vector<ChannelMetrics> channels;
    double nadir = 0.0;       // signed extremum of the measured df channel
    double rocof = 0.0;       // pu/s
    double settle_skip_s = 0.0;
    MatchThresholds thresholds;
    bool pass = true;
};

/// Compare measured and reference series channel-by-channel (matched by
/// name), skipping the causalization transient. Steady state is taken from
/// the final 10% of samples.
inline MatchReport compare(const TimeSeries& measured, const TimeSeries& reference,
                           double settle_skip_s = 0.2, MatchThresholds thresholds = {}) {
    if (std::abs(measured.dt_s - reference.dt_s) > 1e-15)
        throw std::invalid_argument("series step sizes differ");
    if (measured.length() != reference.length() || measured.length() == 0)
        throw std::invalid_argument("series lengths differ");
    const std::size_t n = measured.length();
    const std::size_t skip = static_cast<std::size_t>(std::llround(settle_skip_s / measured.dt_s));
    if (skip >= n) throw std::invalid_argument("settle skip exceeds the trace duration");

    MatchReport report;
    report.settle_skip_s = settle_skip_s;
    report.thresholds = thresholds;

    for (const auto& name : measured.names) {
        if (!reference.has(name)) continue;
        const auto& m = measured.channel(name);
        const auto& r = reference.channel(name);

        double peak = 0.0, sq = 0.0;
        for (std::size_t i = skip; i < n; ++i) {
            peak = std::max(peak, std::abs(r[i]));
            const double d = m[i] - r[i];
            sq += d * d;
        }
        ChannelMetrics cm;
        cm.channel = name;
        const double rms = std::sqrt(sq / static_cast<double>(n - skip));
        cm.nrmse = rms / std::max(peak, 1e-12);

        const std::size_t tail = std::max<std::size_t>(1, n / 10);
        double ms = 0.0, rs = 0.0;
        for (std::size_t i = n - tail; i < n; ++i) {
            ms += m[i];
            rs += r[i];
        }
        cm.steady_state_error = (ms - rs) / static_cast<double>(tail);

        cm.nrmse_pass = cm.nrmse <= thresholds.nrmse_max;
        cm.steady_state_pass = std::abs(cm.steady_state_error) <= thresholds.steady_state_max;
        report.pass = report.pass && cm.nrmse_pass && cm.steady_state_pass;
        report.channels.push_back(std::move(cm));
    }
    if (report.channels.empty())
        throw std::invalid_argument("series share no channels to compare");

    if (measured.has("df")) {
        const auto& df = measured.channel("df");
        double extreme = 0.0;
        for (std::size_t i = skip; i < n; ++i)
            if (std::abs(df[i]) > std::abs(extreme)) extreme = df[i];
        report.nadir = extreme;
        report.rocof = rocof_max(df, measured.dt_s);
    }
    return report;
}

}  // namespace dvpp
