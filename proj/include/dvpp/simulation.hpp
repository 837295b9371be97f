#pragma once

// Averaged small-signal closed-loop simulation of a ControlPlan against a
// Thevenin-equivalent grid. Controller blocks are bilinear-discretized LTI
// systems; the DC-bus balance ODEs are integrated by the trapezoidal rule
// with the (linear) algebraic interconnection solved exactly each step, so
// no artificial delay enters except the documented one-step closure of the
// power/frequency loop under the AC p-f forming option.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvpp/design.hpp"
#include "dvpp/state_space.hpp"
#include "dvpp/transfer_function.hpp"

namespace dvpp {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class EventKind { grid_frequency_dip, grid_voltage_dip, load_step };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::grid_frequency_dip: return "grid_frequency_dip";
        case EventKind::grid_voltage_dip: return "grid_voltage_dip";
        case EventKind::load_step: return "load_step";
    }
    return "?";
}

/// Grid disturbance: linear ramp over ramp_s to magnitude_pu, hold, and an
/// optional symmetric recovery starting at end_s.
struct Event {
    EventKind kind = EventKind::grid_frequency_dip;
    double start_s = 0.0;
    double ramp_s = 0.0;
    double magnitude_pu = 0.0;
    std::optional<double> end_s;

    double level(double t) const {
        if (t < start_s) return 0.0;
        double up = ramp_s > 0.0 ? std::min(1.0, (t - start_s) / ramp_s) : 1.0;
        if (end_s && t >= *end_s) {
            double down = ramp_s > 0.0 ? std::max(0.0, 1.0 - (t - *end_s) / ramp_s) : 0.0;
            up = std::min(up, down);
        }
        return magnitude_pu * up;
    }
};

/// Small-angle Thevenin coupling around 1 pu voltage and zero angle:
/// active power k_sync per radian of angle, reactive power k_q per pu of
/// voltage difference toward the grid.
struct GridModel {
    double x_g = 0.4;
    double k_sync = 2.5;
    double k_q = 2.5;
    double omega_base = 120.0 * std::numbers::pi;

    static GridModel from_reactance(double x_g, double omega_base = 120.0 * std::numbers::pi) {
        GridModel g;
        g.x_g = x_g;
        g.k_sync = 1.0 / x_g;
        g.k_q = 1.0 / x_g;
        g.omega_base = omega_base;
        return g;
    }
};

struct Scenario {
    double duration_s = 10.0;
    double dt_s = 1e-3;
    std::vector<Event> events;
    GridModel grid;
    bool enable_limits = false;
};

/// Named, uniformly sampled channels of one simulation run.
struct TimeSeries {
    double dt_s = 0.0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> channels;

    std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }

    bool has(const std::string& name) const {
        return std::find(names.begin(), names.end(), name) != names.end();
    }

    const std::vector<double>& channel(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return channels[i];
        throw std::invalid_argument("no channel named '" + name + "'");
    }

    SignalTrace trace(const std::string& name) const {
        return SignalTrace{name, dt_s, channel(name)};
    }

    void add(std::string name, std::vector<double> samples) {
        names.push_back(std::move(name));
        channels.push_back(std::move(samples));
    }
};

namespace detail {

/// Signal value that is affine in the unknown DC-bus voltage squares of the
/// current step.
struct Affine {
    double c = 0.0;
    std::vector<double> a;

    explicit Affine(std::size_t nbus = 0) : a(nbus, 0.0) {}
    static Affine constant(double v, std::size_t nbus) {
        Affine out(nbus);
        out.c = v;
        return out;
    }
    double eval(const std::vector<double>& x) const {
        double v = c;
        for (std::size_t i = 0; i < a.size(); ++i) v += a[i] * x[i];
        return v;
    }
    Affine& operator+=(const Affine& o) {
        c += o.c;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += o.a[i];
        return *this;
    }
    Affine& operator-=(const Affine& o) {
        c -= o.c;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] -= o.a[i];
        return *this;
    }
    friend Affine operator*(double k, Affine v) {
        v.c *= k;
        for (double& e : v.a) e *= k;
        return v;
    }
};

inline Affine block_output(const DiscreteBlock& b, const Affine& input) {
    Affine out = b.feedthrough() * input;
    out.c += b.state_output();
    return out;
}

/// True for the pure capacitor shape -(c/2) s.
inline std::optional<double> capacitor_value(const TransferFunction& t) {
    if (t.den().size() == 1 && t.num().size() == 2 && t.num()[1] == 0.0 && t.num()[0] < 0.0)
        return -2.0 * t.num()[0];
    return std::nullopt;
}

}  // namespace detail

/// Assembled simulation: realized controller blocks plus the bus/grid
/// interconnection. Single-owner; consumed by one call to run().
class SimState {
public:
    SimState(ControlPlan plan, Scenario scenario)
        : plan_(std::move(plan)), scenario_(std::move(scenario)) {
        validate_scenario();
        build();
    }

    const ControlPlan& plan() const { return plan_; }
    const Scenario& scenario() const { return scenario_; }

    friend TimeSeries run(SimState& state);

private:
    struct DeviceRt {
        std::string name;
        int bus = 0;        // driving DC bus, or -1 when driven by an AC child frequency
        int ac_child = -1;  // index into ac_children_ when bus == -1
        DiscreteBlock block;
        double setpoint = 0.0;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        bool clampable = false;
        bool counts_into_bus = true;  // passive fixed dynamics also sum into g
    };
    struct DcTransferRt {  // central DC-DC moving power from a sub-bus to its parent
        std::string name;
        int from_bus = 1;
        int to_bus = 0;
        DiscreteBlock block;  // driven by the parent-bus voltage square
        double setpoint = 0.0;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        bool clampable = false;
    };
    struct AcChildRt {  // AC-coupled DC-output child: rectifier matching
        std::string name;
        DiscreteBlock freq_block;  // coherent child-bus frequency from the parent bus
    };

    void validate_scenario() const {
        if (!(scenario_.duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
        if (!(scenario_.dt_s > 0.0)) throw std::invalid_argument("step size must be positive");
        for (const auto& e : scenario_.events) {
            if (e.start_s < 0.0 || e.start_s > scenario_.duration_s || e.ramp_s < 0.0)
                throw std::invalid_argument("event outside the scenario window");
            if (e.end_s && (*e.end_s < e.start_s || *e.end_s > scenario_.duration_s))
                throw std::invalid_argument("event recovery outside the scenario window");
        }
        if (!(scenario_.grid.x_g > 0.0) || !(scenario_.grid.omega_base > 0.0))
            throw std::invalid_argument("grid model requires positive reactance and base frequency");
    }

    DiscreteBlock make_block(const TransferFunction& t, const std::string& name) const {
        auto rep = analyze(t);
        if (!rep.is_proper)
            throw SimulationError("controller for '" + name + "' is improper; causalize it");
        if (!rep.is_stable && !rep.is_marginally_stable)
            throw SimulationError("controller for '" + name + "' is unstable");
        return DiscreteBlock(realize(t), scenario_.dt_s);
    }

    void add_device_limits(DeviceRt& rt, double setpoint, const std::optional<double>& limit) {
        rt.setpoint = setpoint;
        if (scenario_.enable_limits && limit) {
            rt.lo = -*limit - setpoint;
            rt.hi = *limit - setpoint;
            rt.clampable = true;
        }
    }

    void add_module_devices(const ModulePlan& m, int bus, int ac_child) {
        for (const auto& [name, tf] : m.noncontrollables) {
            if (auto c = detail::capacitor_value(tf)) {
                if (bus >= 0) bus_cap_[static_cast<std::size_t>(bus)] += *c;
                continue;
            }
            DeviceRt rt;
            rt.name = name;
            rt.bus = bus;
            rt.ac_child = ac_child;
            rt.block = make_block(tf, name);
            devices_.push_back(std::move(rt));
        }
        for (const auto& d : m.devices) {
            DeviceRt rt;
            rt.name = d.name;
            rt.bus = bus;
            rt.ac_child = ac_child;
            rt.block = make_block(d.t_implemented, d.name);
            add_device_limits(rt, d.setpoint_pu, d.p_limit_pu);
            devices_.push_back(std::move(rt));
        }
    }

    void build() {
        const auto& root = plan_.root;
        if (root.kind != ModuleKind::dc_coupled_ac_output)
            throw SimulationError(
                "unsupported topology: the simulator drives a DC-coupled AC-output module "
                "(optionally with DC-output children)");
        if (!root.central) throw SimulationError("plan lacks the central inverter");
        for (const auto& child : root.children)
            if (!child.children.empty())
                throw SimulationError("unsupported nesting depth (> 2 module levels)");

        int max_bus = 0;
        for (const auto& child : root.children) max_bus = std::max(max_bus, child.bus);
        bus_cap_.assign(static_cast<std::size_t>(max_bus) + 1, 0.0);

        add_module_devices(root, 0, -1);
        for (const auto& child : root.children) {
            if (!child.central) throw SimulationError("child module lacks its central converter");
            if (child.kind == ModuleKind::dc_coupled_dc_output) {
                add_module_devices(child, child.bus, -1);
                DcTransferRt tr;
                tr.name = child.central->name;
                tr.from_bus = child.bus;
                tr.to_bus = 0;
                tr.block = make_block(child.central->t_implemented, tr.name);
                tr.setpoint = child.central->setpoint_pu;
                if (scenario_.enable_limits && child.central->p_limit_pu) {
                    tr.lo = -*child.central->p_limit_pu - tr.setpoint;
                    tr.hi = *child.central->p_limit_pu - tr.setpoint;
                    tr.clampable = true;
                }
                dc_transfers_.push_back(std::move(tr));
            } else {
                AcChildRt ac;
                ac.name = child.attachment;
                ac.freq_block = make_block(child.central->t_implemented, child.central->name);
                int idx = static_cast<int>(ac_children_.size());
                ac_children_.push_back(std::move(ac));
                add_module_devices(child, -1, idx);
            }
        }
        for (double c : bus_cap_)
            if (!(c > 0.0))
                throw SimulationError("every DC bus needs a capacitor among its fixed devices");

        const auto& central = *root.central;
        freq_block_ = make_block(central.t_implemented, central.name);
        if (!central.t_voltage) throw SimulationError("central inverter lacks a voltage controller");
        volt_block_ = make_block(*central.t_voltage, central.name + "_voltage");
    }

    ControlPlan plan_;
    Scenario scenario_;

    std::vector<double> bus_cap_;
    std::vector<DeviceRt> devices_;
    std::vector<DcTransferRt> dc_transfers_;
    std::vector<AcChildRt> ac_children_;
    DiscreteBlock freq_block_;   // option A: df from x_dc; option B: df from delayed dp
    DiscreteBlock volt_block_;   // dv from dq
    bool consumed_ = false;
};

/// Assemble the interconnection of a plan with a scenario.
inline SimState build_simulation(const ControlPlan& plan, const Scenario& scenario) {
    return SimState(plan, scenario);
}

/// Fixed-step run of a freshly built simulation. Deterministic: identical
/// inputs give bit-identical outputs. Device power outputs are clamped so
/// |setpoint + dp_i| stays within each limit when limits are enabled (no
/// anti-windup on the block states).
inline TimeSeries run(SimState& state) {
    if (state.consumed_) throw std::logic_error("run() requires a freshly built simulation");
    state.consumed_ = true;

    using detail::Affine;
    const auto& sc = state.scenario_;
    const double dt = sc.dt_s;
    const double wb = sc.grid.omega_base;
    const std::size_t nbus = state.bus_cap_.size();
    const std::size_t nsteps = static_cast<std::size_t>(std::llround(sc.duration_s / dt)) + 1;
    const bool option_b = state.plan_.central_option == CentralOption::ac_pf_forming;

    auto& devices = state.devices_;
    auto& transfers = state.dc_transfers_;
    auto& ac_children = state.ac_children_;

    // recorded channels
    std::vector<double> ch_df(nsteps), ch_dv(nsteps), ch_dp(nsteps), ch_dq(nsteps);
    std::vector<std::vector<double>> ch_x(nbus, std::vector<double>(nsteps));
    std::vector<std::vector<double>> ch_dev(devices.size(), std::vector<double>(nsteps));
    std::vector<std::vector<double>> ch_sat(devices.size(), std::vector<double>(nsteps, 0.0));
    std::vector<std::vector<double>> ch_tr(transfers.size(), std::vector<double>(nsteps));
    std::vector<std::vector<double>> ch_acf(ac_children.size(), std::vector<double>(nsteps));

    std::vector<double> x(nbus, 0.0), x_prev(nbus, 0.0), g_prev(nbus, 0.0);
    double theta_prev = 0.0, df_prev = 0.0, fg_prev = 0.0, dp_prev = 0.0;

    for (std::size_t k = 0; k < nsteps; ++k) {
        const double t = static_cast<double>(k) * dt;
        double fg = 0.0, vg = 0.0, pl = 0.0;
        for (const auto& e : sc.events) {
            const double lv = e.level(t);
            switch (e.kind) {
                case EventKind::grid_frequency_dip: fg += lv; break;
                case EventKind::grid_voltage_dip: vg += lv; break;
                case EventKind::load_step: pl += lv; break;
            }
        }

        // bus-voltage unknowns
        std::vector<Affine> xv;
        xv.reserve(nbus);
        for (std::size_t b = 0; b < nbus; ++b) {
            Affine v(nbus);
            v.a[b] = 1.0;
            xv.push_back(std::move(v));
        }

        // central frequency: matching reads the bus state, p-f forming reads
        // the one-step-delayed power
        Affine df = option_b
                        ? Affine::constant(state.freq_block_.output(dp_prev), nbus)
                        : detail::block_output(state.freq_block_, xv[0]);

        // angle (trapezoid) and electrical coupling
        Affine theta = (wb * dt / 2.0) * df;
        theta.c += theta_prev + (wb * dt / 2.0) * ((df_prev - fg_prev) - fg);
        Affine dp = sc.grid.k_sync * theta;
        dp.c += pl;

        // coherent AC-child frequencies
        std::vector<Affine> acf;
        acf.reserve(ac_children.size());
        for (auto& ac : ac_children) acf.push_back(detail::block_output(ac.freq_block, xv[0]));

        // device and transfer outputs, affine in the bus unknowns
        std::vector<Affine> dev_raw;
        dev_raw.reserve(devices.size());
        for (auto& d : devices)
            dev_raw.push_back(detail::block_output(
                d.block, d.bus >= 0 ? xv[static_cast<std::size_t>(d.bus)]
                                    : acf[static_cast<std::size_t>(d.ac_child)]));
        std::vector<Affine> tr_raw;
        tr_raw.reserve(transfers.size());
        for (auto& tr : transfers) tr_raw.push_back(detail::block_output(tr.block, xv[0]));

        // clamp-aware solve of the trapezoidal bus update
        std::vector<std::optional<double>> dev_clamp(devices.size());
        std::vector<std::optional<double>> tr_clamp(transfers.size());
        auto clamp_of = [](double v, double lo, double hi) { return std::min(std::max(v, lo), hi); };

        for (std::size_t iter = 0; iter <= devices.size() + transfers.size() + 1; ++iter) {
            std::vector<Affine> g(nbus, Affine(nbus));
            for (std::size_t i = 0; i < devices.size(); ++i) {
                const auto& d = devices[i];
                Affine contrib = dev_clamp[i] ? Affine::constant(*dev_clamp[i], nbus) : dev_raw[i];
                g[static_cast<std::size_t>(d.bus >= 0 ? d.bus : 0)] += contrib;
            }
            for (std::size_t i = 0; i < transfers.size(); ++i) {
                Affine contrib = tr_clamp[i] ? Affine::constant(*tr_clamp[i], nbus) : tr_raw[i];
                g[static_cast<std::size_t>(transfers[i].to_bus)] += contrib;
                g[static_cast<std::size_t>(transfers[i].from_bus)] -= contrib;
            }
            g[0] -= dp;

            if (k == 0) {
                std::fill(x.begin(), x.end(), 0.0);
            } else {
                Eigen::MatrixXd M = Eigen::MatrixXd::Identity(static_cast<int>(nbus),
                                                              static_cast<int>(nbus));
                Eigen::VectorXd rhs(static_cast<int>(nbus));
                for (std::size_t b = 0; b < nbus; ++b) {
                    const double s = dt / state.bus_cap_[b];
                    for (std::size_t j = 0; j < nbus; ++j)
                        M(static_cast<int>(b), static_cast<int>(j)) -= s * g[b].a[j];
                    rhs(static_cast<int>(b)) = x_prev[b] + s * (g_prev[b] + g[b].c);
                }
                Eigen::VectorXd sol = M.partialPivLu().solve(rhs);
                for (std::size_t b = 0; b < nbus; ++b) x[b] = sol(static_cast<int>(b));
            }

            bool changed = false;
            auto update_clamp = [&](std::optional<double>& slot, const Affine& raw, double lo,
                                    double hi, bool clampable) {
                if (!clampable) return;
                const double v = raw.eval(x);
                const double cl = clamp_of(v, lo, hi);
                if (cl != v) {
                    if (!slot || *slot != cl) {
                        slot = cl;
                        changed = true;
                    }
                } else if (slot) {
                    slot.reset();
                    changed = true;
                }
            };
            for (std::size_t i = 0; i < devices.size(); ++i)
                update_clamp(dev_clamp[i], dev_raw[i], devices[i].lo, devices[i].hi,
                             devices[i].clampable);
            for (std::size_t i = 0; i < transfers.size(); ++i)
                update_clamp(tr_clamp[i], tr_raw[i], transfers[i].lo, transfers[i].hi,
                             transfers[i].clampable);
            if (!changed) break;
        }

        // resolve all signals at the solved bus state
        const double df_v = df.eval(x);
        const double theta_v = theta.eval(x);
        const double dp_v = dp.eval(x);

        // reactive/voltage channel: dv = T_vq dq, dq = k_q (dv - dv_grid);
        // solved exactly through the feedthrough
        const double dd = state.volt_block_.feedthrough();
        const double sv = state.volt_block_.state_output();
        const double kq = sc.grid.k_q;
        const double dq_v = kq * (sv - vg) / (1.0 - kq * dd);
        const double dv_v = sv + dd * dq_v;

        std::vector<double> g_now(nbus, 0.0);
        std::vector<double> dev_out(devices.size());
        for (std::size_t i = 0; i < devices.size(); ++i) {
            double v = dev_raw[i].eval(x);
            const double cl = devices[i].clampable ? clamp_of(v, devices[i].lo, devices[i].hi) : v;
            ch_sat[i][k] = (cl != v) ? 1.0 : 0.0;
            dev_out[i] = cl;
            g_now[static_cast<std::size_t>(devices[i].bus >= 0 ? devices[i].bus : 0)] += cl;
        }
        std::vector<double> tr_out(transfers.size());
        for (std::size_t i = 0; i < transfers.size(); ++i) {
            double v = tr_raw[i].eval(x);
            const double cl =
                transfers[i].clampable ? clamp_of(v, transfers[i].lo, transfers[i].hi) : v;
            tr_out[i] = cl;
            g_now[static_cast<std::size_t>(transfers[i].to_bus)] += cl;
            g_now[static_cast<std::size_t>(transfers[i].from_bus)] -= cl;
        }
        g_now[0] -= dp_v;

        ch_df[k] = df_v;
        ch_dv[k] = dv_v;
        ch_dp[k] = dp_v;
        ch_dq[k] = dq_v;
        for (std::size_t b = 0; b < nbus; ++b) ch_x[b][k] = x[b];
        for (std::size_t i = 0; i < devices.size(); ++i) ch_dev[i][k] = dev_out[i];
        for (std::size_t i = 0; i < transfers.size(); ++i) ch_tr[i][k] = tr_out[i];
        for (std::size_t i = 0; i < ac_children.size(); ++i) ch_acf[i][k] = acf[i].eval(x);

        // advance all block states with their resolved inputs
        state.freq_block_.advance(option_b ? dp_prev : x[0]);
        state.volt_block_.advance(dq_v);
        for (std::size_t i = 0; i < ac_children.size(); ++i)
            ac_children[i].freq_block.advance(x[0]);
        for (std::size_t i = 0; i < devices.size(); ++i) {
            const auto& d = devices[i];
            devices[i].block.advance(d.bus >= 0 ? x[static_cast<std::size_t>(d.bus)]
                                                : ch_acf[static_cast<std::size_t>(d.ac_child)][k]);
        }
        for (auto& tr : transfers) tr.block.advance(x[0]);

        double worst = std::abs(theta_v);
        for (double v : x) worst = std::max(worst, std::abs(v));
        for (const auto& d : devices) worst = std::max(worst, d.block.max_state_norm());
        if (!std::isfinite(worst) || worst > 1e6)
            throw SimulationError("simulation diverged at t = " + std::to_string(t) + " s");

        x_prev = x;
        g_prev = g_now;
        theta_prev = theta_v;
        df_prev = df_v;
        fg_prev = fg;
        dp_prev = dp_v;
    }

    TimeSeries out;
    out.dt_s = dt;
    out.add("df", std::move(ch_df));
    out.add("dv", std::move(ch_dv));
    for (std::size_t b = 0; b < nbus; ++b)
        out.add("dvdc2_bus" + std::to_string(b), std::move(ch_x[b]));
    out.add("dp", std::move(ch_dp));
    out.add("dq", std::move(ch_dq));
    for (std::size_t i = 0; i < devices.size(); ++i)
        out.add("dp_" + devices[i].name, std::move(ch_dev[i]));
    for (std::size_t i = 0; i < transfers.size(); ++i)
        out.add("dp_" + transfers[i].name, std::move(ch_tr[i]));
    for (std::size_t i = 0; i < ac_children.size(); ++i)
        out.add("df_ac_" + ac_children[i].name, std::move(ch_acf[i]));
    for (std::size_t i = 0; i < devices.size(); ++i)
        out.add("sat_" + devices[i].name, std::move(ch_sat[i]));
    return out;
}

/// Desired-model replay driven by the measured power channels: the desired
/// frequency/voltage responses plus the re-aggregated frequency through the
/// causalized device set (including the fixed bus dynamics).
inline TimeSeries reference_response(const ControlPlan& plan, const TimeSeries& measured) {
    if (plan.root.kind != ModuleKind::dc_coupled_ac_output)
        throw SimulationError("reference responses need a DC-coupled AC-output root module");
    if (!measured.has("dp") || !measured.has("dq"))
        throw std::invalid_argument("measured series must contain dp and dq channels");

    const auto& desired = plan.root.desired;
    const double dt = measured.dt_s;
    auto dp = measured.trace("dp");
    auto dq = measured.trace("dq");

    TimeSeries out;
    out.dt_s = dt;
    auto df_des = lti_response(realize(*desired.t_fp), dp, dt);
    out.add("df_des", df_des.samples);
    out.add("dv_des", lti_response(realize(*desired.t_vq), dq, dt).samples);
    df_des.name = "df_des";
    out.add("dvdc2_des", lti_response(realize(*desired.t_vdcf), df_des, dt).samples);

    // re-aggregated frequency: T_vdcf^-1 (sum_i T_i)^-1 over the causalized set
    TransferFunction sum;
    for (const auto& [name, tf] : plan.root.noncontrollables) sum = sum + tf;
    for (const auto& d : plan.root.devices) sum = sum + d.t_causalized;
    for (const auto& child : plan.root.children) sum = sum + causalize(*child.desired.t_pvdc, 0.01);
    auto reagg = invert(*desired.t_vdcf) * invert(sum);
    auto df_reagg = lti_response(realize(reagg), dp, dt);
    df_reagg.name = "df_reagg";
    out.add("df_reagg", df_reagg.samples);
    out.add("dvdc2_reagg", lti_response(realize(*desired.t_vdcf), df_reagg, dt).samples);
    return out;
}

}  // namespace dvpp
