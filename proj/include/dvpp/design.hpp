#pragma once

// Control synthesis for modular DVPPs: the four basic module kinds, their
// aggregation conditions, participation-factor disaggregation, and the
// recursive top-down design that turns a module tree into per-converter
// controller transfer functions.

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dvpp/transfer_function.hpp"

namespace dvpp {

/// Raised when a module specification cannot be turned into a feasible
/// control plan (infeasible disaggregation, unstable assignment, bad tree).
class DesignError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ModuleKind {
    ac_coupled_ac_output,
    dc_coupled_ac_output,
    ac_coupled_dc_output,
    dc_coupled_dc_output,
};

inline bool is_dc_output(ModuleKind k) {
    return k == ModuleKind::ac_coupled_dc_output || k == ModuleKind::dc_coupled_dc_output;
}
inline bool is_dc_coupled(ModuleKind k) {
    return k == ModuleKind::dc_coupled_ac_output || k == ModuleKind::dc_coupled_dc_output;
}

inline const char* to_string(ModuleKind k) {
    switch (k) {
        case ModuleKind::ac_coupled_ac_output: return "ac_coupled_ac_output";
        case ModuleKind::dc_coupled_ac_output: return "dc_coupled_ac_output";
        case ModuleKind::ac_coupled_dc_output: return "ac_coupled_dc_output";
        case ModuleKind::dc_coupled_dc_output: return "dc_coupled_dc_output";
    }
    return "?";
}

/// Desired behaviors of one module. Which fields are required depends on
/// the module kind; droop-type entries carry negative-feedback signs.
struct DesiredBehavior {
    std::optional<TransferFunction> t_fp;      // frequency response to active power
    std::optional<TransferFunction> t_vq;      // voltage response to reactive power
    std::optional<TransferFunction> t_vdcf;    // dc voltage-square to frequency matching
    std::optional<TransferFunction> t_pvdc;    // power response to dc voltage-square
    std::optional<TransferFunction> t_vdcvdc;  // dc-dc voltage-square matching
};

enum class AssignmentKind { pre_assigned, dpf, residual };

/// One device slot of a module: a DER behind a converter, or a fixed
/// (non-controllable) element such as the bus capacitance.
struct DeviceSpec {
    std::string name;
    bool controllable = true;
    AssignmentKind assignment = AssignmentKind::residual;
    std::optional<TransferFunction> tf;  // pre_assigned T_i, or dpf weight m_i
    double setpoint_pu = 0.0;
    std::optional<double> p_limit_pu;          // symmetric |power| bound
    std::optional<double> causalization_tau;   // overrides the module default
};

struct ChildSpec;

/// A (possibly nested) module description. A child replaces exactly one
/// controllable device slot of its parent and must have a DC output.
struct ModuleSpec {
    ModuleKind kind = ModuleKind::dc_coupled_ac_output;
    DesiredBehavior desired;
    std::vector<DeviceSpec> devices;
    std::vector<ChildSpec> children;
};

struct ChildSpec {
    std::string attachment;  // name of the parent device slot it replaces
    ModuleSpec module;
};

enum class AggregationConvention { sum_of_tf, sum_of_inverse };

struct AggregationTarget {
    TransferFunction target;
    AggregationConvention convention = AggregationConvention::sum_of_tf;
};

namespace detail {

inline const TransferFunction& require(const std::optional<TransferFunction>& field,
                                       const char* field_name, ModuleKind kind) {
    if (!field)
        throw DesignError(std::string(to_string(kind)) + " requires desired behavior '" +
                          field_name + "'");
    return *field;
}

}  // namespace detail

/// Right-hand side of the per-device aggregation condition for one module
/// kind. DC-coupled kinds constrain the direct sum of T_i; AC-coupled kinds
/// constrain the sum of inverses.
inline AggregationTarget target_aggregate(ModuleKind kind, const DesiredBehavior& desired) {
    using detail::require;
    switch (kind) {
        case ModuleKind::ac_coupled_ac_output:
            return {invert(require(desired.t_fp, "t_fp", kind)),
                    AggregationConvention::sum_of_inverse};
        case ModuleKind::dc_coupled_ac_output:
            return {invert(require(desired.t_vdcf, "t_vdcf", kind)) *
                        invert(require(desired.t_fp, "t_fp", kind)),
                    AggregationConvention::sum_of_tf};
        case ModuleKind::ac_coupled_dc_output:
            return {require(desired.t_vdcf, "t_vdcf", kind) *
                        require(desired.t_pvdc, "t_pvdc", kind),
                    AggregationConvention::sum_of_inverse};
        case ModuleKind::dc_coupled_dc_output:
            return {invert(require(desired.t_vdcvdc, "t_vdcvdc", kind)) *
                        require(desired.t_pvdc, "t_pvdc", kind),
                    AggregationConvention::sum_of_tf};
    }
    throw DesignError("unknown module kind");
}

/// Power response -(c/2) s of a DC capacitor given in per-unit seconds
/// (c_pu = C * V_base^2 / S_base), negative sign per the output-power
/// convention.
inline TransferFunction capacitor_tf(double c_pu) {
    if (c_pu < 0.0) throw std::invalid_argument("capacitance must be non-negative");
    return TransferFunction({-0.5 * c_pu, 0.0}, {1.0});
}

/// Residual participation factor 1 - sum(assigned); the result plus the
/// assigned factors sums to one exactly in rational arithmetic.
inline TransferFunction dpf_residual(const std::vector<TransferFunction>& assigned) {
    TransferFunction acc = TransferFunction::gain(1.0);
    for (const auto& m : assigned) acc = acc - m;
    return acc;
}

/// Disaggregation result for one device: the direct-form behavior T_i and
/// its causalized (realizable) companion. Non-controllable devices keep
/// their physical dynamics un-causalized.
struct DeviceAssignment {
    DeviceSpec device;
    TransferFunction t;
    TransferFunction t_causalized;
};

/// Split an aggregation target among device slots: fixed dynamics and
/// pre-assigned behaviors are subtracted first, participation-factor
/// devices share the remainder, one residual device absorbs what is left.
/// Under the inverse convention the same structure runs on the T_i^{-1}
/// values.
inline std::vector<DeviceAssignment> disaggregate(const TransferFunction& target,
                                                  AggregationConvention convention,
                                                  const std::vector<DeviceSpec>& devices,
                                                  double default_tau = 0.01) {
    const bool inverse = convention == AggregationConvention::sum_of_inverse;
    auto to_value = [&](const TransferFunction& direct) {
        return inverse ? invert(direct) : direct;
    };

    int residual_count = 0;
    for (const auto& d : devices) {
        if (!d.controllable && d.assignment != AssignmentKind::pre_assigned)
            throw DesignError("non-controllable device '" + d.name +
                              "' must carry a pre-assigned behavior");
        if (d.controllable && d.assignment == AssignmentKind::residual) ++residual_count;
        if (d.p_limit_pu) {
            if (*d.p_limit_pu < 0.0)
                throw DesignError("device '" + d.name + "' has a negative power limit");
            if (std::abs(d.setpoint_pu) > *d.p_limit_pu)
                throw DesignError("device '" + d.name + "' setpoint exceeds its power limit");
        }
        if ((d.assignment == AssignmentKind::pre_assigned || d.assignment == AssignmentKind::dpf) &&
            !d.tf)
            throw DesignError("device '" + d.name + "' is missing its transfer function");
    }
    if (residual_count > 1)
        throw DesignError("at most one device may take the residual assignment");

    // net = target - sum(non-controllable) - sum(pre-assigned), in the
    // convention's value space
    TransferFunction net = target;
    for (const auto& d : devices)
        if (d.assignment == AssignmentKind::pre_assigned) net = net - to_value(*d.tf);

    // participation factors must be proper, stable, and sum to one unless a
    // residual device closes the gap
    TransferFunction m_sum;  // zero
    for (const auto& d : devices) {
        if (d.assignment != AssignmentKind::dpf) continue;
        const auto& m = *d.tf;
        if (!m.is_proper())
            throw DesignError("participation factor of '" + d.name + "' is improper");
        auto rep = analyze(m);
        if (!rep.is_stable && !m.is_zero())
            throw DesignError("participation factor of '" + d.name + "' is unstable");
        m_sum = m_sum + m;
    }
    if (residual_count == 0) {
        const bool any_dpf = std::any_of(devices.begin(), devices.end(), [](const DeviceSpec& d) {
            return d.assignment == AssignmentKind::dpf;
        });
        if (any_dpf) {
            auto gap = TransferFunction::gain(1.0) - m_sum;
            double worst = 0.0;
            for (double c : gap.num()) worst = std::max(worst, std::abs(c));
            if (worst > 1e-9)
                throw DesignError(
                    "participation deficit: factors leave 1 - sum(m_i) with residual " +
                    std::to_string(worst) + " and no residual device");
        } else {
            double worst = 0.0;
            for (double c : net.num()) worst = std::max(worst, std::abs(c));
            if (worst > 1e-9)
                throw DesignError(
                    "pre-assigned behaviors do not meet the aggregation target");
        }
    }

    std::vector<DeviceAssignment> out;
    out.reserve(devices.size());
    for (const auto& d : devices) {
        TransferFunction value;
        switch (d.assignment) {
            case AssignmentKind::pre_assigned:
                value = to_value(*d.tf);
                break;
            case AssignmentKind::dpf:
                value = *d.tf * net;
                break;
            case AssignmentKind::residual:
                value = dpf_residual({m_sum}) * net;
                break;
        }
        TransferFunction direct;
        if (!inverse) {
            direct = value;
        } else if (d.assignment == AssignmentKind::pre_assigned) {
            direct = *d.tf;
        } else {
            if (value.is_zero())
                throw DesignError("device '" + d.name +
                                  "' has zero participation, which has no inverse-form "
                                  "behavior in an AC-coupled module");
            direct = invert(value);
        }
        DeviceAssignment a{d, direct, direct};
        if (d.controllable)
            a.t_causalized = causalize(direct, d.causalization_tau.value_or(default_tau));
        out.push_back(std::move(a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Top-down modular design
// ---------------------------------------------------------------------------

enum class CentralOption { ac_dc_matching, ac_pf_forming };    // A | B
enum class DerOption { dc_grid_supporting, dc_grid_forming };  // I | II

enum class ConverterRole {
    central_inverter,
    central_rectifier,
    central_dcdc,
    der_dcdc,
    der_inverter,
};

inline const char* to_string(ConverterRole r) {
    switch (r) {
        case ConverterRole::central_inverter: return "central_inverter";
        case ConverterRole::central_rectifier: return "central_rectifier";
        case ConverterRole::central_dcdc: return "central_dcdc";
        case ConverterRole::der_dcdc: return "der_dcdc";
        case ConverterRole::der_inverter: return "der_inverter";
    }
    return "?";
}

/// One converter of the plan. `t` is the desired direct-form behavior,
/// `t_implemented` the controller block the converter actually realizes
/// (option-dependent), both proper and at worst marginally stable.
struct ConverterPlan {
    std::string name;
    ConverterRole role = ConverterRole::der_dcdc;
    int bus = 0;  // index of the DC bus this converter's module couples to
    TransferFunction t;
    TransferFunction t_causalized;
    TransferFunction t_implemented;
    std::optional<TransferFunction> t_voltage;  // voltage controller (AC-side centrals)
    double setpoint_pu = 0.0;
    std::optional<double> p_limit_pu;
    bool marginal = false;  // implemented controller has imaginary-axis poles
};

struct ModulePlan {
    ModuleKind kind = ModuleKind::dc_coupled_ac_output;
    std::string attachment;  // parent slot name; empty at the root
    DesiredBehavior desired;
    TransferFunction target;
    AggregationConvention convention = AggregationConvention::sum_of_tf;
    int bus = 0;
    std::vector<ConverterPlan> devices;
    std::vector<std::pair<std::string, TransferFunction>> noncontrollables;
    std::optional<ConverterPlan> central;
    std::vector<ModulePlan> children;
};

/// Synthesis output: the per-converter controller set plus the
/// implementation-option selections.
struct ControlPlan {
    CentralOption central_option = CentralOption::ac_dc_matching;
    DerOption der_option = DerOption::dc_grid_supporting;
    ModulePlan root;

    template <typename F>
    void for_each_converter(F&& f) const {
        walk(root, f);
    }

private:
    template <typename F>
    static void walk(const ModulePlan& m, F& f) {
        if (m.central) f(*m.central);
        for (const auto& c : m.devices) f(c);
        for (const auto& ch : m.children) walk(ch, f);
    }
};

namespace detail {

inline void check_implementable(const TransferFunction& t, const std::string& converter,
                                bool& marginal_flag) {
    auto rep = analyze(t);
    if (!rep.is_proper)
        throw DesignError("controller for '" + converter + "' is improper after causalization");
    if (!rep.is_stable) {
        if (!rep.is_marginally_stable)
            throw DesignError("controller for '" + converter + "' is unstable");
        marginal_flag = true;  // integrator-type pole, consciously accepted
    }
}

inline void validate_desired_fields(const ModuleSpec& spec, bool pvdc_inherited) {
    const auto& d = spec.desired;
    switch (spec.kind) {
        case ModuleKind::ac_coupled_ac_output:
            require(d.t_fp, "t_fp", spec.kind);
            require(d.t_vq, "t_vq", spec.kind);
            break;
        case ModuleKind::dc_coupled_ac_output:
            require(d.t_fp, "t_fp", spec.kind);
            require(d.t_vq, "t_vq", spec.kind);
            require(d.t_vdcf, "t_vdcf", spec.kind);
            break;
        case ModuleKind::ac_coupled_dc_output:
            if (!pvdc_inherited) require(d.t_pvdc, "t_pvdc", spec.kind);
            require(d.t_vdcf, "t_vdcf", spec.kind);
            require(d.t_vq, "t_vq", spec.kind);
            break;
        case ModuleKind::dc_coupled_dc_output:
            if (!pvdc_inherited) require(d.t_pvdc, "t_pvdc", spec.kind);
            require(d.t_vdcvdc, "t_vdcvdc", spec.kind);
            break;
    }
}

inline ModulePlan plan_module(const ModuleSpec& spec, const std::string& attachment,
                              const std::optional<TransferFunction>& inherited_pvdc,
                              CentralOption copt, DerOption dopt, double default_tau,
                              int bus, int& next_bus) {
    ModulePlan plan;
    plan.kind = spec.kind;
    plan.attachment = attachment;
    plan.desired = spec.desired;
    plan.bus = bus;
    if (inherited_pvdc) {
        if (!is_dc_output(spec.kind))
            throw DesignError("child module '" + attachment + "' must have a DC output");
        plan.desired.t_pvdc = *inherited_pvdc;
    }
    validate_desired_fields(spec, inherited_pvdc.has_value());

    auto agg = target_aggregate(spec.kind, plan.desired);
    plan.target = agg.target;
    plan.convention = agg.convention;

    auto assignments = disaggregate(plan.target, plan.convention, spec.devices, default_tau);

    // slot -> child lookup; every attachment must name a distinct
    // controllable device of this module
    std::vector<const ChildSpec*> child_of(spec.devices.size(), nullptr);
    for (const auto& child : spec.children) {
        bool found = false;
        for (std::size_t i = 0; i < spec.devices.size(); ++i) {
            if (spec.devices[i].name != child.attachment) continue;
            if (!spec.devices[i].controllable)
                throw DesignError("child module cannot replace non-controllable device '" +
                                  child.attachment + "'");
            if (child_of[i])
                throw DesignError("device slot '" + child.attachment +
                                  "' is replaced by more than one child");
            child_of[i] = &child;
            found = true;
        }
        if (!found)
            throw DesignError("child attachment '" + child.attachment +
                              "' names no device of its parent module");
    }

    const bool coupled_dc = is_dc_coupled(spec.kind);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        auto& a = assignments[i];
        if (!a.device.controllable) {
            plan.noncontrollables.emplace_back(a.device.name, a.t);
            continue;
        }
        if (child_of[i]) {
            // the slot behavior becomes the child's desired output behavior
            const ChildSpec& child = *child_of[i];
            int child_bus = is_dc_coupled(child.module.kind) ? next_bus++ : bus;
            ModulePlan sub = plan_module(child.module, child.attachment, a.t, copt, dopt,
                                         default_tau, child_bus, next_bus);
            ConverterPlan central;
            central.name = child.attachment + "_central";
            central.setpoint_pu = a.device.setpoint_pu;
            central.p_limit_pu = a.device.p_limit_pu;
            if (child.module.kind == ModuleKind::dc_coupled_dc_output) {
                central.role = ConverterRole::central_dcdc;
                central.bus = bus;
                central.t = a.t;
                central.t_causalized = a.t_causalized;
                central.t_implemented = a.t_causalized;  // grid-supporting transfer
            } else {
                central.role = ConverterRole::central_rectifier;
                central.bus = bus;
                central.t = *sub.desired.t_vdcf;
                central.t_causalized = causalize(central.t, default_tau);
                central.t_implemented = causalize(invert(*sub.desired.t_vdcf), default_tau);
                central.t_voltage = causalize(*sub.desired.t_vq, default_tau);
            }
            check_implementable(central.t_implemented, central.name, central.marginal);
            sub.central = std::move(central);
            plan.children.push_back(std::move(sub));
            continue;
        }
        ConverterPlan c;
        c.name = a.device.name;
        c.bus = bus;
        c.t = a.t;
        c.t_causalized = a.t_causalized;
        c.setpoint_pu = a.device.setpoint_pu;
        c.p_limit_pu = a.device.p_limit_pu;
        const double tau = a.device.causalization_tau.value_or(default_tau);
        if (coupled_dc) {
            c.role = ConverterRole::der_dcdc;
            c.t_implemented = dopt == DerOption::dc_grid_supporting
                                  ? a.t_causalized
                                  : causalize(invert(a.t), tau);
        } else {
            // AC-coupled DER inverter: frequency-forming with behavior T_i;
            // the realizable power-response block is the causalized inverse
            c.role = ConverterRole::der_inverter;
            c.t_implemented = causalize(invert(a.t), tau);
        }
        check_implementable(c.t_implemented, c.name, c.marginal);
        plan.devices.push_back(std::move(c));
    }
    return plan;
}

inline void collect_names(const ModulePlan& m, std::vector<std::string>& names) {
    for (const auto& d : m.devices) names.push_back(d.name);
    for (const auto& c : m.children) collect_names(c, names);
}

}  // namespace detail

/// Depth-first top-down synthesis: compute each module's aggregation
/// target, disaggregate among its slots, hand slot behaviors down to child
/// modules, and flatten the per-converter plan.
inline ControlPlan design_modular(const ModuleSpec& spec,
                                  CentralOption central = CentralOption::ac_dc_matching,
                                  DerOption der = DerOption::dc_grid_supporting,
                                  double default_tau = 0.01) {
    ControlPlan plan;
    plan.central_option = central;
    plan.der_option = der;
    int next_bus = 1;
    plan.root = detail::plan_module(spec, "", std::nullopt, central, der, default_tau,
                                    /*bus=*/0, next_bus);

    // root central converter
    if (spec.kind == ModuleKind::dc_coupled_ac_output) {
        ConverterPlan inv;
        inv.name = "central_inverter";
        inv.role = ConverterRole::central_inverter;
        inv.bus = 0;
        inv.t = central == CentralOption::ac_dc_matching ? *plan.root.desired.t_vdcf
                                                         : *plan.root.desired.t_fp;
        inv.t_causalized = causalize(inv.t, default_tau);
        inv.t_implemented = central == CentralOption::ac_dc_matching
                                ? causalize(invert(*plan.root.desired.t_vdcf), default_tau)
                                : causalize(*plan.root.desired.t_fp, default_tau);
        inv.t_voltage = causalize(*plan.root.desired.t_vq, default_tau);
        detail::check_implementable(inv.t_implemented, inv.name, inv.marginal);
        plan.root.central = std::move(inv);
    }

    std::vector<std::string> names;
    detail::collect_names(plan.root, names);
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw DesignError("device names must be unique across the module tree");
    return plan;
}

}  // namespace dvpp
