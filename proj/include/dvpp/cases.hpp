#pragma once

// Built-in demonstration cases at the 1 MVA / 800 V / 480 V desk scale: a
// supercapacitor, a battery and a power-reserved PV behind one DC bus,
// plus the multi-bus and AC/DC hybrid variants and a load-step study.

#include <stdexcept>
#include <string>
#include <vector>

#include "dvpp/design.hpp"
#include "dvpp/simulation.hpp"
#include "dvpp/verification.hpp"

namespace dvpp::cases {

// Per-unit capacitances (seconds): c_pu = C * V_base^2 / S_base.
inline constexpr double kBus0CapPu = 0.0512;    // 0.08 F at 800 V on 1 MVA
inline constexpr double kBoostCapPu = 0.0032;   // 0.005 F at 800 V each
inline constexpr double kBus1CapPu = 0.002304;  // 0.01 F at 480 V

struct CaseStudy {
    std::string id;
    std::string title;
    ModuleSpec module;
    Scenario scenario;
    VerificationSettings verification;
    CentralOption central_option = CentralOption::ac_dc_matching;
    DerOption der_option = DerOption::dc_grid_supporting;
    std::vector<double> sweep_tau_sc;  // coordination sweep (a2)
    std::string note;
};

inline TransferFunction desired_t_fp() { return TransferFunction({-1.0}, {5.0, 25.0}); }
inline TransferFunction desired_t_vq() { return TransferFunction({-0.2}, {0.01, 1.0}); }
inline TransferFunction desired_t_vdcf() { return TransferFunction::gain(10.0); }

/// The basic DC-coupled AC-output module: fixed bus capacitance, a
/// pre-assigned supercap inertia -tau_sc*s, a low-pass PV participation
/// 0.7/(0.5s+1) and the battery as residual.
inline ModuleSpec basic_module(double tau_sc = 0.2) {
    ModuleSpec m;
    m.kind = ModuleKind::dc_coupled_ac_output;
    m.desired.t_fp = desired_t_fp();
    m.desired.t_vq = desired_t_vq();
    m.desired.t_vdcf = desired_t_vdcf();
    m.devices = {
        {"dccaps", false, AssignmentKind::pre_assigned,
         capacitor_tf(kBus0CapPu + 3.0 * kBoostCapPu), 0.0, std::nullopt, std::nullopt},
        {"sc", true, AssignmentKind::pre_assigned, TransferFunction({-tau_sc, 0.0}, {1.0}),
         0.0, 0.3, std::nullopt},
        {"pv", true, AssignmentKind::dpf, TransferFunction({0.7}, {0.5, 1.0}), 0.5, 0.7,
         std::nullopt},
        {"bess", true, AssignmentKind::residual, std::nullopt, 0.0, 0.3, std::nullopt},
    };
    return m;
}

inline std::vector<DeviceSpec> split_pv_devices() {
    return {
        {"pv1", true, AssignmentKind::dpf, TransferFunction::gain(0.7), 0.35, 0.49,
         std::nullopt},
        {"pv2", true, AssignmentKind::dpf, TransferFunction::gain(0.3), 0.15, 0.21,
         std::nullopt},
    };
}

inline Scenario grid_dip_scenario(double duration_s = 10.0) {
    Scenario sc;
    sc.duration_s = duration_s;
    sc.dt_s = 1e-3;
    sc.grid = GridModel::from_reactance(0.4);
    sc.events = {
        {EventKind::grid_frequency_dip, 1.0, 0.5, -0.01, std::nullopt},
        {EventKind::grid_voltage_dip, 1.0, 0.5, -0.05, std::nullopt},
    };
    return sc;
}

inline bool is_case_id(const std::string& id) {
    return id == "a1" || id == "a2" || id == "a3" || id == "a4" || id == "b1";
}

inline CaseStudy make_case(const std::string& id) {
    CaseStudy cs;
    cs.id = id;
    cs.verification = VerificationSettings{};
    if (id == "a1") {
        cs.title = "basic DVPP under grid frequency and voltage dips";
        cs.module = basic_module();
        cs.scenario = grid_dip_scenario();
        return cs;
    }
    if (id == "a2") {
        cs.title = "DER coordination sweep with power limits";
        cs.module = basic_module();
        cs.scenario = grid_dip_scenario(8.0);
        // a deeper dip so the battery limit binds for small supercap time
        // constants while the supercap stays inside its own limit
        cs.scenario.events = {{EventKind::grid_frequency_dip, 1.0, 1.0, -0.05, std::nullopt}};
        cs.scenario.enable_limits = true;
        cs.sweep_tau_sc = {0.0, 0.1, 0.2, 0.3, 0.4};
        return cs;
    }
    if (id == "a3") {
        cs.title = "multi-DC-bus DVPP: PV split behind a DC sub-bus";
        cs.module = basic_module();
        ChildSpec child;
        child.attachment = "pv";
        child.module.kind = ModuleKind::dc_coupled_dc_output;
        child.module.desired.t_vdcvdc = TransferFunction::gain(1.0);
        child.module.devices = split_pv_devices();
        child.module.devices.push_back({"dccaps1", false, AssignmentKind::pre_assigned,
                                        capacitor_tf(kBus1CapPu), 0.0, std::nullopt,
                                        std::nullopt});
        cs.module.children.push_back(std::move(child));
        cs.scenario = grid_dip_scenario();
        cs.scenario.events = {{EventKind::grid_frequency_dip, 1.0, 0.5, -0.01, std::nullopt}};
        return cs;
    }
    if (id == "a4") {
        cs.title = "AC/DC hybrid DVPP: PV pair behind an AC sub-bus";
        cs.module = basic_module();
        ChildSpec child;
        child.attachment = "pv";
        child.module.kind = ModuleKind::ac_coupled_dc_output;
        child.module.desired.t_vdcf = desired_t_vdcf();
        child.module.desired.t_vq = desired_t_vq();
        child.module.devices = split_pv_devices();
        cs.module.children.push_back(std::move(child));
        cs.scenario = grid_dip_scenario();
        cs.scenario.events = {{EventKind::grid_frequency_dip, 1.0, 0.5, -0.01, std::nullopt}};
        return cs;
    }
    if (id == "b1") {
        cs.title = "load step at the output terminal with the bulk grid present";
        cs.module = basic_module();
        cs.scenario = grid_dip_scenario(8.0);
        cs.scenario.events = {{EventKind::load_step, 2.0, 0.0, 0.05, 3.5}};
        cs.note =
            "load disturbance applied as a 0.05 pu draw at the output terminal "
            "(5 MW referred to a 100 MVA feeder base; the converter-base value of "
            "5 pu exceeds the plant rating, so the terminal draw is scaled to 0.05 pu)";
        return cs;
    }
    throw std::invalid_argument("unknown case id '" + id + "' (expected a1|a2|a3|a4|b1)");
}

}  // namespace dvpp::cases
