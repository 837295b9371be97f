#include <catch2/catch_amalgamated.hpp>

#include "dvpp/design.hpp"
#include "helpers.hpp"

using namespace dvpp;
using testutil::coeffs_close;
using testutil::tf_close;
using testutil::tf_equal_value;

namespace {

TransferFunction t_fp_des() { return TransferFunction({-1.0}, {5.0, 25.0}); }
TransferFunction t_vq_des() { return TransferFunction({-0.2}, {0.01, 1.0}); }
TransferFunction t_vdcf_des() { return TransferFunction::gain(10.0); }

// Supercap + battery + reserved PV on one DC bus, with the bus capacitors
// as the fixed device. Per-unit capacitance 0.0608 s lumps the main bus
// capacitor with the three converter-side ones.
std::vector<DeviceSpec> a1_roster(double tau_sc = 0.2) {
    DeviceSpec caps{"dccaps", false, AssignmentKind::pre_assigned, capacitor_tf(0.0608),
                    0.0, std::nullopt, std::nullopt};
    DeviceSpec sc{"sc", true, AssignmentKind::pre_assigned,
                  TransferFunction({-tau_sc, 0.0}, {1.0}), 0.0, 0.3, std::nullopt};
    DeviceSpec pv{"pv", true, AssignmentKind::dpf, TransferFunction({0.7}, {0.5, 1.0}),
                  0.5, 0.7, std::nullopt};
    DeviceSpec bess{"bess", true, AssignmentKind::residual, std::nullopt, 0.0, 0.3,
                    std::nullopt};
    return {caps, sc, pv, bess};
}

ModuleSpec a1_module(double tau_sc = 0.2) {
    ModuleSpec m;
    m.kind = ModuleKind::dc_coupled_ac_output;
    m.desired.t_fp = t_fp_des();
    m.desired.t_vq = t_vq_des();
    m.desired.t_vdcf = t_vdcf_des();
    m.devices = a1_roster(tau_sc);
    return m;
}

TransferFunction sum_in_convention(const std::vector<DeviceAssignment>& set,
                                   AggregationConvention conv) {
    TransferFunction acc;
    for (const auto& a : set)
        acc = acc + (conv == AggregationConvention::sum_of_inverse ? invert(a.t) : a.t);
    return acc;
}

}  // namespace

TEST_CASE("aggregation targets follow the module kind") {
    DesiredBehavior d;
    d.t_fp = t_fp_des();
    d.t_vdcf = t_vdcf_des();

    auto dcac = target_aggregate(ModuleKind::dc_coupled_ac_output, d);
    CHECK(dcac.convention == AggregationConvention::sum_of_tf);
    CHECK(tf_close(dcac.target, TransferFunction({-0.5, -2.5}, {1.0}), 1e-12));

    auto acac = target_aggregate(ModuleKind::ac_coupled_ac_output, d);
    CHECK(acac.convention == AggregationConvention::sum_of_inverse);
    CHECK(tf_close(acac.target, TransferFunction({-5.0, -25.0}, {1.0}), 1e-12));

    DesiredBehavior ddc;
    ddc.t_vdcvdc = TransferFunction::gain(1.0);
    ddc.t_pvdc = TransferFunction({-1.3, -0.4}, {1.0, 2.0});
    auto dcdc = target_aggregate(ModuleKind::dc_coupled_dc_output, ddc);
    CHECK(dcdc.convention == AggregationConvention::sum_of_tf);
    CHECK(tf_close(dcdc.target, *ddc.t_pvdc, 1e-12));

    DesiredBehavior acdc;
    acdc.t_vdcf = t_vdcf_des();
    acdc.t_pvdc = ddc.t_pvdc;
    auto r = target_aggregate(ModuleKind::ac_coupled_dc_output, acdc);
    CHECK(r.convention == AggregationConvention::sum_of_inverse);
    CHECK(tf_equal_value(r.target, TransferFunction::gain(10.0) * *acdc.t_pvdc, 1e-12));

    DesiredBehavior missing;
    missing.t_fp = t_fp_des();
    missing.t_vq = t_vq_des();
    CHECK_THROWS_WITH(target_aggregate(ModuleKind::dc_coupled_ac_output, missing),
                      Catch::Matchers::ContainsSubstring("t_vdcf"));
}

TEST_CASE("capacitor dynamics in per-unit") {
    // 0.08 F at 800 V on a 1 MVA base: c_pu = 0.08 * 800^2 / 1e6 = 0.0512 s
    CHECK(tf_close(capacitor_tf(0.0512), TransferFunction({-0.0256, 0.0}, {1.0}), 1e-15));
    CHECK(capacitor_tf(0.0).is_zero());
    CHECK_THROWS_AS(capacitor_tf(-1.0), std::invalid_argument);
}

TEST_CASE("residual participation factor completes the sum to one") {
    auto m_pv = TransferFunction({0.7}, {0.5, 1.0});
    auto res = dpf_residual({m_pv});
    CHECK(tf_close(res, TransferFunction({0.5, 0.3}, {0.5, 1.0}), 1e-14));

    CHECK(tf_close(dpf_residual({}), TransferFunction::gain(1.0), 0.0));
    CHECK(dpf_residual({TransferFunction::gain(1.0)}).is_zero());

    std::mt19937 rng(1234);
    for (int i = 0; i < 50; ++i) {
        std::vector<TransferFunction> ms;
        const int n = 1 + static_cast<int>(rng() % 3);
        for (int k = 0; k < n; ++k)
            ms.push_back(std::uniform_real_distribution<double>(0.05, 0.4)(rng) *
                         TransferFunction({1.0}, {std::uniform_real_distribution<double>(
                                                      0.05, 2.0)(rng),
                                                  1.0}));
        auto r = dpf_residual(ms);
        TransferFunction total = r;
        for (const auto& m : ms) total = total + m;
        CHECK(tf_close(total, TransferFunction::gain(1.0), 1e-12));
    }
}

TEST_CASE("A1 disaggregation reproduces the published split") {
    auto target = target_aggregate(ModuleKind::dc_coupled_ac_output, a1_module().desired);
    auto set = disaggregate(target.target, target.convention, a1_roster());
    REQUIRE(set.size() == 4);

    auto t_bp = TransferFunction({-0.2696, -2.5}, {1.0});  // collective battery+pv
    CHECK(tf_close(set[1].t, TransferFunction({-0.2, 0.0}, {1.0}), 1e-14));
    CHECK(tf_equal_value(set[2].t, TransferFunction({0.7}, {0.5, 1.0}) * t_bp, 1e-12));
    CHECK(tf_equal_value(set[3].t, TransferFunction({0.5, 0.3}, {0.5, 1.0}) * t_bp, 1e-12));

    // causalized forms are realizable
    for (std::size_t i = 1; i < set.size(); ++i) {
        CHECK(set[i].t_causalized.is_proper());
        CHECK(analyze(set[i].t_causalized).is_stable);
    }
    // the capacitor keeps its physical (improper) dynamics
    CHECK(tf_close(set[0].t_causalized, capacitor_tf(0.0608), 0.0));

    // exact re-aggregation
    auto sum = sum_in_convention(set, target.convention);
    CHECK(tf_close(sum, target.target, 1e-9));
}

TEST_CASE("single controllable device inherits the whole target") {
    DeviceSpec only{"one", true, AssignmentKind::residual, std::nullopt, 0.0, std::nullopt,
                    std::nullopt};
    auto target = TransferFunction({-0.5, -2.5}, {1.0});
    auto set = disaggregate(target, AggregationConvention::sum_of_tf, {only});
    REQUIRE(set.size() == 1);
    CHECK(tf_close(set[0].t, target, 1e-14));
}

TEST_CASE("two equal static factors split the target in half") {
    DeviceSpec d1{"d1", true, AssignmentKind::dpf, TransferFunction::gain(0.5), 0.0,
                  std::nullopt, std::nullopt};
    DeviceSpec d2 = d1;
    d2.name = "d2";
    auto target = TransferFunction({-0.5, -2.5}, {1.0});
    auto set = disaggregate(target, AggregationConvention::sum_of_tf, {d1, d2});
    CHECK(tf_close(set[0].t, TransferFunction({-0.25, -1.25}, {1.0}), 1e-14));
    CHECK(tf_close(set[1].t, set[0].t, 0.0));
}

TEST_CASE("participation deficit is rejected when no residual exists") {
    DeviceSpec d1{"d1", true, AssignmentKind::dpf, TransferFunction::gain(0.5), 0.0,
                  std::nullopt, std::nullopt};
    DeviceSpec d2{"d2", true, AssignmentKind::dpf, TransferFunction::gain(0.4), 0.0,
                  std::nullopt, std::nullopt};
    auto target = TransferFunction({-0.5, -2.5}, {1.0});
    CHECK_THROWS_WITH(disaggregate(target, AggregationConvention::sum_of_tf, {d1, d2}),
                      Catch::Matchers::ContainsSubstring("participation deficit"));

    DeviceSpec bad{"bad", true, AssignmentKind::dpf,
                   TransferFunction({1.0, 0.0}, {1.0}), 0.0, std::nullopt, std::nullopt};
    CHECK_THROWS_WITH(disaggregate(target, AggregationConvention::sum_of_tf, {bad}),
                      Catch::Matchers::ContainsSubstring("improper"));

    DeviceSpec unstable{"u", true, AssignmentKind::dpf,
                        TransferFunction({1.0}, {1.0, -2.0}), 0.0, std::nullopt,
                        std::nullopt};
    CHECK_THROWS_WITH(disaggregate(target, AggregationConvention::sum_of_tf, {unstable}),
                      Catch::Matchers::ContainsSubstring("unstable"));

    DeviceSpec r1{"r1", true, AssignmentKind::residual, std::nullopt, 0.0, std::nullopt,
                  std::nullopt};
    DeviceSpec r2 = r1;
    r2.name = "r2";
    CHECK_THROWS_WITH(disaggregate(target, AggregationConvention::sum_of_tf, {r1, r2}),
                      Catch::Matchers::ContainsSubstring("residual"));
}

TEST_CASE("re-aggregation is exact for all four kinds on random designs") {
    std::mt19937 rng(90210);
    std::uniform_real_distribution<double> frac(0.1, 0.45);
    for (int kind_i = 0; kind_i < 4; ++kind_i) {
        auto kind = static_cast<ModuleKind>(kind_i);
        for (int trial = 0; trial < 20; ++trial) {
            DesiredBehavior d;
            d.t_fp = -1.0 * testutil::random_stable_tf(rng, 2, true);
            d.t_vq = -1.0 * testutil::random_stable_tf(rng, 1);
            d.t_vdcf = TransferFunction::gain(
                std::uniform_real_distribution<double>(2.0, 20.0)(rng));
            d.t_pvdc = -1.0 * testutil::random_stable_tf(rng, 2);
            d.t_vdcvdc = TransferFunction::gain(1.0);
            auto agg = target_aggregate(kind, d);

            std::vector<DeviceSpec> roster;
            roster.push_back({"fixed", false, AssignmentKind::pre_assigned,
                              capacitor_tf(frac(rng) * 0.1), 0.0, std::nullopt,
                              std::nullopt});
            roster.push_back({"m1", true, AssignmentKind::dpf,
                              TransferFunction({frac(rng)}, {frac(rng), 1.0}), 0.0,
                              std::nullopt, std::nullopt});
            roster.push_back({"m2", true, AssignmentKind::dpf,
                              TransferFunction::gain(frac(rng)), 0.0, std::nullopt,
                              std::nullopt});
            roster.push_back({"rest", true, AssignmentKind::residual, std::nullopt, 0.0,
                              std::nullopt, std::nullopt});
            if (agg.convention == AggregationConvention::sum_of_inverse)
                roster.erase(roster.begin());  // keep inverse sums invertible

            auto set = disaggregate(agg.target, agg.convention, roster);
            auto sum = sum_in_convention(set, agg.convention);
            // over a common denominator, sum - target must be the zero
            // rational function relative to the participating magnitudes
            auto lhs = poly::mul(sum.num(), agg.target.den());
            auto rhs = poly::mul(agg.target.num(), sum.den());
            double scale = 1.0;
            for (double c : lhs) scale = std::max(scale, std::abs(c));
            for (double c : rhs) scale = std::max(scale, std::abs(c));
            auto resid = poly::sub(lhs, rhs);
            for (double c : resid) CHECK(std::abs(c) <= 1e-9 * scale);
        }
    }
}

TEST_CASE("causalization keeps the band of interest within five percent") {
    auto target = target_aggregate(ModuleKind::dc_coupled_ac_output, a1_module().desired);
    auto set = disaggregate(target.target, target.convention, a1_roster());
    for (const auto& a : set) {
        if (!a.device.controllable) continue;
        for (double w : log_grid(1e-3, 1.0, 40)) {
            auto v0 = a.t(Complex(0, w));
            auto v1 = a.t_causalized(Complex(0, w));
            CHECK(std::abs(v1 - v0) / std::max(std::abs(v0), 1e-12) <= 0.05);
        }
    }
}

TEST_CASE("modular design: two PV units behind a DC sub-bus split 7:3") {
    ModuleSpec spec = a1_module();
    ChildSpec child;
    child.attachment = "pv";
    child.module.kind = ModuleKind::dc_coupled_dc_output;
    child.module.desired.t_vdcvdc = TransferFunction::gain(1.0);
    child.module.devices = {
        {"pv1", true, AssignmentKind::dpf, TransferFunction::gain(0.7), 0.35, 0.49,
         std::nullopt},
        {"pv2", true, AssignmentKind::dpf, TransferFunction::gain(0.3), 0.15, 0.21,
         std::nullopt},
    };
    spec.children.push_back(child);

    auto plan = design_modular(spec);
    REQUIRE(plan.root.children.size() == 1);
    const auto& sub = plan.root.children[0];
    REQUIRE(sub.devices.size() == 2);
    REQUIRE(sub.central.has_value());
    CHECK(sub.central->role == ConverterRole::central_dcdc);

    auto t_bp = TransferFunction({-0.2696, -2.5}, {1.0});
    auto t_pv = TransferFunction({0.7}, {0.5, 1.0}) * t_bp;
    CHECK(tf_equal_value(sub.devices[0].t, 0.7 * t_pv, 1e-11));
    CHECK(tf_equal_value(sub.devices[1].t, 0.3 * t_pv, 1e-11));
    CHECK(tf_equal_value(sub.central->t, t_pv, 1e-11));

    // flattened leaves still satisfy the top-level aggregation condition
    TransferFunction sum = capacitor_tf(0.0608);
    for (const auto& cdev : plan.root.devices) sum = sum + cdev.t;
    for (const auto& cdev : sub.devices) sum = sum + cdev.t;
    CHECK(tf_close(sum, plan.root.target, 1e-9));
}

TEST_CASE("modular design: AC-coupled PV pair satisfies the inverse condition") {
    ModuleSpec spec = a1_module();
    ChildSpec child;
    child.attachment = "pv";
    child.module.kind = ModuleKind::ac_coupled_dc_output;
    child.module.desired.t_vdcf = t_vdcf_des();
    child.module.desired.t_vq = t_vq_des();
    child.module.devices = {
        {"pv1", true, AssignmentKind::dpf, TransferFunction::gain(0.7), 0.35, 0.49,
         std::nullopt},
        {"pv2", true, AssignmentKind::dpf, TransferFunction::gain(0.3), 0.15, 0.21,
         std::nullopt},
    };
    spec.children.push_back(child);

    auto plan = design_modular(spec);
    const auto& sub = plan.root.children[0];
    REQUIRE(sub.central.has_value());
    CHECK(sub.central->role == ConverterRole::central_rectifier);
    REQUIRE(sub.devices.size() == 2);
    CHECK(sub.devices[0].role == ConverterRole::der_inverter);

    auto t_bp = TransferFunction({-0.2696, -2.5}, {1.0});
    auto t_pv = TransferFunction({0.7}, {0.5, 1.0}) * t_bp;
    auto target_inv = TransferFunction::gain(10.0) * t_pv;  // sum of T_i^{-1}
    auto sum_inv = invert(sub.devices[0].t) + invert(sub.devices[1].t);
    CHECK(tf_equal_value(sum_inv, target_inv, 1e-9));
    // 7:3 power proportion
    CHECK(tf_equal_value(invert(sub.devices[0].t), 0.7 * target_inv, 1e-11));
}

TEST_CASE("single-level tree matches plain disaggregation") {
    auto plan = design_modular(a1_module());
    auto target = target_aggregate(ModuleKind::dc_coupled_ac_output, a1_module().desired);
    auto set = disaggregate(target.target, target.convention, a1_roster());
    REQUIRE(plan.root.devices.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(plan.root.devices[i].name == set[i + 1].device.name);
        CHECK(tf_close(plan.root.devices[i].t, set[i + 1].t, 0.0));
    }
    REQUIRE(plan.root.central.has_value());
    CHECK(plan.root.central->role == ConverterRole::central_inverter);
    // option A realizes the inverse matching behavior, a 0.1 gain
    CHECK(tf_close(plan.root.central->t_implemented, TransferFunction::gain(0.1), 1e-14));
}

TEST_CASE("every implemented controller in a plan is realizable") {
    for (auto der : {DerOption::dc_grid_supporting, DerOption::dc_grid_forming}) {
        auto plan = design_modular(a1_module(), CentralOption::ac_dc_matching, der);
        plan.for_each_converter([&](const ConverterPlan& c) {
            auto rep = analyze(c.t_implemented);
            CHECK(rep.is_proper);
            CHECK((rep.is_stable || rep.is_marginally_stable));
            if (!rep.is_stable) CHECK(c.marginal);
        });
    }
}

TEST_CASE("grid-forming option accepts the supercap integrator as marginal") {
    auto plan = design_modular(a1_module(), CentralOption::ac_dc_matching,
                               DerOption::dc_grid_forming);
    const auto& sc = plan.root.devices[0];
    REQUIRE(sc.name == "sc");
    CHECK(sc.marginal);
    // T_sc^{-1} = -1/(0.2 s), already proper, no filter added
    CHECK(tf_close(sc.t_implemented, TransferFunction({-1.0}, {0.2, 0.0}), 1e-14));
}

TEST_CASE("invalid trees are rejected") {
    ModuleSpec spec = a1_module();
    ChildSpec child;
    child.attachment = "pv";
    child.module.kind = ModuleKind::ac_coupled_ac_output;  // AC output cannot attach
    child.module.desired.t_fp = t_fp_des();
    child.module.desired.t_vq = t_vq_des();
    child.module.devices = {{"x", true, AssignmentKind::residual, std::nullopt, 0.0,
                             std::nullopt, std::nullopt}};
    spec.children.push_back(child);
    CHECK_THROWS_WITH(design_modular(spec), Catch::Matchers::ContainsSubstring("DC output"));

    ModuleSpec ghost = a1_module();
    ChildSpec orphan;
    orphan.attachment = "nosuch";
    orphan.module.kind = ModuleKind::dc_coupled_dc_output;
    ghost.children.push_back(orphan);
    CHECK_THROWS_AS(design_modular(ghost), DesignError);

    // unstable pre-assigned behavior surfaces with the converter name
    ModuleSpec bad = a1_module();
    bad.devices[1].tf = TransferFunction({1.0}, {1.0, -1.0});
    CHECK_THROWS_WITH(design_modular(bad), Catch::Matchers::ContainsSubstring("sc"));
}
