#include "safelink/power_gate.hpp"
#include "safelink/random.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

using namespace safelink::gate;
using namespace std::chrono_literals;

namespace
{

bool all_conducting(const GateState& s)
{
    for (const auto& b : s.branches)
    {
        if (!b.conducting)
        {
            return false;
        }
    }
    return true;
}

bool any_conducting(const GateState& s)
{
    for (const auto& b : s.branches)
    {
        if (b.conducting)
        {
            return true;
        }
    }
    return false;
}

GateConfig unlimited_bulk_drive()
{
    GateConfig c;
    c.loads[index(Branch::Drive)] = BranchLoad{4700e-6, 4.8, false};
    return c;
}

} // namespace

TEST_CASE("command semantics")
{
    PowerGate g;
    auto s = g.apply(EStopCommand::Run, 0ms);
    CHECK(s.mcu_enable_pin);
    CHECK_FALSE(s.motion_inhibit);
    CHECK(all_conducting(s));

    s = g.apply(EStopCommand::SoftStop, 10ms);
    CHECK(s.mcu_enable_pin);
    CHECK(s.motion_inhibit);
    CHECK(all_conducting(s));

    s = g.apply(EStopCommand::HardStop, 20ms);
    CHECK_FALSE(s.mcu_enable_pin);
    CHECK_FALSE(any_conducting(s));

    // SoftStop does not raise a dropped pin
    s = g.apply(EStopCommand::SoftStop, 30ms);
    CHECK_FALSE(s.mcu_enable_pin);
    CHECK_FALSE(any_conducting(s));
}

TEST_CASE("an open hardware button blocks conduction despite the pin")
{
    PowerGate g;
    g.set_button(1, true, 0ms);
    auto s = g.apply(EStopCommand::Run, 1ms);
    CHECK(s.mcu_enable_pin);
    CHECK_FALSE(any_conducting(s));
    s = g.set_button(1, false, 2ms);
    CHECK(all_conducting(s));
    CHECK_THROWS_AS(g.set_button(2, true, 3ms), std::out_of_range);
}

TEST_CASE("limited branch: switch-on current is bus over the series resistance")
{
    PowerGate g;
    g.apply(EStopCommand::Run, 0ms);
    // discharged capacitor: the whole bus drops over R_cold + R_source
    const double expected = 24.0 / (5.0 + 0.1);
    CHECK(g.peak_current(Branch::Flippers) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(g.inrush_peak_current(Branch::Flippers) == doctest::Approx(expected).epsilon(1e-12));
    for (int i = 0; i < 5000; ++i)
    {
        g.step(100us);
        const auto s = g.switch_state(Branch::Flippers);
        CHECK(s.reported_current_a - s.output_voltage_v / 4.8 <= 24.0 / 5.0);
    }
    CHECK(g.inrush_peak_current(Branch::Flippers) <= 24.0 / 5.0);
    // the load current rises as the limiter heats and ends above V / R_cold
    const double r500 = limiter_resistance(LimiterConfig{}, 500ms);
    CHECK(g.peak_current(Branch::Flippers) == doctest::Approx(24.0 / (0.1 + r500 + 4.8)).epsilon(1e-3));
    CHECK(g.peak_current(Branch::Flippers) > 24.0 / 5.0);
    CHECK_FALSE(g.switch_state(Branch::Flippers).latched_fault);
    CHECK_FALSE(g.switch_state(Branch::Manipulator).latched_fault);
}

TEST_CASE("unlimited bulk capacitance trips, the same load with limiter does not")
{
    // Analytic oracle for the unlimited branch: with R = 0.1 ohm source and
    // C = 4700 uF || 4.8 ohm, i(t) = (24 - v(t)) / 0.1 where
    // v(t) = 23.5102 (1 - exp(-t / 0.4604 ms)). i stays above 20 A until
    // t = 1.264 ms, longer than the 1 ms trip time.
    const double v_inf = 24.0 * 4.8 / 4.9;
    const double tau_s = 4700e-6 * 0.1 * 4.8 / 4.9;
    const double t_cross = -tau_s * std::log(1.0 - 22.0 / v_inf);
    REQUIRE(t_cross == doctest::Approx(1.264e-3).epsilon(1e-3));

    PowerGate g(unlimited_bulk_drive());
    g.apply(EStopCommand::Run, 0ms);
    CHECK(g.peak_current(Branch::Drive) == doctest::Approx(240.0));
    g.advance_to(990us);
    CHECK_FALSE(g.switch_state(Branch::Drive).latched_fault);
    g.advance_to(1000us);
    CHECK(g.switch_state(Branch::Drive).latched_fault);
    CHECK_FALSE(g.switch_state(Branch::Drive).conducting);
    g.advance_to(2s);
    CHECK_FALSE(g.switch_state(Branch::Flippers).latched_fault);
    CHECK(g.switch_state(Branch::Flippers).conducting);
}

TEST_CASE("default drive branch settles without tripping")
{
    // 470 uF: tau = 46 us, 90 % of the bus reached at ~116 us, sensed on the
    // second 100 us step
    CHECK(settling_time() == 200us);
    PowerGate g;
    g.apply(EStopCommand::Run, 0ms);
    g.advance_to(1s);
    CHECK_FALSE(g.switch_state(Branch::Drive).latched_fault);
    CHECK(g.output_on());
}

TEST_CASE("steady state current within 1 % after five time constants")
{
    PowerGate g;
    g.apply(EStopCommand::Run, 0ms);
    // slowest constant is the limiter's 100 ms decay
    g.advance_to(500ms);
    const auto s = g.switch_state(Branch::Manipulator);
    const double expected = 24.0 / (0.1 + 0.05 + 4.8);
    CHECK(std::abs(s.reported_current_a - expected) / expected < 0.01);
    const auto d = g.switch_state(Branch::Drive);
    CHECK(std::abs(d.reported_current_a - 24.0 / 4.9) / (24.0 / 4.9) < 0.01);
    CHECK_FALSE(g.needs_step());
}

TEST_CASE("output sense switches off after the capacitor drops below threshold")
{
    PowerGate g;
    g.apply(EStopCommand::Run, 0ms);
    g.advance_to(1s);
    REQUIRE(g.output_on());
    g.apply(EStopCommand::HardStop, 1s);
    CHECK(g.output_on());
    CHECK(g.needs_step());
    // 23.51 V * exp(-t / 2.256 ms) falls below 21.6 V at t = 191 us
    g.advance_to(1s + 100us);
    CHECK(g.output_on());
    g.advance_to(1s + 200us);
    CHECK_FALSE(g.output_on());
    CHECK(g.last_output_change() == 1s + 200us);
}

TEST_CASE("fault reset")
{
    SUBCASE("command Run: conducting after reset")
    {
        PowerGate g;
        g.apply(EStopCommand::Run, 0ms);
        g.inject_fault(Branch::Manipulator, 1ms);
        CHECK_FALSE(g.switch_state(Branch::Manipulator).conducting);
        const auto s = g.reset_fault(Branch::Manipulator, 2ms);
        CHECK(s.conducting);
        CHECK_FALSE(s.latched_fault);
    }
    SUBCASE("command HardStop: cleared but not conducting")
    {
        PowerGate g;
        g.inject_fault(Branch::Flippers, 0ms);
        const auto s = g.reset_fault(Branch::Flippers, 1ms);
        CHECK_FALSE(s.latched_fault);
        CHECK_FALSE(s.conducting);
    }
    SUBCASE("idempotent")
    {
        PowerGate g;
        g.apply(EStopCommand::Run, 0ms);
        g.inject_fault(Branch::Drive, 1ms);
        const auto a = g.reset_fault(Branch::Drive, 2ms);
        const auto b = g.reset_fault(Branch::Drive, 2ms);
        CHECK(a.conducting == b.conducting);
        CHECK(a.latched_fault == b.latched_fault);
    }
}

TEST_CASE("a latched fault survives command cycling")
{
    PowerGate g;
    g.apply(EStopCommand::Run, 0ms);
    g.inject_fault(Branch::Drive, 5ms);
    for (int i = 0; i < 10; ++i)
    {
        g.apply(EStopCommand::HardStop, SimTime{10'000 + i * 2000});
        g.apply(EStopCommand::Run, SimTime{11'000 + i * 2000});
        CHECK(g.switch_state(Branch::Drive).latched_fault);
        CHECK_FALSE(g.switch_state(Branch::Drive).conducting);
    }
}

TEST_CASE("limiter resistance decays from cold to hot")
{
    const LimiterConfig l;
    CHECK(limiter_resistance(l, 0ms) == doctest::Approx(5.0));
    CHECK(limiter_resistance(l, 100ms) == doctest::Approx(0.05 + 4.95 * std::exp(-1.0)));
    CHECK(limiter_resistance(l, 10s) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("step and configuration errors")
{
    PowerGate g;
    CHECK_THROWS_AS(g.step(0us), std::invalid_argument);
    g.advance_to(10ms);
    CHECK_THROWS_AS(g.advance_to(5ms), std::logic_error);
    GateConfig c;
    c.output_threshold = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = GateConfig{};
    c.step = 0us;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("gate config JSON round trip and file load")
{
    GateConfig c;
    c.bus_voltage_v = 28.0;
    c.limiter.r_cold_ohm = 4.0;
    const auto back = gate_config_from_json(nlohmann::json::parse(to_json(c).dump()));
    CHECK(back.bus_voltage_v == 28.0);
    CHECK(back.limiter.r_cold_ohm == 4.0);
    CHECK(back.loads[0].capacitance_f == c.loads[0].capacitance_f);
    CHECK(back.step == c.step);

    const auto shipped = load_gate_config(std::filesystem::path(SAFELINK_DATA_DIR) / "gate_constants.json");
    CHECK(to_json(shipped) == to_json(GateConfig{}));
}

TEST_CASE("transient trace CSV")
{
    PowerGate g;
    g.record_trace(true);
    g.apply(EStopCommand::Run, 0ms);
    g.advance_to(1ms);
    const auto csv = transient_csv(g.trace());
    std::istringstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "time_us,branch,current_a,voltage_v");
    CHECK(g.trace().size() >= 3 * 10);
}
