#pragma once

#include "safelink/protocol.hpp"
#include "safelink/sim.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace safelink::gate
{

using protocol::EStopCommand;
using sim::SimTime;
using namespace std::chrono_literals;

enum class Branch : std::uint8_t
{
    Drive = 0,
    Flippers = 1,
    Manipulator = 2,
};

inline constexpr std::size_t kBranchCount = 3;
inline constexpr std::array<Branch, kBranchCount> kAllBranches{Branch::Drive, Branch::Flippers, Branch::Manipulator};

constexpr std::size_t index(Branch b) noexcept { return static_cast<std::size_t>(b); }
std::string_view to_string(Branch b) noexcept;

/// NTC-style inrush limiter: R(t) = r_hot + (r_cold - r_hot) * exp(-t / tau).
struct LimiterConfig
{
    double r_cold_ohm = 5.0;
    double r_hot_ohm = 0.05;
    SimTime tau = 100ms;
};

/// Per-branch load: input capacitance in parallel with the steady-state load
/// resistance.
struct BranchLoad
{
    double capacitance_f = 4700e-6;
    double resistance_ohm = 4.8;
    bool has_limiter = false;
};

/// Electrical constants of the E-Stop board. These are modelling choices,
/// not measured values.
struct GateConfig
{
    double bus_voltage_v = 24.0;
    /// Switch on-resistance plus wiring, in series with every branch.
    double source_resistance_ohm = 0.1;
    double trip_threshold_a = 20.0;
    /// Current must stay above the threshold this long before the switch latches off.
    SimTime trip_time = 1ms;
    LimiterConfig limiter;
    std::array<BranchLoad, kBranchCount> loads{{
        {470e-6, 4.8, false},  // drive: motor controllers, small input capacitance
        {4700e-6, 4.8, true},  // flippers
        {4700e-6, 4.8, true},  // manipulator
    }};
    /// Integration step while any branch is in transient.
    SimTime step = 100us;
    /// The drive output counts as powered at this fraction of the bus voltage.
    double output_threshold = 0.9;
    std::size_t hardware_buttons = 2;

    void validate() const;
};

nlohmann::ordered_json to_json(const GateConfig& config);
GateConfig gate_config_from_json(const nlohmann::json& j);
GateConfig load_gate_config(const std::filesystem::path& path);

double limiter_resistance(const LimiterConfig& limiter, SimTime since_on) noexcept;

struct InrushLimiterState
{
    double series_resistance_ohm = 0.0;
};

struct SwitchState
{
    Branch branch = Branch::Drive;
    bool conducting = false;
    bool latched_fault = false;
    double reported_current_a = 0.0;
    double output_voltage_v = 0.0;
    std::optional<InrushLimiterState> limiter;
};

struct GateState
{
    bool mcu_enable_pin = false;
    /// true = pressed = open circuit
    std::vector<bool> hw_buttons;
    bool motion_inhibit = true;
    EStopCommand command = EStopCommand::HardStop;
    std::array<SwitchState, kBranchCount> branches{};
};

struct TransientSample
{
    SimTime time{0};
    Branch branch = Branch::Drive;
    double current_a = 0.0;
    double voltage_v = 0.0;
};

/// CSV with header `time_us,branch,current_a,voltage_v`.
std::string transient_csv(const std::vector<TransientSample>& samples);

/// E-Stop board: MCU enable pin in series with the hardware button chain,
/// one high-side switch per branch with overcurrent latch, inrush limiters on
/// the flipper and manipulator lines.
///
/// Electrical state is integrated with fixed steps (GateConfig::step) only
/// while a conducting branch is in transient. Switched-off branches discharge
/// analytically and settled branches track their quasi-static operating point.
class PowerGate
{
public:
    explicit PowerGate(GateConfig config = {});

    const GateConfig& config() const noexcept { return config_; }
    SimTime now() const noexcept { return now_; }

    /// HardStop drops the enable pin and opens every switch; SoftStop keeps the
    /// pin as is and only inhibits motion; Run raises the pin.
    GateState apply(EStopCommand cmd, SimTime now);

    GateState set_button(std::size_t button, bool pressed, SimTime now);

    /// Clears a latched fault; conduction resumes only if the enable chain
    /// allows it. No-op on a healthy branch.
    SwitchState reset_fault(Branch branch, SimTime now);

    /// Latches an overcurrent fault as if the switch had tripped.
    void inject_fault(Branch branch, SimTime now);

    /// Advances by dt (> 0) and returns the reported branch currents.
    std::array<double, kBranchCount> step(SimTime dt);

    /// Steps up to `now` in increments of at most config().step.
    void advance_to(SimTime now);

    /// True while an integration step is needed: a conducting branch is in
    /// transient or the drive output sense has not caught up.
    bool needs_step() const;

    /// Drive output sense: turns on at the first step where the drive switch
    /// conducts and its output reaches output_threshold * bus voltage, turns
    /// off at the first step where the output falls below that level.
    bool output_on() const noexcept { return output_on_; }
    std::optional<SimTime> last_output_change() const noexcept { return last_output_change_; }

    GateState state() const;
    SwitchState switch_state(Branch branch) const;
    double output_voltage(Branch branch) const;
    /// Largest current reported since the branch last switched on.
    double peak_current(Branch branch) const noexcept { return branches_[index(branch)].peak; }
    /// Largest capacitor charging current (switch current minus the load's
    /// resistive share) since the branch last switched on. This is the surge
    /// the limiter bounds; the steady load current is not part of it.
    double inrush_peak_current(Branch branch) const noexcept { return branches_[index(branch)].inrush_peak; }
    bool conduction_permitted() const noexcept;

    void record_trace(bool on) noexcept { tracing_ = on; }
    const std::vector<TransientSample>& trace() const noexcept { return trace_; }

private:
    enum class Mode : std::uint8_t
    {
        Off,       // analytic RC discharge through the load
        Stepped,   // integrated
        Tracking,  // settled onto the quasi-static operating point
    };

    struct BranchSim
    {
        Mode mode = Mode::Off;
        bool latched_fault = false;
        double v = 0.0;
        SimTime v_time{0};
        SimTime on_since{0};
        std::optional<SimTime> over_since;
        double current = 0.0;
        double peak = 0.0;
        double inrush_peak = 0.0;
    };

    bool conducting(const BranchSim& b) const noexcept { return b.mode != Mode::Off; }
    double path_resistance(Branch branch, SimTime t) const noexcept;
    double quasi_static_voltage(Branch branch, SimTime t) const noexcept;
    double voltage_at(Branch branch, SimTime t) const noexcept;
    void update_conduction();
    void switch_on(Branch branch);
    void switch_off(Branch branch);
    void check_trip(Branch branch);
    void update_output_sense();
    void sample_trace();

    GateConfig config_;
    SimTime now_{0};
    bool pin_ = false;
    bool motion_inhibit_ = true;
    EStopCommand command_ = EStopCommand::HardStop;
    std::vector<bool> buttons_;
    std::array<BranchSim, kBranchCount> branches_{};
    bool output_on_ = false;
    std::optional<SimTime> last_output_change_;
    bool tracing_ = false;
    std::vector<TransientSample> trace_;
};

/// Time from a Run command on a fresh, discharged gate until the drive output
/// sense reports power.
SimTime settling_time(const GateConfig& config = {});

} // namespace safelink::gate
