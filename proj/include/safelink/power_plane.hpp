#pragma once

#include "safelink/sim.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace safelink::pdb
{

using sim::SimTime;
using namespace std::chrono_literals;

enum class PackId : std::uint8_t
{
    A = 0,
    B = 1,
};

enum class SourceSelection : std::uint8_t
{
    External24V,
    PackA,
    PackB,
    NoSource,
};

std::string_view to_string(SourceSelection s) noexcept;
std::string_view to_string(PackId id) noexcept;

/// Two 4S packs in series per battery box.
inline constexpr std::size_t kCellsPerPack = 8;

/// Piecewise-linear open-circuit voltage per cell over state of charge.
struct OcvCurve
{
    /// (state of charge in [0, 1], volts), strictly increasing in both.
    std::vector<std::pair<double, double>> points{{0.0, 3.0}, {0.5, 3.7}, {1.0, 4.2}};

    double voltage(double soc) const;
    double soc_for_voltage(double volts) const;
    void validate() const;
};

struct PackConfig
{
    double capacity_mah = 6750.0;
    /// Whole pack (eight cells in series).
    double internal_resistance_ohm = 0.04;
    OcvCurve ocv;

    void validate() const;
};

/// Charge is tracked in integer nanocoulombs so draws and the remaining charge
/// balance exactly.
struct BatteryPack
{
    PackId id = PackId::A;
    PackConfig config;
    std::int64_t capacity_nc = 0;
    std::int64_t charge_nc = 0;
    std::int64_t drawn_nc = 0;
    double load_current_a = 0.0;
    std::array<double, kCellsPerPack> cell_offsets_v{};
    bool undervoltage = false;

    static BatteryPack full(PackId id, const PackConfig& config = {});
    /// Every cell at `cell_volts` open-circuit voltage.
    static BatteryPack at_cell_voltage(PackId id, double cell_volts, const PackConfig& config = {});

    double soc() const noexcept;
    double charge_remaining_mah() const noexcept;
    std::array<double, kCellsPerPack> cell_voltages() const;
    /// Terminal voltage: sum of the cell voltages under the present load.
    double pack_voltage() const;
};

std::int64_t mah_to_nc(double mah) noexcept;

/// Coulomb-counting step. Removes load_current * dt (rounded to whole nC)
/// from the pack, clamping at empty and flagging undervoltage.
BatteryPack discharge_step(BatteryPack pack, double load_current_a, SimTime dt);

struct PdbConfig
{
    double cell_warning_v = 3.3;
    double cell_cutoff_v = 3.0;
    double switch_hysteresis_v = 0.5;
    SimTime min_dwell = 1s;
    double aux_budget_w = 50.0;

    void validate() const;
};

struct PdbState
{
    SourceSelection selection = SourceSelection::NoSource;
    bool external_present = false;
    /// Last time the selected pack changed identity (A <-> B).
    std::optional<SimTime> last_switch_time;
    std::optional<PackId> last_pack;
    std::array<std::array<bool, kCellsPerPack>, 2> warnings{};
};

/// True when no cell is below the cutoff voltage.
bool eligible(const BatteryPack& pack, const PdbConfig& config);

/// Source-selection policy. External supply wins whenever present. Otherwise
/// the higher pack is used, but the board only moves between packs when the
/// other pack leads by more than the hysteresis and the minimum dwell has
/// elapsed, except when the current pack has dropped below cutoff. Equal
/// voltages keep the current pack. Pure: returns the next state.
PdbState select_source(const PdbState& state, std::span<const BatteryPack, 2> packs, bool external_present,
                       SimTime now, const PdbConfig& config = {});

struct CellEvent
{
    enum class Kind : std::uint8_t
    {
        Warning,
        Cutoff,
    };
    PackId pack = PackId::A;
    std::size_t cell = 0;
    Kind kind = Kind::Warning;
    double volts = 0.0;
};

struct MonitorReport
{
    std::array<std::array<bool, kCellsPerPack>, 2> warnings{};
    std::array<bool, 2> eligible{true, true};
    std::vector<CellEvent> events;
};

MonitorReport monitor_cells(std::span<const BatteryPack, 2> packs, const PdbConfig& config = {});

enum class AuxRail : std::uint8_t
{
    V5,
    V12,
};

struct AuxRequest
{
    AuxRail rail = AuxRail::V5;
    double watts = 0.0;
};

struct AuxRejection
{
    std::size_t index = 0;
    double requested_w = 0.0;
    double remaining_w = 0.0;
};

struct AuxDrawResult
{
    std::vector<bool> granted;
    std::vector<AuxRejection> rejected;

    bool all_granted() const noexcept { return rejected.empty(); }
};

/// Shared 5 V / 12 V budget. Grants accumulate until released.
class AuxRails
{
public:
    explicit AuxRails(double budget_w = 50.0);

    /// Requests are considered in order; each is granted if it still fits the
    /// remaining budget, otherwise rejected with the remaining budget.
    AuxDrawResult draw(std::span<const AuxRequest> requests);

    double used_w() const noexcept { return used_w_; }
    double remaining_w() const noexcept { return budget_w_ - used_w_; }
    double used_w(AuxRail rail) const noexcept { return per_rail_[static_cast<std::size_t>(rail)]; }
    void release_all() noexcept;

private:
    double budget_w_;
    double used_w_ = 0.0;
    std::array<double, 2> per_rail_{};
};

struct PdbTraceRow
{
    SimTime time{0};
    SourceSelection selection = SourceSelection::NoSource;
    double pack_a_v = 0.0;
    double pack_b_v = 0.0;
    bool external_present = false;
    /// Charge drawn from each pack during the step that ended at `time`.
    std::array<std::int64_t, 2> drawn_nc{};
};

/// CSV with header `time_us,selection,pack_a_v,pack_b_v,external_present`.
std::string trace_csv(const std::vector<PdbTraceRow>& rows);

struct PowerTraceConfig
{
    std::uint64_t seed = 1;
    std::size_t steps = 10000;
    SimTime step_min = 10ms;
    SimTime step_max = 500ms;
    double max_load_a = 40.0;
    double external_toggle_probability = 0.05;
    PdbConfig pdb;
    PackConfig pack;
};

struct PowerTrace
{
    std::vector<PdbTraceRow> rows;
    std::array<BatteryPack, 2> initial_packs;
    std::array<BatteryPack, 2> final_packs;
};

/// Randomized load / supply trace: packs start at random charge and cell
/// imbalance, the selected pack carries a random load, external power comes
/// and goes.
PowerTrace simulate_power_trace(const PowerTraceConfig& config);

nlohmann::ordered_json to_json(const PackConfig& config);
PackConfig pack_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PdbConfig& config);
PdbConfig pdb_config_from_json(const nlohmann::json& j);

} // namespace safelink::pdb
