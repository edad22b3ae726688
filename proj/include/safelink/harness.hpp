#pragma once

#include "safelink/channels.hpp"
#include "safelink/power_gate.hpp"
#include "safelink/protocol.hpp"
#include "safelink/sim.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace safelink::harness
{

using channels::ScenarioSpec;
using protocol::ChannelId;
using protocol::EStopCommand;
using sim::SimTime;
using namespace std::chrono_literals;

/// Selects the serial reference loop or the OpenMP loop for the batch kernels.
/// Both produce identical results.
enum class ExecPolicy : std::uint8_t
{
    Serial,
    Parallel,
};

enum class Measure : std::uint8_t
{
    ReleaseLatency,
    ActivateLatency,
    Both,
};

std::string_view to_string(Measure m) noexcept;
std::optional<Measure> measure_from_string(std::string_view s) noexcept;

inline constexpr std::string_view kReportSchema = "safelink.report/1";

struct ExperimentConfig
{
    ScenarioSpec scenario;
    std::size_t toggles = 1000;
    std::uint64_t seed = 1;
    SimTime dwell_min = 500ms;
    SimTime dwell_max = 1000ms;
    Measure measure = Measure::Both;
    protocol::ScheduleConfig schedule;
    protocol::WatchdogConfig watchdog;
    gate::GateConfig gate;
    /// A release (or activation) that takes longer than this aborts the run.
    SimTime completion_timeout = 10s;
    bool keep_samples = false;

    /// Throws std::invalid_argument.
    void validate() const;
};

/// Population statistics in milliseconds.
struct LatencyStats
{
    std::size_t count = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double max_ms = 0.0;
    double min_ms = 0.0;
    std::vector<std::int64_t> samples_us;

    static LatencyStats from_samples(std::span<const SimTime> samples, bool keep_samples = false);

    friend bool operator==(const LatencyStats&, const LatencyStats&) = default;
};

struct LinkCounters
{
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t lost = 0;

    friend bool operator==(const LinkCounters&, const LinkCounters&) = default;
};

struct ChannelCounters
{
    ChannelId channel = ChannelId::FastA;
    LinkCounters forward;
    LinkCounters echo;

    friend bool operator==(const ChannelCounters&, const ChannelCounters&) = default;
};

struct ExperimentReport
{
    // configuration echo
    std::string scenario;
    std::size_t toggles = 0;
    std::uint64_t seed = 0;
    SimTime dwell_min{0};
    SimTime dwell_max{0};
    Measure measure = Measure::Both;

    std::optional<LatencyStats> release;
    std::optional<LatencyStats> activate;
    std::array<ChannelCounters, protocol::kChannelCount> channels{};
    std::uint64_t engine_events = 0;
    /// Simulated duration of the run.
    SimTime sim_duration{0};
    std::uint64_t watchdog_trips = 0;
    bool aborted = false;
    std::string diagnostic;

    friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

/// Toggle experiment: per toggle, command HardStop and wait for the drive
/// output to drop, dwell, command Run at t0, wait for the drive output to
/// come back at t1, record t1 - t0, dwell. Returns an aborted report (with a
/// diagnostic) if a transition does not complete within the timeout.
ExperimentReport run_toggle_experiment(const ExperimentConfig& config);

/// Runs independent experiments; reports come back in input order.
std::vector<ExperimentReport> run_experiments(std::span<const ExperimentConfig> configs,
                                              ExecPolicy policy = ExecPolicy::Parallel);

enum class ProbePhase : std::uint8_t
{
    /// Silence starts at a uniformly random offset after the output settled.
    Random,
    /// Silence starts at the instant of a delivery to the receiver.
    AfterDelivery,
};

struct ProbeConfig
{
    ScenarioSpec scenario;
    std::size_t probes = 1000;
    std::uint64_t seed = 1;
    /// Length of each injected silence (all channels, both directions). A
    /// frame already in flight may still land inside it; the silence then
    /// lasts this long after that delivery. When it ends the sender re-sends
    /// its state immediately.
    SimTime silence = 600ms;
    ProbePhase phase = ProbePhase::Random;
    SimTime phase_max = 200ms;
    SimTime settle = 500ms;
    protocol::ScheduleConfig schedule;
    protocol::WatchdogConfig watchdog;
    gate::GateConfig gate;
    bool keep_samples = false;

    void validate() const;
};

struct ProbeReport
{
    std::string scenario;
    std::size_t probes = 0;
    std::uint64_t seed = 0;
    /// Drive output drops, each measured from the receiver's last delivery.
    LatencyStats trip;
    std::uint64_t trips_in_silence = 0;
    std::uint64_t trips_outside_silence = 0;
    /// Probes whose silence ended with the output still on.
    std::uint64_t probes_without_trip = 0;
    bool aborted = false;
    std::string diagnostic;
};

/// Watchdog probe: silences every channel and measures the time from the
/// last delivered frame to the drive output switching off.
ProbeReport run_watchdog_probe(const ProbeConfig& config);

struct FailSafeFuzzConfig
{
    std::size_t traces = 10000;
    std::uint64_t seed = 1;
    SimTime duration = 3s;
    protocol::ScheduleConfig schedule;
    protocol::WatchdogConfig watchdog;
};

struct FailSafeReport
{
    std::size_t traces = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t silent_windows = 0;
    std::uint64_t violations = 0;
    std::uint64_t watchdog_trips = 0;

    friend bool operator==(const FailSafeReport&, const FailSafeReport&) = default;
};

/// One randomized trace: random channel models, random command changes and
/// random silences. Returns delivery instants and the receiver's effective
/// command transitions.
struct FuzzTrace
{
    ScenarioSpec scenario;
    std::vector<SimTime> deliveries;
    std::vector<std::pair<SimTime, EStopCommand>> transitions;
    SimTime end{0};
    std::uint64_t watchdog_trips = 0;
};

FuzzTrace generate_fuzz_trace(std::uint64_t seed, const FailSafeFuzzConfig& config);

/// Independent check of the fail-safe rule on a recorded trace: wherever no
/// delivery happened in the preceding timeout, the command must be HardStop.
/// Returns (silent windows checked, violations).
std::pair<std::uint64_t, std::uint64_t> check_failsafe(const FuzzTrace& trace, SimTime timeout);

FailSafeReport fuzz_failsafe(const FailSafeFuzzConfig& config, ExecPolicy policy = ExecPolicy::Parallel);

enum class ExportFormat : std::uint8_t
{
    Json,
    Csv,
};

nlohmann::ordered_json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const LatencyStats& stats);
LatencyStats stats_from_json(const nlohmann::json& j);

/// Stable, byte-reproducible export. JSON: one report object, or an array for
/// several. CSV columns: scenario,mean_ms,std_ms,max_ms,min_ms,count,seed
/// (release latency, one decimal).
std::string export_report(const ExperimentReport& report, ExportFormat format);
std::string export_reports(std::span<const ExperimentReport> reports, ExportFormat format);

nlohmann::ordered_json to_json(const ProbeReport& report);

} // namespace safelink::harness
