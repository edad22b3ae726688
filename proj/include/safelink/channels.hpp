#pragma once

#include "safelink/protocol.hpp"
#include "safelink/random.hpp"
#include "safelink/sim.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace safelink::channels
{

using protocol::ChannelId;
using protocol::StatusFrame;
using sim::RandomSource;
using sim::SimTime;
using namespace std::chrono_literals;

/// Statistical link model. A delivered frame arrives at
/// send_time + airtime + base_latency + jitter, where
/// jitter = jitter_scale * exp(jitter_sigma * Z), Z ~ N(0, 1)
/// (a log-normal shifted by the fixed latency terms). Loss is an independent
/// Bernoulli trial per frame.
struct ChannelSpec
{
    ChannelId channel = ChannelId::FastA;
    double loss_probability = 0.0;
    SimTime base_latency{0};
    double jitter_sigma = 0.0;
    SimTime jitter_scale{0};
    SimTime airtime{0};
    bool enabled = true;

    /// Throws std::invalid_argument on out-of-range parameters.
    void validate() const;

    friend bool operator==(const ChannelSpec&, const ChannelSpec&) = default;
};

enum class ScenarioName : std::uint8_t
{
    LineOfSight12m,
    Obstructed3m,
    StoneWall12m,
    GlassDoor12m,
    LoRaOnly12m,
};

inline constexpr std::array<ScenarioName, 5> kAllScenarios{
    ScenarioName::LineOfSight12m, ScenarioName::Obstructed3m, ScenarioName::StoneWall12m,
    ScenarioName::GlassDoor12m, ScenarioName::LoRaOnly12m};

std::string_view to_string(ScenarioName name) noexcept;
std::optional<ScenarioName> scenario_from_string(std::string_view s) noexcept;

/// Release-latency statistics the model is fitted to, in milliseconds.
struct LatencyTargets
{
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double max_ms = 0.0;

    friend bool operator==(const LatencyTargets&, const LatencyTargets&) = default;
};

/// Measured release latencies per scenario (1000 toggles each): mean, standard
/// deviation and maximum in milliseconds.
LatencyTargets measured_targets(ScenarioName name) noexcept;

struct Provenance
{
    LatencyTargets targets;
    double fit_error = 0.0;
    std::uint64_t seed = 0;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ScenarioSpec
{
    std::string name;
    double distance_m = 0.0;
    std::array<ChannelSpec, protocol::kChannelCount> channels{};
    std::optional<Provenance> provenance;

    ChannelSpec& channel(ChannelId ch) noexcept { return channels[protocol::index(ch)]; }
    const ChannelSpec& channel(ChannelId ch) const noexcept { return channels[protocol::index(ch)]; }
    protocol::ChannelMask enabled_mask() const noexcept;

    void validate() const;

    friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

/// Samples the link for one frame. Returns the delivery time, or nullopt when
/// the frame is lost. Always consumes the same number of draws (loss trial
/// plus one normal) so parameter changes keep the random streams aligned.
/// Throws std::logic_error on a disabled channel.
std::optional<SimTime> transmit(const StatusFrame& frame, const ChannelSpec& spec, SimTime now,
                                RandomSource& rng);

/// Linear time-on-air model: airtime = preamble + per_byte * payload_bytes.
struct LoraAirtimeConfig
{
    SimTime preamble{0};
    SimTime per_byte{0};
};

/// 12.25 preamble symbols and two symbols per payload byte at an 8.192 ms
/// symbol time (SF10 / 125 kHz class).
inline constexpr LoraAirtimeConfig kDefaultLoraAirtime{SimTime{100352}, SimTime{16384}};

/// Throws std::invalid_argument when payload_bytes == 0.
SimTime lora_airtime(std::size_t payload_bytes, const LoraAirtimeConfig& config = kDefaultLoraAirtime);

/// Airtime of a fast-channel frame (BLE / ESP-NOW class).
inline constexpr SimTime kFastAirtime{300};

/// Shipped, calibration-fitted presets (mirrored in data/scenarios/*.json).
ScenarioSpec preset(ScenarioName name);
/// Throws std::invalid_argument for an unknown name.
ScenarioSpec preset(std::string_view name);

/// Channels with zero loss, latency and airtime; all enabled.
ScenarioSpec ideal_scenario();

nlohmann::ordered_json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);
ScenarioSpec load_scenario(const std::filesystem::path& path);
void save_scenario(const ScenarioSpec& spec, const std::filesystem::path& path);

/// Preset by name, or a scenario JSON file when `name_or_path` is not a
/// preset name.
ScenarioSpec resolve_scenario(std::string_view name_or_path);

nlohmann::ordered_json to_json(const LatencyTargets& t);
LatencyTargets targets_from_json(const nlohmann::json& j);

} // namespace safelink::channels
