#include "safelink/channels.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace safelink::channels
{

using nlohmann::json;
using nlohmann::ordered_json;

void ChannelSpec::validate() const
{
    if (!(loss_probability >= 0.0 && loss_probability <= 1.0))
    {
        throw std::invalid_argument("ChannelSpec: loss_probability outside [0, 1]");
    }
    if (base_latency < SimTime{0} || jitter_scale < SimTime{0} || airtime < SimTime{0})
    {
        throw std::invalid_argument("ChannelSpec: negative latency, jitter scale or airtime");
    }
    if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma))
    {
        throw std::invalid_argument("ChannelSpec: jitter_sigma must be finite and non-negative");
    }
}

std::string_view to_string(ScenarioName name) noexcept
{
    switch (name)
    {
    case ScenarioName::LineOfSight12m: return "LineOfSight12m";
    case ScenarioName::Obstructed3m: return "Obstructed3m";
    case ScenarioName::StoneWall12m: return "StoneWall12m";
    case ScenarioName::GlassDoor12m: return "GlassDoor12m";
    case ScenarioName::LoRaOnly12m: return "LoRaOnly12m";
    }
    return "?";
}

std::optional<ScenarioName> scenario_from_string(std::string_view s) noexcept
{
    for (const auto name : kAllScenarios)
    {
        if (to_string(name) == s)
        {
            return name;
        }
    }
    return std::nullopt;
}

LatencyTargets measured_targets(ScenarioName name) noexcept
{
    switch (name)
    {
    case ScenarioName::LineOfSight12m: return {8.0, 3.0, 29.0};
    case ScenarioName::Obstructed3m: return {8.0, 5.0, 113.0};
    case ScenarioName::StoneWall12m: return {33.0, 29.0, 128.0};
    case ScenarioName::GlassDoor12m: return {8.0, 4.0, 62.0};
    case ScenarioName::LoRaOnly12m: return {249.0, 4.0, 268.0};
    }
    return {};
}

protocol::ChannelMask ScenarioSpec::enabled_mask() const noexcept
{
    protocol::ChannelMask mask{};
    for (std::size_t i = 0; i < channels.size(); ++i)
    {
        mask[i] = channels[i].enabled;
    }
    return mask;
}

void ScenarioSpec::validate() const
{
    for (std::size_t i = 0; i < channels.size(); ++i)
    {
        if (protocol::index(channels[i].channel) != i)
        {
            throw std::invalid_argument("ScenarioSpec: channel table out of order");
        }
        channels[i].validate();
    }
}

std::optional<SimTime> transmit(const StatusFrame& frame, const ChannelSpec& spec, SimTime now, RandomSource& rng)
{
    if (!spec.enabled)
    {
        throw std::logic_error("transmit on disabled channel " + std::string(protocol::to_string(frame.channel)));
    }
    const bool lost = rng.bernoulli(spec.loss_probability);
    const double z = rng.normal();
    if (lost)
    {
        return std::nullopt;
    }
    SimTime jitter{0};
    if (spec.jitter_scale > SimTime{0})
    {
        const double us = static_cast<double>(spec.jitter_scale.count()) * std::exp(spec.jitter_sigma * z);
        jitter = SimTime{std::llround(us)};
    }
    return now + spec.airtime + spec.base_latency + jitter;
}

SimTime lora_airtime(std::size_t payload_bytes, const LoraAirtimeConfig& config)
{
    if (payload_bytes == 0)
    {
        throw std::invalid_argument("lora_airtime: payload must be non-empty");
    }
    return config.preamble + config.per_byte * static_cast<std::int64_t>(payload_bytes);
}

namespace
{

ChannelSpec fast(ChannelId id, double loss, std::int64_t base_us, double sigma, std::int64_t scale_us)
{
    return ChannelSpec{id, loss, SimTime{base_us}, sigma, SimTime{scale_us}, kFastAirtime, true};
}

ChannelSpec slow(double loss, std::int64_t base_us, double sigma, std::int64_t scale_us)
{
    return ChannelSpec{ChannelId::Slow,
                       loss,
                       SimTime{base_us},
                       sigma,
                       SimTime{scale_us},
                       lora_airtime(protocol::kFramePayloadBytes),
                       true};
}

// Fitted parameters. Regenerate with `safelink calibrate` and keep in sync with
// data/scenarios/*.json (checked by test_presets).
struct FastFit
{
    double loss;
    std::int64_t base_us;
    double sigma;
    std::int64_t scale_us;
    double fit_error;
};

struct PresetRow
{
    ScenarioName name;
    double distance_m;
    FastFit fit;
};

constexpr FastFit kSlowFit{0.0, 16000, 0.625, 2125, 8.494811219344502e-05};

constexpr std::array<PresetRow, 5> kPresetRows{{
    {ScenarioName::LineOfSight12m, 12.0, {0.0, 5500, 1.275, 2375, 0.003281676537558027}},
    {ScenarioName::Obstructed3m, 3.0, {0.0575, 3375, 1.0625, 4000, 0.025382302486231145}},
    {ScenarioName::StoneWall12m, 12.0, {0.3775, 8125, 0.98125, 12500, 0.021283290085858053}},
    {ScenarioName::GlassDoor12m, 12.0, {0.0675, 3500, 0.4125, 4125, 0.00013889159191430146}},
    {ScenarioName::LoRaOnly12m, 12.0, kSlowFit},
}};

constexpr std::uint64_t kCalibrationSeed = 20250301;

} // namespace

ScenarioSpec preset(ScenarioName name)
{
    for (const auto& row : kPresetRows)
    {
        if (row.name != name)
        {
            continue;
        }
        ScenarioSpec spec;
        spec.name = std::string(to_string(name));
        spec.distance_m = row.distance_m;
        const auto& s = kSlowFit;
        spec.channel(ChannelId::Slow) = slow(s.loss, s.base_us, s.sigma, s.scale_us);
        if (name == ScenarioName::LoRaOnly12m)
        {
            spec.channel(ChannelId::FastA) = fast(ChannelId::FastA, 0.0, 0, 0.0, 0);
            spec.channel(ChannelId::FastB) = fast(ChannelId::FastB, 0.0, 0, 0.0, 0);
            spec.channel(ChannelId::FastA).enabled = false;
            spec.channel(ChannelId::FastB).enabled = false;
        }
        else
        {
            const auto& f = row.fit;
            spec.channel(ChannelId::FastA) = fast(ChannelId::FastA, f.loss, f.base_us, f.sigma, f.scale_us);
            spec.channel(ChannelId::FastB) = fast(ChannelId::FastB, f.loss, f.base_us, f.sigma, f.scale_us);
        }
        spec.provenance = Provenance{measured_targets(name), row.fit.fit_error, kCalibrationSeed};
        return spec;
    }
    throw std::invalid_argument("unknown scenario");
}

ScenarioSpec preset(std::string_view name)
{
    const auto parsed = scenario_from_string(name);
    if (!parsed)
    {
        throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
    }
    return preset(*parsed);
}

ScenarioSpec ideal_scenario()
{
    ScenarioSpec spec;
    spec.name = "Ideal";
    for (const ChannelId ch : protocol::kAllChannels)
    {
        spec.channel(ch) = ChannelSpec{ch, 0.0, SimTime{0}, 0.0, SimTime{0}, SimTime{0}, true};
    }
    return spec;
}

ordered_json to_json(const LatencyTargets& t)
{
    ordered_json j;
    j["mean_ms"] = t.mean_ms;
    j["std_ms"] = t.std_ms;
    j["max_ms"] = t.max_ms;
    return j;
}

LatencyTargets targets_from_json(const json& j)
{
    return LatencyTargets{j.at("mean_ms").get<double>(), j.at("std_ms").get<double>(), j.at("max_ms").get<double>()};
}

ordered_json to_json(const ScenarioSpec& spec)
{
    ordered_json j;
    j["name"] = spec.name;
    j["distance_m"] = spec.distance_m;
    ordered_json chans = ordered_json::array();
    for (const auto& c : spec.channels)
    {
        ordered_json cj;
        cj["id"] = protocol::to_string(c.channel);
        cj["enabled"] = c.enabled;
        cj["loss_probability"] = c.loss_probability;
        cj["base_latency_us"] = c.base_latency.count();
        cj["jitter_sigma"] = c.jitter_sigma;
        cj["jitter_scale_us"] = c.jitter_scale.count();
        cj["airtime_us"] = c.airtime.count();
        chans.push_back(std::move(cj));
    }
    j["channels"] = std::move(chans);
    if (spec.provenance)
    {
        ordered_json p;
        p["targets"] = to_json(spec.provenance->targets);
        p["fit_error"] = spec.provenance->fit_error;
        p["seed"] = spec.provenance->seed;
        j["provenance"] = std::move(p);
    }
    return j;
}

ScenarioSpec scenario_from_json(const json& j)
{
    ScenarioSpec spec;
    spec.name = j.at("name").get<std::string>();
    spec.distance_m = j.value("distance_m", 0.0);
    std::array<bool, protocol::kChannelCount> seen{};
    for (const auto& cj : j.at("channels"))
    {
        const auto id = protocol::channel_from_string(cj.at("id").get<std::string>());
        if (!id)
        {
            throw std::invalid_argument("scenario: unknown channel id " + cj.at("id").dump());
        }
        ChannelSpec c;
        c.channel = *id;
        c.enabled = cj.at("enabled").get<bool>();
        c.loss_probability = cj.at("loss_probability").get<double>();
        c.base_latency = SimTime{cj.at("base_latency_us").get<std::int64_t>()};
        c.jitter_sigma = cj.at("jitter_sigma").get<double>();
        c.jitter_scale = SimTime{cj.at("jitter_scale_us").get<std::int64_t>()};
        c.airtime = SimTime{cj.at("airtime_us").get<std::int64_t>()};
        spec.channel(*id) = c;
        seen[protocol::index(*id)] = true;
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
    {
        if (!seen[i])
        {
            // unspecified channels are absent from the scenario
            spec.channels[i] = ChannelSpec{static_cast<ChannelId>(i)};
            spec.channels[i].enabled = false;
        }
    }
    if (j.contains("provenance"))
    {
        const auto& p = j.at("provenance");
        spec.provenance = Provenance{targets_from_json(p.at("targets")), p.at("fit_error").get<double>(),
                                     p.at("seed").get<std::uint64_t>()};
    }
    spec.validate();
    return spec;
}

ScenarioSpec load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw std::runtime_error("cannot open scenario file " + path.string());
    }
    return scenario_from_json(json::parse(in));
}

void save_scenario(const ScenarioSpec& spec, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
    {
        throw std::runtime_error("cannot write scenario file " + path.string());
    }
    out << to_json(spec).dump(2) << '\n';
}

ScenarioSpec resolve_scenario(std::string_view name_or_path)
{
    if (const auto name = scenario_from_string(name_or_path))
    {
        return preset(*name);
    }
    const std::filesystem::path path{std::string(name_or_path)};
    if (!std::filesystem::exists(path))
    {
        throw std::invalid_argument("'" + std::string(name_or_path) + "' is neither a scenario name nor a file");
    }
    return load_scenario(path);
}

} // namespace safelink::channels
