#include "safelink/channels.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <stdexcept>

using namespace safelink::channels;
using safelink::protocol::Direction;
using safelink::protocol::EStopCommand;
using namespace std::chrono_literals;

namespace
{

StatusFrame frame_on(ChannelId ch)
{
    return StatusFrame{1, EStopCommand::Run, SimTime{0}, ch, Direction::SenderToReceiver};
}

ChannelSpec fixed(SimTime airtime, SimTime base)
{
    return ChannelSpec{ChannelId::FastA, 0.0, base, 0.0, SimTime{0}, airtime, true};
}

} // namespace

TEST_CASE("transmit: total loss never delivers")
{
    RandomSource r(1);
    ChannelSpec spec = fixed(0ms, 0ms);
    spec.loss_probability = 1.0;
    for (int i = 0; i < 1000; ++i)
    {
        CHECK_FALSE(transmit(frame_on(ChannelId::FastA), spec, 0ms, r));
    }
}

TEST_CASE("transmit: deterministic sum of airtime and base latency")
{
    RandomSource r(1);
    CHECK(transmit(frame_on(ChannelId::FastA), fixed(5ms, 3ms), 100ms, r) == 108ms);
    CHECK(transmit(frame_on(ChannelId::FastA), fixed(0ms, 3ms), 100ms, r) == 103ms);
}

TEST_CASE("transmit: empirical loss fraction")
{
    RandomSource r(2024);
    ChannelSpec spec = fixed(0ms, 0ms);
    spec.loss_probability = 0.3;
    constexpr int n = 100000;
    int lost = 0;
    for (int i = 0; i < n; ++i)
    {
        lost += transmit(frame_on(ChannelId::FastA), spec, 0ms, r) ? 0 : 1;
    }
    // binomial sd = sqrt(0.3 * 0.7 / n) ~ 0.00145; 0.01 is ~7 sd
    CHECK(std::abs(static_cast<double>(lost) / n - 0.3) < 0.01);
}

TEST_CASE("transmit: jitter is log-normal with the configured median")
{
    RandomSource r(8);
    ChannelSpec spec = fixed(0ms, 0ms);
    spec.jitter_scale = 4ms;
    spec.jitter_sigma = 0.5;
    std::vector<double> logs;
    for (int i = 0; i < 50000; ++i)
    {
        const auto t = transmit(frame_on(ChannelId::FastA), spec, 0ms, r);
        REQUIRE(t);
        REQUIRE(t->count() > 0);
        logs.push_back(std::log(static_cast<double>(t->count())));
    }
    double mean = 0.0;
    for (const double x : logs)
    {
        mean += x;
    }
    mean /= static_cast<double>(logs.size());
    double var = 0.0;
    for (const double x : logs)
    {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(logs.size());
    CHECK(mean == doctest::Approx(std::log(4000.0)).epsilon(0.001));
    CHECK(std::sqrt(var) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("transmit: draw count does not depend on the parameters")
{
    RandomSource a(5);
    RandomSource b(5);
    ChannelSpec lossy = fixed(1ms, 1ms);
    lossy.loss_probability = 0.9;
    ChannelSpec clean = fixed(0ms, 0ms);
    clean.jitter_scale = 1ms;
    clean.jitter_sigma = 1.0;
    for (int i = 0; i < 100; ++i)
    {
        (void)transmit(frame_on(ChannelId::FastA), lossy, 0ms, a);
        (void)transmit(frame_on(ChannelId::FastA), clean, 0ms, b);
    }
    CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("transmit: disabled channel is a logic error")
{
    RandomSource r(1);
    ChannelSpec spec = fixed(0ms, 0ms);
    spec.enabled = false;
    CHECK_THROWS_AS(transmit(frame_on(ChannelId::FastA), spec, 0ms, r), std::logic_error);
}

TEST_CASE("lora airtime model")
{
    CHECK(lora_airtime(8) == SimTime{100352 + 8 * 16384});
    CHECK(lora_airtime(16) > lora_airtime(8));
    CHECK(lora_airtime(8, LoraAirtimeConfig{}) == 0us);
    CHECK_THROWS_AS(lora_airtime(0), std::invalid_argument);
}

TEST_CASE("channel and scenario validation")
{
    ChannelSpec c = fixed(0ms, 0ms);
    c.loss_probability = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = fixed(0ms, -1ms);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = fixed(0ms, 0ms);
    c.jitter_sigma = -0.1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    ScenarioSpec s = ideal_scenario();
    std::swap(s.channels[0], s.channels[1]);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("presets: channel sets")
{
    const auto lora = preset(ScenarioName::LoRaOnly12m);
    CHECK_FALSE(lora.channel(ChannelId::FastA).enabled);
    CHECK_FALSE(lora.channel(ChannelId::FastB).enabled);
    CHECK(lora.channel(ChannelId::Slow).enabled);
    CHECK(lora.channel(ChannelId::Slow).airtime == lora_airtime(safelink::protocol::kFramePayloadBytes));
    const auto los = preset(ScenarioName::LineOfSight12m);
    for (const auto& c : los.channels)
    {
        CHECK(c.enabled);
    }
    const auto wall = preset(ScenarioName::StoneWall12m);
    CHECK(wall.channel(ChannelId::FastA).loss_probability > los.channel(ChannelId::FastA).loss_probability);
    CHECK(wall.channel(ChannelId::FastB).loss_probability > los.channel(ChannelId::FastB).loss_probability);
    for (const auto n : kAllScenarios)
    {
        const auto p = preset(n);
        CHECK(p.name == to_string(n));
        REQUIRE(p.provenance);
        CHECK(p.provenance->targets == measured_targets(n));
        CHECK_NOTHROW(p.validate());
    }
    CHECK_THROWS_AS(preset(std::string_view{"Moon"}), std::invalid_argument);
}

TEST_CASE("measured targets")
{
    CHECK(measured_targets(ScenarioName::LineOfSight12m) == LatencyTargets{8, 3, 29});
    CHECK(measured_targets(ScenarioName::Obstructed3m) == LatencyTargets{8, 5, 113});
    CHECK(measured_targets(ScenarioName::StoneWall12m) == LatencyTargets{33, 29, 128});
    CHECK(measured_targets(ScenarioName::GlassDoor12m) == LatencyTargets{8, 4, 62});
    CHECK(measured_targets(ScenarioName::LoRaOnly12m) == LatencyTargets{249, 4, 268});
}

TEST_CASE("scenario JSON round trip")
{
    for (const auto n : kAllScenarios)
    {
        const auto p = preset(n);
        CHECK(scenario_from_json(nlohmann::json::parse(to_json(p).dump())) == p);
    }
    const auto ideal = ideal_scenario();
    CHECK(scenario_from_json(nlohmann::json::parse(to_json(ideal).dump())) == ideal);

    const auto path = std::filesystem::temp_directory_path() / "safelink_scenario_roundtrip.json";
    save_scenario(preset(ScenarioName::GlassDoor12m), path);
    CHECK(load_scenario(path) == preset(ScenarioName::GlassDoor12m));
    CHECK(resolve_scenario(path.string()) == preset(ScenarioName::GlassDoor12m));
    CHECK(resolve_scenario("GlassDoor12m") == preset(ScenarioName::GlassDoor12m));
    std::filesystem::remove(path);
    CHECK_THROWS(load_scenario("/nonexistent/nowhere.json"));
}

TEST_CASE("scenario JSON: malformed input and omitted channels")
{
    auto j = nlohmann::json::parse(to_json(preset(ScenarioName::LineOfSight12m)).dump());
    j["channels"][0]["loss_probability"] = 2.0;
    CHECK_THROWS(scenario_from_json(j));
    j = nlohmann::json::parse(to_json(preset(ScenarioName::LineOfSight12m)).dump());
    j["channels"].erase(2);
    CHECK_FALSE(scenario_from_json(j).channel(ChannelId::Slow).enabled);
    j = nlohmann::json::parse(to_json(preset(ScenarioName::LineOfSight12m)).dump());
    j["channels"][1]["id"] = "Carrier";
    CHECK_THROWS(scenario_from_json(j));
}
