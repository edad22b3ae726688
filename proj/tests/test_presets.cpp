#include "safelink/channels.hpp"

#include "doctest.h"

#include <filesystem>

using namespace safelink::channels;

TEST_CASE("shipped scenario files match the built-in presets")
{
    const auto dir = std::filesystem::path(SAFELINK_DATA_DIR) / "scenarios";
    for (const auto n : kAllScenarios)
    {
        const auto path = dir / (std::string(to_string(n)) + ".json");
        CAPTURE(path.string());
        REQUIRE(std::filesystem::exists(path));
        const auto file = load_scenario(path);
        CHECK(file == preset(n));
        CHECK(resolve_scenario(path.string()) == preset(n));
    }
}
