#pragma once

#include "safelink/channels.hpp"
#include "safelink/harness.hpp"

#include <array>
#include <cstdint>

namespace safelink::channels
{

/// The four searched link parameters. For the fast scenarios they apply to
/// FastA and FastB together; for LoRaOnly12m to Slow.
struct FitParameters
{
    double loss = 0.0;
    SimTime base{0};
    double sigma = 0.0;
    SimTime scale{0};

    friend bool operator==(const FitParameters&, const FitParameters&) = default;
};

struct ObjectiveWeights
{
    double mean = 1.0;
    double std = 0.5;
    double max = 0.15;
};

/// Weighted sum of squared normalized errors. Mean and std errors are divided
/// by max(target mean, 1 ms), the max error by max(target max, 1 ms), so a
/// narrow-spread link is not fitted to sampling noise in its std.
double fit_objective(const LatencyTargets& achieved, const LatencyTargets& target,
                     const ObjectiveWeights& weights = {});

struct CalibrationConfig
{
    ScenarioName scenario = ScenarioName::LineOfSight12m;
    LatencyTargets targets;
    /// Starting point; also supplies the channel that is not fitted.
    ScenarioSpec start;
    FitParameters initial;
    /// Parameters marked false stay at their initial value.
    std::array<bool, 4> free{true, true, true, true};
    std::size_t toggles_per_eval = 1000;
    /// Independent runs averaged per evaluation. A single run's maximum is
    /// dominated by whether a rare double loss happened to occur.
    std::size_t replicas = 4;
    std::uint64_t seed = 20250301;
    std::size_t max_iterations = 40;
    /// Stop once the objective falls below this.
    double tolerance = 1e-4;
    ObjectiveWeights weights;
    gate::GateConfig gate;
    harness::ExecPolicy policy = harness::ExecPolicy::Parallel;
};

struct FitReport
{
    bool converged = false;
    double fit_error = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    LatencyTargets achieved;
    FitParameters parameters;
    ScenarioSpec scenario;
};

/// Writes `p` into the fitted channel(s) of `spec`.
void apply_fit(ScenarioSpec& spec, ScenarioName scenario, const FitParameters& p);
FitParameters extract_fit(const ScenarioSpec& spec, ScenarioName scenario);

/// Release-latency statistics of `spec` with a fixed seed, averaged over
/// `replicas` independent runs. Replica 0 uses `seed` itself, replica r > 0
/// the first draw of RandomSource(seed).fork(r).
LatencyTargets evaluate_scenario(const ScenarioSpec& spec, std::size_t toggles, std::uint64_t seed,
                                 const gate::GateConfig& gate = {}, std::size_t replicas = 1);

/// Derivative-free coordinate pattern search. Each sweep tries x + k * step
/// (k = -3..3) per free coordinate, the candidates of one coordinate evaluated
/// as one batch, and halves the step when no candidate improves.
FitReport calibrate_scenario(const CalibrationConfig& config);

} // namespace safelink::channels
