#include "safelink/calibration.hpp"
#include "safelink/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace safelink::channels
{

namespace
{

constexpr std::size_t kDims = 4;
using Point = std::array<double, kDims>;

constexpr Point kLower{0.0, 0.0, 0.0, 0.0};
constexpr Point kUpper{0.9, 500'000.0, 2.5, 200'000.0};
constexpr Point kInitialStep{0.08, 8'000.0, 0.3, 4'000.0};
constexpr Point kMinStep{0.002, 100.0, 0.01, 100.0};
constexpr int kReach = 3;

Point to_point(const FitParameters& p)
{
    return {p.loss, static_cast<double>(p.base.count()), p.sigma, static_cast<double>(p.scale.count())};
}

FitParameters from_point(const Point& x)
{
    return FitParameters{x[0], SimTime{std::llround(x[1])}, x[2], SimTime{std::llround(x[3])}};
}

double rel_sq(double achieved, double target)
{
    const double d = (achieved - target) / std::max(target, 1.0);
    return d * d;
}

} // namespace

double fit_objective(const LatencyTargets& achieved, const LatencyTargets& target, const ObjectiveWeights& weights)
{
    const auto sq = [](double d) { return d * d; };
    const double scale = std::max(target.mean_ms, 1.0);
    return weights.mean * sq((achieved.mean_ms - target.mean_ms) / scale) +
           weights.std * sq((achieved.std_ms - target.std_ms) / scale) +
           weights.max * rel_sq(achieved.max_ms, target.max_ms);
}

void apply_fit(ScenarioSpec& spec, ScenarioName scenario, const FitParameters& p)
{
    const auto set = [&](ChannelId ch) {
        auto& c = spec.channel(ch);
        c.loss_probability = p.loss;
        c.base_latency = p.base;
        c.jitter_sigma = p.sigma;
        c.jitter_scale = p.scale;
    };
    if (scenario == ScenarioName::LoRaOnly12m)
    {
        set(ChannelId::Slow);
        return;
    }
    set(ChannelId::FastA);
    set(ChannelId::FastB);
}

FitParameters extract_fit(const ScenarioSpec& spec, ScenarioName scenario)
{
    const auto& c = spec.channel(scenario == ScenarioName::LoRaOnly12m ? ChannelId::Slow : ChannelId::FastA);
    return FitParameters{c.loss_probability, c.base_latency, c.jitter_sigma, c.jitter_scale};
}

LatencyTargets evaluate_scenario(const ScenarioSpec& spec, std::size_t toggles, std::uint64_t seed,
                                 const gate::GateConfig& gate, std::size_t replicas)
{
    if (replicas == 0)
    {
        throw std::invalid_argument("evaluate_scenario: replicas must be positive");
    }
    LatencyTargets sum;
    for (std::size_t r = 0; r < replicas; ++r)
    {
        harness::ExperimentConfig cfg;
        cfg.scenario = spec;
        cfg.toggles = toggles;
        cfg.seed = r == 0 ? seed : sim::RandomSource(seed).fork(r).next_u64();
        cfg.measure = harness::Measure::ReleaseLatency;
        cfg.gate = gate;
        const auto report = harness::run_toggle_experiment(cfg);
        if (report.aborted || !report.release)
        {
            constexpr double inf = std::numeric_limits<double>::infinity();
            return LatencyTargets{inf, inf, inf};
        }
        sum.mean_ms += report.release->mean_ms;
        sum.std_ms += report.release->std_ms;
        sum.max_ms += report.release->max_ms;
    }
    const auto n = static_cast<double>(replicas);
    return LatencyTargets{sum.mean_ms / n, sum.std_ms / n, sum.max_ms / n};
}

FitReport calibrate_scenario(const CalibrationConfig& config)
{
    FitReport out;
    const auto evaluate_batch = [&](const std::vector<Point>& points) {
        std::vector<LatencyTargets> achieved(points.size());
        const auto n = static_cast<std::ptrdiff_t>(points.size());
        const auto one = [&](std::ptrdiff_t i) {
            ScenarioSpec spec = config.start;
            apply_fit(spec, config.scenario, from_point(points[static_cast<std::size_t>(i)]));
            achieved[static_cast<std::size_t>(i)] =
                evaluate_scenario(spec, config.toggles_per_eval, config.seed, config.gate, config.replicas);
        };
        if (config.policy == harness::ExecPolicy::Serial)
        {
            for (std::ptrdiff_t i = 0; i < n; ++i)
            {
                one(i);
            }
        }
        else
        {
#pragma omp parallel for schedule(dynamic, 1)
            for (std::ptrdiff_t i = 0; i < n; ++i)
            {
                one(i);
            }
        }
        out.evaluations += points.size();
        return achieved;
    };

    Point x = to_point(config.initial);
    Point step = kInitialStep;
    LatencyTargets best_stats = evaluate_batch({x}).front();
    double best = fit_objective(best_stats, config.targets, config.weights);

    const auto settled = [&] {
        for (std::size_t d = 0; d < kDims; ++d)
        {
            if (config.free[d] && step[d] >= kMinStep[d])
            {
                return false;
            }
        }
        return true;
    };

    while (out.iterations < config.max_iterations && best >= config.tolerance && !settled())
    {
        ++out.iterations;
        for (std::size_t d = 0; d < kDims; ++d)
        {
            if (!config.free[d] || step[d] < kMinStep[d])
            {
                continue;
            }
            std::vector<Point> candidates;
            for (int k = -kReach; k <= kReach; ++k)
            {
                Point c = x;
                c[d] = std::clamp(x[d] + k * step[d], kLower[d], kUpper[d]);
                if (k != 0 && c[d] != x[d] &&
                    std::none_of(candidates.begin(), candidates.end(), [&](const Point& p) { return p[d] == c[d]; }))
                {
                    candidates.push_back(c);
                }
            }
            const auto stats = evaluate_batch(candidates);
            std::size_t winner = candidates.size();
            for (std::size_t i = 0; i < candidates.size(); ++i)
            {
                const double f = fit_objective(stats[i], config.targets, config.weights);
                if (f < best)
                {
                    best = f;
                    winner = i;
                }
            }
            if (winner == candidates.size())
            {
                step[d] /= 2.0;
            }
            else
            {
                x = candidates[winner];
                best_stats = stats[winner];
            }
        }
    }

    out.converged = best < config.tolerance || settled();
    out.fit_error = best;
    out.achieved = best_stats;
    out.parameters = from_point(x);
    out.scenario = config.start;
    apply_fit(out.scenario, config.scenario, out.parameters);
    out.scenario.provenance = Provenance{config.targets, best, config.seed};
    return out;
}

} // namespace safelink::channels
