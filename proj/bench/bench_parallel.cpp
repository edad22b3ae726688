// Serial reference against the OpenMP kernels: scenario batches, fail-safe
// fuzzing and one calibration sweep. Results must match; only time differs.

#include "safelink/calibration.hpp"
#include "safelink/harness.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace safelink;

namespace
{

template <typename F>
auto timed(F&& f, double& secs)
{
    const auto t0 = std::chrono::steady_clock::now();
    auto r = f();
    secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

void row(const char* name, double serial, double parallel, bool same)
{
    std::printf("%-22s serial %8.3f s  parallel %8.3f s  speedup %5.2fx  identical %s\n", name, serial, parallel,
                serial / parallel, same ? "yes" : "NO");
}

} // namespace

int main()
{
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; parallel paths run serially\n");
#endif

    std::vector<harness::ExperimentConfig> cfgs;
    for (const auto n : channels::kAllScenarios)
    {
        harness::ExperimentConfig c;
        c.scenario = channels::preset(n);
        c.toggles = 1000;
        cfgs.push_back(c);
    }
    double s = 0.0;
    double p = 0.0;
    const auto rs = timed([&] { return harness::run_experiments(cfgs, harness::ExecPolicy::Serial); }, s);
    const auto rp = timed([&] { return harness::run_experiments(cfgs, harness::ExecPolicy::Parallel); }, p);
    row("scenario table", s, p, rs == rp);

    harness::FailSafeFuzzConfig f;
    f.traces = 10000;
    const auto fs = timed([&] { return harness::fuzz_failsafe(f, harness::ExecPolicy::Serial); }, s);
    const auto fp = timed([&] { return harness::fuzz_failsafe(f, harness::ExecPolicy::Parallel); }, p);
    row("fail-safe fuzz", s, p, fs == fp);

    channels::CalibrationConfig cc;
    cc.scenario = channels::ScenarioName::GlassDoor12m;
    cc.start = channels::preset(cc.scenario);
    cc.initial = channels::extract_fit(cc.start, cc.scenario);
    cc.targets = channels::measured_targets(cc.scenario);
    cc.toggles_per_eval = 300;
    cc.max_iterations = 1;
    cc.policy = harness::ExecPolicy::Serial;
    const auto cs = timed([&] { return channels::calibrate_scenario(cc); }, s);
    cc.policy = harness::ExecPolicy::Parallel;
    const auto cp = timed([&] { return channels::calibrate_scenario(cc); }, p);
    row("calibration sweep", s, p, cs.parameters == cp.parameters && cs.fit_error == cp.fit_error);
    return 0;
}
