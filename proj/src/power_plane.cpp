#include "safelink/power_plane.hpp"

#include "safelink/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace safelink::pdb
{

std::string_view to_string(SourceSelection s) noexcept
{
    switch (s)
    {
    case SourceSelection::External24V: return "External24V";
    case SourceSelection::PackA: return "PackA";
    case SourceSelection::PackB: return "PackB";
    case SourceSelection::NoSource: return "NoSource";
    }
    return "?";
}

std::string_view to_string(PackId id) noexcept { return id == PackId::A ? "A" : "B"; }

// ---- OCV ------------------------------------------------------------------------

void OcvCurve::validate() const
{
    if (points.size() < 2)
    {
        throw std::invalid_argument("OcvCurve: need at least two points");
    }
    for (std::size_t i = 1; i < points.size(); ++i)
    {
        if (!(points[i].first > points[i - 1].first) || !(points[i].second > points[i - 1].second))
        {
            throw std::invalid_argument("OcvCurve: points must be strictly increasing");
        }
    }
}

double OcvCurve::voltage(double soc) const
{
    soc = std::clamp(soc, points.front().first, points.back().first);
    for (std::size_t i = 1; i < points.size(); ++i)
    {
        const auto& [s0, v0] = points[i - 1];
        const auto& [s1, v1] = points[i];
        if (soc <= s1)
        {
            return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
        }
    }
    return points.back().second;
}

double OcvCurve::soc_for_voltage(double volts) const
{
    volts = std::clamp(volts, points.front().second, points.back().second);
    for (std::size_t i = 1; i < points.size(); ++i)
    {
        const auto& [s0, v0] = points[i - 1];
        const auto& [s1, v1] = points[i];
        if (volts <= v1)
        {
            return s0 + (s1 - s0) * (volts - v0) / (v1 - v0);
        }
    }
    return points.back().first;
}

void PackConfig::validate() const
{
    if (!(capacity_mah > 0.0) || !(internal_resistance_ohm >= 0.0))
    {
        throw std::invalid_argument("PackConfig: capacity must be positive, resistance non-negative");
    }
    ocv.validate();
}

// ---- pack -------------------------------------------------------------------------

std::int64_t mah_to_nc(double mah) noexcept { return std::llround(mah * 3.6e9); }

BatteryPack BatteryPack::full(PackId id, const PackConfig& config)
{
    config.validate();
    BatteryPack p;
    p.id = id;
    p.config = config;
    p.capacity_nc = mah_to_nc(config.capacity_mah);
    p.charge_nc = p.capacity_nc;
    return p;
}

BatteryPack BatteryPack::at_cell_voltage(PackId id, double cell_volts, const PackConfig& config)
{
    BatteryPack p = full(id, config);
    const double soc = config.ocv.soc_for_voltage(cell_volts);
    p.charge_nc = std::llround(soc * static_cast<double>(p.capacity_nc));
    // absorb interpolation rounding so the cell reads exactly the requested value
    const double err = cell_volts - config.ocv.voltage(p.soc());
    p.cell_offsets_v.fill(err);
    return p;
}

double BatteryPack::soc() const noexcept
{
    return capacity_nc > 0 ? static_cast<double>(charge_nc) / static_cast<double>(capacity_nc) : 0.0;
}

double BatteryPack::charge_remaining_mah() const noexcept { return static_cast<double>(charge_nc) / 3.6e9; }

std::array<double, kCellsPerPack> BatteryPack::cell_voltages() const
{
    const double ocv = config.ocv.voltage(soc());
    const double drop = load_current_a * config.internal_resistance_ohm / static_cast<double>(kCellsPerPack);
    std::array<double, kCellsPerPack> cells{};
    for (std::size_t i = 0; i < kCellsPerPack; ++i)
    {
        cells[i] = ocv + cell_offsets_v[i] - drop;
    }
    return cells;
}

double BatteryPack::pack_voltage() const
{
    const auto cells = cell_voltages();
    double sum = 0.0;
    for (const double v : cells)
    {
        sum += v;
    }
    return sum;
}

BatteryPack discharge_step(BatteryPack pack, double load_current_a, SimTime dt)
{
    if (dt <= SimTime{0})
    {
        throw std::invalid_argument("discharge_step: dt must be positive");
    }
    if (!(load_current_a >= 0.0))
    {
        throw std::invalid_argument("discharge_step: load current must be non-negative");
    }
    // A * us = uC
    std::int64_t draw = std::llround(load_current_a * static_cast<double>(dt.count()) * 1000.0);
    if (draw > pack.charge_nc)
    {
        draw = pack.charge_nc;
        pack.undervoltage = true;
    }
    pack.charge_nc -= draw;
    pack.drawn_nc += draw;
    pack.load_current_a = load_current_a;
    return pack;
}

// ---- selection --------------------------------------------------------------

void PdbConfig::validate() const
{
    if (!(cell_cutoff_v < cell_warning_v))
    {
        throw std::invalid_argument("PdbConfig: cutoff must be below warning");
    }
    if (!(switch_hysteresis_v > 0.0))
    {
        throw std::invalid_argument("PdbConfig: hysteresis must be positive");
    }
    if (min_dwell < SimTime{0} || !(aux_budget_w >= 0.0))
    {
        throw std::invalid_argument("PdbConfig: negative dwell or budget");
    }
}

bool eligible(const BatteryPack& pack, const PdbConfig& config)
{
    const auto cells = pack.cell_voltages();
    return std::none_of(cells.begin(), cells.end(), [&](double v) { return v < config.cell_cutoff_v; });
}

namespace
{

SourceSelection selection_of(PackId id) noexcept
{
    return id == PackId::A ? SourceSelection::PackA : SourceSelection::PackB;
}

std::optional<PackId> pack_of(SourceSelection s) noexcept
{
    if (s == SourceSelection::PackA)
    {
        return PackId::A;
    }
    if (s == SourceSelection::PackB)
    {
        return PackId::B;
    }
    return std::nullopt;
}

PackId other(PackId id) noexcept { return id == PackId::A ? PackId::B : PackId::A; }

} // namespace

PdbState select_source(const PdbState& state, std::span<const BatteryPack, 2> packs, bool external_present,
                       SimTime now, const PdbConfig& config)
{
    PdbState next = state;
    next.external_present = external_present;
    if (external_present)
    {
        next.selection = SourceSelection::External24V;
        return next;
    }

    const std::array<bool, 2> ok{eligible(packs[0], config), eligible(packs[1], config)};
    const std::array<double, 2> volts{packs[0].pack_voltage(), packs[1].pack_voltage()};
    const auto idx = [](PackId id) { return static_cast<std::size_t>(id); };
    const bool dwell_ok = !state.last_switch_time || now - *state.last_switch_time >= config.min_dwell;

    const auto choose = [&](PackId id) {
        if (next.last_pack != id)
        {
            next.last_switch_time = now;
        }
        next.last_pack = id;
        next.selection = selection_of(id);
    };

    if (!ok[0] && !ok[1])
    {
        next.selection = SourceSelection::NoSource;
        return next;
    }

    if (const auto current = pack_of(state.selection))
    {
        const PackId alt = other(*current);
        if (!ok[idx(*current)])
        {
            choose(alt);
        }
        else if (ok[idx(alt)] && volts[idx(alt)] - volts[idx(*current)] > config.switch_hysteresis_v && dwell_ok)
        {
            choose(alt);
        }
        return next;
    }

    // coming from external supply or no source
    if (!ok[0] || !ok[1])
    {
        choose(ok[0] ? PackId::A : PackId::B);
        return next;
    }
    PackId best = volts[0] >= volts[1] ? PackId::A : PackId::B;
    if (volts[0] == volts[1] && state.last_pack)
    {
        best = *state.last_pack;
    }
    if (state.last_pack && best != *state.last_pack && !dwell_ok)
    {
        best = *state.last_pack;
    }
    choose(best);
    return next;
}

MonitorReport monitor_cells(std::span<const BatteryPack, 2> packs, const PdbConfig& config)
{
    MonitorReport report;
    for (std::size_t p = 0; p < 2; ++p)
    {
        const auto cells = packs[p].cell_voltages();
        for (std::size_t c = 0; c < kCellsPerPack; ++c)
        {
            if (cells[c] < config.cell_warning_v)
            {
                report.warnings[p][c] = true;
                report.events.push_back(CellEvent{packs[p].id, c, CellEvent::Kind::Warning, cells[c]});
            }
            if (cells[c] < config.cell_cutoff_v)
            {
                report.eligible[p] = false;
                report.events.push_back(CellEvent{packs[p].id, c, CellEvent::Kind::Cutoff, cells[c]});
            }
        }
    }
    return report;
}

// ---- aux rails ----------------------------------------------------------------

AuxRails::AuxRails(double budget_w) : budget_w_(budget_w)
{
    if (!(budget_w >= 0.0))
    {
        throw std::invalid_argument("AuxRails: negative budget");
    }
}

AuxDrawResult AuxRails::draw(std::span<const AuxRequest> requests)
{
    AuxDrawResult result;
    result.granted.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i)
    {
        const auto& r = requests[i];
        if (!(r.watts >= 0.0))
        {
            throw std::invalid_argument("AuxRails::draw: negative power request");
        }
        if (used_w_ + r.watts <= budget_w_ + 1e-9)
        {
            used_w_ += r.watts;
            per_rail_[static_cast<std::size_t>(r.rail)] += r.watts;
            result.granted.push_back(true);
        }
        else
        {
            result.granted.push_back(false);
            result.rejected.push_back(AuxRejection{i, r.watts, remaining_w()});
        }
    }
    return result;
}

void AuxRails::release_all() noexcept
{
    used_w_ = 0.0;
    per_rail_ = {};
}

// ---- traces -------------------------------------------------------------------

std::string trace_csv(const std::vector<PdbTraceRow>& rows)
{
    std::string out = "time_us,selection,pack_a_v,pack_b_v,external_present\n";
    char line[160];
    for (const auto& r : rows)
    {
        std::snprintf(line, sizeof line, "%lld,%s,%.4f,%.4f,%d\n", static_cast<long long>(r.time.count()),
                      std::string(to_string(r.selection)).c_str(), r.pack_a_v, r.pack_b_v,
                      r.external_present ? 1 : 0);
        out += line;
    }
    return out;
}

PowerTrace simulate_power_trace(const PowerTraceConfig& config)
{
    config.pdb.validate();
    sim::RandomSource rng(config.seed);
    PowerTrace trace;
    std::array<BatteryPack, 2> packs{BatteryPack::full(PackId::A, config.pack), BatteryPack::full(PackId::B, config.pack)};
    for (auto& p : packs)
    {
        p.charge_nc = rng.uniform_int(p.capacity_nc / 20, p.capacity_nc);
        for (auto& off : p.cell_offsets_v)
        {
            off = (rng.uniform01() - 0.5) * 0.1;
        }
    }
    trace.initial_packs = packs;

    PdbState state;
    bool external = rng.bernoulli(0.5);
    SimTime t{0};
    trace.rows.reserve(config.steps);
    for (std::size_t i = 0; i < config.steps; ++i)
    {
        if (rng.bernoulli(config.external_toggle_probability))
        {
            external = !external;
        }
        if (rng.bernoulli(0.01))
        {
            // a sagging cell, occasionally deep enough to cross cutoff
            auto& p = packs[static_cast<std::size_t>(rng.uniform_int(0, 1))];
            p.cell_offsets_v[static_cast<std::size_t>(rng.uniform_int(0, kCellsPerPack - 1))] =
                -rng.uniform01() * 1.0;
        }
        if (rng.bernoulli(0.005))
        {
            packs[static_cast<std::size_t>(rng.uniform_int(0, 1))].cell_offsets_v.fill(0.0);
        }
        const double load = rng.uniform01() * config.max_load_a;
        const SimTime dt{rng.uniform_int(config.step_min.count(), config.step_max.count())};

        state = select_source(state, packs, external, t, config.pdb);

        PdbTraceRow row;
        row.time = t;
        row.selection = state.selection;
        row.external_present = external;
        row.pack_a_v = packs[0].pack_voltage();
        row.pack_b_v = packs[1].pack_voltage();
        for (std::size_t p = 0; p < 2; ++p)
        {
            const bool loaded = state.selection == selection_of(packs[p].id);
            const std::int64_t before = packs[p].drawn_nc;
            packs[p] = discharge_step(packs[p], loaded ? load : 0.0, dt);
            row.drawn_nc[p] = packs[p].drawn_nc - before;
        }
        trace.rows.push_back(row);
        t += dt;
    }
    trace.final_packs = packs;
    return trace;
}

// ---- json ----------------------------------------------------------------------

nlohmann::ordered_json to_json(const PackConfig& c)
{
    nlohmann::ordered_json j;
    j["capacity_mah"] = c.capacity_mah;
    j["cells"] = kCellsPerPack;
    j["internal_resistance_ohm"] = c.internal_resistance_ohm;
    nlohmann::ordered_json ocv = nlohmann::ordered_json::array();
    for (const auto& [soc, v] : c.ocv.points)
    {
        ocv.push_back({{"soc", soc}, {"volts", v}});
    }
    j["ocv"] = std::move(ocv);
    return j;
}

PackConfig pack_config_from_json(const nlohmann::json& j)
{
    PackConfig c;
    c.capacity_mah = j.value("capacity_mah", c.capacity_mah);
    c.internal_resistance_ohm = j.value("internal_resistance_ohm", c.internal_resistance_ohm);
    if (j.contains("cells") && j.at("cells").get<std::size_t>() != kCellsPerPack)
    {
        throw std::invalid_argument("pack config: only 8-cell packs are modelled");
    }
    if (j.contains("ocv"))
    {
        c.ocv.points.clear();
        for (const auto& p : j.at("ocv"))
        {
            c.ocv.points.emplace_back(p.at("soc").get<double>(), p.at("volts").get<double>());
        }
    }
    c.validate();
    return c;
}

nlohmann::ordered_json to_json(const PdbConfig& c)
{
    nlohmann::ordered_json j;
    j["cell_warning_v"] = c.cell_warning_v;
    j["cell_cutoff_v"] = c.cell_cutoff_v;
    j["switch_hysteresis_v"] = c.switch_hysteresis_v;
    j["min_dwell_us"] = c.min_dwell.count();
    j["aux_budget_w"] = c.aux_budget_w;
    return j;
}

PdbConfig pdb_config_from_json(const nlohmann::json& j)
{
    PdbConfig c;
    c.cell_warning_v = j.value("cell_warning_v", c.cell_warning_v);
    c.cell_cutoff_v = j.value("cell_cutoff_v", c.cell_cutoff_v);
    c.switch_hysteresis_v = j.value("switch_hysteresis_v", c.switch_hysteresis_v);
    c.min_dwell = SimTime{j.value("min_dwell_us", c.min_dwell.count())};
    c.aux_budget_w = j.value("aux_budget_w", c.aux_budget_w);
    c.validate();
    return c;
}

} // namespace safelink::pdb
