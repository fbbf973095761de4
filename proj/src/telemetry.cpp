#include "bsf/telemetry.hpp"

#include "ioutil.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace bsf::telemetry {

namespace {

// Equivalent-circuit constants. Fixed (not configurable) so acceptance runs
// are reproducible.
constexpr double kInternalResistanceOhm = 0.0005; // per cell string
constexpr double kCellResistanceSpread = 0.05;    // deterministic +/-5% per cell
constexpr double kAmbientC = 25.0;
constexpr double kTempCoupling = 1e-4; // degC per A^2
constexpr double kThermalLagS = 600.0;
constexpr double kCellNominalV = 3.2;

constexpr double kPackCellTolV = 0.01;

} // namespace

const char* mode_label(Mode m) noexcept {
    switch (m) {
    case Mode::Charging: return "CHG";
    case Mode::Discharging: return "DIS";
    default: return "IDLE";
    }
}

Mode mode_from_label(const std::string& s) {
    if (s == "CHG") return Mode::Charging;
    if (s == "DIS") return Mode::Discharging;
    if (s == "IDLE") return Mode::Idle;
    throw ParseError("unknown mode label '" + s + "'");
}

Mode mode_from_current(double amps) noexcept {
    if (amps > kIdleThresholdA) return Mode::Charging;
    if (amps < -kIdleThresholdA) return Mode::Discharging;
    return Mode::Idle;
}

BatterySpec BatterySpec::make(double capacity_ah, int cells_series,
                              double coulombic_efficiency) {
    BatterySpec s;
    s.capacity_ah = capacity_ah;
    s.cells_series = cells_series;
    s.cell_capacity_ah = 72.0;
    s.strings_parallel = static_cast<int>(std::lround(capacity_ah / s.cell_capacity_ah));
    s.nominal_voltage = cells_series * kCellNominalV;
    s.coulombic_efficiency = coulombic_efficiency;
    s.validate();
    return s;
}

void BatterySpec::validate() const {
    if (cells_series < 1 || strings_parallel < 1) {
        throw InvalidArgument("BatterySpec: cell counts must be >= 1");
    }
    if (capacity_ah < 360.0 || capacity_ah > 504.0) {
        throw InvalidArgument("BatterySpec: capacity_ah must lie in [360, 504]");
    }
    if (std::fabs(capacity_ah - strings_parallel * cell_capacity_ah) > 1e-9) {
        throw InvalidArgument(
            "BatterySpec: capacity_ah must equal strings_parallel * cell_capacity_ah");
    }
    if (std::fabs(nominal_voltage - cells_series * kCellNominalV) > 1e-9) {
        throw InvalidArgument("BatterySpec: nominal_voltage must equal cells_series * 3.2");
    }
    if (!(coulombic_efficiency > 0.0) || coulombic_efficiency > 1.0) {
        throw InvalidArgument("BatterySpec: coulombic_efficiency must lie in (0, 1]");
    }
}

void TelemetrySeries::validate() const {
    if (records.size() < 2) {
        throw ValidationError("telemetry series: length >= 2 required");
    }
    if (!(dt > 0.0)) throw ValidationError("telemetry series: dt must be positive");
    const double tol_t = 1e-9 * std::max(1.0, dt);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string row = "row " + std::to_string(i + 1);
        if (i > 0) {
            const double stride = r.timestamp - records[i - 1].timestamp;
            if (!(stride > 0.0)) {
                throw ValidationError(row + ": non-monotonic timestamp");
            }
            if (std::fabs(stride - dt) > tol_t) {
                throw ValidationError(row + ": timestamp stride differs from dt");
            }
            if (r.ah_charged_cum < records[i - 1].ah_charged_cum ||
                r.ah_discharged_cum < records[i - 1].ah_discharged_cum) {
                throw ValidationError(row + ": cumulative Ah counter decreased");
            }
        }
        if (!(r.soc >= 0.0 && r.soc <= 100.0)) {
            throw ValidationError(row + ": soc outside [0, 100]");
        }
        if (r.ah_charged_cum < 0.0 || r.ah_discharged_cum < 0.0) {
            throw ValidationError(row + ": negative cumulative Ah counter");
        }
        if (!(r.pack_voltage > 0.0)) {
            throw ValidationError(row + ": pack_voltage must be positive");
        }
        if (r.cell_voltages.size() != static_cast<std::size_t>(spec.cells_series)) {
            throw ValidationError(row + ": cell voltage count differs from spec");
        }
        double cell_sum = 0.0;
        for (double v : r.cell_voltages) cell_sum += v;
        if (std::fabs(r.pack_voltage - cell_sum) > kPackCellTolV) {
            throw ValidationError(row + ": pack voltage inconsistent with cell sum");
        }
        if (r.mode != mode_from_current(r.current)) {
            throw ValidationError(row + ": mode inconsistent with current sign");
        }
    }
}

double UserProfile::period_s() const noexcept {
    double p = 0.0;
    for (const auto& s : segments) p += s.duration_s;
    return p;
}

double UserProfile::commanded_current(double t) const {
    const double period = period_s();
    double tm = std::fmod(t, period);
    if (tm < 0.0) tm += period;
    for (const auto& s : segments) {
        if (tm < s.duration_s) {
            switch (s.mode) {
            case Mode::Charging: return s.current_a;
            case Mode::Discharging: return -s.current_a;
            default: return 0.0;
            }
        }
        tm -= s.duration_s;
    }
    return 0.0; // period boundary rounding
}

void UserProfile::validate() const {
    if (segments.empty()) throw InvalidArgument("profile '" + name + "': no segments");
    for (const auto& s : segments) {
        if (!(s.duration_s > 0.0)) {
            throw InvalidArgument("profile '" + name + "': segment durations must be positive");
        }
        if (s.current_a < 0.0) {
            throw InvalidArgument("profile '" + name + "': segment current is a magnitude");
        }
        if (s.mode == Mode::Idle && s.current_a != 0.0) {
            throw InvalidArgument("profile '" + name + "': idle segments carry zero current");
        }
    }
    if (noise_std < 0.0) throw InvalidArgument("profile '" + name + "': negative noise_std");
}

namespace {

const std::vector<UserProfile>& builtin_profiles() {
    static const std::vector<UserProfile> profiles = {
        // Balanced duty cycles: net Ah per period is zero, so SoC stays
        // periodic over arbitrarily long runs.
        {"cycle_a",
         {{Mode::Charging, 120.0, 600.0},
          {Mode::Idle, 0.0, 150.0},
          {Mode::Discharging, 160.0, 450.0},
          {Mode::Idle, 0.0, 300.0}},
         2.0},
        {"cycle_b",
         {{Mode::Charging, 90.0, 800.0},
          {Mode::Idle, 0.0, 200.0},
          {Mode::Discharging, 120.0, 600.0},
          {Mode::Idle, 0.0, 200.0}},
         2.0},
        {"constant_charge", {{Mode::Charging, 72.0, 3600.0}}, 0.0},
        {"constant_discharge", {{Mode::Discharging, 72.0, 3600.0}}, 0.0},
        {"idle", {{Mode::Idle, 0.0, 3600.0}}, 0.0},
    };
    return profiles;
}

} // namespace

const UserProfile& profile_by_name(const std::string& name) {
    for (const auto& p : builtin_profiles()) {
        if (p.name == name) return p;
    }
    throw NotFoundError("unknown user profile '" + name + "'");
}

std::vector<std::string> profile_names() {
    std::vector<std::string> names;
    for (const auto& p : builtin_profiles()) names.push_back(p.name);
    return names;
}

double ocv_per_cell(double soc) noexcept {
    // LFP-like plateau: flat through the mid range, knees at both ends.
    static constexpr std::array<std::pair<double, double>, 4> pts = {{
        {0.0, 3.00},
        {10.0, 3.20},
        {95.0, 3.33},
        {100.0, 3.45},
    }};
    const double s = std::clamp(soc, 0.0, 100.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (s <= pts[i].first) {
            const double w = (s - pts[i - 1].first) / (pts[i].first - pts[i - 1].first);
            return pts[i - 1].second + w * (pts[i].second - pts[i - 1].second);
        }
    }
    return pts.back().second;
}

double soc_step(double soc, double dAh_charged, double dAh_discharged,
                double coulombic_efficiency, double capacity_ah) noexcept {
    const double net = coulombic_efficiency * dAh_charged - dAh_discharged;
    return std::clamp(soc + 100.0 * net / capacity_ah, 0.0, 100.0);
}

TelemetrySeries generate_synthetic(const BatterySpec& spec, const UserProfile& profile,
                                   std::size_t steps, double dt, std::uint64_t seed,
                                   double initial_soc) {
    spec.validate();
    profile.validate();
    if (steps < 2) throw InvalidArgument("generate_synthetic: steps must be >= 2");
    if (!(dt > 0.0)) throw InvalidArgument("generate_synthetic: dt must be positive");
    if (!(initial_soc >= 0.0 && initial_soc <= 100.0)) {
        throw InvalidArgument("generate_synthetic: initial_soc outside [0, 100]");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> spread(-kCellResistanceSpread,
                                                  kCellResistanceSpread);

    const std::size_t cells = static_cast<std::size_t>(spec.cells_series);
    const double parallel = static_cast<double>(spec.strings_parallel);
    // Voltage measurement jitter scales with the current noise through the IR
    // drop, so noise_std = 0 is exactly deterministic.
    const double v_noise = profile.noise_std * kInternalResistanceOhm / parallel;

    std::vector<double> cell_r(cells);
    for (auto& r : cell_r) r = kInternalResistanceOhm * (1.0 + spread(rng));

    TelemetrySeries series;
    series.spec = spec;
    series.dt = dt;
    series.records.reserve(steps);

    auto make_record = [&](double t, double current, Mode mode, double soc,
                           double ah_chg, double ah_dis, double temp) {
        TelemetryRecord rec;
        rec.timestamp = t;
        rec.current = current;
        rec.mode = mode;
        rec.soc = soc;
        rec.ah_charged_cum = ah_chg;
        rec.ah_discharged_cum = ah_dis;
        rec.temperature = temp;
        rec.cell_voltages.resize(cells);
        double pack = 0.0;
        const double base = ocv_per_cell(soc);
        for (std::size_t i = 0; i < cells; ++i) {
            double v = base - current * cell_r[i] / parallel;
            if (v_noise > 0.0) v += v_noise * unit(rng);
            rec.cell_voltages[i] = v;
            pack += v;
        }
        rec.pack_voltage = pack;
        return rec;
    };

    double soc = initial_soc;
    double ah_chg = 0.0;
    double ah_dis = 0.0;
    double temp = kAmbientC;
    series.records.push_back(make_record(0.0, 0.0, Mode::Idle, soc, 0.0, 0.0, temp));

    const double thermal_k = std::min(dt / kThermalLagS, 1.0);
    for (std::size_t i = 1; i < steps; ++i) {
        const double t_prev = static_cast<double>(i - 1) * dt;
        double current = profile.commanded_current(t_prev);
        if (profile.noise_std > 0.0) current += profile.noise_std * unit(rng);

        double d_chg = std::max(current, 0.0) * dt / 3600.0;
        double d_dis = std::max(-current, 0.0) * dt / 3600.0;
        const double net = spec.coulombic_efficiency * d_chg - d_dis;
        const double candidate = soc + 100.0 * net / spec.capacity_ah;
        if (candidate > 100.0 || candidate < 0.0) {
            // Profile would push SoC out of range: hold this step at Idle.
            current = 0.0;
            d_chg = 0.0;
            d_dis = 0.0;
        } else {
            soc = soc_step(soc, d_chg, d_dis, spec.coulombic_efficiency,
                           spec.capacity_ah);
        }
        ah_chg += d_chg;
        ah_dis += d_dis;
        temp += thermal_k * ((kAmbientC + kTempCoupling * current * current) - temp);

        series.records.push_back(make_record(static_cast<double>(i) * dt, current,
                                             mode_from_current(current), soc,
                                             ah_chg, ah_dis, temp));
    }
    return series;
}

namespace {

std::vector<std::string> csv_header_fields(int cells) {
    std::vector<std::string> fields = {"timestamp",   "mode", "pack_voltage",
                                       "current",     "temperature", "soc",
                                       "ah_charged",  "ah_discharged"};
    for (int i = 1; i <= cells; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "cell_v_%02d", i);
        fields.emplace_back(buf);
    }
    return fields;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

void save_csv(const TelemetrySeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const auto header = csv_header_fields(series.spec.cells_series);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& r : series.records) {
        out << fmt17(r.timestamp) << ',' << mode_label(r.mode) << ','
            << fmt17(r.pack_voltage) << ',' << fmt17(r.current) << ','
            << fmt17(r.temperature) << ',' << fmt17(r.soc) << ','
            << fmt17(r.ah_charged_cum) << ',' << fmt17(r.ah_discharged_cum);
        for (double v : r.cell_voltages) out << ',' << fmt17(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

TelemetrySeries load_csv(const std::string& path, const BatterySpec& spec) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open telemetry CSV '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty file: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto expected = csv_header_fields(spec.cells_series);
    const auto got = split_csv_line(line);
    for (const auto& col : expected) {
        if (std::find(got.begin(), got.end(), col) == got.end()) {
            throw SchemaError("missing column '" + col + "'");
        }
    }
    if (got != expected) {
        throw SchemaError("header does not match the telemetry schema");
    }

    TelemetrySeries series;
    series.spec = spec;
    const std::size_t cells = static_cast<std::size_t>(spec.cells_series);

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const std::string where = "row " + std::to_string(row);
        const auto fields = split_csv_line(line);
        if (fields.size() != expected.size()) {
            throw ParseError(where + ": expected " + std::to_string(expected.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        TelemetryRecord rec;
        rec.timestamp = parse_double(fields[0], where + ", column timestamp");
        try {
            rec.mode = mode_from_label(fields[1]);
        } catch (const ParseError&) {
            throw ParseError(where + ", column mode: unknown mode '" + fields[1] + "'");
        }
        rec.pack_voltage = parse_double(fields[2], where + ", column pack_voltage");
        rec.current = parse_double(fields[3], where + ", column current");
        rec.temperature = parse_double(fields[4], where + ", column temperature");
        rec.soc = parse_double(fields[5], where + ", column soc");
        rec.ah_charged_cum = parse_double(fields[6], where + ", column ah_charged");
        rec.ah_discharged_cum = parse_double(fields[7], where + ", column ah_discharged");
        rec.cell_voltages.resize(cells);
        for (std::size_t i = 0; i < cells; ++i) {
            rec.cell_voltages[i] =
                parse_double(fields[8 + i], where + ", column " + expected[8 + i]);
        }
        series.records.push_back(std::move(rec));
    }

    if (series.records.size() < 2) {
        throw ValidationError("telemetry series: length >= 2 required");
    }
    series.dt = series.records[1].timestamp - series.records[0].timestamp;
    series.validate();
    return series;
}

std::pair<TelemetrySeries, TelemetrySeries>
chronological_split(const TelemetrySeries& series, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw InvalidArgument("chronological_split: ratio must lie in (0, 1)");
    }
    const double n = static_cast<double>(series.size());
    const auto cut = static_cast<std::size_t>(std::floor(ratio * n + 1e-9));

    TelemetrySeries first;
    first.spec = series.spec;
    first.dt = series.dt;
    first.records.assign(series.records.begin(), series.records.begin() + cut);

    TelemetrySeries second;
    second.spec = series.spec;
    second.dt = series.dt;
    second.records.assign(series.records.begin() + cut, series.records.end());

    return {std::move(first), std::move(second)};
}

} // namespace bsf::telemetry
