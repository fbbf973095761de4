#pragma once

#include "bsf/errors.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bsf::telemetry {

enum class Mode { Charging, Discharging, Idle };

const char* mode_label(Mode m) noexcept;          // CHG / DIS / IDLE
Mode mode_from_label(const std::string& s);       // throws ParseError

// Currents within +/- this band are labeled Idle.
constexpr double kIdleThresholdA = 0.5;

Mode mode_from_current(double amps) noexcept;

// LFP pack: 16 cells in series (3.2 V nominal each), strings of 72 Ah cells
// in parallel.
struct BatterySpec {
    double nominal_voltage = 51.2;
    double capacity_ah = 360.0;
    int cells_series = 16;
    int strings_parallel = 5;
    double cell_capacity_ah = 72.0;
    double coulombic_efficiency = 1.0;

    static BatterySpec make(double capacity_ah = 360.0, int cells_series = 16,
                            double coulombic_efficiency = 1.0);
    void validate() const; // throws InvalidArgument
};

struct TelemetryRecord {
    double timestamp = 0.0; // seconds since series start
    Mode mode = Mode::Idle;
    double pack_voltage = 0.0;
    std::vector<double> cell_voltages;
    double current = 0.0; // amperes, positive = charging
    double temperature = 25.0;
    double soc = 50.0; // percent
    double ah_charged_cum = 0.0;
    double ah_discharged_cum = 0.0;
};

struct TelemetrySeries {
    BatterySpec spec;
    double dt = 1.0;
    std::vector<TelemetryRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    void validate() const; // throws ValidationError naming the offending row
};

struct ProfileSegment {
    Mode mode = Mode::Idle;
    double current_a = 0.0; // magnitude; sign derived from mode
    double duration_s = 0.0;
};

// A scripted duty cycle. Segments repeat cyclically when the generated span
// exceeds the profile period.
struct UserProfile {
    std::string name;
    std::vector<ProfileSegment> segments;
    double noise_std = 0.0; // amperes

    double period_s() const noexcept;
    double commanded_current(double t) const; // signed amps at time t (cyclic)
    void validate() const;
};

const UserProfile& profile_by_name(const std::string& name); // throws NotFoundError
std::vector<std::string> profile_names();

// Piecewise-linear LFP open-circuit voltage per cell, volts at soc percent.
double ocv_per_cell(double soc) noexcept;

// One Coulomb-counting step, percent. The generator and the SoC derivation
// share this so round-trips are exact.
double soc_step(double soc, double dAh_charged, double dAh_discharged,
                double coulombic_efficiency, double capacity_ah) noexcept;

// Equivalent-circuit synthetic data. Record 0 is the initial state (zero
// current, Idle); each following record integrates one dt.
TelemetrySeries generate_synthetic(const BatterySpec& spec, const UserProfile& profile,
                                   std::size_t steps, double dt, std::uint64_t seed,
                                   double initial_soc = 50.0);

void save_csv(const TelemetrySeries& series, const std::string& path);
TelemetrySeries load_csv(const std::string& path,
                         const BatterySpec& spec = BatterySpec::make());

// Earliest floor(ratio*n) records and the remainder, in order. The train part
// may come out shorter than the series invariant allows; windowing rejects it
// downstream.
std::pair<TelemetrySeries, TelemetrySeries>
chronological_split(const TelemetrySeries& series, double ratio);

} // namespace bsf::telemetry
