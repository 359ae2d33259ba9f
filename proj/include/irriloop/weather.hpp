#pragma once

#include "irriloop/soil_physics.hpp"

#include <filesystem>
#include <vector>

namespace irriloop {

/// Weather samples on a regular grid of `dt` seconds starting at t = 0.
struct WeatherSeries {
    double dt{7200.0};
    std::vector<WeatherSample> samples;

    std::size_t size() const { return samples.size(); }
    /// Sample for grid index i; indices past the end repeat the last sample (or calm weather).
    WeatherSample at(std::size_t i) const;
};

/// Half-sine daytime ET0 profile peaking at 12:00, zero between 18:00 and 06:00 [m/s].
double diurnal_et0(double t_seconds, double peak);

/// Calm weather: no rain, no evapotranspiration.
WeatherSeries calm_weather(std::size_t length, double dt = 7200.0);

/// Diurnal ET0 only.
WeatherSeries dry_weather(std::size_t length, double et0_peak, double kc = 1.0,
                          double dt = 7200.0);

/// Two rain events (steps 18-22 and 40-43) on top of diurnal ET0.
WeatherSeries rain_weather(std::size_t length, double et0_peak, double rain_peak,
                           double kc = 1.0, double dt = 7200.0);

/// CSV with header `t_s,P_mps,ET0_mps,Kc`.
WeatherSeries read_weather_csv(const std::filesystem::path& path);
void write_weather_csv(const std::filesystem::path& path, const WeatherSeries& series);

}  // namespace irriloop
