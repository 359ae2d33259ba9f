#include "irriloop/weather.hpp"

#include "irriloop/csv.hpp"

#include <cmath>
#include <numbers>

namespace irriloop {

WeatherSample WeatherSeries::at(std::size_t i) const {
    if (samples.empty()) return {};
    return i < samples.size() ? samples[i] : samples.back();
}

double diurnal_et0(double t_seconds, double peak) {
    const double hour = std::fmod(t_seconds / 3600.0, 24.0);
    return peak * std::max(0.0, std::sin(std::numbers::pi * (hour - 6.0) / 12.0));
}

WeatherSeries calm_weather(std::size_t length, double dt) {
    WeatherSeries w;
    w.dt = dt;
    w.samples.assign(length, WeatherSample{});
    return w;
}

WeatherSeries dry_weather(std::size_t length, double et0_peak, double kc, double dt) {
    WeatherSeries w;
    w.dt = dt;
    w.samples.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
        // ET0 is sampled at the middle of each interval.
        w.samples[i] = WeatherSample{0.0, diurnal_et0((i + 0.5) * dt, et0_peak), kc};
    }
    return w;
}

WeatherSeries rain_weather(std::size_t length, double et0_peak, double rain_peak, double kc,
                           double dt) {
    WeatherSeries w = dry_weather(length, et0_peak, kc, dt);
    auto add_event = [&](std::size_t first, std::size_t last) {
        const std::size_t span = last - first + 1;
        for (std::size_t j = 0; j < span && first + j < length; ++j) {
            const double shape = std::sin(std::numbers::pi * (j + 1.0) / (span + 1.0));
            w.samples[first + j].precipitation = rain_peak * shape;
        }
    };
    add_event(18, 22);
    add_event(40, 43);
    return w;
}

WeatherSeries read_weather_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto& t = table.column("t_s");
    const auto& p = table.column("P_mps");
    const auto& et = table.column("ET0_mps");
    const auto& kc = table.column("Kc");
    WeatherSeries w;
    if (t.size() >= 2) w.dt = t[1] - t[0];
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (p[i] < 0.0 || et[i] < 0.0 || kc[i] < 0.0) {
            throw CsvError(path.string() + ": negative weather rate at row " +
                           std::to_string(i + 1));
        }
        w.samples.push_back({p[i], et[i], kc[i]});
    }
    return w;
}

void write_weather_csv(const std::filesystem::path& path, const WeatherSeries& series) {
    CsvTable table;
    std::vector<double> t, p, et, kc;
    for (std::size_t i = 0; i < series.size(); ++i) {
        t.push_back(i * series.dt);
        p.push_back(series.samples[i].precipitation);
        et.push_back(series.samples[i].et0);
        kc.push_back(series.samples[i].kc);
    }
    table.add_column("t_s", t);
    table.add_column("P_mps", p);
    table.add_column("ET0_mps", et);
    table.add_column("Kc", kc);
    write_csv(path, table);
}

}  // namespace irriloop
