/**
 * @file soil_physics.hpp
 * @brief One-dimensional Richards-equation soil column used as the ground-truth plant.
 *
 * Unsaturated flow in a homogeneous column with van Genuchten-Mualem
 * hydraulics, a prescribed-flux surface boundary, free drainage at the bottom
 * and a root-zone evapotranspiration sink. The column is discretized into
 * cell-centered nodes ordered from the surface (index 0) downwards.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace irriloop {

/// Thrown when the implicit integrator cannot converge even with the minimum sub-step.
class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sandy loam defaults.
struct SoilParams {
    double ks{1.23e-5};     // saturated hydraulic conductivity [m/s]
    double theta_s{0.41};   // [m3/m3]
    double theta_r{0.065};  // [m3/m3]
    double alpha{7.5};      // [1/m]
    double n{1.89};
    double m{0.47};         // informational; relations use 1 - 1/n

    void validate() const;
};

struct ColumnGeometry {
    double total_depth{0.5};  // [m]
    int n_nodes{26};
    double root_depth{0.13};  // |z_r| [m]

    double dz() const { return total_depth / n_nodes; }
    /// Depth below the surface of node k's center [m].
    double node_depth(int k) const { return (k + 0.5) * dz(); }
    /// Node whose center is nearest the rooting depth.
    int root_node_index() const;
    /// Number of nodes whose center lies within the root zone.
    int root_zone_nodes() const;

    void validate() const;
};

/// Feddes-type piecewise-linear water stress factor.
struct WaterStress {
    double h1{-0.01};   // anaerobiosis point
    double h2{-0.05};   // start of the no-stress plateau
    double h3{-4.0};    // end of the plateau
    double h4{-150.0};  // wilting point

    double operator()(double h) const;
    void validate() const;
};

struct WeatherSample {
    double precipitation{0.0};  // P [m/s]
    double et0{0.0};            // reference evapotranspiration rate [m/s]
    double kc{1.0};             // crop coefficient
};

struct SoilColumnState {
    std::vector<double> h;  // capillary potential per node, top to bottom [m]
    double t{0.0};          // [s]
};

enum class ConductivityMean { arithmetic, geometric };

struct IntegratorOptions {
    double initial_substep{60.0};  // [s]
    double max_substep{900.0};     // sub-steps double after each success up to this cap
    double min_substep{1e-3};      // below this the step fails
    double newton_tol{1e-8};       // max |dh| at convergence [m]
    int max_newton_iters{16};
    double h_min{-1e6};
    double h_max{-1e-8};
};

/// Water volumes exchanged over a step, per unit surface area [m].
struct FluxLedger {
    double inflow{0.0};         // irrigation + precipitation through the surface
    double drainage{0.0};       // out through the bottom face
    double transpiration{0.0};  // root-zone sink
    int substeps{0};
    int halvings{0};
    int clamp_events{0};

    FluxLedger& operator+=(const FluxLedger& other);
};

// van Genuchten-Mualem constitutive relations.
double capillary_capacity(double h, const SoilParams& p);
double hydraulic_conductivity(double h, const SoilParams& p);
double water_content(double h, const SoilParams& p);
double potential_from_water_content(double theta, const SoilParams& p);

class SoilColumn {
public:
    SoilColumn() = default;
    SoilColumn(SoilParams params, ColumnGeometry geometry, WaterStress stress = {},
               IntegratorOptions options = {},
               ConductivityMean mean = ConductivityMean::arithmetic);

    const SoilParams& params() const { return params_; }
    const ColumnGeometry& geometry() const { return geometry_; }
    const WaterStress& stress() const { return stress_; }
    const IntegratorOptions& options() const { return options_; }
    ConductivityMean conductivity_mean() const { return mean_; }
    void set_options(const IntegratorOptions& options) { options_ = options; }

    /// Uniform profile at the given potential.
    SoilColumnState uniform_state(double h) const;

    /// dh/dt of the semi-discrete system [m/s per node].
    std::vector<double> rhs(const SoilColumnState& state, double irrigation,
                            const WeatherSample& weather) const;

    /// Downward water flux across each of the n_nodes + 1 faces [m/s].
    std::vector<double> face_fluxes(const std::vector<double>& h, double irrigation,
                                    const WeatherSample& weather) const;

    /// Root-zone extraction rate per node [1/s] (volumetric water content per second).
    std::vector<double> sink(const std::vector<double>& h, const WeatherSample& weather) const;

    /// Advances the column by dt seconds with constant forcing.
    SoilColumnState step(const SoilColumnState& state, double irrigation,
                         const WeatherSample& weather, double dt,
                         FluxLedger* ledger = nullptr) const;

    /// Volumetric water content at the root node.
    double measure_output(const SoilColumnState& state) const;

    /// Water stored in the column per unit area [m].
    double storage(const SoilColumnState& state) const;

    void check_state(const SoilColumnState& state) const;

private:
    bool implicit_substep(const std::vector<double>& h_old, std::vector<double>& h_new,
                          double irrigation, const WeatherSample& weather,
                          double dt) const;
    void residual(const std::vector<double>& h_old, const std::vector<double>& h,
                  double irrigation, const WeatherSample& weather, double dt,
                  std::vector<double>& out) const;

    SoilParams params_{};
    ColumnGeometry geometry_{};
    WaterStress stress_{};
    IntegratorOptions options_{};
    ConductivityMean mean_{ConductivityMean::arithmetic};
};

}  // namespace irriloop
