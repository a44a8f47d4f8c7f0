#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "accent/models.hpp"

namespace accent::geo {

// One speaker collapsed to a location and a Southern probability.
struct SpeakerPoint {
    double lon = 0.0;
    double lat = 0.0;
    double p = 0.5;  // clamped into [1e-6, 1 - 1e-6]
    std::string speaker_id;
};

using Ring = std::vector<std::array<double, 2>>;  // closed (lon, lat) ring

// Boundary polygon(s) rasterised onto a uniform grid in a locally planar
// projection (equirectangular about the domain centre; the smoother needs an
// isotropic metric, which raw degrees are not).
struct BoundaryDomain {
    std::vector<Ring> rings;
    double lon0 = 0.0, lat0 = 0.0;  // projection centre
    double cell_km = 2.0;
    int nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0;      // km coordinates of the (0,0) cell centre
    std::vector<int> cell_of;        // ny*nx -> compact inside index, -1 outside
    int n_inside = 0;

    std::pair<double, double> project(double lon, double lat) const;
    std::pair<double, double> unproject(double x, double y) const;
    std::pair<double, double> cell_center(int ix, int iy) const;
    int grid_index(int ix, int iy) const { return iy * nx + ix; }
    bool is_inside(int ix, int iy) const;

    static BoundaryDomain build(const std::vector<Ring>& rings, double cell_km = 2.0);
};

// Even-odd rule over every ring.
bool point_in_rings(const std::vector<Ring>& rings, double lon, double lat);

// Polygon / MultiPolygon, possibly wrapped in Feature or FeatureCollection.
BoundaryDomain read_boundary_geojson(const std::string& path, double cell_km = 2.0);

// Beta-regression field on the masked grid.
struct GeoSurface {
    BoundaryDomain domain;
    Eigen::VectorXd f;    // logit field, one entry per inside cell
    Eigen::VectorXd se;   // standard errors on the logit scale
    double nu = 0.0;      // Beta precision
    double lambda = 0.0;  // roughness weight
    double edf = 0.0;
    bool converged = true;

    double mu(int compact) const;
};

struct SoapOptions {
    double lambda = -1.0;  // < 0 selects by GCV over the grid below
    double lambda_lo = 1e-4, lambda_hi = 1e8;
    int lambda_points = 13;
    int max_iter = 200;
};

// One aligned sound with the place it was recorded.
struct LocatedSound {
    models::SoundData sound;
    double lon = 0.0;
    double lat = 0.0;
};

// Collapse each speaker to the cellwise average of their aligned curves,
// their modal recording location, and the classifier probability of the
// averaged sound. Speaker order follows first appearance.
std::vector<SpeakerPoint> speaker_average(
    const std::vector<LocatedSound>& sounds,
    const std::function<double(const models::SoundData&)>& logit_of);

// Penalised Beta likelihood with logit link: bilinear data incidence, squared
// five-point Laplacian over interior cells (never across the mask), a single
// precision nu profiled alongside, lambda by GCV on the working model.
GeoSurface fit_soap_beta(const std::vector<SpeakerPoint>& points, const BoundaryDomain& domain,
                         const SoapOptions& opts = {});

// Pointwise bands on the probability scale via the normal approximation on
// the link scale: ilogit(f -/+ z * se).
std::pair<Eigen::VectorXd, Eigen::VectorXd> surface_ci(const GeoSurface& surface,
                                                       double level = 0.95);

// lon, lat, mu, lower, upper for every inside cell.
void write_surface_csv(const std::string& path, const GeoSurface& surface, double level = 0.95);
// speaker overlay: lon, lat, p, speaker
void write_points_csv(const std::string& path, const std::vector<SpeakerPoint>& points);
// base_mu.ppm / base_lower.ppm / base_upper.ppm heatmaps
void write_surface_ppm(const std::string& base, const GeoSurface& surface);

}  // namespace accent::geo
