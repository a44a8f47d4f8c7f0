#include "accent/geo.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "accent/csvio.hpp"
#include "accent/numeric.hpp"

namespace accent::geo {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double>;

constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kDegree = 3.14159265358979323846 / 180.0;
constexpr double kEps = 1e-6;  // probability clamp

double clamp_p(double p) { return std::min(1.0 - kEps, std::max(kEps, p)); }

}  // namespace

std::pair<double, double> BoundaryDomain::project(double lon, double lat) const {
    double x = kEarthRadiusKm * std::cos(lat0 * kDegree) * (lon - lon0) * kDegree;
    double y = kEarthRadiusKm * (lat - lat0) * kDegree;
    return {x, y};
}

std::pair<double, double> BoundaryDomain::unproject(double x, double y) const {
    double lon = lon0 + x / (kEarthRadiusKm * std::cos(lat0 * kDegree) * kDegree);
    double lat = lat0 + y / (kEarthRadiusKm * kDegree);
    return {lon, lat};
}

std::pair<double, double> BoundaryDomain::cell_center(int ix, int iy) const {
    return {x0 + ix * cell_km, y0 + iy * cell_km};
}

bool BoundaryDomain::is_inside(int ix, int iy) const {
    if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) return false;
    return cell_of[size_t(grid_index(ix, iy))] >= 0;
}

bool point_in_rings(const std::vector<Ring>& rings, double lon, double lat) {
    bool inside = false;
    for (const auto& ring : rings) {
        size_t m = ring.size();
        for (size_t i = 0, j = m - 1; i < m; j = i++) {
            double yi = ring[i][1], yj = ring[j][1];
            if ((yi > lat) == (yj > lat)) continue;
            double xint = ring[i][0] + (lat - yi) / (yj - yi) * (ring[j][0] - ring[i][0]);
            if (lon < xint) inside = !inside;
        }
    }
    return inside;
}

BoundaryDomain BoundaryDomain::build(const std::vector<Ring>& rings, double cell_km) {
    if (rings.empty()) throw std::invalid_argument("BoundaryDomain: no rings");
    for (const auto& r : rings)
        if (r.size() < 3) throw std::invalid_argument("BoundaryDomain: ring with < 3 vertices");
    if (cell_km <= 0.0) throw std::invalid_argument("BoundaryDomain: cell size must be positive");

    BoundaryDomain d;
    d.rings = rings;
    d.cell_km = cell_km;

    double lon_sum = 0.0, lat_sum = 0.0;
    size_t count = 0;
    for (const auto& r : rings)
        for (const auto& v : r) {
            lon_sum += v[0];
            lat_sum += v[1];
            ++count;
        }
    d.lon0 = lon_sum / double(count);
    d.lat0 = lat_sum / double(count);

    double xmin = std::numeric_limits<double>::max(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    std::vector<Ring> proj(rings.size());
    for (size_t r = 0; r < rings.size(); ++r) {
        proj[r].resize(rings[r].size());
        for (size_t v = 0; v < rings[r].size(); ++v) {
            auto [x, y] = d.project(rings[r][v][0], rings[r][v][1]);
            proj[r][v] = {x, y};
            xmin = std::min(xmin, x), xmax = std::max(xmax, x);
            ymin = std::min(ymin, y), ymax = std::max(ymax, y);
        }
    }

    d.nx = std::max(1, int(std::ceil((xmax - xmin) / cell_km)));
    d.ny = std::max(1, int(std::ceil((ymax - ymin) / cell_km)));
    d.x0 = xmin + 0.5 * cell_km;
    d.y0 = ymin + 0.5 * cell_km;

    d.cell_of.assign(size_t(d.nx) * size_t(d.ny), -1);
    d.n_inside = 0;
    for (int iy = 0; iy < d.ny; ++iy)
        for (int ix = 0; ix < d.nx; ++ix) {
            auto [cx, cy] = d.cell_center(ix, iy);
            if (point_in_rings(proj, cx, cy)) d.cell_of[size_t(d.grid_index(ix, iy))] = d.n_inside++;
        }
    if (d.n_inside == 0) throw std::invalid_argument("BoundaryDomain: no grid cell falls inside");
    return d;
}

namespace {

void collect_polygon(const csvio::Json& coords, std::vector<Ring>& rings) {
    for (const auto& ring : coords) {
        Ring r;
        for (const auto& v : ring) r.push_back({v[0].get<double>(), v[1].get<double>()});
        rings.push_back(std::move(r));
    }
}

void collect_geometry(const csvio::Json& geom, std::vector<Ring>& rings) {
    const std::string type = geom.at("type").get<std::string>();
    if (type == "Polygon") {
        collect_polygon(geom.at("coordinates"), rings);
    } else if (type == "MultiPolygon") {
        for (const auto& poly : geom.at("coordinates")) collect_polygon(poly, rings);
    } else if (type == "Feature") {
        collect_geometry(geom.at("geometry"), rings);
    } else if (type == "FeatureCollection") {
        for (const auto& f : geom.at("features")) collect_geometry(f, rings);
    } else {
        throw std::runtime_error("read_boundary_geojson: unsupported type " + type);
    }
}

}  // namespace

BoundaryDomain read_boundary_geojson(const std::string& path, double cell_km) {
    auto j = csvio::read_json(path);
    std::vector<Ring> rings;
    collect_geometry(j, rings);
    return BoundaryDomain::build(rings, cell_km);
}

double GeoSurface::mu(int compact) const { return numeric::ilogit(f[compact]); }

std::vector<SpeakerPoint> speaker_average(
    const std::vector<LocatedSound>& sounds,
    const std::function<double(const models::SoundData&)>& logit_of) {
    if (sounds.empty()) throw std::invalid_argument("speaker_average: no sounds");

    std::vector<std::string> order;
    std::map<std::string, std::vector<const LocatedSound*>> groups;
    for (const auto& s : sounds) {
        if (s.sound.mfcc.values.size() == 0 && s.sound.formant.values.size() == 0)
            throw std::invalid_argument("speaker_average: sound with no curves for speaker " +
                                        s.sound.speaker);
        if (!groups.count(s.sound.speaker)) order.push_back(s.sound.speaker);
        groups[s.sound.speaker].push_back(&s);
    }

    std::vector<SpeakerPoint> points;
    for (const auto& id : order) {
        const auto& group = groups[id];
        models::SoundData avg = group.front()->sound;
        for (size_t i = 1; i < group.size(); ++i) {
            avg.mfcc.values += group[i]->sound.mfcc.values;
            avg.formant.values += group[i]->sound.formant.values;
        }
        avg.mfcc.values /= double(group.size());
        avg.formant.values /= double(group.size());

        // modal location; ties resolved by first appearance
        std::map<std::pair<double, double>, int> votes;
        std::pair<double, double> best{group.front()->lon, group.front()->lat};
        int best_votes = 0;
        for (const auto* s : group) {
            int v = ++votes[{s->lon, s->lat}];
            if (v > best_votes) {
                best_votes = v;
                best = {s->lon, s->lat};
            }
        }

        SpeakerPoint pt;
        pt.speaker_id = id;
        pt.lon = best.first;
        pt.lat = best.second;
        pt.p = clamp_p(numeric::ilogit(logit_of(avg)));
        points.push_back(std::move(pt));
    }
    return points;
}

namespace {

// data incidence: bilinear weights over the (up to) four surrounding inside
// cells, renormalised; a point with no inside neighbour snaps to the nearest
// inside cell centre.
SparseMat incidence(const std::vector<SpeakerPoint>& points, const BoundaryDomain& d,
                    std::vector<int>* primary_cell) {
    std::vector<Eigen::Triplet<double>> trip;
    for (size_t i = 0; i < points.size(); ++i) {
        auto [x, y] = d.project(points[i].lon, points[i].lat);
        double gx = (x - d.x0) / d.cell_km;
        double gy = (y - d.y0) / d.cell_km;
        int ix = int(std::floor(gx));
        int iy = int(std::floor(gy));
        double fx = gx - ix, fy = gy - iy;
        std::array<std::tuple<int, int, double>, 4> corners = {
            std::tuple<int, int, double>{ix, iy, (1 - fx) * (1 - fy)},
            {ix + 1, iy, fx * (1 - fy)},
            {ix, iy + 1, (1 - fx) * fy},
            {ix + 1, iy + 1, fx * fy}};
        double total = 0.0;
        for (auto& [cx, cy, w] : corners)
            if (d.is_inside(cx, cy)) total += w;

        int best = -1;
        double best_w = -1.0;
        if (total > 1e-12) {
            for (auto& [cx, cy, w] : corners) {
                if (!d.is_inside(cx, cy) || w == 0.0) continue;
                int c = d.cell_of[size_t(d.grid_index(cx, cy))];
                trip.emplace_back(int(i), c, w / total);
                if (w > best_w) {
                    best_w = w;
                    best = c;
                }
            }
        } else {
            double best_d2 = std::numeric_limits<double>::max();
            for (int cy = 0; cy < d.ny; ++cy)
                for (int cx = 0; cx < d.nx; ++cx) {
                    if (!d.is_inside(cx, cy)) continue;
                    auto [ccx, ccy] = d.cell_center(cx, cy);
                    double d2 = (ccx - x) * (ccx - x) + (ccy - y) * (ccy - y);
                    if (d2 < best_d2) {
                        best_d2 = d2;
                        best = d.cell_of[size_t(d.grid_index(cx, cy))];
                    }
                }
            trip.emplace_back(int(i), best, 1.0);
        }
        if (primary_cell) primary_cell->push_back(best);
    }
    SparseMat A(int(points.size()), d.n_inside);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

// squared five-point Laplacian with natural (free) boundary handling: a cell
// couples only to inside neighbours, so the stencil shrinks at the mask edge
// and nothing reaches across it; the null space is the per-component constant
SparseMat laplacian_penalty(const BoundaryDomain& d) {
    std::vector<Eigen::Triplet<double>> trip;
    int row = 0;
    for (int iy = 0; iy < d.ny; ++iy)
        for (int ix = 0; ix < d.nx; ++ix) {
            if (!d.is_inside(ix, iy)) continue;
            auto c = [&](int jx, int jy) { return d.cell_of[size_t(d.grid_index(jx, jy))]; };
            const int nbr[4][2] = {{ix - 1, iy}, {ix + 1, iy}, {ix, iy - 1}, {ix, iy + 1}};
            int count = 0;
            for (const auto& nb : nbr)
                if (d.is_inside(nb[0], nb[1])) {
                    trip.emplace_back(row, c(nb[0], nb[1]), 1.0);
                    ++count;
                }
            if (count == 0) continue;  // isolated cell, nothing to smooth against
            trip.emplace_back(row, c(ix, iy), double(-count));
            ++row;
        }
    SparseMat L(row, d.n_inside);
    L.setFromTriplets(trip.begin(), trip.end());
    return SparseMat(L.transpose() * L);
}

double ilogit_clamped(double v) {
    double mu = numeric::ilogit(v);
    return std::min(1.0 - 1e-9, std::max(1e-9, mu));
}

// iid Beta log likelihood of the clamped responses at fixed mu
double beta_loglik(const VectorXd& ystar_y, const VectorXd& ystar_1my, const VectorXd& mu,
                   double nu) {
    double ll = 0.0;
    for (int i = 0; i < mu.size(); ++i) {
        double a = mu[i] * nu, b = (1.0 - mu[i]) * nu;
        ll += std::lgamma(nu) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * ystar_y[i] +
              (b - 1.0) * ystar_1my[i];
    }
    return ll;
}

double profile_nu(const VectorXd& log_y, const VectorXd& log_1my, const VectorXd& mu) {
    // golden-section on log nu
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = std::log(1e-2), hi = std::log(1e6);
    double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    double fa = beta_loglik(log_y, log_1my, mu, std::exp(a));
    double fb = beta_loglik(log_y, log_1my, mu, std::exp(b));
    for (int it = 0; it < 80; ++it) {
        if (fa < fb) {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = beta_loglik(log_y, log_1my, mu, std::exp(b));
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = beta_loglik(log_y, log_1my, mu, std::exp(a));
        }
    }
    return std::exp((lo + hi) / 2.0);
}

struct InnerFit {
    VectorXd f;
    double nu = 5.0;
    double edf = 0.0;
    double gcv = std::numeric_limits<double>::infinity();
    bool converged = false;
    Eigen::SimplicialLDLT<SparseMat>* solver = nullptr;
};

// alternate Fisher scoring for f with profile updates of nu at fixed lambda
InnerFit fit_at_lambda(const SparseMat& A, const SparseMat& P, const VectorXd& z, double lambda,
                       int max_iter, VectorXd f_init, double nu_init,
                       Eigen::SimplicialLDLT<SparseMat>& solver) {
    const int n = int(A.rows());
    const int C = int(A.cols());
    VectorXd log_y(n), log_1my(n), ystar(n);
    for (int i = 0; i < n; ++i) {
        log_y[i] = std::log(z[i]);
        log_1my[i] = std::log1p(-z[i]);
        ystar[i] = log_y[i] - log_1my[i];
    }

    SparseMat eye(C, C);
    eye.setIdentity();

    InnerFit fit;
    fit.f = std::move(f_init);
    fit.nu = nu_init;

    VectorXd w(n), zwork(n), eta(n), mu(n);
    bool pattern_ready = false;
    for (int it = 0; it < max_iter; ++it) {
        eta = A * fit.f;
        for (int i = 0; i < n; ++i) mu[i] = ilogit_clamped(eta[i]);

        double nu_new = profile_nu(log_y, log_1my, mu);

        for (int i = 0; i < n; ++i) {
            double a = mu[i] * nu_new, b = (1.0 - mu[i]) * nu_new;
            double mustar = boost::math::digamma(a) - boost::math::digamma(b);
            double psum = boost::math::trigamma(a) + boost::math::trigamma(b);
            double dmu = mu[i] * (1.0 - mu[i]);
            w[i] = std::max(nu_new * nu_new * psum * dmu * dmu, 1e-12);
            zwork[i] = eta[i] + (ystar[i] - mustar) / (nu_new * psum * dmu);
        }

        SparseMat H = SparseMat(A.transpose() * w.asDiagonal() * A) + lambda * P;
        H = H + (1e-9 * std::max(1.0, H.diagonal().maxCoeff())) * eye;
        if (!pattern_ready) {
            solver.analyzePattern(H);
            pattern_ready = true;
        }
        solver.factorize(H);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("fit_soap_beta: singular penalized system");
        VectorXd f_new = solver.solve(A.transpose() * (w.asDiagonal() * zwork));

        double df = (f_new - fit.f).cwiseAbs().maxCoeff();
        double dn = std::abs(std::log(nu_new) - std::log(fit.nu));
        fit.f = f_new;
        fit.nu = nu_new;
        if (df < 1e-8 * std::max(1.0, fit.f.cwiseAbs().maxCoeff()) && dn < 1e-8) {
            fit.converged = true;
            break;
        }
    }

    // working-model GCV and EDF at the solution
    eta = A * fit.f;
    for (int i = 0; i < n; ++i) mu[i] = ilogit_clamped(eta[i]);
    for (int i = 0; i < n; ++i) {
        double a = mu[i] * fit.nu, b = (1.0 - mu[i]) * fit.nu;
        double mustar = boost::math::digamma(a) - boost::math::digamma(b);
        double psum = boost::math::trigamma(a) + boost::math::trigamma(b);
        double dmu = mu[i] * (1.0 - mu[i]);
        w[i] = std::max(fit.nu * fit.nu * psum * dmu * dmu, 1e-12);
        zwork[i] = eta[i] + (ystar[i] - mustar) / (fit.nu * psum * dmu);
    }
    SparseMat H = SparseMat(A.transpose() * w.asDiagonal() * A) + lambda * P;
    H = H + (1e-9 * std::max(1.0, H.diagonal().maxCoeff())) * eye;
    solver.factorize(H);
    MatrixXd At = MatrixXd(A.transpose());
    MatrixXd HiAt = solver.solve(At);
    double edf = 0.0;
    for (int i = 0; i < n; ++i) edf += w[i] * At.col(i).dot(HiAt.col(i));
    fit.edf = edf;
    // response-scale residuals: the working weights rescale with nu, which
    // would make weighted GCV incomparable across lambda
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
        double r = z[i] - mu[i];
        rss += r * r;
    }
    double denom = double(n) - edf;
    fit.gcv = denom > 1e-3 ? double(n) * rss / (denom * denom)
                           : std::numeric_limits<double>::infinity();
    return fit;
}

}  // namespace

GeoSurface fit_soap_beta(const std::vector<SpeakerPoint>& points, const BoundaryDomain& domain,
                         const SoapOptions& opts) {
    const int n = int(points.size());
    if (n < 10) throw std::invalid_argument("fit_soap_beta: need at least 10 points");

    std::vector<int> primary;
    SparseMat A = incidence(points, domain, &primary);
    if (std::set<int>(primary.begin(), primary.end()).size() < 2)
        throw std::invalid_argument("fit_soap_beta: all points fall in one cell");
    SparseMat P = laplacian_penalty(domain);

    VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = clamp_p(points[i].p);

    double mean_p = clamp_p(z.mean());
    VectorXd f0 = VectorXd::Constant(domain.n_inside, numeric::logit(mean_p));

    std::vector<double> lambdas;
    if (opts.lambda >= 0.0) {
        lambdas = {opts.lambda};
    } else {
        lambdas = numeric::log_space(opts.lambda_lo, opts.lambda_hi, opts.lambda_points);
        std::reverse(lambdas.begin(), lambdas.end());  // smooth first; ties stay smooth
    }

    Eigen::SimplicialLDLT<SparseMat> solver;
    InnerFit best;
    double best_lambda = lambdas.front();
    VectorXd f_warm = f0;
    double nu_warm = 5.0;
    for (double lam : lambdas) {
        auto fit = fit_at_lambda(A, P, z, lam, opts.max_iter, f_warm, nu_warm, solver);
        f_warm = fit.f;
        nu_warm = fit.nu;
        if (std::getenv("ACCENT_GEO_DEBUG"))
            std::fprintf(stderr, "DBG lam=%g gcv=%g edf=%g nu=%g conv=%d frange=%g\n", lam,
                         fit.gcv, fit.edf, fit.nu, int(fit.converged),
                         fit.f.maxCoeff() - fit.f.minCoeff());
        if (fit.gcv < best.gcv) {
            best = fit;
            best_lambda = lam;
        }
    }
    if (lambdas.size() > 1) {
        // refit at the winner so the stored factorization matches it
        best = fit_at_lambda(A, P, z, best_lambda, opts.max_iter, f0, 5.0, solver);
    }

    GeoSurface surface;
    surface.domain = domain;
    surface.f = best.f;
    surface.nu = best.nu;
    surface.lambda = best_lambda;
    surface.edf = best.edf;
    surface.converged = best.converged;

    // Bayesian-style standard errors from the inverse penalized information
    surface.se.resize(domain.n_inside);
    VectorXd unit = VectorXd::Zero(domain.n_inside);
    for (int c = 0; c < domain.n_inside; ++c) {
        unit[c] = 1.0;
        surface.se[c] = std::sqrt(std::max(0.0, solver.solve(unit)[c]));
        unit[c] = 0.0;
    }
    return surface;
}

std::pair<VectorXd, VectorXd> surface_ci(const GeoSurface& surface, double level) {
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("surface_ci: level must be in (0,1)");
    boost::math::normal_distribution<double> normal;
    double zq = boost::math::quantile(normal, 0.5 + level / 2.0);
    VectorXd lower(surface.f.size()), upper(surface.f.size());
    for (int c = 0; c < surface.f.size(); ++c) {
        lower[c] = numeric::ilogit(surface.f[c] - zq * surface.se[c]);
        upper[c] = numeric::ilogit(surface.f[c] + zq * surface.se[c]);
    }
    return {lower, upper};
}

void write_surface_csv(const std::string& path, const GeoSurface& surface, double level) {
    auto [lower, upper] = surface_ci(surface, level);
    csvio::Table t;
    t.header = {"lon", "lat", "mu", "lower", "upper"};
    const auto& d = surface.domain;
    for (int iy = 0; iy < d.ny; ++iy)
        for (int ix = 0; ix < d.nx; ++ix) {
            int c = d.cell_of[size_t(d.grid_index(ix, iy))];
            if (c < 0) continue;
            auto [x, y] = d.cell_center(ix, iy);
            auto [lon, lat] = d.unproject(x, y);
            t.rows.push_back({csvio::fmt_double(lon), csvio::fmt_double(lat),
                              csvio::fmt_double(surface.mu(c)), csvio::fmt_double(lower[c]),
                              csvio::fmt_double(upper[c])});
        }
    csvio::write_table(path, t);
}

void write_points_csv(const std::string& path, const std::vector<SpeakerPoint>& points) {
    csvio::Table t;
    t.header = {"lon", "lat", "p", "speaker"};
    for (const auto& pt : points)
        t.rows.push_back({csvio::fmt_double(pt.lon), csvio::fmt_double(pt.lat),
                          csvio::fmt_double(pt.p), pt.speaker_id});
    csvio::write_table(path, t);
}

namespace {

void write_field_ppm(const std::string& path, const GeoSurface& surface, const VectorXd& field) {
    const auto& d = surface.domain;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_surface_ppm: cannot open " + path);
    out << "P6\n" << d.nx << " " << d.ny << "\n255\n";
    for (int iy = d.ny - 1; iy >= 0; --iy)
        for (int ix = 0; ix < d.nx; ++ix) {
            int c = d.cell_of[size_t(d.grid_index(ix, iy))];
            unsigned char rgb[3] = {0, 0, 0};
            if (c >= 0) {
                double v = std::min(1.0, std::max(0.0, field[c]));
                rgb[0] = static_cast<unsigned char>(255.0 * std::min(1.0, 2.0 * v));
                rgb[1] = static_cast<unsigned char>(210.0 * (1.0 - std::abs(2.0 * v - 1.0)));
                rgb[2] = static_cast<unsigned char>(255.0 * std::min(1.0, 2.0 * (1.0 - v)));
            }
            out.write(reinterpret_cast<const char*>(rgb), 3);
        }
}

}  // namespace

void write_surface_ppm(const std::string& base, const GeoSurface& surface) {
    auto [lower, upper] = surface_ci(surface);
    VectorXd mu(surface.f.size());
    for (int c = 0; c < surface.f.size(); ++c) mu[c] = surface.mu(c);
    write_field_ppm(base + "_mu.ppm", surface, mu);
    write_field_ppm(base + "_lower.ppm", surface, lower);
    write_field_ppm(base + "_upper.ppm", surface, upper);
}

}  // namespace accent::geo
