#include "accent/curveprep.hpp"

#include "accent/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace accent::curveprep {

double WarpFunction::operator()(double t) const {
    return numeric::PchipInterpolant(knots, values)(t);
}

Eigen::VectorXd WarpFunction::eval(const Eigen::VectorXd& t) const {
    return numeric::PchipInterpolant(knots, values).eval(t);
}

WarpFunction WarpFunction::identity(int T) {
    WarpFunction g;
    g.knots = numeric::unit_grid(T);
    g.values = g.knots;
    return g;
}

Eigen::VectorXd smooth_loess_robust(const Eigen::VectorXd& y, double span) {
    const int n = int(y.size());
    if (n < 5) throw std::invalid_argument("loess: need at least 5 points");
    const int k = int(std::ceil(span * n));
    if (k < 2) throw std::invalid_argument("loess: span covers fewer than 2 points");

    Eigen::VectorXd robust = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd fit(n);
    const double scale_guard = 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());

    for (int pass = 0; pass < 3; ++pass) {  // one fit plus two reweighted fits
        for (int i = 0; i < n; ++i) {
            // k nearest neighbors of i on the index line
            int lo = std::clamp(i - k / 2, 0, n - k);
            int hi = lo + k - 1;
            double dmax = std::max(double(i - lo), double(hi - i));
            if (dmax == 0.0) dmax = 1.0;
            double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
            for (int j = lo; j <= hi; ++j) {
                double u = std::abs(j - i) / dmax;
                double tric = u < 1.0 ? std::pow(1.0 - u * u * u, 3) : 0.0;
                double w = tric * robust[j];
                double x = double(j - i);
                sw += w;
                swx += w * x;
                swy += w * y[j];
                swxx += w * x * x;
                swxy += w * x * y[j];
            }
            double den = sw * swxx - swx * swx;
            if (sw <= 0.0)
                fit[i] = y[i];  // all neighbors rejected: keep the observation
            else if (std::abs(den) < 1e-12 * std::max(1.0, sw * swxx))
                fit[i] = swy / sw;  // weights collapsed to one abscissa
            else
                fit[i] = (swxx * swy - swx * swxy) / den;  // intercept at x=0
        }
        if (pass == 2) break;
        Eigen::VectorXd resid = y - fit;
        std::vector<double> absr(resid.size());
        for (int i = 0; i < n; ++i) absr[i] = std::abs(resid[i]);
        double s = 6.0 * numeric::median(absr);
        if (s <= scale_guard) break;  // essentially exact fit already
        for (int i = 0; i < n; ++i) {
            double u = resid[i] / s;
            robust[i] = std::abs(u) < 1.0 ? std::pow(1.0 - u * u, 2) : 0.0;
        }
    }
    return fit;
}

SplineSmoother::SplineSmoother(int n) {
    if (n < 4) throw std::invalid_argument("SplineSmoother: need at least 4 points");
    Eigen::MatrixXd K = numeric::second_derivative_penalty(numeric::unit_grid(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    vectors_ = es.eigenvectors();
    evals_ = es.eigenvalues().cwiseMax(0.0);
}

Eigen::VectorXd SplineSmoother::smooth_fixed(const Eigen::VectorXd& y, double lambda) const {
    if (y.size() != vectors_.rows()) throw std::invalid_argument("SplineSmoother: length mismatch");
    Eigen::VectorXd yt = vectors_.transpose() * y;
    Eigen::VectorXd ft = yt.array() / (1.0 + lambda * evals_.array());
    return vectors_ * ft;
}

Eigen::VectorXd SplineSmoother::smooth_gcv(const Eigen::VectorXd& y, double* lambda_out) const {
    const int n = int(y.size());
    if (n != vectors_.rows()) throw std::invalid_argument("SplineSmoother: length mismatch");
    Eigen::VectorXd yt = vectors_.transpose() * y;
    double best_gcv = std::numeric_limits<double>::infinity();
    double best_lambda = 0.0;
    // ascending grid with ties resolved toward the smoother end
    for (double lambda : numeric::log_space(1e-10, 1e6, 33)) {
        double rss = 0.0, tr = 0.0;
        for (int i = 0; i < n; ++i) {
            double shrink = 1.0 / (1.0 + lambda * evals_[i]);
            double r = yt[i] * (1.0 - shrink);
            rss += r * r;
            tr += shrink;
        }
        double dof = n - tr;
        if (dof < 1e-8) continue;
        double gcv = n * rss / (dof * dof);
        if (gcv <= best_gcv) {
            best_gcv = gcv;
            best_lambda = lambda;
        }
    }
    if (lambda_out) *lambda_out = best_lambda;
    return smooth_fixed(y, best_lambda);
}

Eigen::VectorXd smooth_spline_cv(const Eigen::VectorXd& y, double* lambda_out) {
    return SplineSmoother(int(y.size())).smooth_gcv(y, lambda_out);
}

Eigen::VectorXd resample(const Eigen::VectorXd& y, int T) {
    numeric::CubicInterpolant interp(numeric::unit_grid(int(y.size())), y);
    return interp.eval(numeric::unit_grid(T));
}

Eigen::VectorXd srvf(const Eigen::VectorXd& f) {
    const int n = int(f.size());
    if (n < 2) throw std::invalid_argument("srvf: need at least 2 points");
    const double h = 1.0 / (n - 1);
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) {
        double df;
        if (i == 0) df = (f[1] - f[0]) / h;
        else if (i == n - 1) df = (f[n - 1] - f[n - 2]) / h;
        else df = (f[i + 1] - f[i - 1]) / (2.0 * h);
        q[i] = (df >= 0 ? 1.0 : -1.0) * std::sqrt(std::abs(df));
    }
    return q;
}

const std::vector<std::pair<int, int>>& warp_moves() {
    static const std::vector<std::pair<int, int>> moves = {
        {1, 1}, {1, 2}, {2, 1}, {1, 3}, {3, 1}, {1, 4},
        {4, 1}, {2, 3}, {3, 2}, {3, 4}, {4, 3},
    };
    return moves;
}

double warp_segment_cost(const Eigen::VectorXd& q_curve, const Eigen::VectorXd& q_ref,
                         int i0, int j0, int i1, int j1) {
    const int T = int(q_ref.size());
    const double h = 1.0 / (T - 1);
    const double slope = double(j1 - j0) / double(i1 - i0);
    const double root = std::sqrt(slope);
    double acc = 0.0;
    for (int i = i0; i <= i1; ++i) {
        double j = j0 + slope * (i - i0);
        int jf = std::min(int(j), int(q_curve.size()) - 2);
        double frac = j - jf;
        double qc = (1.0 - frac) * q_curve[jf] + frac * q_curve[jf + 1];
        double diff = q_ref[i] - qc * root;
        double w = (i == i0 || i == i1) ? 0.5 : 1.0;  // trapezoid
        acc += w * diff * diff;
    }
    return acc * h;
}

WarpFunction align_pair(const Eigen::VectorXd& curve, const Eigen::VectorXd& reference) {
    const int T = int(curve.size());
    if (int(reference.size()) != T) throw std::invalid_argument("align_pair: length mismatch");
    Eigen::VectorXd q = srvf(curve), qr = srvf(reference);
    // either side flat means there is nothing to align against
    if (std::min(q.cwiseAbs().maxCoeff(), qr.cwiseAbs().maxCoeff()) < 1e-8) {
        WarpFunction id = WarpFunction::identity(T);
        id.from_constant = true;
        return id;
    }

    const double inf = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(T, T, inf);
    Eigen::MatrixXi prev = Eigen::MatrixXi::Constant(T, T, -1);
    cost(0, 0) = 0.0;
    const auto& moves = warp_moves();
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            if (i == 0 && j == 0) continue;
            for (size_t m = 0; m < moves.size(); ++m) {
                int pi = i - moves[m].first, pj = j - moves[m].second;
                if (pi < 0 || pj < 0 || !std::isfinite(cost(pi, pj))) continue;
                double c = cost(pi, pj) + warp_segment_cost(q, qr, pi, pj, i, j);
                if (c < cost(i, j)) {  // strict: earlier (diagonal-first) moves win ties
                    cost(i, j) = c;
                    prev(i, j) = int(m);
                }
            }
        }
    if (!std::isfinite(cost(T - 1, T - 1)))
        throw std::runtime_error("align_pair: no admissible warp path");

    // walk back, then fill gamma at every grid index by linear interpolation
    std::vector<std::pair<int, int>> path;
    for (int i = T - 1, j = T - 1; i >= 0 && j >= 0;) {
        path.emplace_back(i, j);
        if (i == 0 && j == 0) break;
        const auto& mv = moves[size_t(prev(i, j))];
        i -= mv.first;
        j -= mv.second;
    }
    std::reverse(path.begin(), path.end());

    WarpFunction g;
    g.knots = numeric::unit_grid(T);
    g.values.resize(T);
    for (size_t s = 0; s + 1 < path.size(); ++s) {
        auto [i0, j0] = path[s];
        auto [i1, j1] = path[s + 1];
        double slope = double(j1 - j0) / double(i1 - i0);
        for (int i = i0; i < i1; ++i)
            g.values[i] = (j0 + slope * (i - i0)) / double(T - 1);
    }
    g.values[T - 1] = 1.0;
    return g;
}

CorpusAlignment align_corpus(const std::vector<Eigen::VectorXd>& curves,
                             double tol, int max_iter) {
    if (curves.size() < 2) throw std::invalid_argument("align_corpus: need at least 2 curves");
    const int T = int(curves[0].size());
    for (const auto& c : curves)
        if (int(c.size()) != T) throw std::invalid_argument("align_corpus: ragged curves");

    CorpusAlignment out;
    out.mean = Eigen::VectorXd::Zero(T);
    for (const auto& c : curves) out.mean += c;
    out.mean /= double(curves.size());

    out.warps.assign(curves.size(), WarpFunction::identity(T));
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd next = Eigen::VectorXd::Zero(T);
        for (size_t i = 0; i < curves.size(); ++i) {
            out.warps[i] = align_pair(curves[i], out.mean);
            next += apply_warp(curves[i], out.warps[i]);
        }
        next /= double(curves.size());
        double delta = (next - out.mean).cwiseAbs().maxCoeff();
        out.mean = next;
        out.iterations = it + 1;
        if (delta < tol) break;
    }
    return out;
}

Eigen::VectorXd apply_warp(const Eigen::VectorXd& y, const WarpFunction& g) {
    const int T = int(y.size());
    for (int i = 1; i < g.values.size(); ++i)
        if (!(g.values[i] > g.values[i - 1]))
            throw std::invalid_argument("apply_warp: warp not strictly increasing");
    // shape-preserving column interpolation keeps warped values inside the
    // original range: time is permuted, amplitude untouched
    numeric::PchipInterpolant interp(numeric::unit_grid(T), y);
    Eigen::VectorXd grid = numeric::unit_grid(T);
    Eigen::VectorXd out(T);
    numeric::PchipInterpolant warp(g.knots, g.values);
    for (int i = 0; i < T; ++i) out[i] = interp(warp(grid[i]));
    return out;
}

CurveSet apply_warp(const CurveSet& cs, const WarpFunction& g) {
    CurveSet out;
    out.kind = cs.kind;
    out.values.resize(cs.values.rows(), cs.values.cols());
    for (int d = 0; d < cs.values.cols(); ++d)
        out.values.col(d) = apply_warp(Eigen::VectorXd(cs.values.col(d)), g);
    return out;
}

WarpFunction invert_warp(const WarpFunction& g) {
    for (int i = 1; i < g.values.size(); ++i)
        if (!(g.values[i] > g.values[i - 1]))
            throw std::invalid_argument("invert_warp: warp not strictly increasing");
    WarpFunction inv;
    inv.knots = g.values;
    inv.values = g.knots;
    inv.from_constant = g.from_constant;
    return inv;
}

}  // namespace accent::curveprep
