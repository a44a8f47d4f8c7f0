#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace accent::curveprep {

enum class CurveKind { formant, mfcc };

// d curves sampled on the shared equidistant [0,1] grid of length T
struct CurveSet {
    Eigen::MatrixXd values;  // T x d
    CurveKind kind = CurveKind::mfcc;
    int T() const { return int(values.rows()); }
};

// Boundary-fixed monotone warp stored at grid knots, interpolated
// shape-preservingly so the interpolant stays invertible.
struct WarpFunction {
    Eigen::VectorXd knots;   // increasing, 0 .. 1
    Eigen::VectorXd values;  // gamma(knots), increasing, 0 .. 1
    bool from_constant = false;

    double operator()(double t) const;
    Eigen::VectorXd eval(const Eigen::VectorXd& t) const;
    static WarpFunction identity(int T);
};

// Locally linear regression with tricube neighbor weights plus two bisquare
// reweighting passes; y lives on an implicit equidistant grid.
Eigen::VectorXd smooth_loess_robust(const Eigen::VectorXd& y, double span = 0.4);

// Natural cubic smoothing spline with a knot at every grid point. The penalty
// eigendecomposition depends only on the grid length, so one instance serves
// every curve of that length.
class SplineSmoother {
public:
    explicit SplineSmoother(int n);
    Eigen::VectorXd smooth_gcv(const Eigen::VectorXd& y, double* lambda_out = nullptr) const;
    Eigen::VectorXd smooth_fixed(const Eigen::VectorXd& y, double lambda) const;

private:
    Eigen::MatrixXd vectors_;
    Eigen::VectorXd evals_;
};

Eigen::VectorXd smooth_spline_cv(const Eigen::VectorXd& y, double* lambda_out = nullptr);

// Cubic evaluation of a curve on the equidistant T-point grid.
Eigen::VectorXd resample(const Eigen::VectorXd& y, int T = 40);

// Square-root slope transform on the grid.
Eigen::VectorXd srvf(const Eigen::VectorXd& f);

// Lattice moves (di, dj) available to the alignment search, slopes in [1/4, 4].
const std::vector<std::pair<int, int>>& warp_moves();

// Cost contribution of one straight lattice segment; exposed so an exhaustive
// search can price entire paths with the same rule as the optimizer.
double warp_segment_cost(const Eigen::VectorXd& q_curve, const Eigen::VectorXd& q_ref,
                         int i0, int j0, int i1, int j1);

// gamma minimizing || q_ref - (q_curve o gamma) sqrt(gamma') || over the
// lattice, ties broken toward the identity.
WarpFunction align_pair(const Eigen::VectorXd& curve, const Eigen::VectorXd& reference);

struct CorpusAlignment {
    std::vector<WarpFunction> warps;
    Eigen::VectorXd mean;
    int iterations = 0;
};

// Iterative alignment of all curves to their running mean.
CorpusAlignment align_corpus(const std::vector<Eigen::VectorXd>& curves,
                             double tol = 1e-4, int max_iter = 20);

Eigen::VectorXd apply_warp(const Eigen::VectorXd& y, const WarpFunction& g);
CurveSet apply_warp(const CurveSet& cs, const WarpFunction& g);
WarpFunction invert_warp(const WarpFunction& g);

}  // namespace accent::curveprep
