#include "doctest.h"

#include "accent/curveprep.hpp"
#include "accent/numeric.hpp"

#include <cmath>
#include <random>

using namespace accent;
using curveprep::WarpFunction;

namespace {

Eigen::VectorXd bump(int T, double center, double width = 0.08) {
    Eigen::VectorXd g = numeric::unit_grid(T);
    return (-((g.array() - center) / width).square()).exp();
}

double pair_cost(const Eigen::VectorXd& curve, const Eigen::VectorXd& ref) {
    // SRVF distance of the pair as-is (identity warp along the diagonal)
    auto q = curveprep::srvf(curve);
    auto qr = curveprep::srvf(ref);
    double acc = 0.0;
    for (int i = 0; i + 1 < q.size(); ++i)
        acc += curveprep::warp_segment_cost(q, qr, i, i, i + 1, i + 1);
    return acc;
}

}  // namespace

TEST_SUITE("curveprep") {

TEST_CASE("robust loess reproduces lines and constants") {
    int n = 50;
    Eigen::VectorXd g = numeric::unit_grid(n);
    Eigen::VectorXd line = 2.0 * g.array() + 1.0;
    auto sm = curveprep::smooth_loess_robust(line, 0.4);
    CHECK((sm - line).cwiseAbs().maxCoeff() < 1e-8);
    Eigen::VectorXd c = Eigen::VectorXd::Constant(n, 3.7);
    auto smc = curveprep::smooth_loess_robust(c, 0.4);
    CHECK((smc - c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS(curveprep::smooth_loess_robust(line.head(4), 0.4));
    CHECK_THROWS(curveprep::smooth_loess_robust(line, 0.01));
}

TEST_CASE("robust loess rejects a lone spike") {
    int n = 50;
    double sigma = 0.1;
    Eigen::VectorXd g = numeric::unit_grid(n);
    std::mt19937 rng(4);
    std::normal_distribution<double> noise(0.0, sigma);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = 2.0 * g[i] + 1.0 + noise(rng);
    y[25] += 10.0 * sigma;
    auto sm = curveprep::smooth_loess_robust(y, 0.4);
    CHECK(std::abs(sm[25] - (2.0 * g[25] + 1.0)) < 0.1);
}

TEST_CASE("spline smoother endpoints of the lambda range") {
    int n = 60;
    curveprep::SplineSmoother s(n);
    Eigen::VectorXd g = numeric::unit_grid(n);
    std::mt19937 rng(21);
    std::normal_distribution<double> noise(0.0, 0.1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = std::sin(2.0 * M_PI * g[i]) + noise(rng);

    // lambda = 0 interpolates
    CHECK((s.smooth_fixed(y, 0.0) - y).cwiseAbs().maxCoeff() < 1e-8);

    // a pure line is in the penalty nullspace: any lambda, even the stiffest
    // branch, returns it unchanged
    Eigen::VectorXd line = -1.0 + 4.0 * g.array();
    CHECK((s.smooth_fixed(line, 1e6) - line).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((s.smooth_gcv(line) - line).cwiseAbs().maxCoeff() < 1e-6);

    // huge lambda on curved data gives the least-squares line
    Eigen::VectorXd curved = (2.0 * M_PI * g.array()).sin();
    auto flat = s.smooth_fixed(curved, 1e12);
    // second differences vanish for a line
    for (int i = 1; i + 1 < n; ++i)
        CHECK(std::abs(flat[i + 1] - 2 * flat[i] + flat[i - 1]) < 1e-6);
}

TEST_CASE("gcv spline denoises a sine") {
    int n = 200;
    Eigen::VectorXd g = numeric::unit_grid(n);
    std::mt19937 rng(77);
    std::normal_distribution<double> noise(0.0, 0.1);
    Eigen::VectorXd truth(n), y(n);
    for (int i = 0; i < n; ++i) {
        truth[i] = std::sin(2.0 * M_PI * g[i]);
        y[i] = truth[i] + noise(rng);
    }
    auto fit = curveprep::smooth_spline_cv(y);
    double rmse = std::sqrt((fit - truth).squaredNorm() / n);
    CHECK(rmse < 0.05);
}

TEST_CASE("resample is exact on lines, tight on quadratics, idempotent") {
    Eigen::VectorXd g100 = numeric::unit_grid(100);
    Eigen::VectorXd line = 5.0 * g100.array() - 2.0;
    auto r = curveprep::resample(line, 40);
    Eigen::VectorXd g40 = numeric::unit_grid(40);
    CHECK((r - (5.0 * g40.array() - 2.0).matrix()).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::VectorXd quad = g100.array().square();
    auto rq = curveprep::resample(quad, 40);
    CHECK((rq - g40.array().square().matrix()).cwiseAbs().maxCoeff() < 1e-6);

    auto again = curveprep::resample(rq, 40);
    CHECK((again - rq).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("self alignment returns the identity") {
    auto c = bump(40, 0.5);
    auto g = curveprep::align_pair(c, c);
    CHECK(!g.from_constant);
    Eigen::VectorXd grid = numeric::unit_grid(40);
    CHECK((g.eval(grid) - grid).cwiseAbs().maxCoeff() < 1.0 / 40.0);
}

TEST_CASE("aligning a shifted bump lands the warp on the shift") {
    // reference bump sits at 0.5, the curve's at 0.4; the minimizing warp
    // pulls reference time 0.5 back to curve time 0.4
    auto curve = bump(40, 0.4);
    auto ref = bump(40, 0.5);
    auto g = curveprep::align_pair(curve, ref);
    CHECK(std::abs(g(0.5) - 0.4) <= 2.0 / 39.0);
    auto inv = curveprep::invert_warp(g);
    CHECK(std::abs(inv(0.4) - 0.5) <= 2.0 / 39.0);

    // optimizer postcondition: warped curve costs no more than unwarped
    auto warped = curveprep::apply_warp(curve, g);
    CHECK(pair_cost(warped, ref) <= pair_cost(curve, ref) + 1e-9);
    CHECK(pair_cost(warped, ref) < 0.25 * pair_cost(curve, ref));  // big gain here
}

TEST_CASE("constant curve alignment flags and returns identity") {
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(40, 2.0);
    auto g = curveprep::align_pair(flat, bump(40, 0.5));
    CHECK(g.from_constant);
    Eigen::VectorXd grid = numeric::unit_grid(40);
    CHECK((g.eval(grid) - grid).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("warp application basics") {
    auto c = bump(40, 0.45);
    auto id = WarpFunction::identity(40);
    auto same = curveprep::apply_warp(c, id);
    CHECK((same - c).cwiseAbs().maxCoeff() < 1e-12);

    auto g = curveprep::align_pair(bump(40, 0.4), bump(40, 0.5));
    auto w = curveprep::apply_warp(c, g);
    // endpoints fixed
    CHECK(w[0] == doctest::Approx(c[0]).epsilon(1e-12));
    CHECK(w[39] == doctest::Approx(c[39]).epsilon(1e-12));
    // amplitude range preserved (time is only permuted)
    CHECK(w.minCoeff() >= c.minCoeff() - 1e-12);
    CHECK(w.maxCoeff() <= c.maxCoeff() + 1e-12);

    // roundtrip through the inverse stays close on smooth input
    auto back = curveprep::apply_warp(w, curveprep::invert_warp(g));
    CHECK((back - c).cwiseAbs().maxCoeff() < 0.05);

    WarpFunction bad;
    bad.knots = numeric::unit_grid(3);
    bad.values.resize(3);
    bad.values << 0.0, 0.6, 0.5;
    CHECK_THROWS(curveprep::apply_warp(c, bad));
    CHECK_THROWS(curveprep::invert_warp(bad));
}

TEST_CASE("multicolumn warp treats every channel alike") {
    curveprep::CurveSet cs;
    cs.kind = curveprep::CurveKind::formant;
    cs.values.resize(40, 2);
    cs.values.col(0) = bump(40, 0.45);
    cs.values.col(1) = 2.0 * bump(40, 0.45).array() + 1.0;
    auto g = curveprep::align_pair(bump(40, 0.4), bump(40, 0.5));
    auto out = curveprep::apply_warp(cs, g);
    CHECK(out.kind == curveprep::CurveKind::formant);
    // affine relation between the channels survives warping
    CHECK((out.values.col(1) - 2.0 * out.values.col(0).array().matrix() -
           Eigen::VectorXd::Ones(40))
              .cwiseAbs()
              .maxCoeff() < 1e-9);
}

TEST_CASE("corpus alignment of identical curves is trivial") {
    std::vector<Eigen::VectorXd> curves(5, bump(40, 0.5));
    auto res = curveprep::align_corpus(curves);
    Eigen::VectorXd grid = numeric::unit_grid(40);
    for (const auto& w : res.warps)
        CHECK((w.eval(grid) - grid).cwiseAbs().maxCoeff() < 1.0 / 40.0);
    CHECK((res.mean - curves[0]).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("corpus alignment centers two shifted bumps and shrinks variance") {
    std::vector<Eigen::VectorXd> curves = {bump(40, 0.42), bump(40, 0.58)};
    auto res = curveprep::align_corpus(curves);
    // mean bump lands between the two inputs
    int arg = 0;
    res.mean.maxCoeff(&arg);
    double peak = arg / 39.0;
    CHECK(std::abs(peak - 0.5) <= 2.0 / 39.0);

    auto total_var = [](const std::vector<Eigen::VectorXd>& cs) {
        Eigen::VectorXd m = (cs[0] + cs[1]) / 2.0;
        double v = 0.0;
        for (const auto& c : cs) v += (c - m).squaredNorm();
        return v;
    };
    std::vector<Eigen::VectorXd> warped = {
        curveprep::apply_warp(curves[0], res.warps[0]),
        curveprep::apply_warp(curves[1], res.warps[1]),
    };
    CHECK(total_var(warped) <= total_var(curves) + 1e-9);
}

TEST_CASE("srvf of a line is the constant root slope") {
    Eigen::VectorXd g = numeric::unit_grid(40);
    Eigen::VectorXd line = 4.0 * g;
    auto q = curveprep::srvf(line);
    CHECK((q - Eigen::VectorXd::Constant(40, 2.0)).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::VectorXd down = -4.0 * g;
    auto qd = curveprep::srvf(down);
    CHECK((qd - Eigen::VectorXd::Constant(40, -2.0)).cwiseAbs().maxCoeff() < 1e-10);
}

}  // TEST_SUITE
