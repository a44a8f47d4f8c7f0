#include "doctest.h"

#include "accent/models.hpp"
#include "accent/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

using namespace accent;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

namespace fs = std::filesystem;

struct FlrCorpus {
    MatrixXd f2;  // n x T
    std::vector<int> labels;
    std::vector<std::string> speakers;
};

// Two classes whose F2 curves differ by a bump in the middle of the interval,
// four speakers with their own baseline offsets.
FlrCorpus bump_corpus(int per_speaker = 50, int T = 20, double bump_height = 300.0,
                      unsigned seed = 7) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss;
    VectorXd grid = numeric::unit_grid(T);
    FlrCorpus c;
    c.f2.resize(4 * per_speaker, T);
    int row = 0;
    for (int sp = 0; sp < 4; ++sp) {
        double offset = 40.0 * (sp - 1.5);
        for (int i = 0; i < per_speaker; ++i, ++row) {
            int label = i % 2;
            for (int t = 0; t < T; ++t) {
                double base = 1400.0 + offset + 120.0 * std::sin(2.5 * grid[t]);
                double bump = std::exp(-std::pow((grid[t] - 0.5) / 0.12, 2));
                c.f2(row, t) = base + label * bump_height * bump + 60.0 * gauss(rng);
            }
            c.labels.push_back(label);
            c.speakers.push_back("sp" + std::to_string(sp));
        }
    }
    return c;
}

// Small curve-set corpus for the LOSO harnesses: the class signal lives in
// one MFCC column and in the second formant.
std::vector<models::SoundData> sound_corpus(int per_speaker = 30, int T = 12,
                                            unsigned seed = 11) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss;
    VectorXd grid = numeric::unit_grid(T);
    std::vector<models::SoundData> sounds;
    for (int sp = 0; sp < 4; ++sp) {
        for (int i = 0; i < per_speaker; ++i) {
            int label = i % 2;
            models::SoundData s;
            s.label = label;
            s.speaker = "sp" + std::to_string(sp);
            s.mfcc.kind = curveprep::CurveKind::mfcc;
            s.mfcc.values.resize(T, 5);
            for (int m = 0; m < 5; ++m)
                for (int t = 0; t < T; ++t)
                    s.mfcc.values(t, m) = std::cos(m * grid[t]) + 0.1 * gauss(rng) +
                                          (m == 2 ? 0.8 * label * std::sin(3.0 * grid[t]) : 0.0);
            s.formant.kind = curveprep::CurveKind::formant;
            s.formant.values.resize(T, 4);
            for (int t = 0; t < T; ++t) {
                double hump = std::exp(-std::pow((grid[t] - 0.5) / 0.15, 2));
                s.formant.values(t, 0) = 700.0 + 10.0 * sp + 20.0 * gauss(rng);
                s.formant.values(t, 1) = 1300.0 + 10.0 * sp + 250.0 * label * hump + 25.0 * gauss(rng);
                s.formant.values(t, 2) = 2400.0 + 30.0 * gauss(rng);
                s.formant.values(t, 3) = 3300.0 + 30.0 * gauss(rng);
            }
            sounds.push_back(std::move(s));
        }
    }
    return sounds;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("flr separates classes split by a mid-interval bump") {
    auto c = bump_corpus();
    auto model = models::fit_flr(c.f2, c.labels, c.speakers);

    int correct = 0;
    for (int i = 0; i < c.f2.rows(); ++i) {
        double p = numeric::ilogit(models::predict_flr(model, c.f2.row(i).transpose()));
        correct += (p > 0.5 ? 1 : 0) == c.labels[size_t(i)] ? 1 : 0;
    }
    CHECK(double(correct) / double(c.f2.rows()) >= 0.99);

    // the coefficient curve should put its weight where the classes differ
    int T = int(model.beta1.size());
    VectorXd grid = numeric::unit_grid(T);
    double mid = 0.0, rest = 0.0;
    for (int t = 0; t < T; ++t)
        (grid[t] >= 0.33 && grid[t] <= 0.66 ? mid : rest) += model.beta1[t] * model.beta1[t];
    CHECK(std::sqrt(mid) > std::sqrt(rest));
    CHECK(model.sigma2_s >= 0.0);
}

TEST_CASE("flr on permuted labels scores at chance level") {
    auto c = bump_corpus(40);
    // permute labels within each speaker so no structure survives anywhere
    std::vector<int> perm(c.labels.size());
    const int per = 40;
    for (int sp = 0; sp < 4; ++sp) {
        auto local = numeric::shuffled_indices(per, 99 + unsigned(sp));
        for (int i = 0; i < per; ++i) perm[size_t(sp * per + i)] = sp * per + local[size_t(i)];
    }
    std::vector<models::SoundData> sounds;
    for (size_t i = 0; i < c.labels.size(); ++i) {
        models::SoundData s;
        s.label = c.labels[size_t(perm[i])];
        s.speaker = c.speakers[i];
        s.formant.kind = curveprep::CurveKind::formant;
        s.formant.values.resize(c.f2.cols(), 4);
        s.formant.values.col(0).setConstant(700.0);
        s.formant.values.col(1) = c.f2.row(int(i)).transpose();
        s.formant.values.col(2).setConstant(2400.0);
        s.formant.values.col(3).setConstant(3300.0);
        sounds.push_back(std::move(s));
    }
    auto rep = models::evaluate_loso(sounds, models::ClassifierKind::flr);
    CHECK(rep.accuracy >= 0.40);
    CHECK(rep.accuracy <= 0.60);
}

TEST_CASE("predict_flr is affine in the curve") {
    models::FlrModel m;
    m.beta0 = 0.7;
    m.beta1 = VectorXd::Zero(16);
    VectorXd curve = VectorXd::LinSpaced(16, 900.0, 1700.0);
    CHECK(models::predict_flr(m, curve) == doctest::Approx(0.7).epsilon(1e-15));

    m.beta1.setConstant(0.002);
    double before = models::predict_flr(m, curve);
    VectorXd shifted = curve.array() + 250.0;
    double after = models::predict_flr(m, shifted);
    CHECK(after - before == doctest::Approx(250.0 * 0.002).epsilon(1e-12));
}

TEST_CASE("speaker-mean curve has the mean logit") {
    auto c = bump_corpus(30);
    auto model = models::fit_flr(c.f2, c.labels, c.speakers);
    for (int sp = 0; sp < 4; ++sp) {
        std::string id = "sp" + std::to_string(sp);
        VectorXd mean = VectorXd::Zero(c.f2.cols());
        double logit_sum = 0.0;
        int count = 0;
        for (int i = 0; i < c.f2.rows(); ++i) {
            if (c.speakers[size_t(i)] != id) continue;
            mean += c.f2.row(i).transpose();
            logit_sum += models::predict_flr(model, c.f2.row(i).transpose());
            ++count;
        }
        mean /= double(count);
        CHECK(std::abs(models::predict_flr(model, mean) - logit_sum / count) < 1e-8);
    }
}

TEST_CASE("flr refit at the selected hyperparameters is stable") {
    auto c = bump_corpus(25);
    auto model = models::fit_flr(c.f2, c.labels, c.speakers);
    auto refit = models::fit_flr_at(c.f2, c.labels, c.speakers, model.lambda_s, model.sigma2_s);
    CHECK((refit.beta1 - model.beta1).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(refit.beta0 == doctest::Approx(model.beta0).epsilon(1e-10));
}

TEST_CASE("flr rejects degenerate labels") {
    MatrixXd f2 = MatrixXd::Constant(6, 8, 1400.0);
    std::vector<int> ones(6, 1);
    std::vector<std::string> sp = {"a", "a", "a", "b", "b", "b"};
    CHECK_THROWS_AS(models::fit_flr(f2, ones, sp), std::invalid_argument);
}

TEST_CASE("plr collapses to the intercept at lambda_max") {
    std::mt19937 rng(21);
    std::normal_distribution<double> gauss;
    MatrixXd x(60, 8);
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
        for (int k = 0; k < 8; ++k) x(i, k) = gauss(rng);
        y.push_back(numeric::ilogit(1.2 * x(i, 0) - 0.8 * x(i, 3)) > 0.5 ? 1 : 0);
    }
    double lmax = models::plr_lambda_max(x, y);
    for (double lam : {lmax, 2.0 * lmax}) {
        auto m = models::fit_plr(x, y, lam);
        CHECK(m.beta.cwiseAbs().maxCoeff() == 0.0);
        double ybar = 0.0;
        for (int v : y) ybar += v;
        ybar /= 60.0;
        CHECK(m.beta0 == doctest::Approx(numeric::logit(ybar)).epsilon(1e-12));
        CHECK(m.nonzero().empty());
    }
}

TEST_CASE("plr approaches the unpenalised fit as lambda vanishes") {
    std::mt19937 rng(5);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    const int n = 50, K = 3;
    MatrixXd x(n, K);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < K; ++k) x(i, k) = gauss(rng);
        double eta = 0.3 + 1.5 * x(i, 0) - 2.0 * x(i, 1) + 0.5 * x(i, 2);
        y.push_back(unif(rng) < numeric::ilogit(eta) ? 1 : 0);
    }

    MatrixXd xi(n, K + 1);
    xi.col(0).setOnes();
    xi.rightCols(K) = x;
    VectorXd yv(n);
    for (int i = 0; i < n; ++i) yv[i] = y[size_t(i)];
    VectorXd oracle = numeric::logistic_irls(xi, yv);

    double lmax = models::plr_lambda_max(x, y);
    auto m = models::fit_plr(x, y, 1e-8 * lmax);
    CHECK(std::abs(m.beta0 - oracle[0]) < 1e-4);
    for (int k = 0; k < K; ++k) CHECK(std::abs(m.beta[k] - oracle[k + 1]) < 1e-4);
}

TEST_CASE("plr objective trace never increases") {
    std::mt19937 rng(31);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    MatrixXd x(80, 6);
    std::vector<int> y;
    for (int i = 0; i < 80; ++i) {
        for (int k = 0; k < 6; ++k) x(i, k) = gauss(rng);
        y.push_back(unif(rng) < numeric::ilogit(2.0 * x(i, 1) - x(i, 4)) ? 1 : 0);
    }
    std::vector<double> trace;
    auto m = models::fit_plr(x, y, 0.1 * models::plr_lambda_max(x, y), 1234, &trace);
    REQUIRE(trace.size() >= 2);
    for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
    CHECK(m.converged);
}

TEST_CASE("plr cross-validation keeps the informative coordinates") {
    std::mt19937 rng(13);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    const int n = 120, K = 10;
    MatrixXd x(n, K);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < K; ++k) x(i, k) = gauss(rng);
        y.push_back(unif(rng) < numeric::ilogit(2.2 * x(i, 2) - 1.8 * x(i, 7)) ? 1 : 0);
    }
    auto m = models::fit_plr(x, y);
    auto nz = m.nonzero();
    CHECK(!nz.empty());
    CHECK(m.lambda < models::plr_lambda_max(x, y));
    CHECK(std::count(nz.begin(), nz.end(), 2) == 1);
    CHECK(std::count(nz.begin(), nz.end(), 7) == 1);

    int correct = 0;
    for (int i = 0; i < n; ++i) {
        double p = numeric::ilogit(models::predict_plr(m, x.row(i).transpose()));
        correct += (p > 0.5 ? 1 : 0) == y[size_t(i)] ? 1 : 0;
    }
    CHECK(double(correct) / n >= 0.75);
}

TEST_CASE("plr rejects one-class labels") {
    MatrixXd x = MatrixXd::Random(10, 3);
    std::vector<int> y(10, 0);
    CHECK_THROWS_AS(models::fit_plr(x, y), std::invalid_argument);
}

TEST_CASE("metrics handles the textbook cases") {
    std::vector<int> labels;
    VectorXd perfect(100), flipped(100);
    for (int i = 0; i < 100; ++i) {
        labels.push_back(i % 2);
        perfect[i] = labels.back() ? 0.9 : 0.1;
        flipped[i] = labels.back() ? 0.1 : 0.9;
    }
    auto good = models::metrics(perfect, labels);
    CHECK(good.auc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(good.accuracy == doctest::Approx(1.0));
    CHECK(good.confusion.sum() == 100);

    auto bad = models::metrics(flipped, labels);
    CHECK(bad.auc == doctest::Approx(0.0).epsilon(1e-12));

    std::mt19937 rng(17);
    std::uniform_real_distribution<double> unif;
    const int n = 10000;
    VectorXd noise(n);
    std::vector<int> ylab;
    for (int i = 0; i < n; ++i) {
        noise[i] = unif(rng);
        ylab.push_back(unif(rng) < 0.5 ? 0 : 1);
    }
    auto rnd = models::metrics(noise, ylab);
    CHECK(std::abs(rnd.auc - 0.5) < 0.02);
    CHECK(rnd.auc >= 0.0);
    CHECK(rnd.auc <= 1.0);
}

TEST_CASE("constant predictor scores the prevalence") {
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(i < 12 ? 1 : 0);
    auto rep = models::metrics(VectorXd::Constant(40, 0.9), labels);
    CHECK(rep.accuracy == doctest::Approx(12.0 / 40.0));
}

TEST_CASE("reported accuracy matches the ROC operating point") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> unif;
    const int n = 500;
    VectorXd p(n);
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
        p[i] = unif(rng);
        labels.push_back(unif(rng) < p[i] ? 1 : 0);
    }
    auto rep = models::metrics(p, labels);
    int pos = rep.confusion.row(1).sum(), neg = rep.confusion.row(0).sum();
    double tpr = rep.roc(rep.operating_index, 2), fpr = rep.roc(rep.operating_index, 1);
    double roc_acc = (tpr * pos + (1.0 - fpr) * neg) / double(n);
    CHECK(rep.accuracy == doctest::Approx(roc_acc).epsilon(1e-12));
}

TEST_CASE("metrics validates its input") {
    std::vector<int> labels = {0, 1};
    VectorXd bad(2);
    bad << 0.5, 1.2;
    CHECK_THROWS_AS(models::metrics(bad, labels), std::invalid_argument);
    VectorXd ok(2);
    ok << 0.5, 0.5;
    CHECK_THROWS_AS(models::metrics(ok, {0, 2}), std::invalid_argument);
}

TEST_CASE("leave-one-speaker-out runs all three classifiers") {
    auto sounds = sound_corpus();
    const int n = int(sounds.size());
    for (auto kind : {models::ClassifierKind::flr, models::ClassifierKind::plr,
                      models::ClassifierKind::combined}) {
        auto rep = models::evaluate_loso(sounds, kind);
        CHECK(rep.confusion.sum() == n);
        CHECK(rep.folds.size() == 4);
        int fold_n = 0, fold_correct = 0;
        for (const auto& f : rep.folds) {
            fold_n += f.n;
            fold_correct += f.correct;
        }
        CHECK(fold_n == n);
        CHECK(double(fold_correct) / n == doctest::Approx(rep.accuracy));
        CHECK(rep.accuracy >= 0.9);
        CHECK(rep.auc >= 0.9);
    }
}

TEST_CASE("model grid returns one row per requested candidate") {
    auto sounds = sound_corpus(20);
    auto one = models::model_selection_grid(sounds, {}, {8});
    REQUIRE(one.size() == 1);
    CHECK(one[0].model_no == 8);
    CHECK(one[0].aligned);
    CHECK(one[0].edf > 0.0);
    CHECK(std::isfinite(one[0].aic));
    CHECK(one[0].accuracy >= 0.85);

    auto both = models::model_selection_grid(sounds, sounds, {2, 8});
    REQUIRE(both.size() == 4);
    CHECK(both[0].model_no == 2);
    CHECK(both[0].aligned);
    CHECK(!both[1].aligned);
    CHECK(both[2].model_no == 8);

    CHECK_THROWS_AS(models::model_selection_grid(sounds, {}, {12}), std::invalid_argument);
}

TEST_CASE("models survive a save/load round trip") {
    auto dir = fs::temp_directory_path() / "accent_models";
    fs::create_directories(dir);

    auto c = bump_corpus(15);
    auto flr = models::fit_flr(c.f2, c.labels, c.speakers);
    models::save_flr((dir / "flr").string(), flr);
    auto flr2 = models::load_flr((dir / "flr").string());
    CHECK(flr2.beta0 == flr.beta0);
    CHECK((flr2.beta1 - flr.beta1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(flr2.lambda_s == flr.lambda_s);
    CHECK(flr2.speakers == flr.speakers);

    std::mt19937 rng(41);
    std::normal_distribution<double> gauss;
    MatrixXd x(40, 4);
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
        for (int k = 0; k < 4; ++k) x(i, k) = gauss(rng);
        y.push_back(i % 2);
    }
    auto plr = models::fit_plr(x, y, 0.5 * models::plr_lambda_max(x, y));
    plr.fpca_ref = 0xdeadbeefcafef00dull;
    models::save_plr((dir / "plr").string(), plr);
    auto plr2 = models::load_plr((dir / "plr").string());
    CHECK(plr2.beta0 == plr.beta0);
    CHECK((plr2.beta - plr.beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK(plr2.fpca_ref == plr.fpca_ref);
    CHECK(plr2.lambda == plr.lambda);

    VectorXd probs(6);
    probs << 0.1, 0.8, 0.3, 0.9, 0.55, 0.2;
    std::vector<int> labels = {0, 1, 0, 1, 1, 0};
    auto rep = models::metrics(probs, labels);
    rep.folds.push_back({"spX", 6, 5});
    models::save_report((dir / "rep").string(), rep);
    auto rep2 = models::load_report((dir / "rep").string());
    CHECK(rep2.confusion == rep.confusion);
    CHECK(rep2.auc == rep.auc);
    CHECK(rep2.roc.rows() == rep.roc.rows());
    CHECK(rep2.folds.size() == 1);
    CHECK(rep2.folds[0].held_out == "spX");
}

}  // TEST_SUITE
