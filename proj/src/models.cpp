#include "accent/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "accent/numeric.hpp"

namespace accent::models {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_labels(const std::vector<int>& labels) {
    bool saw0 = false, saw1 = false;
    for (int y : labels) {
        if (y == 0) saw0 = true;
        else if (y == 1) saw1 = true;
        else throw std::invalid_argument("labels must be 0 or 1");
    }
    if (!saw0 || !saw1) throw std::invalid_argument("labels are all one class");
}

VectorXd to_vector(const std::vector<int>& labels) {
    VectorXd y(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) y[i] = labels[i];
    return y;
}

double bernoulli_loglik(const VectorXd& eta, const VectorXd& y) {
    // y*eta - log(1+exp(eta)), with the softplus kept away from overflow
    double ll = 0.0;
    for (int i = 0; i < eta.size(); ++i) {
        double sp = std::max(eta[i], 0.0) + std::log1p(std::exp(-std::abs(eta[i])));
        ll += y[i] * eta[i] - sp;
    }
    return ll;
}

// ---------------------------------------------------------------------------
// penalised IRLS shared by the FLR fits

struct PenalizedFit {
    VectorXd theta;
    double loglik = 0.0;
    double edf = 0.0;
    double aic = 0.0;
    bool converged = true;
};

PenalizedFit penalized_logit(const MatrixXd& X, const MatrixXd& P, const VectorXd& y) {
    const int p = int(X.cols());
    VectorXd theta = VectorXd::Zero(p);
    bool converged = false;
    VectorXd w;
    for (int it = 0; it < 200; ++it) {
        VectorXd eta = X * theta;
        VectorXd prob = eta.unaryExpr([](double v) { return numeric::ilogit(v); });
        w = (prob.array() * (1.0 - prob.array())).cwiseMax(1e-10).matrix();
        VectorXd z = eta + (y - prob).cwiseQuotient(w);
        MatrixXd H = X.transpose() * w.asDiagonal() * X + P;
        VectorXd next = H.ldlt().solve(X.transpose() * (w.asDiagonal() * z));
        double sup = next.cwiseAbs().maxCoeff();
        if (sup > 1e3) {
            // separation guard: freeze on the logit-scale cap and flag it
            theta = next * (1e3 / sup);
            break;
        }
        double step = (next - theta).cwiseAbs().maxCoeff();
        theta = next;
        if (step < 1e-10 * std::max(1.0, theta.cwiseAbs().maxCoeff())) {
            converged = true;
            break;
        }
    }
    PenalizedFit fit;
    fit.theta = theta;
    fit.converged = converged;
    VectorXd eta = X * theta;
    VectorXd prob = eta.unaryExpr([](double v) { return numeric::ilogit(v); });
    w = (prob.array() * (1.0 - prob.array())).cwiseMax(1e-10).matrix();
    MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
    fit.edf = (XtWX + P).ldlt().solve(XtWX).trace();
    fit.loglik = bernoulli_loglik(eta, y);
    fit.aic = -2.0 * fit.loglik + 2.0 * fit.edf;
    return fit;
}

// One fixed-effect block of a functional logistic model: design columns plus
// the curvature penalty that applies to them (empty K for scalar terms).
struct Term {
    MatrixXd X;
    MatrixXd K;
    bool penalized = false;
};

struct GeneralModel {
    double beta0 = 0.0;
    std::vector<VectorXd> coefs;  // one block per term
    VectorXd gamma;
    std::vector<std::string> speakers;
    double lambda_s = 0.0;
    double sigma2_s = 0.0;
    double edf = 0.0, aic = 0.0, loglik = 0.0;
    bool converged = true;
};

std::vector<std::string> sorted_speakers(const std::vector<std::string>& ids) {
    std::set<std::string> s(ids.begin(), ids.end());
    return std::vector<std::string>(s.begin(), s.end());
}

GeneralModel fit_general_at(const std::vector<Term>& terms, const std::vector<int>& labels,
                            const std::vector<std::string>& speaker_ids, double lambda_s,
                            double sigma2_s) {
    const int n = int(labels.size());
    auto speakers = sorted_speakers(speaker_ids);
    const int S = sigma2_s > 0.0 && speakers.size() > 1 ? int(speakers.size()) : 0;

    int p = 1;
    for (const auto& t : terms) p += int(t.X.cols());
    p += S;

    MatrixXd X = MatrixXd::Zero(n, p);
    MatrixXd P = MatrixXd::Zero(p, p);
    X.col(0).setOnes();
    int at = 1;
    for (const auto& t : terms) {
        int c = int(t.X.cols());
        X.middleCols(at, c) = t.X;
        if (t.penalized) P.block(at, at, c, c) = 2.0 * lambda_s * t.K;
        at += c;
    }
    if (S > 0) {
        std::map<std::string, int> slot;
        for (int j = 0; j < S; ++j) slot[speakers[size_t(j)]] = j;
        for (int i = 0; i < n; ++i) X(i, at + slot[speaker_ids[size_t(i)]]) = 1.0;
        P.block(at, at, S, S) = (1.0 / sigma2_s) * MatrixXd::Identity(S, S);
    }

    auto fit = penalized_logit(X, P, to_vector(labels));

    GeneralModel m;
    m.beta0 = fit.theta[0];
    at = 1;
    for (const auto& t : terms) {
        int c = int(t.X.cols());
        m.coefs.push_back(fit.theta.segment(at, c));
        at += c;
    }
    m.gamma = S > 0 ? VectorXd(fit.theta.tail(S)) : VectorXd::Zero(int(speakers.size()));
    m.speakers = speakers;
    m.lambda_s = lambda_s;
    m.sigma2_s = S > 0 ? sigma2_s : 0.0;
    m.edf = fit.edf;
    m.aic = fit.aic;
    m.loglik = fit.loglik;
    m.converged = fit.converged;
    return m;
}

// Adjusted-AIC selection of (lambda_s, sigma2_s) over log grids. Models with
// no penalized term skip the lambda_s dimension; a single speaker drops the
// random-effect block entirely.
GeneralModel fit_general(const std::vector<Term>& terms, const std::vector<int>& labels,
                         const std::vector<std::string>& speaker_ids) {
    check_labels(labels);
    bool any_pen = false;
    for (const auto& t : terms) any_pen = any_pen || t.penalized;

    std::vector<double> lambdas = any_pen ? numeric::log_space(1e-6, 1e4, 11)
                                          : std::vector<double>{0.0};
    if (any_pen) std::reverse(lambdas.begin(), lambdas.end());  // ties go to the smoother fit
    std::vector<double> sigmas = sorted_speakers(speaker_ids).size() > 1
                                     ? numeric::log_space(1e-4, 1e2, 7)
                                     : std::vector<double>{0.0};

    GeneralModel best;
    double best_aic = std::numeric_limits<double>::infinity();
    for (double ls : lambdas)
        for (double s2 : sigmas) {
            auto m = fit_general_at(terms, labels, speaker_ids, ls, s2);
            if (m.aic < best_aic) {
                best_aic = m.aic;
                best = m;
            }
        }
    return best;
}

Term functional_term(const MatrixXd& curves) {
    Term t;
    int T = int(curves.cols());
    t.X = curves / double(T);
    t.K = numeric::second_derivative_penalty(numeric::unit_grid(T));
    t.penalized = true;
    return t;
}

FlrModel to_flr(const GeneralModel& g) {
    FlrModel m;
    m.beta0 = g.beta0;
    m.beta1 = g.coefs.at(0);
    m.lambda_s = g.lambda_s;
    m.sigma2_s = g.sigma2_s;
    m.edf = g.edf;
    m.aic = g.aic;
    m.loglik = g.loglik;
    m.converged = g.converged;
    m.speakers = g.speakers;
    m.gamma = g.gamma;
    return m;
}

// ---------------------------------------------------------------------------
// l1 coordinate descent

double plr_objective(const MatrixXd& X, const VectorXd& y, double beta0,
                     const VectorXd& beta, double lambda) {
    VectorXd eta = ((X * beta).array() + beta0).matrix();
    return -bernoulli_loglik(eta, y) + lambda * beta.cwiseAbs().sum();
}

double soft_threshold(double g, double lambda) {
    if (g > lambda) return g - lambda;
    if (g < -lambda) return g + lambda;
    return 0.0;
}

// Proximal Newton: quadratic working model from IRLS weights, inner
// coordinate descent, then a halving line search so the true penalised
// objective never increases. Warm-started through beta0/beta.
bool plr_fit_at(const MatrixXd& X, const VectorXd& y, double lambda, double& beta0,
                VectorXd& beta, std::vector<double>* trace) {
    const int n = int(X.rows());
    const int K = int(X.cols());
    double obj = plr_objective(X, y, beta0, beta, lambda);
    if (trace) trace->push_back(obj);
    for (int outer = 0; outer < 100; ++outer) {
        VectorXd eta = ((X * beta).array() + beta0).matrix();
        VectorXd prob = eta.unaryExpr([](double v) { return numeric::ilogit(v); });
        VectorXd w = (prob.array() * (1.0 - prob.array())).cwiseMax(1e-10).matrix();
        VectorXd z = eta + (y - prob).cwiseQuotient(w);

        double b0 = beta0;
        VectorXd b = beta;
        VectorXd r = z - eta;
        const double wsum = w.sum();
        VectorXd wx2(K);
        for (int k = 0; k < K; ++k) wx2[k] = (w.array() * X.col(k).array().square()).sum();

        for (int sweep = 0; sweep < 1000; ++sweep) {
            double moved = 0.0;
            double nb0 = b0 + (w.array() * r.array()).sum() / wsum;
            r.array() -= nb0 - b0;
            moved = std::max(moved, std::abs(nb0 - b0));
            b0 = nb0;
            for (int k = 0; k < K; ++k) {
                if (wx2[k] <= 0.0) continue;
                double g = (w.array() * X.col(k).array() * r.array()).sum() + wx2[k] * b[k];
                double nk = soft_threshold(g, lambda) / wx2[k];
                if (nk != b[k]) {
                    r -= X.col(k) * (nk - b[k]);
                    moved = std::max(moved, std::abs(nk - b[k]));
                    b[k] = nk;
                }
            }
            if (moved < 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff())) break;
        }

        double t = 1.0;
        double cand_obj = obj;
        double nb0 = beta0;
        VectorXd nb = beta;
        for (int h = 0; h < 40; ++h) {
            double try0 = beta0 + t * (b0 - beta0);
            VectorXd tryb = beta + t * (b - beta);
            double o = plr_objective(X, y, try0, tryb, lambda);
            if (o <= obj + 1e-12) {
                nb0 = try0;
                nb = tryb;
                cand_obj = o;
                break;
            }
            t *= 0.5;
        }
        double step = std::max(std::abs(nb0 - beta0), (nb - beta).cwiseAbs().maxCoeff());
        beta0 = nb0;
        beta = nb;
        obj = std::min(obj, cand_obj);
        if (trace) trace->push_back(obj);
        if (step < 1e-11 * std::max(1.0, beta.cwiseAbs().maxCoeff())) return true;
    }
    return false;
}

std::vector<double> plr_path(double lambda_max, double lambda_min, int points = 100) {
    std::vector<double> path(points);
    double lhi = std::log(lambda_max), llo = std::log(lambda_min);
    for (int i = 0; i < points; ++i)
        path[i] = std::exp(lhi + (llo - lhi) * double(i) / double(points - 1));
    return path;
}

double clamped_mean(const VectorXd& y) {
    double m = y.mean();
    return std::min(1.0 - 1e-9, std::max(1e-9, m));
}

double test_deviance(const MatrixXd& X, const VectorXd& y, double beta0, const VectorXd& beta) {
    VectorXd eta = ((X * beta).array() + beta0).matrix();
    double dev = 0.0;
    for (int i = 0; i < eta.size(); ++i) {
        double p = numeric::ilogit(eta[i]);
        p = std::min(1.0 - 1e-12, std::max(1e-12, p));
        dev += -2.0 * (y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p));
    }
    return dev;
}

}  // namespace

std::vector<int> PlrModel::nonzero() const {
    std::vector<int> idx;
    for (int k = 0; k < beta.size(); ++k)
        if (beta[k] != 0.0) idx.push_back(k);
    return idx;
}

FlrModel fit_flr_at(const MatrixXd& f2, const std::vector<int>& labels,
                    const std::vector<std::string>& speaker_ids, double lambda_s,
                    double sigma2_s) {
    if (f2.rows() != int(labels.size()) || f2.rows() != int(speaker_ids.size()))
        throw std::invalid_argument("fit_flr: row/label/speaker count mismatch");
    check_labels(labels);
    return to_flr(fit_general_at({functional_term(f2)}, labels, speaker_ids, lambda_s, sigma2_s));
}

FlrModel fit_flr(const MatrixXd& f2, const std::vector<int>& labels,
                 const std::vector<std::string>& speaker_ids) {
    if (f2.rows() != int(labels.size()) || f2.rows() != int(speaker_ids.size()))
        throw std::invalid_argument("fit_flr: row/label/speaker count mismatch");
    return to_flr(fit_general({functional_term(f2)}, labels, speaker_ids));
}

double predict_flr(const FlrModel& model, const VectorXd& f2_curve) {
    if (f2_curve.size() != model.beta1.size())
        throw std::invalid_argument("predict_flr: curve length does not match the model grid");
    return model.beta0 + f2_curve.dot(model.beta1) / double(model.beta1.size());
}

double plr_lambda_max(const MatrixXd& scores, const std::vector<int>& labels) {
    VectorXd y = to_vector(labels);
    VectorXd resid = y.array() - y.mean();
    return (scores.transpose() * resid).cwiseAbs().maxCoeff();
}

PlrModel fit_plr(const MatrixXd& scores, const std::vector<int>& labels, double lambda,
                 unsigned seed, std::vector<double>* objective_trace) {
    const int n = int(scores.rows());
    if (n != int(labels.size())) throw std::invalid_argument("fit_plr: label count mismatch");
    check_labels(labels);
    VectorXd y = to_vector(labels);

    const double lmax = plr_lambda_max(scores, labels);
    PlrModel model;
    model.cv_seed = seed;
    model.beta = VectorXd::Zero(scores.cols());
    model.beta0 = numeric::logit(clamped_mean(y));

    if (lmax < 1e-300 || (lambda >= 0.0 && lambda >= lmax)) {
        model.lambda = lambda >= 0.0 ? lambda : lmax;
        if (objective_trace)
            objective_trace->push_back(plr_objective(scores, y, model.beta0, model.beta, model.lambda));
        return model;
    }

    double target = lambda;
    if (lambda < 0.0) {
        // 10-fold CV over the standard path, scored by held-out deviance
        auto path = plr_path(lmax, 1e-4 * lmax);
        const int nfolds = std::min(10, n);
        auto order = numeric::shuffled_indices(n, seed);
        std::vector<int> fold(n);
        for (int i = 0; i < n; ++i) fold[size_t(order[size_t(i)])] = i % nfolds;

        std::vector<double> dev(path.size(), 0.0);
        for (int f = 0; f < nfolds; ++f) {
            std::vector<int> tr, te;
            for (int i = 0; i < n; ++i) (fold[size_t(i)] == f ? te : tr).push_back(i);
            MatrixXd Xtr(tr.size(), scores.cols()), Xte(te.size(), scores.cols());
            VectorXd ytr(tr.size()), yte(te.size());
            for (size_t i = 0; i < tr.size(); ++i) Xtr.row(int(i)) = scores.row(tr[i]), ytr[int(i)] = y[tr[i]];
            for (size_t i = 0; i < te.size(); ++i) Xte.row(int(i)) = scores.row(te[i]), yte[int(i)] = y[te[i]];
            double b0 = numeric::logit(clamped_mean(ytr));
            VectorXd b = VectorXd::Zero(scores.cols());
            for (size_t j = 0; j < path.size(); ++j) {
                plr_fit_at(Xtr, ytr, path[j], b0, b, nullptr);
                dev[j] += test_deviance(Xte, yte, b0, b);
            }
        }
        size_t best = 0;
        for (size_t j = 1; j < path.size(); ++j)
            if (dev[j] < dev[best]) best = j;  // ties keep the sparser end
        target = path[best];
    }

    // final fit: warm-started path from lambda_max down to the target
    auto path = target < lmax ? plr_path(lmax, target) : std::vector<double>{target};
    double b0 = model.beta0;
    VectorXd b = model.beta;
    bool ok = true;
    for (size_t j = 0; j < path.size(); ++j) {
        bool last = j + 1 == path.size();
        ok = plr_fit_at(scores, y, path[j], b0, b, last ? objective_trace : nullptr);
    }
    model.beta0 = b0;
    model.beta = b;
    model.lambda = target;
    model.converged = ok;
    return model;
}

double predict_plr(const PlrModel& model, const VectorXd& scores) {
    if (scores.size() < model.beta.size())
        throw std::invalid_argument("predict_plr: score vector shorter than the model");
    return model.beta0 + scores.head(model.beta.size()).dot(model.beta);
}

std::uint64_t plr_hash(const PlrModel& model) {
    std::string buf = csvio::fmt_double(model.beta0);
    buf += ',';
    for (int k = 0; k < model.beta.size(); ++k) {
        buf += csvio::fmt_double(model.beta[k]);
        buf += ',';
    }
    buf += csvio::fmt_double(model.lambda);
    buf += ',';
    buf += numeric::hex64(model.fpca_ref);
    return numeric::fnv1a64(buf.data(), buf.size());
}

EvalReport metrics(const VectorXd& probabilities, const std::vector<int>& labels) {
    const int n = int(labels.size());
    if (probabilities.size() != n) throw std::invalid_argument("metrics: size mismatch");
    for (int i = 0; i < n; ++i)
        if (!(probabilities[i] >= 0.0 && probabilities[i] <= 1.0))
            throw std::invalid_argument("metrics: probabilities must lie in [0,1]");

    EvalReport rep;
    int pos = 0, neg = 0;
    for (int i = 0; i < n; ++i) {
        int truth = labels[size_t(i)];
        if (truth != 0 && truth != 1) throw std::invalid_argument("metrics: labels must be 0 or 1");
        int pred = probabilities[i] > 0.5 ? 1 : 0;
        rep.confusion(truth, pred) += 1;
        (truth == 1 ? pos : neg) += 1;
    }
    rep.accuracy = double(rep.confusion(0, 0) + rep.confusion(1, 1)) / double(n);

    // threshold sweep from "no positives" down; one point per distinct value
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probabilities[a] != probabilities[b]) return probabilities[a] > probabilities[b];
        return a < b;
    });
    std::vector<std::array<double, 3>> rows;
    rows.push_back({2.0, 0.0, 0.0});
    int tp = 0, fp = 0;
    int i = 0;
    const double pn = std::max(1, pos), nn = std::max(1, neg);
    while (i < n) {
        double thr = probabilities[order[size_t(i)]];
        while (i < n && probabilities[order[size_t(i)]] == thr) {
            (labels[size_t(order[size_t(i)])] == 1 ? tp : fp) += 1;
            ++i;
        }
        rows.push_back({thr, fp / nn, tp / pn});
    }
    rep.roc.resize(int(rows.size()), 3);
    for (size_t r = 0; r < rows.size(); ++r)
        rep.roc.row(int(r)) << rows[r][0], rows[r][1], rows[r][2];

    rep.auc = 0.0;
    for (int r = 0; r + 1 < rep.roc.rows(); ++r)
        rep.auc += (rep.roc(r + 1, 1) - rep.roc(r, 1)) * (rep.roc(r, 2) + rep.roc(r + 1, 2)) / 2.0;

    // the sweep row realised by the 0.5 rule: smallest distinct value above 0.5
    rep.operating_index = 0;
    for (int r = int(rep.roc.rows()) - 1; r >= 1; --r)
        if (rep.roc(r, 0) > 0.5) {
            rep.operating_index = r;
            break;
        }
    return rep;
}

EvalReport evaluate_loso(const std::vector<SoundData>& sounds, ClassifierKind kind,
                         unsigned seed) {
    const int n = int(sounds.size());
    if (n == 0) throw std::invalid_argument("evaluate_loso: empty dataset");
    std::vector<int> labels(sounds.size());
    std::vector<std::string> speaker_ids(sounds.size());
    for (int i = 0; i < n; ++i) {
        labels[size_t(i)] = sounds[size_t(i)].label;
        speaker_ids[size_t(i)] = sounds[size_t(i)].speaker;
    }
    check_labels(labels);
    auto speakers = sorted_speakers(speaker_ids);
    if (speakers.size() < 2) throw std::invalid_argument("evaluate_loso: need at least 2 speakers");

    auto curve_set = [&](const SoundData& s) {
        if (kind == ClassifierKind::plr) return s.mfcc;
        curveprep::CurveSet cs;
        cs.kind = curveprep::CurveKind::mfcc;
        cs.values.resize(s.mfcc.values.rows(), s.mfcc.values.cols() + s.formant.values.cols());
        cs.values << s.mfcc.values, s.formant.values;
        return cs;
    };

    VectorXd probs(n);
    std::vector<FoldResult> folds;
    for (const auto& held : speakers) {
        std::vector<int> tr, te;
        for (int i = 0; i < n; ++i) (speaker_ids[size_t(i)] == held ? te : tr).push_back(i);

        std::vector<int> ytr;
        std::vector<std::string> str;
        for (int i : tr) ytr.push_back(labels[size_t(i)]), str.push_back(speaker_ids[size_t(i)]);

        if (kind == ClassifierKind::flr) {
            const int T = sounds.front().formant.T();
            MatrixXd f2(tr.size(), T);
            for (size_t i = 0; i < tr.size(); ++i)
                f2.row(int(i)) = sounds[size_t(tr[i])].formant.values.col(1).transpose();
            auto model = fit_flr(f2, ytr, str);
            for (int i : te)
                probs[i] = numeric::ilogit(
                    predict_flr(model, sounds[size_t(i)].formant.values.col(1)));
        } else {
            std::vector<curveprep::CurveSet> train_sets;
            for (int i : tr) train_sets.push_back(curve_set(sounds[size_t(i)]));
            auto basis = fpca::fit_fpca(train_sets, true);
            const int K = std::min(400, basis.K());
            MatrixXd sc(tr.size(), K);
            for (size_t i = 0; i < tr.size(); ++i)
                sc.row(int(i)) = fpca::project(basis, train_sets[i]).scores.head(K).transpose();
            auto model = fit_plr(sc, ytr, -1.0, seed);
            for (int i : te) {
                auto proj = fpca::project(basis, curve_set(sounds[size_t(i)]));
                probs[i] = numeric::ilogit(predict_plr(model, proj.scores.head(K)));
            }
        }

        FoldResult fr;
        fr.held_out = held;
        fr.n = int(te.size());
        for (int i : te)
            fr.correct += (probs[i] > 0.5 ? 1 : 0) == labels[size_t(i)] ? 1 : 0;
        folds.push_back(fr);
    }

    auto rep = metrics(probs, labels);
    rep.folds = folds;
    return rep;
}

namespace {

// Appendix-grid term builders. Curves arrive as one row per sound.
VectorXd at_time(const MatrixXd& curves, double t) {
    VectorXd grid = numeric::unit_grid(int(curves.cols()));
    VectorXd out(curves.rows());
    for (int i = 0; i < curves.rows(); ++i)
        out[i] = numeric::CubicInterpolant(grid, curves.row(i).transpose())(t);
    return out;
}

Term scalar_term(const VectorXd& col) {
    Term t;
    t.X = col;
    t.penalized = false;
    return t;
}

Term three_point_term(const MatrixXd& curves) {
    Term t;
    Eigen::Vector3d knots(0.25, 0.5, 0.75);
    t.X.resize(curves.rows(), 3);
    for (int j = 0; j < 3; ++j) t.X.col(j) = at_time(curves, knots[j]) / 3.0;
    t.K = numeric::second_derivative_penalty(knots);
    t.penalized = true;
    return t;
}

struct GridData {
    MatrixXd f1, f2;  // n x T
    std::vector<int> labels;
    std::vector<std::string> speakers;
};

GridData grid_data(const std::vector<SoundData>& sounds) {
    GridData d;
    const int n = int(sounds.size());
    const int T = sounds.front().formant.T();
    d.f1.resize(n, T);
    d.f2.resize(n, T);
    for (int i = 0; i < n; ++i) {
        d.f1.row(i) = sounds[size_t(i)].formant.values.col(0).transpose();
        d.f2.row(i) = sounds[size_t(i)].formant.values.col(1).transpose();
        d.labels.push_back(sounds[size_t(i)].label);
        d.speakers.push_back(sounds[size_t(i)].speaker);
    }
    return d;
}

std::vector<Term> grid_terms(int model_no, const MatrixXd& f1, const MatrixXd& f2) {
    MatrixXd diff = f2 - f1;
    switch (model_no) {
        case 1: return {scalar_term(at_time(f1, 0.5))};
        case 2: return {scalar_term(at_time(f2, 0.5))};
        case 3: return {scalar_term(at_time(f1, 0.5)), scalar_term(at_time(f2, 0.5))};
        case 4: return {three_point_term(f2)};
        case 5: return {three_point_term(f1), three_point_term(f2)};
        case 6: return {scalar_term(f1.rowwise().mean()), three_point_term(diff)};
        case 7: return {functional_term(f1)};
        case 8: return {functional_term(f2)};
        case 9: return {functional_term(diff)};
        case 10: return {scalar_term(f1.rowwise().mean()), functional_term(diff)};
        case 11: return {functional_term(f1), functional_term(f2)};
        default: throw std::invalid_argument("model_selection_grid: unknown model number");
    }
}

double general_predict(const GeneralModel& m, const std::vector<Term>& test_terms, int row) {
    double eta = m.beta0;
    for (size_t t = 0; t < test_terms.size(); ++t)
        eta += test_terms[t].X.row(row).dot(m.coefs.at(t));
    return eta;
}

GridRow grid_row(int model_no, bool aligned, const GridData& d) {
    auto terms = grid_terms(model_no, d.f1, d.f2);
    auto full = fit_general(terms, d.labels, d.speakers);

    GridRow row;
    row.model_no = model_no;
    row.aligned = aligned;
    row.edf = full.edf;
    row.aic = full.aic;

    // LOSO at the hyperparameters picked on the full data
    auto speakers = sorted_speakers(d.speakers);
    int correct = 0, total = 0;
    for (const auto& held : speakers) {
        std::vector<int> tr, te;
        for (size_t i = 0; i < d.speakers.size(); ++i)
            (d.speakers[i] == held ? te : tr).push_back(int(i));
        auto take = [&](const MatrixXd& m, const std::vector<int>& idx) {
            MatrixXd out(idx.size(), m.cols());
            for (size_t i = 0; i < idx.size(); ++i) out.row(int(i)) = m.row(idx[i]);
            return out;
        };
        std::vector<int> ytr;
        std::vector<std::string> str;
        for (int i : tr) ytr.push_back(d.labels[size_t(i)]), str.push_back(d.speakers[size_t(i)]);
        auto fold_terms = grid_terms(model_no, take(d.f1, tr), take(d.f2, tr));
        auto fold_fit = fit_general_at(fold_terms, ytr, str, full.lambda_s, full.sigma2_s);
        auto test_terms = grid_terms(model_no, take(d.f1, te), take(d.f2, te));
        for (size_t i = 0; i < te.size(); ++i) {
            int pred = numeric::ilogit(general_predict(fold_fit, test_terms, int(i))) > 0.5 ? 1 : 0;
            correct += pred == d.labels[size_t(te[i])] ? 1 : 0;
            ++total;
        }
    }
    row.accuracy = double(correct) / double(total);
    return row;
}

}  // namespace

std::vector<GridRow> model_selection_grid(const std::vector<SoundData>& aligned,
                                          const std::vector<SoundData>& unaligned,
                                          const std::vector<int>& model_numbers) {
    std::vector<int> models = model_numbers;
    if (models.empty())
        for (int m = 1; m <= 11; ++m) models.push_back(m);

    std::vector<GridRow> rows;
    for (int m : models) {
        if (!aligned.empty()) rows.push_back(grid_row(m, true, grid_data(aligned)));
        if (!unaligned.empty()) rows.push_back(grid_row(m, false, grid_data(unaligned)));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// persistence

namespace {

csvio::Json vec_json(const VectorXd& v) {
    csvio::Json arr = csvio::Json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(csvio::num(v[i]));
    return arr;
}

VectorXd json_vec(const csvio::Json& arr) {
    VectorXd v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) v[int(i)] = csvio::as_num(arr[i]);
    return v;
}

void check_version(const csvio::Json& j, const char* what) {
    if (!j.contains("format_version") || j["format_version"] != 1)
        throw std::runtime_error(std::string(what) + ": unsupported format_version");
}

}  // namespace

void save_flr(const std::string& base, const FlrModel& model) {
    csvio::Json j;
    j["format_version"] = 1;
    j["kind"] = "flr";
    j["beta0"] = csvio::num(model.beta0);
    j["beta1"] = vec_json(model.beta1);
    j["lambda_s"] = csvio::num(model.lambda_s);
    j["sigma2_s"] = csvio::num(model.sigma2_s);
    j["edf"] = csvio::num(model.edf);
    j["aic"] = csvio::num(model.aic);
    j["loglik"] = csvio::num(model.loglik);
    j["converged"] = model.converged;
    j["speakers"] = model.speakers;
    j["gamma"] = vec_json(model.gamma);
    csvio::write_json(base + ".json", j);
}

FlrModel load_flr(const std::string& base) {
    auto j = csvio::read_json(base + ".json");
    check_version(j, "load_flr");
    FlrModel m;
    m.beta0 = csvio::as_num(j["beta0"]);
    m.beta1 = json_vec(j["beta1"]);
    m.lambda_s = csvio::as_num(j["lambda_s"]);
    m.sigma2_s = csvio::as_num(j["sigma2_s"]);
    m.edf = csvio::as_num(j["edf"]);
    m.aic = csvio::as_num(j["aic"]);
    m.loglik = csvio::as_num(j["loglik"]);
    m.converged = j["converged"].get<bool>();
    m.speakers = j["speakers"].get<std::vector<std::string>>();
    m.gamma = json_vec(j["gamma"]);
    return m;
}

void save_plr(const std::string& base, const PlrModel& model) {
    csvio::Json j;
    j["format_version"] = 1;
    j["kind"] = "plr";
    j["beta0"] = csvio::num(model.beta0);
    j["beta"] = vec_json(model.beta);
    j["lambda"] = csvio::num(model.lambda);
    j["cv_seed"] = model.cv_seed;
    j["fpca_ref"] = numeric::hex64(model.fpca_ref);
    j["converged"] = model.converged;
    j["nonzero"] = model.nonzero();
    csvio::write_json(base + ".json", j);
}

PlrModel load_plr(const std::string& base) {
    auto j = csvio::read_json(base + ".json");
    check_version(j, "load_plr");
    PlrModel m;
    m.beta0 = csvio::as_num(j["beta0"]);
    m.beta = json_vec(j["beta"]);
    m.lambda = csvio::as_num(j["lambda"]);
    m.cv_seed = j["cv_seed"].get<unsigned>();
    m.fpca_ref = std::stoull(j["fpca_ref"].get<std::string>(), nullptr, 16);
    m.converged = j["converged"].get<bool>();
    return m;
}

void save_report(const std::string& base, const EvalReport& report) {
    csvio::Json j;
    j["format_version"] = 1;
    j["confusion"] = {{report.confusion(0, 0), report.confusion(0, 1)},
                      {report.confusion(1, 0), report.confusion(1, 1)}};
    j["accuracy"] = csvio::num(report.accuracy);
    j["auc"] = csvio::num(report.auc);
    j["operating_index"] = report.operating_index;
    csvio::Json folds = csvio::Json::array();
    for (const auto& f : report.folds)
        folds.push_back({{"held_out", f.held_out}, {"n", f.n}, {"correct", f.correct}});
    j["folds"] = folds;
    csvio::write_json(base + ".json", j);

    csvio::Table roc;
    roc.header = {"threshold", "fpr", "tpr"};
    for (int r = 0; r < report.roc.rows(); ++r)
        roc.rows.push_back({csvio::fmt_double(report.roc(r, 0)), csvio::fmt_double(report.roc(r, 1)),
                            csvio::fmt_double(report.roc(r, 2))});
    csvio::write_table(base + "_roc.csv", roc);
}

EvalReport load_report(const std::string& base) {
    auto j = csvio::read_json(base + ".json");
    check_version(j, "load_report");
    EvalReport rep;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) rep.confusion(r, c) = j["confusion"][size_t(r)][size_t(c)].get<int>();
    rep.accuracy = csvio::as_num(j["accuracy"]);
    rep.auc = csvio::as_num(j["auc"]);
    rep.operating_index = j["operating_index"].get<int>();
    for (const auto& f : j["folds"]) {
        FoldResult fr;
        fr.held_out = f["held_out"].get<std::string>();
        fr.n = f["n"].get<int>();
        fr.correct = f["correct"].get<int>();
        rep.folds.push_back(fr);
    }
    auto roc = csvio::read_table(base + "_roc.csv");
    rep.roc.resize(int(roc.rows.size()), 3);
    for (size_t r = 0; r < roc.rows.size(); ++r)
        for (int c = 0; c < 3; ++c) rep.roc(int(r), c) = std::stod(roc.rows[r][size_t(c)]);
    return rep;
}

}  // namespace accent::models
