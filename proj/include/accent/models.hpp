#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "accent/csvio.hpp"
#include "accent/curveprep.hpp"
#include "accent/fpca.hpp"

namespace accent::models {

// Functional logistic regression on F2 curves with a per-speaker random
// intercept handled as a ridge block. beta1 is the coefficient curve at the
// T grid knots; the linear predictor uses the 1/T quadrature of the grid.
struct FlrModel {
    double beta0 = 0.0;
    Eigen::VectorXd beta1;          // coefficient curve at T knots
    double lambda_s = 0.0;          // curvature penalty weight
    double sigma2_s = 0.0;          // speaker random-effect variance (0 = no block)
    double edf = 0.0;
    double aic = 0.0;
    double loglik = 0.0;
    bool converged = true;
    std::vector<std::string> speakers;
    Eigen::VectorXd gamma;          // fitted random effects, one per speaker
};

// l1-penalised logistic regression on FPC scores.
struct PlrModel {
    double beta0 = 0.0;
    Eigen::VectorXd beta;           // K weights, mostly zero
    double lambda = 0.0;
    unsigned cv_seed = 0;
    std::uint64_t fpca_ref = 0;     // hash of the score-producing FPCA basis
    bool converged = true;
    std::vector<int> nonzero() const;
};

struct FoldResult {
    std::string held_out;
    int n = 0;
    int correct = 0;
};

struct EvalReport {
    Eigen::Matrix2i confusion = Eigen::Matrix2i::Zero();  // rows truth, cols predicted
    double accuracy = 0.0;
    Eigen::MatrixXd roc;            // rows (threshold, fpr, tpr), sweep from no positives to all
    int operating_index = 0;        // roc row realised by thresholding at 0.5
    double auc = 0.0;
    std::vector<FoldResult> folds;
};

// One vowel sound ready for modelling.
struct SoundData {
    curveprep::CurveSet mfcc;       // T x 40
    curveprep::CurveSet formant;    // T x 4
    int label = 0;                  // 0 = North, 1 = South
    std::string speaker;
};

enum class ClassifierKind { flr, plr, combined };

// Fit with lambda_s and sigma2_s chosen on an adjusted-AIC log grid.
// f2 holds one curve per row on the common T grid.
FlrModel fit_flr(const Eigen::MatrixXd& f2, const std::vector<int>& labels,
                 const std::vector<std::string>& speaker_ids);

// Same model at fixed hyperparameters (also the refit used by the grid search).
FlrModel fit_flr_at(const Eigen::MatrixXd& f2, const std::vector<int>& labels,
                    const std::vector<std::string>& speaker_ids, double lambda_s,
                    double sigma2_s);

// Linear predictor beta0 + (1/T) sum_t f2(t) beta1(t); new speakers get a
// zero random effect.
double predict_flr(const FlrModel& model, const Eigen::VectorXd& f2_curve);

// Coordinate descent over a 100-point log lambda path from lambda_max down.
// lambda < 0 requests 10-fold CV by test deviance with the given seed. An
// optional trace receives the penalised objective after every accepted
// outer sweep of the final fit.
PlrModel fit_plr(const Eigen::MatrixXd& scores, const std::vector<int>& labels,
                 double lambda = -1.0, unsigned seed = 1234,
                 std::vector<double>* objective_trace = nullptr);

double predict_plr(const PlrModel& model, const Eigen::VectorXd& scores);

// Largest penalty with an all-zero solution, max_k |sum_i x_ik (y_i - ybar)|.
double plr_lambda_max(const Eigen::MatrixXd& scores, const std::vector<int>& labels);

// Content hash of the fitted coefficients, used to pair models with the
// artifacts derived from them.
std::uint64_t plr_hash(const PlrModel& model);

// Confusion at 0.5, threshold-sweep ROC, trapezoid AUC.
EvalReport metrics(const Eigen::VectorXd& probabilities, const std::vector<int>& labels);

// Leave-one-speaker-out evaluation. PLR and combined folds refit the FPCA
// basis on the training speakers and project the held-out sounds onto it;
// combined appends the formant curves to the MFCC curves first.
EvalReport evaluate_loso(const std::vector<SoundData>& sounds, ClassifierKind kind,
                         unsigned seed = 1234);

// Appendix-style formant model comparison.
struct GridRow {
    int model_no = 0;
    bool aligned = false;
    double edf = 0.0;
    double aic = 0.0;
    double accuracy = 0.0;
};

// Fits each requested fixed-effect structure (1..11) to the aligned and the
// unaligned corpus, reporting full-data EDF and adjusted AIC plus LOSO
// accuracy at the hyperparameters selected on the full data.
std::vector<GridRow> model_selection_grid(const std::vector<SoundData>& aligned,
                                          const std::vector<SoundData>& unaligned,
                                          const std::vector<int>& model_numbers = {});

void save_flr(const std::string& base, const FlrModel& model);
FlrModel load_flr(const std::string& base);
void save_plr(const std::string& base, const PlrModel& model);
PlrModel load_plr(const std::string& base);

// base.json plus base_roc.csv
void save_report(const std::string& base, const EvalReport& report);
EvalReport load_report(const std::string& base);

}  // namespace accent::models
