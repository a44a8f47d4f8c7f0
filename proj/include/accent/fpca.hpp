#pragma once

#include "accent/csvio.hpp"
#include "accent/curveprep.hpp"

#include <string>
#include <vector>

namespace accent::fpca {

// Multivariate FPCA of T x M curve sets, computed as plain PCA of the
// row-stacked n x (T*M) data matrix. Components are scaled so they are
// orthonormal under the 1/T quadrature inner product.
struct FpcaModel {
    Eigen::MatrixXd mean;         // T x M
    Eigen::MatrixXd components;   // K x (T*M), row k is phi_k stacked row-major
    Eigen::VectorXd eigenvalues;  // K, nonincreasing
    int T = 0;
    int M = 0;
    bool centered_mfcc1 = false;

    double quad_weight() const { return 1.0 / T; }
    int K() const { return int(eigenvalues.size()); }
};

struct Projection {
    Eigen::VectorXd scores;     // K
    double mfcc1_level = 0.0;   // removed from column 0 before projecting
};

// Stack a T x M matrix row-major into a length-T*M vector.
Eigen::VectorXd stack_rows(const Eigen::MatrixXd& m);
Eigen::MatrixXd unstack_rows(const Eigen::VectorXd& v, int T, int M);

FpcaModel fit_fpca(const std::vector<curveprep::CurveSet>& sets, bool center_mfcc1);

Projection project(const FpcaModel& model, const curveprep::CurveSet& cs);

curveprep::CurveSet reconstruct(const FpcaModel& model, const Eigen::VectorXd& scores,
                                double mfcc1_level = 0.0);

void save_fpca(const std::string& base, const FpcaModel& model);
FpcaModel load_fpca(const std::string& base);

// Stable content hash used by classifiers to pin the model they trained on.
uint64_t fpca_hash(const FpcaModel& model);

}  // namespace accent::fpca
