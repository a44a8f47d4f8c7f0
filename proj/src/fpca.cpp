#include "accent/fpca.hpp"

#include "accent/numeric.hpp"

#include <cmath>
#include <stdexcept>

namespace accent::fpca {

Eigen::VectorXd stack_rows(const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(m.size());
    int idx = 0;
    for (int t = 0; t < m.rows(); ++t)
        for (int j = 0; j < m.cols(); ++j) v[idx++] = m(t, j);
    return v;
}

Eigen::MatrixXd unstack_rows(const Eigen::VectorXd& v, int T, int M) {
    if (v.size() != Eigen::Index(T) * M) throw std::invalid_argument("unstack_rows: size mismatch");
    Eigen::MatrixXd m(T, M);
    int idx = 0;
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < M; ++j) m(t, j) = v[idx++];
    return m;
}

namespace {

double column0_mean(const Eigen::MatrixXd& values) { return values.col(0).mean(); }

}  // namespace

FpcaModel fit_fpca(const std::vector<curveprep::CurveSet>& sets, bool center_mfcc1) {
    if (sets.size() < 2) throw std::invalid_argument("fit_fpca: need at least 2 curve sets");
    const int n = int(sets.size());
    const int T = int(sets[0].values.rows());
    const int M = int(sets[0].values.cols());
    for (const auto& s : sets)
        if (int(s.values.rows()) != T || int(s.values.cols()) != M)
            throw std::invalid_argument("fit_fpca: inconsistent curve set shapes");

    Eigen::MatrixXd X(n, Eigen::Index(T) * M);
    for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd v = sets[i].values;
        if (center_mfcc1) v.col(0).array() -= column0_mean(v);
        X.row(i) = stack_rows(v).transpose();
    }

    FpcaModel model;
    model.T = T;
    model.M = M;
    model.centered_mfcc1 = center_mfcc1;
    Eigen::RowVectorXd mu = X.colwise().mean();
    model.mean = unstack_rows(mu.transpose(), T, M);
    X.rowwise() -= mu;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    const int K = int(svd.singularValues().size());  // min(n, T*M)
    model.components.resize(K, Eigen::Index(T) * M);
    model.eigenvalues.resize(K);
    const double root_T = std::sqrt(double(T));
    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd phi = root_T * svd.matrixV().col(k);
        // deterministic sign: largest-magnitude coordinate made positive
        int arg = 0;
        phi.cwiseAbs().maxCoeff(&arg);
        if (phi[arg] < 0) phi = -phi;
        model.components.row(k) = phi.transpose();
        double sigma = svd.singularValues()[k];
        model.eigenvalues[k] = sigma * sigma / (double(n) * T);
    }
    return model;
}

Projection project(const FpcaModel& model, const curveprep::CurveSet& cs) {
    if (int(cs.values.rows()) != model.T || int(cs.values.cols()) != model.M)
        throw std::invalid_argument("project: shape mismatch");
    Eigen::MatrixXd v = cs.values;
    Projection out;
    if (model.centered_mfcc1) {
        out.mfcc1_level = column0_mean(v);
        v.col(0).array() -= out.mfcc1_level;
    }
    Eigen::VectorXd x = stack_rows(v) - stack_rows(model.mean);
    out.scores = model.components * x * model.quad_weight();
    return out;
}

curveprep::CurveSet reconstruct(const FpcaModel& model, const Eigen::VectorXd& scores,
                                double mfcc1_level) {
    if (scores.size() > model.K()) throw std::invalid_argument("reconstruct: too many scores");
    Eigen::VectorXd x = stack_rows(model.mean);
    x += model.components.topRows(scores.size()).transpose() * scores;
    curveprep::CurveSet cs;
    cs.kind = curveprep::CurveKind::mfcc;
    cs.values = unstack_rows(x, model.T, model.M);
    if (model.centered_mfcc1) cs.values.col(0).array() += mfcc1_level;
    return cs;
}

void save_fpca(const std::string& base, const FpcaModel& model) {
    csvio::Json h;
    h["format_version"] = 1;
    h["T"] = model.T;
    h["M"] = model.M;
    h["K"] = model.K();
    h["centered_mfcc1"] = model.centered_mfcc1;
    h["quad_weight"] = csvio::num(model.quad_weight());
    csvio::write_json(base + ".json", h);
    csvio::write_matrix_csv(base + "_mean.csv", model.mean);
    csvio::write_matrix_csv(base + "_components.csv", model.components);
    csvio::write_matrix_csv(base + "_eigenvalues.csv", model.eigenvalues);
}

FpcaModel load_fpca(const std::string& base) {
    csvio::Json h = csvio::read_json(base + ".json");
    if (h["format_version"].get<int>() != 1)
        throw std::runtime_error("unsupported fpca model version: " + base);
    FpcaModel model;
    model.T = h["T"].get<int>();
    model.M = h["M"].get<int>();
    model.centered_mfcc1 = h["centered_mfcc1"].get<bool>();
    model.mean = csvio::read_matrix_csv(base + "_mean.csv");
    model.components = csvio::read_matrix_csv(base + "_components.csv");
    model.eigenvalues = csvio::read_matrix_csv(base + "_eigenvalues.csv");
    if (model.mean.rows() != model.T || model.mean.cols() != model.M ||
        model.components.cols() != Eigen::Index(model.T) * model.M ||
        model.components.rows() != h["K"].get<int>())
        throw std::runtime_error("fpca model shape mismatch: " + base);
    return model;
}

uint64_t fpca_hash(const FpcaModel& model) {
    // hash the canonical %.17g text of everything that defines the basis
    std::string buf;
    auto add = [&buf](const Eigen::MatrixXd& m) {
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) {
                buf += csvio::fmt_double(m(r, c));
                buf += ',';
            }
    };
    add(model.mean);
    add(model.components);
    add(model.eigenvalues);
    buf += model.centered_mfcc1 ? "c1" : "c0";
    return numeric::fnv1a64(buf.data(), buf.size());
}

}  // namespace accent::fpca
