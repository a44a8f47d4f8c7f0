#include "accent/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace accent::numeric {

Eigen::VectorXd unit_grid(int n) {
    if (n < 2) throw std::invalid_argument("unit_grid: need n >= 2");
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g[i] = double(i) / double(n - 1);
    return g;
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty vector");
    size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    return 0.5 * (hi + v[mid - 1]);
}

namespace {

int find_interval(const Eigen::VectorXd& x, double t) {
    // rightmost i with x[i] <= t, clamped to [0, n-2]
    int n = int(x.size());
    if (t <= x[0]) return 0;
    if (t >= x[n - 1]) return n - 2;
    int lo = 0, hi = n - 1;
    while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        if (x[mid] <= t) lo = mid; else hi = mid;
    }
    return lo;
}

}  // namespace

CubicInterpolant::CubicInterpolant(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
    : x_(x), y_(y) {
    int n = int(x.size());
    if (y.size() != n) throw std::invalid_argument("CubicInterpolant: size mismatch");
    if (n < 2) throw std::invalid_argument("CubicInterpolant: need >= 2 points");
    for (int i = 0; i + 1 < n; ++i)
        if (!(x[i + 1] > x[i])) throw std::invalid_argument("CubicInterpolant: x not increasing");
    m_ = Eigen::VectorXd::Zero(n);
    if (n == 2) return;  // linear
    if (n == 3) {
        // single parabola through the three points
        double h0 = x[1] - x[0], h1 = x[2] - x[1];
        double d2 = 2.0 * ((y[2] - y[1]) / h1 - (y[1] - y[0]) / h0) / (h0 + h1);
        m_.setConstant(d2);
        return;
    }
    // not-a-knot: third derivative continuous at x[1] and x[n-2]
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (int i = 1; i + 1 < n; ++i) {
        double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
        A(i, i - 1) = h0 / 6.0;
        A(i, i) = (h0 + h1) / 3.0;
        A(i, i + 1) = h1 / 6.0;
        b[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    {
        double h0 = x[1] - x[0], h1 = x[2] - x[1];
        A(0, 0) = -h1;
        A(0, 1) = h0 + h1;
        A(0, 2) = -h0;
        double hn2 = x[n - 2] - x[n - 3], hn1 = x[n - 1] - x[n - 2];
        A(n - 1, n - 3) = -hn1;
        A(n - 1, n - 2) = hn2 + hn1;
        A(n - 1, n - 1) = -hn2;
    }
    m_ = A.partialPivLu().solve(b);
}

double CubicInterpolant::operator()(double t) const {
    int n = int(x_.size());
    if (n == 2) {
        double w = (t - x_[0]) / (x_[1] - x_[0]);
        return y_[0] + w * (y_[1] - y_[0]);
    }
    int i = find_interval(x_, t);
    double h = x_[i + 1] - x_[i];
    double a = (x_[i + 1] - t) / h, b = (t - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] +
           ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

Eigen::VectorXd CubicInterpolant::eval(const Eigen::VectorXd& t) const {
    Eigen::VectorXd out(t.size());
    for (int i = 0; i < t.size(); ++i) out[i] = (*this)(t[i]);
    return out;
}

PchipInterpolant::PchipInterpolant(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
    : x_(x), y_(y) {
    int n = int(x.size());
    if (y.size() != n || n < 2) throw std::invalid_argument("PchipInterpolant: bad input");
    for (int i = 0; i + 1 < n; ++i)
        if (!(x[i + 1] > x[i])) throw std::invalid_argument("PchipInterpolant: x not increasing");
    d_ = Eigen::VectorXd::Zero(n);
    if (n == 2) {
        double s = (y[1] - y[0]) / (x[1] - x[0]);
        d_[0] = d_[1] = s;
        return;
    }
    Eigen::VectorXd h(n - 1), delta(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
        h[i] = x[i + 1] - x[i];
        delta[i] = (y[i + 1] - y[i]) / h[i];
    }
    for (int i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            d_[i] = 0.0;
        } else {
            double w1 = 2.0 * h[i] + h[i - 1];
            double w2 = h[i] + 2.0 * h[i - 1];
            d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
        double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (s * d0 <= 0.0) s = 0.0;
        else if (d0 * d1 <= 0.0 && std::abs(s) > 3.0 * std::abs(d0)) s = 3.0 * d0;
        return s;
    };
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double PchipInterpolant::operator()(double t) const {
    int i = find_interval(x_, t);
    double h = x_[i + 1] - x_[i];
    double s = (t - x_[i]) / h;
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    double h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s);
    double h11 = s * s * (s - 1);
    return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
}

Eigen::VectorXd PchipInterpolant::eval(const Eigen::VectorXd& t) const {
    Eigen::VectorXd out(t.size());
    for (int i = 0; i < t.size(); ++i) out[i] = (*this)(t[i]);
    return out;
}

Eigen::MatrixXd second_derivative_penalty(const Eigen::VectorXd& knots) {
    // Green & Silverman form: K = D^T W^{-1} D with D second differences and
    // W the tridiagonal Gram matrix of linear B-splines on the knot gaps.
    int n = int(knots.size());
    if (n < 3) return Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd h(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
        h[i] = knots[i + 1] - knots[i];
        if (!(h[i] > 0)) throw std::invalid_argument("second_derivative_penalty: knots not increasing");
    }
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n - 2, n);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n - 2, n - 2);
    for (int i = 0; i < n - 2; ++i) {
        D(i, i) = 1.0 / h[i];
        D(i, i + 1) = -1.0 / h[i] - 1.0 / h[i + 1];
        D(i, i + 2) = 1.0 / h[i + 1];
        W(i, i) = (h[i] + h[i + 1]) / 3.0;
        if (i + 1 < n - 2) {
            W(i, i + 1) = h[i + 1] / 6.0;
            W(i + 1, i) = h[i + 1] / 6.0;
        }
    }
    Eigen::MatrixXd K = D.transpose() * W.llt().solve(D);
    return 0.5 * (K + K.transpose());  // symmetrize away solver noise
}

Eigen::VectorXd logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              int max_iter, double tol) {
    int p = int(X.cols());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd mu = eta.unaryExpr([](double e) { return ilogit(e); });
        Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
        w = w.cwiseMax(1e-10);
        Eigen::VectorXd z = eta + (y - mu).cwiseQuotient(w);
        Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
        Eigen::VectorXd next = (XtW * X).ldlt().solve(XtW * z);
        double step = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        if (step < tol) break;
    }
    return beta;
}

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("fnv1a64_file: cannot open " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        auto got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::vector<double> log_space(double lo, double hi, int n) {
    if (n < 2 || lo <= 0 || hi <= lo) throw std::invalid_argument("log_space: bad range");
    std::vector<double> out(n);
    double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < n; ++i)
        out[i] = std::exp(llo + (lhi - llo) * double(i) / double(n - 1));
    return out;
}

std::vector<int> shuffled_indices(int n, std::uint64_t seed) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (int i = n - 1; i > 0; --i) {
        int j = int(rng() % std::uint64_t(i + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

}  // namespace accent::numeric
