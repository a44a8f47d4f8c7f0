#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace accent::numeric {

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double ilogit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Equidistant grid on [0,1] with both endpoints, n >= 2.
Eigen::VectorXd unit_grid(int n);

double median(std::vector<double> v);

// Cubic spline interpolation with not-a-knot end conditions; reproduces
// cubics exactly. Falls back to the exact low-order polynomial for n < 4.
class CubicInterpolant {
public:
    CubicInterpolant(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
    double operator()(double t) const;
    Eigen::VectorXd eval(const Eigen::VectorXd& t) const;

private:
    Eigen::VectorXd x_, y_, m_;  // m_: second derivatives at knots
};

// Monotone cubic (Fritsch-Carlson). Input x strictly increasing; the
// interpolant is monotone wherever the data is.
class PchipInterpolant {
public:
    PchipInterpolant(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
    double operator()(double t) const;
    Eigen::VectorXd eval(const Eigen::VectorXd& t) const;

private:
    Eigen::VectorXd x_, y_, d_;  // d_: endpoint derivatives per knot
};

// Integrated squared second derivative of the natural cubic spline with the
// given knots: integral f''(t)^2 dt = f^T K f for f = values at knots.
// K is symmetric positive semidefinite with nullspace {constant, linear}.
Eigen::MatrixXd second_derivative_penalty(const Eigen::VectorXd& knots);

// Unpenalised logistic regression by Newton/IRLS. Returns coefficients for
// the columns of X (caller appends an intercept column if wanted).
Eigen::VectorXd logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              int max_iter = 100, double tol = 1e-12);

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

// log-spaced grid, inclusive of both endpoints
std::vector<double> log_space(double lo, double hi, int n);

// Fisher-Yates over 0..n-1 driven by a seeded mt19937_64, so the order is
// identical on every platform (std::shuffle is not pinned across stdlibs).
std::vector<int> shuffled_indices(int n, std::uint64_t seed);

}  // namespace accent::numeric
