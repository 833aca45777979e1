#pragma once

// Shared vocabulary: matrix aliases, error types, random sources and a few
// small linear-algebra helpers used across the library.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace etl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when an iterative numerical procedure fails to converge.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an estimated model violates the stability assumption.
class UnstableModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw std::invalid_argument(message);
    }
}

inline void require_dim(Eigen::Index expected, Eigen::Index actual, const char* what)
{
    if (expected != actual) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (expected " +
                                    std::to_string(expected) + ", got " + std::to_string(actual) + ")");
    }
}

// ---------------------------------------------------------------------------
// Random sources
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of an independent stream `stream` under a root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream)
{
    return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// A seeded engine plus a standard normal sampler. One per worker; never shared.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

    double gaussian() { return normal_(engine_); }

    /// Uniform draw on [0, 1).
    double uniform() { return std::generate_canonical<double, 53>(engine_); }

    template <class Derived>
    void fill_gaussian(Eigen::MatrixBase<Derived>& out)
    {
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            out.derived().coeffRef(i) = normal_(engine_);
        }
    }

    Vector gaussian_vector(Eigen::Index n)
    {
        Vector v(n);
        fill_gaussian(v);
        return v;
    }

    /// Fresh 64-bit value, used to seed child computations.
    std::uint64_t next_seed() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Worker count for Monte Carlo fan-out: ETL_WORKERS if set, else hardware concurrency.
inline unsigned default_worker_count()
{
    if (const char* env = std::getenv("ETL_WORKERS")) {
        char* end = nullptr;
        const long value = std::strtol(env, &end, 10);
        if (end != env && value > 0) {
            return static_cast<unsigned>(value);
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1U : hw;
}

// ---------------------------------------------------------------------------
// Linear algebra helpers
// ---------------------------------------------------------------------------

inline double spectral_radius(const Matrix& a)
{
    if (a.size() == 0) {
        return 0.0;
    }
    Eigen::EigenSolver<Matrix> solver(a, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline double max_real_eigenvalue(const Matrix& a)
{
    Eigen::EigenSolver<Matrix> solver(a, false);
    return solver.eigenvalues().real().maxCoeff();
}

inline bool is_symmetric(const Matrix& m, double tol = 1e-12)
{
    if (m.rows() != m.cols()) {
        return false;
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline bool is_positive_definite(const Matrix& m)
{
    if (!is_symmetric(m)) {
        return false;
    }
    Eigen::LLT<Matrix> llt(m);
    return llt.info() == Eigen::Success;
}

inline bool is_positive_semidefinite(const Matrix& m, double tol = 1e-12)
{
    if (!is_symmetric(m)) {
        return false;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return solver.eigenvalues().minCoeff() >= -tol * scale;
}

/// Square factor L with L Lᵀ = cov. Cholesky when definite; the symmetric
/// eigen-decomposition is used for semidefinite covariances.
inline Matrix covariance_factor(const Matrix& cov, bool allow_semidefinite)
{
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) {
        return llt.matrixL();
    }
    if (!allow_semidefinite || !is_positive_semidefinite(cov)) {
        throw std::invalid_argument("covariance factorization failed: matrix is not positive definite");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    const Vector root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * root.asDiagonal();
}

inline Matrix from_row_major(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols)
{
    require(static_cast<Eigen::Index>(values.size()) == rows * cols,
            "expected " + std::to_string(rows * cols) + " row-major entries, got " +
                std::to_string(values.size()));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
        }
    }
    return m;
}

inline std::vector<double> to_row_major(const Matrix& m)
{
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out.push_back(m(r, c));
        }
    }
    return out;
}

inline Matrix scalar_matrix(double value)
{
    return Matrix::Constant(1, 1, value);
}

} // namespace etl
