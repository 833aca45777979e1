#pragma once

// Linear Gaussian systems in continuous time (Ornstein-Uhlenbeck)
//     dX = A X dt + C dW
// and discrete time
//     x(k+1) = A x(k) + e(k),   e(k) ~ N(0, Q),
// with one-step simulators and an exact discretization.

#include "etl/core.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>
#include <vector>

namespace etl {

/// Validation switches applied on model construction. The defaults enforce the
/// stability and positive-definiteness assumptions; trivial test systems may
/// relax them explicitly.
struct ModelChecks {
    bool require_stable = true;
    bool allow_degenerate_noise = false;
};

inline constexpr ModelChecks relaxed_checks{.require_stable = false, .allow_degenerate_noise = true};

class DiscreteLinearModel {
public:
    DiscreteLinearModel(Matrix transition, Matrix noise_cov, ModelChecks checks = {})
        : transition_(std::move(transition)), noise_cov_(std::move(noise_cov)), checks_(checks)
    {
        require(transition_.rows() > 0 && transition_.rows() == transition_.cols(),
                "discrete model: transition must be square and non-empty");
        require_dim(transition_.rows(), noise_cov_.rows(), "discrete model noise_cov rows");
        require_dim(transition_.rows(), noise_cov_.cols(), "discrete model noise_cov cols");
        require(is_symmetric(noise_cov_), "discrete model: noise_cov must be symmetric");
        if (checks_.allow_degenerate_noise) {
            require(is_positive_semidefinite(noise_cov_), "discrete model: noise_cov must be positive semidefinite");
        } else {
            require(is_positive_definite(noise_cov_), "discrete model: noise_cov must be positive definite");
        }
        if (checks_.require_stable) {
            require(spectral_radius(transition_) < 1.0, "discrete model: transition must have spectral radius < 1");
        }
        noise_factor_ = covariance_factor(noise_cov_, checks_.allow_degenerate_noise);
    }

    static DiscreteLinearModel scalar(double a, double q, ModelChecks checks = {})
    {
        return {scalar_matrix(a), scalar_matrix(q), checks};
    }

    [[nodiscard]] Eigen::Index dim() const { return transition_.rows(); }
    [[nodiscard]] const Matrix& transition() const { return transition_; }
    [[nodiscard]] const Matrix& noise_cov() const { return noise_cov_; }
    /// Cached L with L Lᵀ = Q.
    [[nodiscard]] const Matrix& noise_factor() const { return noise_factor_; }
    [[nodiscard]] ModelChecks checks() const { return checks_; }
    [[nodiscard]] bool is_stable() const { return spectral_radius(transition_) < 1.0; }

private:
    Matrix transition_;
    Matrix noise_cov_;
    Matrix noise_factor_;
    ModelChecks checks_;
};

class ContinuousLinearModel {
public:
    ContinuousLinearModel(Matrix drift, Matrix diffusion, ModelChecks checks = {})
        : drift_(std::move(drift)), diffusion_(std::move(diffusion)), checks_(checks)
    {
        require(drift_.rows() > 0 && drift_.rows() == drift_.cols(),
                "continuous model: drift must be square and non-empty");
        require_dim(drift_.rows(), diffusion_.rows(), "continuous model diffusion rows");
        require_dim(drift_.rows(), diffusion_.cols(), "continuous model diffusion cols");
        if (checks_.allow_degenerate_noise) {
            require(is_positive_semidefinite(diffusion_), "continuous model: diffusion must be positive semidefinite");
        } else {
            require(is_positive_definite(diffusion_), "continuous model: diffusion must be positive definite");
        }
        if (checks_.require_stable) {
            require(max_real_eigenvalue(drift_) < 0.0,
                    "continuous model: drift eigenvalues must have negative real part");
        }
    }

    static ContinuousLinearModel scalar(double drift, double diffusion, ModelChecks checks = {})
    {
        return {scalar_matrix(drift), scalar_matrix(diffusion), checks};
    }

    [[nodiscard]] Eigen::Index dim() const { return drift_.rows(); }
    [[nodiscard]] const Matrix& drift() const { return drift_; }
    [[nodiscard]] const Matrix& diffusion() const { return diffusion_; }
    [[nodiscard]] ModelChecks checks() const { return checks_; }

private:
    Matrix drift_;
    Matrix diffusion_;
    ModelChecks checks_;
};

/// Sampled path. Times are step indices in discrete mode, seconds otherwise.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;

    void push(double t, Vector x)
    {
        require(times.empty() || t > times.back(), "trajectory times must be strictly increasing");
        times.push_back(t);
        states.push_back(std::move(x));
    }

    [[nodiscard]] std::size_t size() const { return times.size(); }
    [[nodiscard]] bool empty() const { return times.empty(); }
};

inline Vector step_discrete(const DiscreteLinearModel& model, const Vector& state, RandomSource& rng)
{
    require_dim(model.dim(), state.size(), "step_discrete");
    Vector xi = rng.gaussian_vector(model.dim());
    return model.transition() * state + model.noise_factor() * xi;
}

inline Vector step_euler_maruyama(const ContinuousLinearModel& model, const Vector& state, double h,
                                  RandomSource& rng)
{
    require(h > 0.0, "step_euler_maruyama: step size must be positive");
    require_dim(model.dim(), state.size(), "step_euler_maruyama");
    Vector xi = rng.gaussian_vector(model.dim());
    return state + model.drift() * state * h + model.diffusion() * (std::sqrt(h) * xi);
}

/// Exact zero-order discretization over a step h:
///   A_d = exp(A h),  Q_d = ∫₀ʰ exp(A s) C Cᵀ exp(Aᵀ s) ds.
/// The integral is read off the exponential of the block matrix
///   [[-A, C Cᵀ], [0, Aᵀ]] h = [[·, A_d⁻¹ Q_d], [0, A_dᵀ]].
inline DiscreteLinearModel discretize(const ContinuousLinearModel& model, double h)
{
    require(h > 0.0, "discretize: step size must be positive");
    const Eigen::Index n = model.dim();
    Matrix block = Matrix::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = -model.drift();
    block.topRightCorner(n, n) = model.diffusion() * model.diffusion().transpose();
    block.bottomRightCorner(n, n) = model.drift().transpose();
    const Matrix e = (block * h).exp();

    Matrix transition = e.bottomRightCorner(n, n).transpose();
    Matrix noise = transition * e.topRightCorner(n, n);
    noise = 0.5 * (noise + noise.transpose());

    // The integral of a PSD integrand is PSD; clean tiny negative round-off so
    // degenerate diffusions still pass validation.
    ModelChecks checks = model.checks();
    if (checks.allow_degenerate_noise) {
        Eigen::SelfAdjointEigenSolver<Matrix> solver(noise);
        noise = solver.eigenvectors() * solver.eigenvalues().cwiseMax(0.0).asDiagonal() *
                solver.eigenvectors().transpose();
        noise = 0.5 * (noise + noise.transpose());
    }
    return {std::move(transition), std::move(noise), checks};
}

inline Trajectory simulate_discrete(const DiscreteLinearModel& model, Vector x0, std::int64_t steps,
                                    RandomSource& rng)
{
    require_dim(model.dim(), x0.size(), "simulate_discrete");
    Trajectory out;
    out.times.reserve(static_cast<std::size_t>(steps + 1));
    out.states.reserve(static_cast<std::size_t>(steps + 1));
    out.push(0.0, x0);
    for (std::int64_t k = 1; k <= steps; ++k) {
        x0 = step_discrete(model, x0, rng);
        out.push(static_cast<double>(k), x0);
    }
    return out;
}

inline Trajectory simulate_continuous(const ContinuousLinearModel& model, Vector x0, double horizon, double h,
                                      RandomSource& rng)
{
    require(h > 0.0, "simulate_continuous: step size must be positive");
    require_dim(model.dim(), x0.size(), "simulate_continuous");
    const auto steps = static_cast<std::int64_t>(std::llround(horizon / h));
    Trajectory out;
    out.push(0.0, x0);
    for (std::int64_t k = 1; k <= steps; ++k) {
        x0 = step_euler_maruyama(model, x0, h, rng);
        out.push(static_cast<double>(k) * h, x0);
    }
    return out;
}

} // namespace etl
