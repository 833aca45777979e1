#pragma once

// Least-squares identification of (A, Q) from a full-rate state recording.

#include "etl/core.hpp"
#include "etl/csv.hpp"
#include "etl/linsys.hpp"

#include <istream>
#include <optional>
#include <ostream>
#include <vector>

namespace etl {

struct LearningDataset {
    std::vector<Vector> states; ///< x(0..N)

    [[nodiscard]] Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
    /// Number of transitions N.
    [[nodiscard]] std::size_t transitions() const { return states.empty() ? 0 : states.size() - 1; }

    static std::size_t minimum_transitions(Eigen::Index dim)
    {
        return static_cast<std::size_t>(dim * (dim + 1));
    }

    void validate() const
    {
        require(!states.empty(), "learning dataset: empty");
        const Eigen::Index n = dim();
        require(n > 0, "learning dataset: zero-dimensional states");
        for (const auto& x : states) {
            require_dim(n, x.size(), "learning dataset state");
        }
        require(transitions() >= minimum_transitions(n),
                "learning dataset: need at least " + std::to_string(minimum_transitions(n)) + " transitions");
    }
};

/// Â = (Σ x(k+1) x(k)ᵀ)(Σ x(k) x(k)ᵀ)⁻¹ and Q̂ = residual covariance.
/// Throws std::invalid_argument on a rank-deficient regressor and
/// UnstableModelError when ρ(Â) ≥ 1.
inline DiscreteLinearModel identify_discrete(const LearningDataset& data)
{
    data.validate();
    const Eigen::Index n = data.dim();
    Matrix sxx = Matrix::Zero(n, n);
    Matrix syx = Matrix::Zero(n, n);
    for (std::size_t k = 0; k + 1 < data.states.size(); ++k) {
        sxx.noalias() += data.states[k] * data.states[k].transpose();
        syx.noalias() += data.states[k + 1] * data.states[k].transpose();
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(sxx);
    qr.setThreshold(1e-12);
    if (sxx.cwiseAbs().maxCoeff() == 0.0 || qr.rank() < n) {
        throw std::invalid_argument("identify_discrete: regressor matrix is rank deficient");
    }
    const Matrix a = qr.solve(syx.transpose()).transpose();

    Matrix q = Matrix::Zero(n, n);
    for (std::size_t k = 0; k + 1 < data.states.size(); ++k) {
        const Vector r = data.states[k + 1] - a * data.states[k];
        q.noalias() += r * r.transpose();
    }
    q /= static_cast<double>(data.transitions());
    q = 0.5 * (q + q.transpose());

    if (spectral_radius(a) >= 1.0) {
        throw UnstableModelError("identify_discrete: estimated transition is not stable");
    }
    // Exact (noiseless) fits leave a numerically zero Q̂.
    if (q.cwiseAbs().maxCoeff() < 1e-24) {
        q.setZero();
    }
    return {a, q, ModelChecks{.require_stable = true, .allow_degenerate_noise = true}};
}

/// Dedicated learning experiment: every state of the plant is transmitted for
/// `episode_length` steps, starting from x0 (zero by default).
inline LearningDataset learning_episode(const DiscreteLinearModel& plant, std::size_t episode_length,
                                        RandomSource& rng, std::optional<Vector> x0 = std::nullopt)
{
    require(episode_length >= LearningDataset::minimum_transitions(plant.dim()),
            "learning_episode: episode_length below the minimum of " +
                std::to_string(LearningDataset::minimum_transitions(plant.dim())));
    LearningDataset data;
    data.states.reserve(episode_length + 1);
    Vector x = x0 ? *x0 : Vector::Zero(plant.dim());
    require_dim(plant.dim(), x.size(), "learning_episode initial state");
    data.states.push_back(x);
    for (std::size_t k = 0; k < episode_length; ++k) {
        x = step_discrete(plant, x, rng);
        data.states.push_back(x);
    }
    return data;
}

/// Columns: step, x0...
inline void write_dataset_csv(std::ostream& out, const LearningDataset& data)
{
    out << "step";
    for (Eigen::Index i = 0; i < data.dim(); ++i) {
        out << ",x" << i;
    }
    out << '\n';
    for (std::size_t k = 0; k < data.states.size(); ++k) {
        out << k;
        for (Eigen::Index i = 0; i < data.dim(); ++i) {
            out << ',' << csv::format(data.states[k](i));
        }
        out << '\n';
    }
}

inline LearningDataset read_dataset_csv(std::istream& in)
{
    const csv::Table table = csv::read(in);
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i].size() > 1 && table.header[i][0] == 'x' &&
            table.header[i].find_first_not_of("0123456789", 1) == std::string::npos) {
            cols.push_back(i);
        }
    }
    require(!cols.empty(), "dataset csv: no state columns (x0, x1, ...)");
    LearningDataset data;
    for (const auto& row : table.rows) {
        Vector x(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) {
            x(static_cast<Eigen::Index>(i)) = row[cols[i]];
        }
        data.states.push_back(std::move(x));
    }
    return data;
}

} // namespace etl
