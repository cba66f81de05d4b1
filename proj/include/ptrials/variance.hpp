#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ptrials/numerics.hpp"
#include "ptrials/parallel.hpp"

namespace ptrials {

/// Correlation of two difference-of-means pivots that share one control arm,
/// unit variance per patient:
///   rho_ij = (1/n_c) / sqrt((1/n_i + 1/n_c)(1/n_j + 1/n_c)).
inline double shared_control_correlation(std::uint64_t n_i, std::uint64_t n_j, std::uint64_t n_c) {
    if (n_i == 0 || n_j == 0 || n_c == 0) {
        throw std::invalid_argument("shared_control_correlation: sample sizes must be >= 1");
    }
    const double vi = 1.0 / double(n_i);
    const double vj = 1.0 / double(n_j);
    const double vc = 1.0 / double(n_c);
    return vc / std::sqrt((vi + vc) * (vj + vc));
}

/// Cov(Z_i, Z_j) of two one-sided non-coverage indicators at level alpha
/// whose pivots are standard bivariate normal with correlation rho.
inline double cov_noncoverage(double alpha, double rho) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("cov_noncoverage: alpha must lie in (0,1)");
    if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("cov_noncoverage: |rho| must be <= 1");
    if (rho == 0.0) return 0.0;
    const double z = upper_critical_value(alpha);
    return bvn_upper_orthant(z, z, rho) - alpha * alpha;
}

/// Every pair has the same correlation.
struct CommonRho {
    double rho = 0.0;
};

/// Explicit k x k correlation matrix, row-major. Positive semidefiniteness is
/// not checked; only symmetry, unit diagonal and range.
struct CorrelationMatrix {
    std::size_t dim = 0;
    std::vector<double> values;

    double operator()(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
};

/// Treatment arm sizes sharing a single control arm of size `control`.
struct SharedControlArms {
    std::vector<std::uint64_t> arms;
    std::uint64_t control = 0;
};

/// Pairwise correlation structure of the pivots of the true-null studies.
/// The caller supplies the structure for the observed subset (conditional analysis).
class CorrelationModel {
public:
    using Kind = std::variant<CommonRho, CorrelationMatrix, SharedControlArms>;

    static CorrelationModel common(double rho) {
        if (!(rho >= -1.0 && rho <= 1.0)) throw std::invalid_argument("correlation model: |rho| > 1");
        return CorrelationModel(CommonRho{rho});
    }

    static CorrelationModel matrix(std::size_t dim, std::vector<double> values) {
        if (values.size() != dim * dim) throw std::invalid_argument("correlation matrix: size mismatch");
        CorrelationMatrix m{dim, std::move(values)};
        for (std::size_t i = 0; i < dim; ++i) {
            if (m(i, i) != 1.0) throw std::invalid_argument("correlation matrix: diagonal must be 1");
            for (std::size_t j = 0; j < dim; ++j) {
                if (!(m(i, j) >= -1.0 && m(i, j) <= 1.0)) {
                    throw std::invalid_argument("correlation matrix: entry out of [-1,1]");
                }
                if (m(i, j) != m(j, i)) throw std::invalid_argument("correlation matrix: not symmetric");
            }
        }
        return CorrelationModel(std::move(m));
    }

    static CorrelationModel from_arms(std::vector<std::uint64_t> arms, std::uint64_t control) {
        if (control == 0) throw std::invalid_argument("correlation model: control size must be >= 1");
        for (auto n : arms) {
            if (n == 0) throw std::invalid_argument("correlation model: arm size must be >= 1");
        }
        return CorrelationModel(SharedControlArms{std::move(arms), control});
    }

    const Kind& kind() const { return kind_; }

    /// Dimension the model is pinned to, or 0 for common-rho (any dimension).
    std::size_t dimension() const {
        if (const auto* m = std::get_if<CorrelationMatrix>(&kind_)) return m->dim;
        if (const auto* a = std::get_if<SharedControlArms>(&kind_)) return a->arms.size();
        return 0;
    }

    double rho(std::size_t i, std::size_t j) const {
        if (i == j) return 1.0;
        if (const auto* c = std::get_if<CommonRho>(&kind_)) return c->rho;
        if (const auto* m = std::get_if<CorrelationMatrix>(&kind_)) return (*m)(i, j);
        const auto& a = std::get<SharedControlArms>(kind_);
        return shared_control_correlation(a.arms[i], a.arms[j], a.control);
    }

    /// Mean off-diagonal correlation over `dim` studies; 0 when there are no pairs.
    double average_pairwise(std::size_t dim) const {
        if (dim < 2) return 0.0;
        double sum = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = i + 1; j < dim; ++j) sum += rho(i, j);
        }
        return sum / (double(dim) * double(dim - 1) / 2.0);
    }

private:
    explicit CorrelationModel(Kind k) : kind_(std::move(k)) {}
    Kind kind_;
};

struct VarianceReport {
    std::uint64_t n_true = 0;
    double alpha = 0.0;
    /// alpha * n_true, the expected number of incorrect approvals.
    double erpf = 0.0;
    double var_V = 0.0;
    double stddev_V = 0.0;
    /// Sum of Cov(Z_i, Z_j) over ordered pairs i != j.
    double pairwise_cov = 0.0;
};

/// Var(V*) = n alpha (1 - alpha) + sum_{i != j} Cov(Z_i, Z_j).
inline VarianceReport var_V_star(std::uint64_t n_true, double alpha, const CorrelationModel& model) {
    if (n_true == 0) throw std::invalid_argument("var_V_star: n_true must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("var_V_star: alpha must lie in (0,1)");
    const std::size_t dim = model.dimension();
    if (dim != 0 && dim != n_true) {
        throw std::invalid_argument("var_V_star: model dimension " + std::to_string(dim) +
                                    " does not match n_true " + std::to_string(n_true));
    }

    VarianceReport r;
    r.n_true = n_true;
    r.alpha = alpha;
    r.erpf = alpha * double(n_true);

    if (const auto* c = std::get_if<CommonRho>(&model.kind())) {
        if (n_true > 1) r.pairwise_cov = double(n_true) * double(n_true - 1) * cov_noncoverage(alpha, c->rho);
    } else {
        double half = 0.0;
        for (std::size_t i = 0; i < n_true; ++i) {
            for (std::size_t j = i + 1; j < n_true; ++j) half += cov_noncoverage(alpha, model.rho(i, j));
        }
        r.pairwise_cov = 2.0 * half;
    }
    r.var_V = double(n_true) * alpha * (1.0 - alpha) + r.pairwise_cov;
    // Strongly negative correlation matrices that are not PSD can push this below zero.
    if (r.var_V < 0.0) throw std::invalid_argument("var_V_star: negative variance, correlation not admissible");
    r.stddev_V = std::sqrt(r.var_V);
    return r;
}

struct StddevTableRow {
    double rho = 0.0;
    VarianceReport report;
};

/// Cross product of ns x rhos under a common correlation, rows ordered by n then rho.
inline std::vector<StddevTableRow> stddev_table(const std::vector<std::uint64_t>& ns, const std::vector<double>& rhos,
                                                double alpha, unsigned threads = 1) {
    if (ns.empty() || rhos.empty()) throw std::invalid_argument("stddev_table: empty grid");
    std::vector<StddevTableRow> rows(ns.size() * rhos.size());
    parallel_for(rows.size(), threads, [&](std::size_t idx) {
        const double rho = rhos[idx % rhos.size()];
        rows[idx] = {rho, var_V_star(ns[idx / rhos.size()], alpha, CorrelationModel::common(rho))};
    });
    return rows;
}

/// CSV with header n_true,erpf,rho,stddev at 4 decimals.
inline void write_stddev_csv(std::ostream& os, const std::vector<StddevTableRow>& rows) {
    os << "n_true,erpf,rho,stddev\n";
    const auto flags = os.flags();
    os << std::fixed << std::setprecision(4);
    for (const auto& row : rows) {
        os << row.report.n_true << ',' << row.report.erpf << ',' << row.rho << ',' << row.report.stddev_V << '\n';
    }
    os.flags(flags);
}

}  // namespace ptrials
