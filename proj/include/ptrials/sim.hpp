#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptrials/numerics.hpp"
#include "ptrials/parallel.hpp"
#include "ptrials/random.hpp"
#include "ptrials/rates.hpp"
#include "ptrials/variance.hpp"

namespace ptrials {

/// Largest number of studies allowed in one platform.
inline constexpr std::size_t kMaxStudiesPerPlatform = 100;

/// One platform trial: k studies, each comparing a treatment arm against a
/// single shared control arm with known unit per-patient variance.
struct PlatformConfig {
    std::vector<bool> true_null_flags;
    /// Standardized per-patient effect; must be 0 where the null is true.
    std::vector<double> effect_sizes;
    std::vector<std::uint64_t> arm_sizes;
    std::uint64_t control_size = 0;
    double alpha = 0.05;
    /// Per-study overrides of alpha; empty means every study uses `alpha`.
    std::vector<double> study_alpha;
    std::uint32_t statements_per_study = 1;
    /// When set, pivots come from the one-factor model instead of arm draws.
    std::optional<double> one_factor_rho;

    std::size_t k() const { return true_null_flags.size(); }

    double alpha_of(std::size_t i) const { return study_alpha.empty() ? alpha : study_alpha[i]; }

    void validate() const {
        const std::size_t n = k();
        if (n == 0) throw std::invalid_argument("platform: needs at least one study");
        if (n > kMaxStudiesPerPlatform) {
            throw std::invalid_argument("platform: at most " + std::to_string(kMaxStudiesPerPlatform) +
                                        " studies, got " + std::to_string(n));
        }
        if (effect_sizes.size() != n || arm_sizes.size() != n) {
            throw std::invalid_argument("platform: effect_sizes and arm_sizes must have one entry per study");
        }
        if (!study_alpha.empty() && study_alpha.size() != n) {
            throw std::invalid_argument("platform: study_alpha must be empty or have one entry per study");
        }
        if (control_size == 0) throw std::invalid_argument("platform: control size must be >= 1");
        if (statements_per_study == 0) throw std::invalid_argument("platform: statements_per_study must be >= 1");
        for (std::size_t i = 0; i < n; ++i) {
            if (arm_sizes[i] == 0) throw std::invalid_argument("platform: arm size must be >= 1");
            if (!std::isfinite(effect_sizes[i])) throw std::invalid_argument("platform: effect size not finite");
            if (true_null_flags[i] && effect_sizes[i] != 0.0) {
                throw std::invalid_argument("platform: true-null study must have zero effect");
            }
            const double a = alpha_of(i);
            if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("platform: alpha must lie in [0,1)");
        }
        if (one_factor_rho && !(*one_factor_rho >= 0.0 && *one_factor_rho <= 1.0)) {
            throw std::invalid_argument("platform: one-factor rho must lie in [0,1]");
        }
    }

    /// k true-null studies with equal arms.
    static PlatformConfig all_true_null(std::size_t k, std::uint64_t arm_size, std::uint64_t control_size,
                                        double alpha) {
        PlatformConfig c;
        c.true_null_flags.assign(k, true);
        c.effect_sizes.assign(k, 0.0);
        c.arm_sizes.assign(k, arm_size);
        c.control_size = control_size;
        c.alpha = alpha;
        return c;
    }
};

struct PlatformResult {
    std::vector<StudyOutcome> outcomes;
    /// Realized control-arm mean estimate of the first endpoint (truth is 0).
    double control_mean = 0.0;
    /// Pivots of the first endpoint, one per study.
    std::vector<double> pivots;
};

namespace detail {

inline double rejection_threshold(double alpha) {
    return alpha <= 0.0 ? std::numeric_limits<double>::infinity() : upper_critical_value(alpha);
}

}  // namespace detail

/// Simulates one platform. All studies share the control draw of each endpoint.
inline PlatformResult simulate_platform(const PlatformConfig& config, NormalStream& rng,
                                        const std::string& platform_id = "P") {
    config.validate();
    const std::size_t k = config.k();
    const std::uint32_t m = config.statements_per_study;

    std::vector<double> threshold(k);
    std::vector<double> se(k);
    for (std::size_t i = 0; i < k; ++i) {
        threshold[i] = detail::rejection_threshold(config.alpha_of(i) / m);
        se[i] = std::sqrt(1.0 / double(config.arm_sizes[i]) + 1.0 / double(config.control_size));
    }

    PlatformResult result;
    result.outcomes.resize(k);
    result.pivots.resize(k);
    std::vector<std::vector<bool>> statement_reject(k, std::vector<bool>(m, false));

    for (std::uint32_t s = 0; s < m; ++s) {
        if (config.one_factor_rho) {
            const double rho = *config.one_factor_rho;
            const double w = rng();
            if (s == 0) result.control_mean = -w / std::sqrt(double(config.control_size));
            for (std::size_t i = 0; i < k; ++i) {
                const double t = std::sqrt(rho) * w + std::sqrt(1.0 - rho) * rng() + config.effect_sizes[i] / se[i];
                if (s == 0) result.pivots[i] = t;
                statement_reject[i][s] = t > threshold[i];
            }
        } else {
            const double control = rng() / std::sqrt(double(config.control_size));
            if (s == 0) result.control_mean = control;
            for (std::size_t i = 0; i < k; ++i) {
                const double arm = config.effect_sizes[i] + rng() / std::sqrt(double(config.arm_sizes[i]));
                const double t = (arm - control) / se[i];
                if (s == 0) result.pivots[i] = t;
                statement_reject[i][s] = t > threshold[i];
            }
        }
    }

    for (std::size_t i = 0; i < k; ++i) {
        auto& o = result.outcomes[i];
        o.study_id = "S" + std::to_string(i + 1);
        o.platform_id = platform_id;
        o.null_is_true = config.true_null_flags[i];
        o.alpha_level = config.alpha_of(i);
        o.rejected = std::find(statement_reject[i].begin(), statement_reject[i].end(), true) !=
                     statement_reject[i].end();
        if (m > 1) {
            o.statements.resize(m);
            for (std::uint32_t s = 0; s < m; ++s) {
                o.statements[s].statement_id = o.study_id + ".E" + std::to_string(s + 1);
                o.statements[s].erroneous = o.null_is_true && statement_reject[i][s];
            }
        }
    }
    return result;
}

struct ControlDiagnostics {
    /// Standardized deviation of the control mean estimate from its truth (0).
    double control_z = 0.0;
    /// Model-implied mean pairwise pivot correlation; 0 when k < 2.
    double avg_pairwise_corr = 0.0;
};

inline ControlDiagnostics control_performance_diagnostics(const PlatformConfig& config, double control_mean) {
    config.validate();
    ControlDiagnostics d;
    d.control_z = control_mean * std::sqrt(double(config.control_size));
    if (config.k() >= 2) {
        d.avg_pairwise_corr = config.one_factor_rho
                                  ? *config.one_factor_rho
                                  : CorrelationModel::from_arms(config.arm_sizes, config.control_size)
                                        .average_pairwise(config.k());
    }
    return d;
}

struct SequenceConfig {
    std::uint64_t num_platforms = 1;
    PlatformConfig platform;
    std::uint64_t seed = 0;
    /// Platforms between checkpoints; 0 means every 10% of num_platforms.
    std::uint64_t checkpoint_every = 0;
    /// Largest lag for the indicator autocorrelation report; 0 means 2k.
    std::size_t max_lag = 0;
    unsigned threads = 1;
};

struct LLNCheckpoint {
    /// True-null studies observed so far.
    std::uint64_t n = 0;
    double running_far = 0.0;
    double running_mean_alpha = 0.0;
    double deviation = 0.0;
};

struct LLNReport {
    std::vector<LLNCheckpoint> checkpoints;
    /// Sample autocorrelation of the true-null error indicators at lags 1..max_lag.
    std::vector<double> lag_correlation;
};

struct SequenceResult {
    LLNReport report;
    FamilyTally tally;
};

/// Sample autocorrelation of a 0/1 sequence at lags 1..max_lag.
inline std::vector<double> lag_correlations(std::span<const std::uint8_t> x, std::size_t max_lag) {
    std::vector<double> out(max_lag, 0.0);
    const std::size_t n = x.size();
    if (n < 2) return out;
    double mean = 0.0;
    for (auto v : x) mean += v;
    mean /= double(n);
    double denom = 0.0;
    for (auto v : x) denom += (v - mean) * (v - mean);
    if (denom == 0.0) return out;
    for (std::size_t lag = 1; lag <= max_lag && lag < n; ++lag) {
        double num = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) num += (x[i] - mean) * (x[i + lag] - mean);
        out[lag - 1] = num / denom;
    }
    return out;
}

/// Runs independent platforms in sequence and tracks the running false
/// approval rate against the running mean of the per-study error rates.
inline SequenceResult simulate_sequence(const SequenceConfig& config) {
    if (config.num_platforms == 0) throw std::invalid_argument("sequence: num_platforms must be >= 1");
    const PlatformConfig& pc = config.platform;
    pc.validate();
    if (std::find(pc.true_null_flags.begin(), pc.true_null_flags.end(), true) == pc.true_null_flags.end()) {
        throw std::invalid_argument("sequence: platform has no true nulls; false approval rate undefined");
    }

    struct PerPlatform {
        FamilyTally tally;
        std::vector<std::uint8_t> indicators;
        double alpha_sum = 0.0;
    };
    std::vector<PerPlatform> per(config.num_platforms);
    parallel_for(per.size(), config.threads, [&](std::size_t p) {
        NormalStream rng(config.seed, p);
        const auto result = simulate_platform(pc, rng, "P" + std::to_string(p + 1));
        auto& out = per[p];
        out.tally = tally_family(result.outcomes);
        for (const auto& o : result.outcomes) {
            if (!o.null_is_true) continue;
            out.indicators.push_back(o.rejected ? 1 : 0);
            out.alpha_sum += o.alpha_level;
        }
    });

    const std::uint64_t every =
        config.checkpoint_every != 0 ? config.checkpoint_every : std::max<std::uint64_t>(1, config.num_platforms / 10);

    SequenceResult out;
    std::vector<std::uint8_t> all_indicators;
    std::uint64_t n = 0;
    std::uint64_t v = 0;
    double alpha_sum = 0.0;
    for (std::uint64_t p = 0; p < per.size(); ++p) {
        out.tally += per[p].tally;
        for (auto x : per[p].indicators) {
            ++n;
            v += x;
            all_indicators.push_back(x);
        }
        alpha_sum += per[p].alpha_sum;
        if ((p + 1) % every == 0 || p + 1 == per.size()) {
            LLNCheckpoint c;
            c.n = n;
            c.running_far = double(v) / double(n);
            c.running_mean_alpha = alpha_sum / double(n);
            c.deviation = c.running_far - c.running_mean_alpha;
            out.report.checkpoints.push_back(c);
        }
    }
    const std::size_t lags = config.max_lag != 0 ? config.max_lag : 2 * pc.k();
    out.report.lag_correlation = lag_correlations(all_indicators, lags);
    return out;
}

/// CSV with header n,running_far,target,deviation.
inline void write_lln_csv(std::ostream& os, const LLNReport& report) {
    os << "n,running_far,target,deviation\n";
    const auto flags = os.flags();
    os << std::fixed << std::setprecision(4);
    for (const auto& c : report.checkpoints) {
        os << c.n << ',' << c.running_far << ',' << c.running_mean_alpha << ',' << c.deviation << '\n';
    }
    os.flags(flags);
}

namespace detail {

// Replicates are processed in fixed-size blocks so reductions happen in the
// same order whatever the thread count.
inline constexpr std::uint64_t kReplicateBlock = 1u << 14;

template <class Acc, class PerBlock>
std::vector<Acc> run_blocks(std::uint64_t reps, unsigned threads, PerBlock&& per_block) {
    const std::uint64_t blocks = (reps + kReplicateBlock - 1) / kReplicateBlock;
    std::vector<Acc> acc(blocks);
    parallel_for(blocks, threads, [&](std::size_t b) {
        const std::uint64_t begin = b * kReplicateBlock;
        const std::uint64_t end = std::min(reps, begin + kReplicateBlock);
        acc[b] = per_block(begin, end);
    });
    return acc;
}

}  // namespace detail

struct FdrScenarioResult {
    double empirical_fdr = 0.0;
    double empirical_far = 0.0;
};

/// The two-study platform: one compound so efficacious its null is rejected
/// with certainty, one inefficacious compound tested at alpha_true_null.
inline PlatformConfig fdr_scenario_platform(double alpha_true_null) {
    PlatformConfig c;
    c.true_null_flags = {false, true};
    c.effect_sizes = {10.0, 0.0};
    c.arm_sizes = {100, 100};
    c.control_size = 100;
    c.alpha = 0.05;
    c.study_alpha = {0.05, alpha_true_null};
    return c;
}

inline FdrScenarioResult fdr_scenario(double alpha_true_null, std::uint64_t reps, std::uint64_t seed,
                                      unsigned threads = 1) {
    if (reps == 0) throw std::invalid_argument("fdr_scenario: reps must be >= 1");
    if (!(alpha_true_null >= 0.0 && alpha_true_null < 1.0)) {
        throw std::invalid_argument("fdr_scenario: alpha must lie in [0,1)");
    }
    const PlatformConfig config = fdr_scenario_platform(alpha_true_null);
    config.validate();

    struct Acc {
        double fdr_sum = 0.0;
        std::uint64_t v = 0;
        std::uint64_t n_true = 0;
    };
    const auto blocks = detail::run_blocks<Acc>(reps, threads, [&](std::uint64_t begin, std::uint64_t end) {
        Acc a;
        for (std::uint64_t r = begin; r < end; ++r) {
            NormalStream rng(seed, r);
            const auto result = simulate_platform(config, rng);
            a.fdr_sum += fdr_empirical(result.outcomes);
            for (const auto& o : result.outcomes) {
                if (!o.null_is_true) continue;
                ++a.n_true;
                if (o.rejected) ++a.v;
            }
        }
        return a;
    });
    Acc total;
    for (const auto& b : blocks) {
        total.fdr_sum += b.fdr_sum;
        total.v += b.v;
        total.n_true += b.n_true;
    }
    return {total.fdr_sum / double(reps), double(total.v) / double(total.n_true)};
}

/// Draws n standard normals with common pairwise correlation rho.
///
/// rho >= 0 uses the one-factor form sqrt(rho) W + sqrt(1-rho) e_i. Negative
/// rho (admissible down to -1/(n-1)) centers the idiosyncratic terms:
/// sqrt(1-rho)(e_i - mean(e)) + sqrt(rho + (1-rho)/n) sqrt(n) mean(e).
class EquicorrelatedSampler {
public:
    EquicorrelatedSampler(std::size_t n, double rho) : n_(n), rho_(rho) {
        if (n == 0) throw std::invalid_argument("equicorrelated: n must be >= 1");
        if (!(rho <= 1.0)) throw std::invalid_argument("equicorrelated: rho must be <= 1");
        if (n > 1 && rho < -1.0 / double(n - 1)) {
            throw std::invalid_argument("equicorrelated: rho below -1/(n-1) is not a valid correlation");
        }
        if (n == 1 && rho < -1.0) throw std::invalid_argument("equicorrelated: rho must be >= -1");
    }

    void draw(NormalStream& rng, std::span<double> out) const {
        if (rho_ >= 0.0) {
            const double w = rng();
            const double a = std::sqrt(rho_);
            const double b = std::sqrt(1.0 - rho_);
            for (std::size_t i = 0; i < n_; ++i) out[i] = a * w + b * rng();
            return;
        }
        double mean = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            out[i] = rng();
            mean += out[i];
        }
        mean /= double(n_);
        const double a = std::sqrt(1.0 - rho_);
        const double b = std::sqrt(std::max(0.0, rho_ + (1.0 - rho_) / double(n_))) * std::sqrt(double(n_));
        for (std::size_t i = 0; i < n_; ++i) out[i] = a * (out[i] - mean) + b * mean;
    }

    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    double rho_;
};

/// Empirical distribution of V when study i is tested at alphas[i] and the
/// pivots are equicorrelated with correlation rho.
inline CountDistribution simulate_V_distribution(std::span<const double> alphas, double rho, std::uint64_t reps,
                                                 std::uint64_t seed, unsigned threads = 1) {
    if (reps == 0) throw std::invalid_argument("simulate_V_distribution: reps must be >= 1");
    const std::size_t n = alphas.size();
    if (n == 0) throw std::invalid_argument("simulate_V_distribution: need at least one study");
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("simulate_V_distribution: alpha must lie in (0,1)");
    }
    std::vector<double> threshold(n);
    for (std::size_t i = 0; i < n; ++i) threshold[i] = upper_critical_value(alphas[i]);
    const EquicorrelatedSampler sampler(n, rho);

    const auto blocks = detail::run_blocks<std::vector<std::uint64_t>>(
        reps, threads, [&](std::uint64_t begin, std::uint64_t end) {
            std::vector<std::uint64_t> counts(n + 1, 0);
            std::vector<double> t(n);
            for (std::uint64_t r = begin; r < end; ++r) {
                NormalStream rng(seed, r);
                sampler.draw(rng, t);
                std::size_t v = 0;
                for (std::size_t i = 0; i < n; ++i) v += t[i] > threshold[i];
                ++counts[v];
            }
            return counts;
        });
    std::vector<std::uint64_t> counts(n + 1, 0);
    for (const auto& b : blocks) {
        for (std::size_t v = 0; v <= n; ++v) counts[v] += b[v];
    }
    return CountDistribution::from_counts(counts);
}

/// Common-alpha form. rho = 1 returns the all-or-nothing closed form.
inline CountDistribution simulate_V_distribution(std::uint64_t n_true, double rho, double alpha, std::uint64_t reps,
                                                 std::uint64_t seed, unsigned threads = 1) {
    if (n_true == 0) throw std::invalid_argument("simulate_V_distribution: n_true must be >= 1");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("simulate_V_distribution: rho must lie in [0,1]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("simulate_V_distribution: alpha must lie in (0,1)");
    if (rho == 1.0) {
        return CountDistribution({{0, 1.0 - alpha}, {n_true, alpha}});
    }
    const std::vector<double> alphas(n_true, alpha);
    return simulate_V_distribution(std::span<const double>(alphas), rho, reps, seed, threads);
}

}  // namespace ptrials
