#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ptrials/numerics.hpp"

namespace ptrials {

struct StatementOutcome {
    std::string statement_id;
    bool erroneous = false;
};

/// One study (one compound vs. control) inside a platform.
///
/// When `statements` is nonempty the study is a family of statements: it
/// rejects iff any statement rejects, each statement tested at alpha/m.
struct StudyOutcome {
    std::string study_id;
    std::string platform_id;
    bool null_is_true = true;
    bool rejected = false;
    double alpha_level = 0.05;
    std::vector<StatementOutcome> statements;

    /// Type I error indicator at the study level.
    bool incorrect_rejection() const { return null_is_true && rejected; }

    void validate() const {
        // alpha = 0 is admitted for the degenerate "never reject" configuration.
        if (!(alpha_level >= 0.0 && alpha_level < 1.0)) {
            throw std::invalid_argument("study " + study_id + ": alpha_level must lie in [0,1)");
        }
        if (null_is_true && !statements.empty()) {
            const bool any = std::any_of(statements.begin(), statements.end(),
                                         [](const StatementOutcome& s) { return s.erroneous; });
            if (any != rejected) {
                throw std::invalid_argument("study " + study_id +
                                            ": true-null study must reject iff some statement is erroneous");
            }
        }
    }
};

/// Counts over one or more families of studies. Tallies add.
struct FamilyTally {
    std::uint64_t n_true = 0;
    std::uint64_t n_false = 0;
    std::uint64_t V = 0;
    std::uint64_t R = 0;
    std::uint64_t n_statements = 0;
    std::uint64_t n_erroneous_statements = 0;
    std::uint64_t n_families = 0;
    std::uint64_t n_erroneous_families = 0;

    void validate() const {
        if (V > n_true) throw std::invalid_argument("tally: V exceeds n_true");
        if (R > n_true + n_false) throw std::invalid_argument("tally: R exceeds number of studies");
        if (V > R) throw std::invalid_argument("tally: V exceeds R");
        if (n_erroneous_statements > n_statements) {
            throw std::invalid_argument("tally: erroneous statements exceed statements");
        }
        if (n_erroneous_families > n_families) {
            throw std::invalid_argument("tally: erroneous families exceed families");
        }
    }

    FamilyTally& operator+=(const FamilyTally& o) {
        n_true += o.n_true;
        n_false += o.n_false;
        V += o.V;
        R += o.R;
        n_statements += o.n_statements;
        n_erroneous_statements += o.n_erroneous_statements;
        n_families += o.n_families;
        n_erroneous_families += o.n_erroneous_families;
        return *this;
    }

    friend FamilyTally operator+(FamilyTally a, const FamilyTally& b) { return a += b; }
    friend bool operator==(const FamilyTally&, const FamilyTally&) = default;
};

inline void to_json(nlohmann::json& j, const FamilyTally& t) {
    j = nlohmann::json{{"n_true", t.n_true},
                       {"n_false", t.n_false},
                       {"V", t.V},
                       {"R", t.R},
                       {"n_statements", t.n_statements},
                       {"n_erroneous_statements", t.n_erroneous_statements},
                       {"n_families", t.n_families},
                       {"n_erroneous_families", t.n_erroneous_families}};
}

inline void from_json(const nlohmann::json& j, FamilyTally& t) {
    j.at("n_true").get_to(t.n_true);
    j.at("n_false").get_to(t.n_false);
    j.at("V").get_to(t.V);
    j.at("R").get_to(t.R);
    j.at("n_statements").get_to(t.n_statements);
    j.at("n_erroneous_statements").get_to(t.n_erroneous_statements);
    j.at("n_families").get_to(t.n_families);
    j.at("n_erroneous_families").get_to(t.n_erroneous_families);
    t.validate();
}

/// Tally treating `outcomes` as a single family. A study without explicit
/// statements contributes one statement, erroneous iff it is a false positive.
inline FamilyTally tally_family(std::span<const StudyOutcome> outcomes) {
    FamilyTally t;
    t.n_families = 1;
    for (const auto& s : outcomes) {
        s.validate();
        (s.null_is_true ? t.n_true : t.n_false) += 1;
        if (s.rejected) ++t.R;
        if (s.incorrect_rejection()) ++t.V;
        if (s.statements.empty()) {
            ++t.n_statements;
            if (s.incorrect_rejection()) ++t.n_erroneous_statements;
        } else {
            t.n_statements += s.statements.size();
            for (const auto& st : s.statements) {
                if (st.erroneous) ++t.n_erroneous_statements;
            }
        }
    }
    if (t.n_erroneous_statements > 0) t.n_erroneous_families = 1;
    return t;
}

/// Tally where each study is its own family (the within-study layer).
inline FamilyTally tally_per_study(std::span<const StudyOutcome> outcomes) {
    FamilyTally t;
    for (const auto& s : outcomes) t += tally_family(std::span(&s, 1));
    return t;
}

inline double error_rate_per_comparison(const FamilyTally& t) {
    if (t.n_statements == 0) throw std::invalid_argument("error rate per comparison: no comparisons");
    return static_cast<double>(t.n_erroneous_statements) / static_cast<double>(t.n_statements);
}

/// Erroneous statements per family; not a probability, may exceed 1.
inline double error_rate_per_family(const FamilyTally& t) {
    if (t.n_families == 0) throw std::invalid_argument("error rate per family: no families");
    return static_cast<double>(t.n_erroneous_statements) / static_cast<double>(t.n_families);
}

inline double error_rate_familywise(const FamilyTally& t) {
    if (t.n_families == 0) throw std::invalid_argument("error rate familywise: no families");
    return static_cast<double>(t.n_erroneous_families) / static_cast<double>(t.n_families);
}

/// Incorrect approvals over compounds lacking efficacy. Efficacious compounds
/// are excluded from both numerator and denominator.
inline double false_approval_rate(std::span<const StudyOutcome> outcomes) {
    std::uint64_t n_true = 0;
    std::uint64_t v = 0;
    for (const auto& s : outcomes) {
        if (!s.null_is_true) continue;
        ++n_true;
        if (s.rejected) ++v;
    }
    if (n_true == 0) throw std::invalid_argument("false approval rate undefined: no true nulls");
    return static_cast<double>(v) / static_cast<double>(n_true);
}

/// V / R for a single realized family, with 0/0 := 0.
inline double fdr_empirical(std::span<const StudyOutcome> outcomes) {
    std::uint64_t v = 0;
    std::uint64_t r = 0;
    for (const auto& s : outcomes) {
        if (!s.rejected) continue;
        ++r;
        if (s.null_is_true) ++v;
    }
    return r == 0 ? 0.0 : static_cast<double>(v) / static_cast<double>(r);
}

/// E[V] = sum of per-study Type I error rates. Holds exactly under any dependence.
inline double expected_incorrect_approvals(std::span<const double> alphas) {
    double sum = 0.0;
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0)) {
            throw std::invalid_argument("expected_incorrect_approvals: each alpha must lie in (0,1)");
        }
        sum += a;
    }
    return sum;
}

/// Distribution of a nonnegative count V.
class CountDistribution {
public:
    struct Mass {
        std::uint64_t v;
        double prob;
    };

    CountDistribution() = default;
    explicit CountDistribution(std::vector<Mass> support) : support_(std::move(support)) {
        std::sort(support_.begin(), support_.end(), [](const Mass& a, const Mass& b) { return a.v < b.v; });
        double total = 0.0;
        for (std::size_t i = 0; i < support_.size(); ++i) {
            if (!(support_[i].prob >= 0.0 && support_[i].prob <= 1.0)) {
                throw std::invalid_argument("count distribution: probability out of [0,1]");
            }
            if (i > 0 && support_[i].v == support_[i - 1].v) {
                throw std::invalid_argument("count distribution: duplicate support value");
            }
            total += support_[i].prob;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw std::invalid_argument("count distribution: probabilities sum to " + std::to_string(total));
        }
    }

    static CountDistribution point_mass(std::uint64_t v) { return CountDistribution({{v, 1.0}}); }

    static CountDistribution binomial(std::uint64_t n, double p) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial: p out of [0,1]");
        std::vector<Mass> support;
        support.reserve(n + 1);
        for (std::uint64_t v = 0; v <= n; ++v) {
            const double log_choose =
                std::lgamma(double(n) + 1.0) - std::lgamma(double(v) + 1.0) - std::lgamma(double(n - v) + 1.0);
            double prob;
            if (p == 0.0) {
                prob = v == 0 ? 1.0 : 0.0;
            } else if (p == 1.0) {
                prob = v == n ? 1.0 : 0.0;
            } else {
                prob = std::exp(log_choose + double(v) * std::log(p) + double(n - v) * std::log1p(-p));
            }
            support.push_back({v, prob});
        }
        return CountDistribution(std::move(support));
    }

    /// Empirical distribution from raw counts.
    static CountDistribution from_counts(std::span<const std::uint64_t> counts_by_value) {
        std::uint64_t total = 0;
        for (auto c : counts_by_value) total += c;
        if (total == 0) throw std::invalid_argument("count distribution: no observations");
        std::vector<Mass> support;
        for (std::uint64_t v = 0; v < counts_by_value.size(); ++v) {
            if (counts_by_value[v] > 0) {
                support.push_back({v, static_cast<double>(counts_by_value[v]) / static_cast<double>(total)});
            }
        }
        return CountDistribution(std::move(support));
    }

    const std::vector<Mass>& support() const { return support_; }

    double probability(std::uint64_t v) const {
        for (const auto& m : support_) {
            if (m.v == v) return m.prob;
        }
        return 0.0;
    }

    double mean() const {
        double m = 0.0;
        for (const auto& s : support_) m += double(s.v) * s.prob;
        return m;
    }

    double variance() const {
        const double mu = mean();
        double var = 0.0;
        for (const auto& s : support_) var += (double(s.v) - mu) * (double(s.v) - mu) * s.prob;
        return var;
    }

    double stddev() const { return std::sqrt(variance()); }

private:
    std::vector<Mass> support_;
};

/// E[V / n_true]: the expected fraction of true nulls incorrectly rejected.
inline double erpf_fraction(const CountDistribution& dist, std::uint64_t n_true) {
    if (n_true == 0) throw std::invalid_argument("erpf_fraction: n_true must be positive");
    double sum = 0.0;
    for (const auto& m : dist.support()) {
        sum += (double(m.v) / double(n_true)) * m.prob;
    }
    return sum;
}

struct FdrFromDistribution {
    double fdr = 0.0;
    /// sum_v v/n_false * P{V=v}; empty when n_false = 0 and P{V>0} > 0.
    std::optional<double> upper_bound;
};

/// FDR when n_false_rejected false nulls are rejected with certainty:
/// sum_v v/(v + n_false) * P{V=v}, v = 0 contributing nothing.
inline FdrFromDistribution fdr_from_distribution(const CountDistribution& dist, std::uint64_t n_false_rejected) {
    FdrFromDistribution out;
    double positive_mass = 0.0;
    double bound = 0.0;
    for (const auto& m : dist.support()) {
        if (m.v == 0) continue;
        const double v = double(m.v);
        out.fdr += v / (v + double(n_false_rejected)) * m.prob;
        positive_mass += m.prob;
        if (n_false_rejected > 0) bound += v / double(n_false_rejected) * m.prob;
    }
    if (n_false_rejected > 0) {
        out.upper_bound = bound;
    } else if (positive_mass == 0.0) {
        out.upper_bound = 0.0;
    }
    out.fdr = detail::clamp_unit(out.fdr);
    return out;
}

}  // namespace ptrials
