#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ptrials/sim.hpp"

namespace ptrials {

/// Family Concurrency Matrix: diagonal marks which studies reject, (i,j)
/// marks that studies i and j both reject.
class FamilyConcurrencyMatrix {
public:
    FamilyConcurrencyMatrix() = default;

    FamilyConcurrencyMatrix(std::vector<std::string> labels, std::vector<std::uint8_t> cells)
        : labels_(std::move(labels)), cells_(std::move(cells)) {
        const std::size_t k = labels_.size();
        if (cells_.size() != k * k) throw std::invalid_argument("fcm: cell count does not match labels");
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (at(i, j) > 1) throw std::invalid_argument("fcm: entries must be 0 or 1");
                if (at(i, j) != (at(i, i) & at(j, j))) {
                    throw std::invalid_argument("fcm: entry (i,j) must equal m(i,i) AND m(j,j)");
                }
            }
        }
    }

    std::size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }
    std::uint8_t at(std::size_t i, std::size_t j) const { return cells_[i * labels_.size() + j]; }

    std::vector<bool> diagonal() const {
        std::vector<bool> d(size());
        for (std::size_t i = 0; i < size(); ++i) d[i] = at(i, i) != 0;
        return d;
    }

    friend bool operator==(const FamilyConcurrencyMatrix&, const FamilyConcurrencyMatrix&) = default;

private:
    std::vector<std::string> labels_;
    std::vector<std::uint8_t> cells_;
};

/// Labels default to "1".."k".
inline FamilyConcurrencyMatrix build_fcm(const std::vector<bool>& rejections, std::vector<std::string> labels = {}) {
    const std::size_t k = rejections.size();
    if (k == 0) throw std::invalid_argument("build_fcm: empty rejection vector");
    if (labels.empty()) {
        for (std::size_t i = 0; i < k; ++i) labels.push_back(std::to_string(i + 1));
    }
    if (labels.size() != k) throw std::invalid_argument("build_fcm: one label per study required");
    std::vector<std::uint8_t> cells(k * k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) cells[i * k + j] = (rejections[i] && rejections[j]) ? 1 : 0;
    }
    return FamilyConcurrencyMatrix(std::move(labels), std::move(cells));
}

/// One row of 0/1 per study, no header.
inline void write_fcm_csv(std::ostream& os, const FamilyConcurrencyMatrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            if (j > 0) os << ',';
            os << int(m.at(i, j));
        }
        os << '\n';
    }
}

/// The per-platform "cookie" kept across platform trials.
struct TrialRecord {
    std::string platform_id;
    std::string timestamp;
    std::vector<std::pair<std::string, bool>> rejections;
    std::optional<ControlDiagnostics> control_diag;

    void validate() const {
        if (platform_id.empty()) throw std::invalid_argument("trial record: empty platform_id");
        static const std::regex iso8601(
            R"(^\d{4}-\d{2}-\d{2}(T\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$)");
        if (!std::regex_match(timestamp, iso8601)) {
            throw std::invalid_argument("trial record: timestamp is not ISO-8601: '" + timestamp + "'");
        }
        if (rejections.empty()) throw std::invalid_argument("trial record: no studies");
        std::set<std::string> seen;
        for (const auto& [id, _] : rejections) {
            if (!seen.insert(id).second) throw std::invalid_argument("trial record: duplicate study_id " + id);
        }
    }

    std::vector<bool> rejection_vector() const {
        std::vector<bool> r;
        for (const auto& [_, rej] : rejections) r.push_back(rej);
        return r;
    }

    friend bool operator==(const TrialRecord& a, const TrialRecord& b) {
        const auto diag_eq = [](const std::optional<ControlDiagnostics>& x,
                                const std::optional<ControlDiagnostics>& y) {
            if (x.has_value() != y.has_value()) return false;
            return !x || (x->control_z == y->control_z && x->avg_pairwise_corr == y->avg_pairwise_corr);
        };
        return a.platform_id == b.platform_id && a.timestamp == b.timestamp && a.rejections == b.rejections &&
               diag_eq(a.control_diag, b.control_diag);
    }
};

inline void to_json(nlohmann::json& j, const TrialRecord& r) {
    j = nlohmann::json::object();
    j["platform_id"] = r.platform_id;
    j["timestamp"] = r.timestamp;
    auto rej = nlohmann::json::array();
    for (const auto& [id, value] : r.rejections) rej.push_back({{"study_id", id}, {"rejected", value}});
    j["rejections"] = std::move(rej);
    if (r.control_diag) {
        j["control_diag"] = {{"control_z", r.control_diag->control_z},
                             {"avg_pairwise_corr", r.control_diag->avg_pairwise_corr}};
    } else {
        j["control_diag"] = nullptr;
    }
}

inline void from_json(const nlohmann::json& j, TrialRecord& r) {
    j.at("platform_id").get_to(r.platform_id);
    j.at("timestamp").get_to(r.timestamp);
    r.rejections.clear();
    for (const auto& e : j.at("rejections")) {
        r.rejections.emplace_back(e.at("study_id").get<std::string>(), e.at("rejected").get<bool>());
    }
    r.control_diag.reset();
    if (j.contains("control_diag") && !j.at("control_diag").is_null()) {
        const auto& d = j.at("control_diag");
        r.control_diag = ControlDiagnostics{d.at("control_z").get<double>(), d.at("avg_pairwise_corr").get<double>()};
    }
    r.validate();
}

/// Concatenates the trials' studies, ignoring platform boundaries.
/// Labels are "platform_id/study_id".
inline FamilyConcurrencyMatrix combine_fcm(std::span<const TrialRecord> records) {
    if (records.size() < 2) throw std::invalid_argument("combine_fcm: need at least two trial records");
    std::vector<bool> rejections;
    std::vector<std::string> labels;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& rec : records) {
        rec.validate();
        for (const auto& [study, rejected] : rec.rejections) {
            if (!seen.emplace(rec.platform_id, study).second) {
                throw std::invalid_argument("combine_fcm: duplicate study " + rec.platform_id + "/" + study);
            }
            labels.push_back(rec.platform_id + "/" + study);
            rejections.push_back(rejected);
        }
    }
    return build_fcm(rejections, std::move(labels));
}

/// Block sizes matching combine_fcm's concatenation order.
inline std::vector<std::size_t> platform_partition(std::span<const TrialRecord> records) {
    std::vector<std::size_t> sizes;
    for (const auto& r : records) sizes.push_back(r.rejections.size());
    return sizes;
}

struct BlockDensity {
    std::size_t row_platform = 0;
    std::size_t col_platform = 0;
    /// Mean of the block's cells; diagonal blocks exclude self-pairs.
    double density = 0.0;
    /// Number of pairs entering the density.
    std::uint64_t pairs = 0;
    /// Product of the two platforms' marginal rejection rates.
    double independence_expectation = 0.0;
};

struct BlockReport {
    std::vector<BlockDensity> blocks;
    /// Pooled pairwise density over all diagonal blocks.
    double diag_density = 0.0;
    /// Pooled density over all off-diagonal blocks.
    double offdiag_density = 0.0;
    /// Pair-weighted mean over off-diagonal blocks of p_row * p_col.
    double independence_expectation = 0.0;
    /// alpha^2, concurrency rate of two independent true nulls.
    double null_reference = 0.0;
    std::vector<double> marginal_rates;
};

/// `partition` lists block sizes in matrix order and must sum to m.size().
inline BlockReport block_report(const FamilyConcurrencyMatrix& m, const std::vector<std::size_t>& partition,
                                double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("block_report: alpha must lie in (0,1)");
    std::size_t total = 0;
    for (auto s : partition) {
        if (s == 0) throw std::invalid_argument("block_report: empty block in partition");
        total += s;
    }
    if (partition.empty() || total != m.size()) {
        throw std::invalid_argument("block_report: partition does not cover the matrix");
    }

    std::vector<std::size_t> start(partition.size());
    for (std::size_t b = 1; b < partition.size(); ++b) start[b] = start[b - 1] + partition[b - 1];

    BlockReport rep;
    rep.null_reference = alpha * alpha;
    for (std::size_t b = 0; b < partition.size(); ++b) {
        std::uint64_t ones = 0;
        for (std::size_t i = 0; i < partition[b]; ++i) ones += m.at(start[b] + i, start[b] + i);
        rep.marginal_rates.push_back(double(ones) / double(partition[b]));
    }

    std::uint64_t diag_ones = 0, diag_pairs = 0, off_ones = 0, off_pairs = 0;
    double indep_weighted = 0.0;
    for (std::size_t a = 0; a < partition.size(); ++a) {
        for (std::size_t b = 0; b < partition.size(); ++b) {
            std::uint64_t ones = 0, pairs = 0;
            for (std::size_t i = 0; i < partition[a]; ++i) {
                for (std::size_t j = 0; j < partition[b]; ++j) {
                    if (a == b && i == j) continue;
                    ones += m.at(start[a] + i, start[b] + j);
                    ++pairs;
                }
            }
            BlockDensity d;
            d.row_platform = a;
            d.col_platform = b;
            d.pairs = pairs;
            d.density = pairs == 0 ? 0.0 : double(ones) / double(pairs);
            d.independence_expectation = rep.marginal_rates[a] * rep.marginal_rates[b];
            rep.blocks.push_back(d);
            if (a == b) {
                diag_ones += ones;
                diag_pairs += pairs;
            } else {
                off_ones += ones;
                off_pairs += pairs;
                indep_weighted += d.independence_expectation * double(pairs);
            }
        }
    }
    rep.diag_density = diag_pairs == 0 ? 0.0 : double(diag_ones) / double(diag_pairs);
    rep.offdiag_density = off_pairs == 0 ? 0.0 : double(off_ones) / double(off_pairs);
    rep.independence_expectation = off_pairs == 0 ? 0.0 : indep_weighted / double(off_pairs);
    return rep;
}

inline void to_json(nlohmann::json& j, const BlockReport& r) {
    auto blocks = nlohmann::json::array();
    for (const auto& b : r.blocks) {
        blocks.push_back({{"row_platform", b.row_platform},
                          {"col_platform", b.col_platform},
                          {"density", b.density},
                          {"pairs", b.pairs},
                          {"independence_expectation", b.independence_expectation}});
    }
    j = nlohmann::json{{"blocks", std::move(blocks)},
                       {"diag_density", r.diag_density},
                       {"offdiag_density", r.offdiag_density},
                       {"independence_expectation", r.independence_expectation},
                       {"null_reference", r.null_reference},
                       {"marginal_rates", r.marginal_rates}};
}

/// Append-only JSON-lines store of trial records.
class RecordStore {
public:
    struct Diagnostic {
        std::size_t line = 0;
        std::string message;
    };

    struct LoadResult {
        std::vector<TrialRecord> records;
        std::vector<Diagnostic> diagnostics;
    };

    explicit RecordStore(std::string path) : path_(std::move(path)) {}

    const std::string& path() const { return path_; }

    void append(const TrialRecord& record) const {
        record.validate();
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        if (!out) throw std::runtime_error("record store: cannot open " + path_ + " for append");
        out << nlohmann::json(record).dump() << '\n';
        out.flush();
        if (!out) throw std::runtime_error("record store: write to " + path_ + " failed");
    }

    /// Loads every parseable record; corrupt lines are reported and skipped.
    /// A missing file is an empty store.
    LoadResult load() const {
        LoadResult result;
        std::ifstream in(path_, std::ios::binary);
        if (!in) return result;
        std::string line;
        std::size_t number = 0;
        while (std::getline(in, line)) {
            ++number;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                result.records.push_back(nlohmann::json::parse(line).get<TrialRecord>());
            } catch (const std::exception& e) {
                result.diagnostics.push_back({number, e.what()});
            }
        }
        return result;
    }

private:
    std::string path_;
};

inline void append_record(const RecordStore& store, const TrialRecord& record) { store.append(record); }
inline RecordStore::LoadResult load_records(const RecordStore& store) { return store.load(); }

}  // namespace ptrials
