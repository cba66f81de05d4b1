#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ptrials/fcm.hpp"

using namespace ptrials;

namespace {

// Two-platform example: platform 1 rejects all three, platform 2 only its second study.
TrialRecord platform1() {
    return {"Platform1", "2021-03-01T00:00:00Z", {{"A", true}, {"B", true}, {"C", true}}, std::nullopt};
}
TrialRecord platform2() {
    return {"Platform2", "2022-07-15", {{"D", false}, {"E", true}, {"F", false}}, ControlDiagnostics{-1.25, 0.5}};
}

const std::uint8_t kCombinedExample[6][6] = {
    {1, 1, 1, 0, 1, 0}, {1, 1, 1, 0, 1, 0}, {1, 1, 1, 0, 1, 0},
    {0, 0, 0, 0, 0, 0}, {1, 1, 1, 0, 1, 0}, {0, 0, 0, 0, 0, 0},
};

class TempStore : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = std::filesystem::temp_directory_path() /
                (std::string("ptrials_") + info->test_suite_name() + "_" + info->name() + ".jsonl");
        std::filesystem::remove(path_);
    }
    void TearDown() override { std::filesystem::remove(path_); }
    std::string path() const { return path_.string(); }

    std::filesystem::path path_;
};

void expect_structural_identity(const FamilyConcurrencyMatrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            ASSERT_EQ(m.at(i, j), m.at(i, i) * m.at(j, j));
            ASSERT_EQ(m.at(i, j), m.at(j, i));
        }
    }
}

}  // namespace

TEST(BuildFcm, SinglePlatformExamples) {
    const auto all = build_fcm({true, true, true});
    ASSERT_EQ(all.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(all.at(i, j), 1);
    }
    EXPECT_EQ(all.labels(), (std::vector<std::string>{"1", "2", "3"}));

    const auto single = build_fcm({false, true, false});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(single.at(i, j), (i == 1 && j == 1) ? 1 : 0);
    }
}

TEST(BuildFcm, ZeroAndErrors) {
    const auto z = build_fcm(std::vector<bool>(5, false));
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(z.at(i, j), 0);
    }
    EXPECT_THROW(build_fcm({}), std::invalid_argument);
    EXPECT_THROW(build_fcm({true, false}, {"only-one"}), std::invalid_argument);
    EXPECT_THROW(FamilyConcurrencyMatrix({"a", "b"}, {1, 1, 0, 0}), std::invalid_argument);
    EXPECT_THROW(FamilyConcurrencyMatrix({"a"}, {2}), std::invalid_argument);
}

TEST(BuildFcm, CsvFormat) {
    std::ostringstream os;
    write_fcm_csv(os, build_fcm({true, false, true}));
    EXPECT_EQ(os.str(), "1,0,1\n0,0,0\n1,0,1\n");
}

TEST(BuildFcm, StructuralIdentityAndIdempotence) {
    std::mt19937_64 gen(20240501);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 1 + gen() % 30;
        std::vector<bool> v(k);
        for (std::size_t i = 0; i < k; ++i) v[i] = (gen() & 1) != 0;
        const auto m = build_fcm(v);
        expect_structural_identity(m);
        EXPECT_EQ(m.diagonal(), v);
        EXPECT_EQ(build_fcm(m.diagonal()), m);
    }
}

TEST(CombineFcm, TwoPlatformExample) {
    const std::vector<TrialRecord> recs = {platform1(), platform2()};
    const auto m = combine_fcm(recs);
    ASSERT_EQ(m.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(m.at(i, j), kCombinedExample[i][j]) << i << "," << j;
    }
    // Platform-1 rows x platform-2 columns.
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(m.at(i, 3), 0);
        EXPECT_EQ(m.at(i, 4), 1);
        EXPECT_EQ(m.at(i, 5), 0);
    }
    EXPECT_EQ(m.labels()[4], "Platform2/E");
}

TEST(CombineFcm, DiagonalBlocksAreThePerTrialMatrices) {
    const std::vector<TrialRecord> recs = {platform1(), platform2()};
    const auto m = combine_fcm(recs);
    const auto p1 = build_fcm(platform1().rejection_vector());
    const auto p2 = build_fcm(platform2().rejection_vector());
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_EQ(m.at(i, j), p1.at(i, j));
            EXPECT_EQ(m.at(3 + i, 3 + j), p2.at(i, j));
        }
    }
}

TEST(CombineFcm, Errors) {
    const std::vector<TrialRecord> self = {platform1(), platform1()};
    EXPECT_THROW(combine_fcm(self), std::invalid_argument);
    const std::vector<TrialRecord> one = {platform1()};
    EXPECT_THROW(combine_fcm(one), std::invalid_argument);
    auto dup = platform2();
    dup.rejections.push_back({"D", true});
    const std::vector<TrialRecord> bad = {platform1(), dup};
    EXPECT_THROW(combine_fcm(bad), std::invalid_argument);
}

TEST(CombineFcm, AllZeroTrials) {
    TrialRecord a{"A", "2020-01-01", {{"1", false}, {"2", false}, {"3", false}}, std::nullopt};
    TrialRecord b{"B", "2020-02-01", {{"1", false}, {"2", false}, {"3", false}}, std::nullopt};
    const std::vector<TrialRecord> recs = {a, b};
    const auto m = combine_fcm(recs);
    ASSERT_EQ(m.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(m.at(i, j), 0);
    }
}

TEST(CombineFcm, OrderInvarianceUpToPermutation) {
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TrialRecord> recs;
        const std::size_t count = 2 + gen() % 4;
        for (std::size_t r = 0; r < count; ++r) {
            TrialRecord rec{"P" + std::to_string(r), "2023-01-01", {}, std::nullopt};
            const std::size_t k = 1 + gen() % 6;
            for (std::size_t s = 0; s < k; ++s) rec.rejections.push_back({"S" + std::to_string(s), (gen() % 3) == 0});
            recs.push_back(rec);
        }
        auto shuffled = recs;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);

        const auto m1 = combine_fcm(recs);
        const auto m2 = combine_fcm(shuffled);
        expect_structural_identity(m1);
        expect_structural_identity(m2);
        std::map<std::string, std::size_t> index2;
        for (std::size_t i = 0; i < m2.size(); ++i) index2[m2.labels()[i]] = i;
        for (std::size_t i = 0; i < m1.size(); ++i) {
            for (std::size_t j = 0; j < m1.size(); ++j) {
                ASSERT_EQ(m1.at(i, j), m2.at(index2.at(m1.labels()[i]), index2.at(m1.labels()[j])));
            }
        }
        const auto r1 = block_report(m1, platform_partition(recs), 0.05);
        const auto r2 = block_report(m2, platform_partition(shuffled), 0.05);
        EXPECT_EQ(r1.diag_density, r2.diag_density);
        EXPECT_EQ(r1.offdiag_density, r2.offdiag_density);
    }
}

TEST(BlockReport, TwoPlatformExampleDensities) {
    const std::vector<TrialRecord> recs = {platform1(), platform2()};
    const auto rep = block_report(combine_fcm(recs), platform_partition(recs), 0.05);
    ASSERT_EQ(rep.blocks.size(), 4u);
    EXPECT_EQ(rep.blocks[0].density, 1.0);
    EXPECT_EQ(rep.blocks[0].pairs, 6u);
    EXPECT_EQ(rep.blocks[3].density, 0.0);
    EXPECT_DOUBLE_EQ(rep.blocks[1].density, 3.0 / 9.0);
    EXPECT_DOUBLE_EQ(rep.blocks[2].density, 3.0 / 9.0);
    EXPECT_DOUBLE_EQ(rep.offdiag_density, 3.0 / 9.0);
    EXPECT_DOUBLE_EQ(rep.diag_density, 0.5);
    EXPECT_EQ(rep.marginal_rates, (std::vector<double>{1.0, 1.0 / 3.0}));
    EXPECT_DOUBLE_EQ(rep.independence_expectation, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(rep.null_reference, 0.0025);
    for (const auto& b : rep.blocks) {
        EXPECT_GE(b.density, 0.0);
        EXPECT_LE(b.density, 1.0);
    }
}

TEST(BlockReport, AllOnesAndErrors) {
    const auto m = build_fcm(std::vector<bool>(7, true));
    const auto rep = block_report(m, {3, 1, 3}, 0.05);
    for (const auto& b : rep.blocks) {
        if (b.pairs > 0) {
            EXPECT_EQ(b.density, 1.0);
        }
    }
    EXPECT_EQ(rep.diag_density, 1.0);
    EXPECT_EQ(rep.offdiag_density, 1.0);
    EXPECT_THROW(block_report(m, {3, 3}, 0.05), std::invalid_argument);
    EXPECT_THROW(block_report(m, {3, 0, 4}, 0.05), std::invalid_argument);
    EXPECT_THROW(block_report(m, {}, 0.05), std::invalid_argument);
    EXPECT_THROW(block_report(m, {7}, 0.0), std::invalid_argument);
}

TEST(BlockReport, JsonFields) {
    const std::vector<TrialRecord> recs = {platform1(), platform2()};
    const nlohmann::json j = block_report(combine_fcm(recs), platform_partition(recs), 0.05);
    for (const char* key :
         {"blocks", "diag_density", "offdiag_density", "independence_expectation", "null_reference", "marginal_rates"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["blocks"].size(), 4u);
    EXPECT_EQ(j["blocks"][1]["row_platform"], 0);
    EXPECT_EQ(j["blocks"][1]["col_platform"], 1);
}

TEST(BlockReport, OffDiagonalConvergesToProductOfMarginals) {
    // Two independent platforms of three true nulls tested at p and q.
    const double p = 0.3, q = 0.1;
    const auto cp = PlatformConfig::all_true_null(3, 100, 100, p);
    const auto cq = PlatformConfig::all_true_null(3, 100, 100, q);
    const int reps = 40000;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < reps; ++r) {
        NormalStream ra(501, 2 * r), rb(501, 2 * r + 1);
        std::vector<TrialRecord> recs(2);
        for (int t = 0; t < 2; ++t) {
            auto& rng = t == 0 ? ra : rb;
            const auto res = simulate_platform(t == 0 ? cp : cq, rng, t == 0 ? "A" : "B");
            recs[t] = {t == 0 ? "A" : "B", "2024-01-01", {}, std::nullopt};
            for (const auto& o : res.outcomes) recs[t].rejections.push_back({o.study_id, o.rejected});
        }
        const double d = block_report(combine_fcm(recs), {3, 3}, 0.05).blocks[1].density;
        sum += d;
        sum2 += d * d;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
    EXPECT_NEAR(mean, p * q, 4 * se);
    EXPECT_NEAR(mean, p * q, 0.003);
}

TEST(TrialRecordJson, RoundTripAndValidation) {
    for (const auto& rec : {platform1(), platform2()}) {
        const nlohmann::json j = rec;
        EXPECT_EQ(j.get<TrialRecord>(), rec);
    }
    const nlohmann::json j = platform2();
    EXPECT_EQ(j["rejections"][1]["study_id"], "E");
    EXPECT_EQ(j["control_diag"]["control_z"], -1.25);
    EXPECT_TRUE(nlohmann::json(platform1())["control_diag"].is_null());

    auto bad = platform1();
    bad.timestamp = "yesterday";
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = platform1();
    bad.platform_id.clear();
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = platform1();
    bad.rejections.push_back({"A", false});
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST_F(TempStore, AppendThenLoadRoundTrips) {
    RecordStore store(path());
    EXPECT_TRUE(load_records(store).records.empty());
    append_record(store, platform2());
    const auto loaded = load_records(store);
    ASSERT_EQ(loaded.records.size(), 1u);
    EXPECT_TRUE(loaded.diagnostics.empty());
    EXPECT_EQ(loaded.records[0], platform2());
}

TEST_F(TempStore, PreservesInsertionOrder) {
    RecordStore store(path());
    store.append(platform1());
    store.append(platform2());
    const auto loaded = store.load();
    ASSERT_EQ(loaded.records.size(), 2u);
    EXPECT_EQ(loaded.records[0], platform1());
    EXPECT_EQ(loaded.records[1], platform2());

    auto bad = platform1();
    bad.timestamp = "";
    EXPECT_THROW(store.append(bad), std::invalid_argument);
    EXPECT_EQ(store.load().records.size(), 2u);
}

TEST_F(TempStore, CorruptMiddleLineIsReported) {
    {
        std::ofstream out(path());
        out << nlohmann::json(platform1()).dump() << '\n';
        out << "{\"platform_id\": \"broken\", \"rejections\": [\n";
        out << nlohmann::json(platform2()).dump() << '\n';
    }
    const auto loaded = RecordStore(path()).load();
    ASSERT_EQ(loaded.records.size(), 2u);
    ASSERT_EQ(loaded.diagnostics.size(), 1u);
    EXPECT_EQ(loaded.diagnostics[0].line, 2u);
    EXPECT_EQ(loaded.records[1], platform2());
}

TEST_F(TempStore, SchemaViolationIsReported) {
    {
        std::ofstream out(path());
        out << nlohmann::json(platform1()).dump() << "\n\n";
        out << "{\"platform_id\": \"X\", \"timestamp\": \"2020-01-01\", \"rejections\": [{\"study_id\": \"a\"}]}\n";
    }
    const auto loaded = RecordStore(path()).load();
    EXPECT_EQ(loaded.records.size(), 1u);
    ASSERT_EQ(loaded.diagnostics.size(), 1u);
    EXPECT_EQ(loaded.diagnostics[0].line, 3u);
}
