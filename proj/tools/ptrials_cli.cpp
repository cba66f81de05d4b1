// Batch front end: error-rate tables, platform-trial simulation, FDR
// scenario, Family Concurrency Matrix tools and a bivariate-normal probe.
//
// Exit codes: 0 success, 2 usage/validation error, 3 corrupt record store.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ptrials/ptrials.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCorruptStore = 3;

using nlohmann::json;

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
}

std::string fixed4(double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << x;
    return os.str();
}

struct Globals {
    std::string out;
    std::string format = "csv";
};

void add_output_flags(CLI::App* cmd, Globals& g) {
    cmd->add_option("--out", g.out, "Output path (default stdout)");
    cmd->add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

// --- var-table -------------------------------------------------------------

struct VarTableArgs {
    Globals g;
    std::vector<std::uint64_t> ns = {5, 10, 20, 40};
    std::vector<double> rhos = {0.0, 0.3, 0.5};
    double alpha = 0.05;
    unsigned threads = 0;
};

int run_var_table(const VarTableArgs& a) {
    const auto rows = ptrials::stddev_table(a.ns, a.rhos, a.alpha, a.threads);
    std::ostringstream os;
    if (a.g.format == "json") {
        json arr = json::array();
        for (const auto& r : rows) {
            arr.push_back({{"n_true", r.report.n_true},
                           {"erpf", r.report.erpf},
                           {"rho", r.rho},
                           {"var", r.report.var_V},
                           {"stddev", r.report.stddev_V}});
        }
        os << arr.dump(2) << '\n';
    } else {
        ptrials::write_stddev_csv(os, rows);
    }
    emit(a.g.out, os.str());
    return kExitOk;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
    Globals g;
    std::string tally_out;
    std::uint64_t platforms = 10000;
    std::size_t k = 10;
    std::size_t true_nulls = 0;  // 0 means all k
    double alpha = 0.05;
    double effect = 0.5;
    std::uint64_t arm_size = 100;
    std::uint64_t control_size = 100;
    std::uint32_t statements = 1;
    double one_factor_rho = -1.0;
    std::uint64_t checkpoint_every = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

int run_simulate(const SimulateArgs& a) {
    ptrials::SequenceConfig sc;
    sc.num_platforms = a.platforms;
    sc.seed = a.seed;
    sc.checkpoint_every = a.checkpoint_every;
    sc.threads = a.threads;
    const std::size_t n_true = a.true_nulls == 0 ? a.k : a.true_nulls;
    if (n_true > a.k) throw std::invalid_argument("--true-nulls cannot exceed --k");
    auto& pc = sc.platform;
    pc = ptrials::PlatformConfig::all_true_null(a.k, a.arm_size, a.control_size, a.alpha);
    for (std::size_t i = n_true; i < a.k; ++i) {
        pc.true_null_flags[i] = false;
        pc.effect_sizes[i] = a.effect;
    }
    pc.statements_per_study = a.statements;
    if (a.one_factor_rho >= 0.0) pc.one_factor_rho = a.one_factor_rho;

    const auto result = ptrials::simulate_sequence(sc);

    if (a.g.format == "json") {
        json checkpoints = json::array();
        for (const auto& c : result.report.checkpoints) {
            checkpoints.push_back({{"n", c.n},
                                   {"running_far", c.running_far},
                                   {"target", c.running_mean_alpha},
                                   {"deviation", c.deviation}});
        }
        json doc = {{"checkpoints", checkpoints},
                    {"lag_correlation", result.report.lag_correlation},
                    {"tally", result.tally}};
        emit(a.g.out, doc.dump(2) + "\n");
        return kExitOk;
    }

    std::ostringstream csv;
    ptrials::write_lln_csv(csv, result.report);
    const std::string tally = json(result.tally).dump() + "\n";
    std::string tally_path = a.tally_out;
    if (tally_path.empty() && !a.g.out.empty() && a.g.out != "-") tally_path = a.g.out + ".tally.json";
    if (tally_path.empty()) {
        emit("", csv.str() + tally);
    } else {
        emit(a.g.out, csv.str());
        emit(tally_path, tally);
    }
    return kExitOk;
}

// --- fdr-scenario ----------------------------------------------------------

struct FdrArgs {
    Globals g;
    double alpha = 0.10;
    std::uint64_t reps = 1000000;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

int run_fdr(const FdrArgs& a) {
    const auto r = ptrials::fdr_scenario(a.alpha, a.reps, a.seed, a.threads);
    std::ostringstream os;
    if (a.g.format == "json") {
        os << json{{"alpha_true_null", a.alpha},
                   {"reps", a.reps},
                   {"empirical_fdr", r.empirical_fdr},
                   {"empirical_far", r.empirical_far}}
                  .dump(2)
           << '\n';
    } else {
        os << "alpha_true_null,reps,empirical_fdr,empirical_far\n"
           << fixed4(a.alpha) << ',' << a.reps << ',' << fixed4(r.empirical_fdr) << ',' << fixed4(r.empirical_far)
           << '\n';
    }
    emit(a.g.out, os.str());
    return kExitOk;
}

// --- fcm -------------------------------------------------------------------

bool parse_flag(const std::string& s) {
    if (s == "1" || s == "true" || s == "R" || s == "reject") return true;
    if (s == "0" || s == "false" || s == "A" || s == "accept") return false;
    throw std::invalid_argument("rejection values must be 0 or 1, got '" + s + "'");
}

std::vector<std::string> split_csv_tokens(std::istream& in) {
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        std::string token;
        std::istringstream ls(line);
        while (std::getline(ls, token, ',')) {
            const auto b = token.find_first_not_of(" \t\r");
            const auto e = token.find_last_not_of(" \t\r");
            if (b == std::string::npos) continue;
            tokens.push_back(token.substr(b, e - b + 1));
        }
    }
    return tokens;
}

struct FcmBuildArgs {
    Globals g;
    std::vector<std::string> values;
    std::string csv_in;
    std::string append_store;
    std::string platform;
    std::string timestamp;
    std::vector<std::string> study_ids;
};

int run_fcm_build(const FcmBuildArgs& a) {
    std::vector<std::string> tokens = a.values;
    if (!a.csv_in.empty()) {
        std::ifstream in(a.csv_in);
        if (!in) throw std::invalid_argument("cannot read " + a.csv_in);
        auto more = split_csv_tokens(in);
        tokens.insert(tokens.end(), more.begin(), more.end());
    }
    std::vector<bool> rejections;
    for (const auto& t : tokens) rejections.push_back(parse_flag(t));

    std::vector<std::string> ids = a.study_ids;
    if (ids.empty()) {
        for (std::size_t i = 0; i < rejections.size(); ++i) ids.push_back("S" + std::to_string(i + 1));
    }
    if (ids.size() != rejections.size()) throw std::invalid_argument("--study-ids must match the number of values");
    const auto m = ptrials::build_fcm(rejections, ids);

    if (!a.append_store.empty()) {
        if (a.platform.empty() || a.timestamp.empty()) {
            throw std::invalid_argument("--append requires --platform and --timestamp");
        }
        ptrials::TrialRecord rec;
        rec.platform_id = a.platform;
        rec.timestamp = a.timestamp;
        for (std::size_t i = 0; i < rejections.size(); ++i) rec.rejections.emplace_back(ids[i], rejections[i]);
        ptrials::RecordStore(a.append_store).append(rec);
    }

    std::ostringstream os;
    ptrials::write_fcm_csv(os, m);
    emit(a.g.out, os.str());
    return kExitOk;
}

struct FcmStoreArgs {
    Globals g;
    std::string store;
    std::string report_out;
    double alpha = 0.05;
};

int report_store_diagnostics(const ptrials::RecordStore::LoadResult& loaded, const std::string& path) {
    for (const auto& d : loaded.diagnostics) {
        std::cerr << path << ":" << d.line << ": corrupt record: " << d.message << '\n';
    }
    return loaded.diagnostics.empty() ? kExitOk : kExitCorruptStore;
}

int run_fcm_combine(const FcmStoreArgs& a, bool with_report) {
    const ptrials::RecordStore store(a.store);
    const auto loaded = store.load();
    const int status = report_store_diagnostics(loaded, a.store);
    const auto m = ptrials::combine_fcm(loaded.records);

    std::ostringstream matrix;
    ptrials::write_fcm_csv(matrix, m);
    if (!with_report) {
        emit(a.g.out, matrix.str());
        return status;
    }
    const auto report = ptrials::block_report(m, ptrials::platform_partition(loaded.records), a.alpha);
    json platforms = json::array();
    for (const auto& r : loaded.records) platforms.push_back(r.platform_id);
    json doc = report;
    doc["platforms"] = platforms;
    const std::string report_text = doc.dump(2) + "\n";
    if (a.report_out.empty()) {
        emit(a.g.out, report_text);
    } else {
        emit(a.g.out, matrix.str());
        emit(a.report_out, report_text);
    }
    return status;
}

// --- bvn -------------------------------------------------------------------

struct BvnArgs {
    double h = 0.0;
    double k = 0.0;
    double rho = 0.0;
    int digits = 4;
};

int run_bvn(const BvnArgs& a) {
    const double p = ptrials::bvn_upper_orthant(a.h, a.k, a.rho);
    std::cout << std::fixed << std::setprecision(a.digits) << p << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Error-rate calculus and simulation for platform clinical trials"};
    app.require_subcommand(1);

    std::function<int()> action;

    VarTableArgs vt;
    auto* var_table = app.add_subcommand("var-table", "StdDev of the incorrect-approval count by n_true and rho");
    var_table->add_option("--n", vt.ns, "Numbers of true nulls")->check(CLI::PositiveNumber);
    var_table->add_option("--rho", vt.rhos, "Common pairwise correlations")->check(CLI::Range(-1.0, 1.0));
    var_table->add_option("--alpha", vt.alpha, "Per-study level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    var_table->add_option("--threads", vt.threads, "Worker threads (0 = all cores)");
    add_output_flags(var_table, vt.g);
    var_table->callback([&] { action = [&] { return run_var_table(vt); }; });

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Sequence of shared-control platforms; running FAR report");
    simulate->add_option("--platforms", sa.platforms, "Number of platforms")->check(CLI::PositiveNumber);
    simulate->add_option("--k", sa.k, "Studies per platform")->check(CLI::Range(1, 100));
    simulate->add_option("--true-nulls", sa.true_nulls, "True-null studies per platform (default k)");
    simulate->add_option("--alpha", sa.alpha, "Per-study level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    simulate->add_option("--effect", sa.effect, "Standardized effect of efficacious compounds");
    simulate->add_option("--arm-size", sa.arm_size, "Patients per treatment arm")->check(CLI::PositiveNumber);
    simulate->add_option("--control-size", sa.control_size, "Patients in the shared control")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--statements", sa.statements, "Statements (endpoints) per study")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--one-factor-rho", sa.one_factor_rho, "Use the one-factor pivot model")
        ->check(CLI::Range(0.0, 1.0));
    simulate->add_option("--checkpoint-every", sa.checkpoint_every, "Platforms between checkpoints");
    simulate->add_option("--seed", sa.seed, "RNG seed")->required();
    simulate->add_option("--threads", sa.threads, "Worker threads (0 = all cores)");
    simulate->add_option("--tally-out", sa.tally_out, "Tally JSON path (default <out>.tally.json)");
    add_output_flags(simulate, sa.g);
    simulate->callback([&] { action = [&] { return run_simulate(sa); }; });

    FdrArgs fa;
    auto* fdr = app.add_subcommand("fdr-scenario", "Two-study platform: FDR held at alpha/2 while FAR is alpha");
    fdr->add_option("--alpha", fa.alpha, "Level for the inefficacious compound")->check(CLI::Range(0.0, 1.0 - 1e-12));
    fdr->add_option("--reps", fa.reps, "Replicate platforms")->check(CLI::PositiveNumber);
    fdr->add_option("--seed", fa.seed, "RNG seed")->required();
    fdr->add_option("--threads", fa.threads, "Worker threads (0 = all cores)");
    add_output_flags(fdr, fa.g);
    fdr->callback([&] { action = [&] { return run_fdr(fa); }; });

    auto* fcm = app.add_subcommand("fcm", "Family Concurrency Matrix tools");
    fcm->require_subcommand(1);

    FcmBuildArgs fb;
    auto* build = fcm->add_subcommand("build", "FCM of one platform from its rejection vector");
    build->add_option("values", fb.values, "Rejections, 0/1 per study");
    build->add_option("--csv", fb.csv_in, "Read rejections from a CSV file");
    build->add_option("--append", fb.append_store, "Also append the trial record to this store");
    build->add_option("--platform", fb.platform, "Platform id for --append");
    build->add_option("--timestamp", fb.timestamp, "ISO-8601 timestamp for --append");
    build->add_option("--study-ids", fb.study_ids, "Study ids (default S1..Sk)");
    add_output_flags(build, fb.g);
    build->callback([&] { action = [&] { return run_fcm_build(fb); }; });

    FcmStoreArgs fs;
    auto* combine = fcm->add_subcommand("combine", "Combined FCM of every trial in the store");
    combine->add_option("--store", fs.store, "JSON-lines record store")->required();
    add_output_flags(combine, fs.g);
    combine->callback([&] { action = [&] { return run_fcm_combine(fs, false); }; });

    auto* monitor = fcm->add_subcommand("monitor", "Block densities of the combined FCM");
    monitor->add_option("--store", fs.store, "JSON-lines record store")->required();
    monitor->add_option("--alpha", fs.alpha, "Per-study level for the null reference")
        ->check(CLI::Range(1e-12, 1.0 - 1e-12));
    monitor->add_option("--report-out", fs.report_out, "Write the BlockReport here and the matrix to --out");
    add_output_flags(monitor, fs.g);
    monitor->callback([&] { action = [&] { return run_fcm_combine(fs, true); }; });

    BvnArgs ba;
    auto* bvn = app.add_subcommand("bvn", "P{X > h, Y > k} for a standard bivariate normal");
    bvn->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
    bvn->add_option("--h", ba.h, "First threshold")->required();
    bvn->add_option("--k", ba.k, "Second threshold")->required();
    bvn->add_option("--rho", ba.rho, "Correlation")->required()->check(CLI::Range(-1.0, 1.0));
    bvn->add_option("--digits", ba.digits, "Decimal places")->check(CLI::Range(0, 17));
    bvn->callback([&] { action = [&] { return run_bvn(ba); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        return action();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
