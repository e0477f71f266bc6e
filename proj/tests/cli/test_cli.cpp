#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
};

// stderr is folded into stdout so error paths can be inspected too.
CliResult run_cli(const std::string& args) {
    const std::string command = std::string(ANDERSON_CLI_PATH) + " " + args + " 2>&1";
    CliResult result;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buffer{};
    std::size_t got = 0;
    while ((got = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) result.out.append(buffer.data(), got);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string golden(const std::string& name) {
    const fs::path path = fs::path(ANDERSON_GOLDEN_DIR) / name;
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing golden file ", path.string(),
                    " (regenerate with scripts/regen_golden.sh)");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("spectrum of the three-site free chain matches the closed form") {
    const CliResult result = run_cli("spectrum --d 1 --L 1 --K 0 --seed 0 --json");
    CHECK(result.exit_code == 0);
    CHECK(result.out == golden("spectrum_3site.json"));

    const auto j = nlohmann::json::parse(result.out);
    const auto ev = j.at("eigenvalues").get<std::vector<double>>();
    REQUIRE(ev.size() == 3);
    CHECK(std::abs(ev[0] + std::sqrt(2.0)) <= 1e-10);
    CHECK(std::abs(ev[1]) <= 1e-10);
    CHECK(std::abs(ev[2] - std::sqrt(2.0)) <= 1e-10);
}

TEST_CASE("minorcheck emits the exact golden fixture") {
    const CliResult result = run_cli("minorcheck --n 2 --u 1,0 --v 0,1 --json");
    CHECK(result.exit_code == 0);
    CHECK(result.out == golden("minorcheck_basis.json"));
    const auto j = nlohmann::json::parse(result.out);
    CHECK(j.at("lhs").get<double>() == 1.0);
    CHECK(j.at("rhs").get<double>() == 0.03125);
    CHECK(j.at("holds").get<bool>());
}

TEST_CASE("every subcommand publishes its flags in --help") {
    const char* subcommands[] = {"spectrum",    "trace",  "wegner",       "minami",
                                 "decorrelate", "counts", "independence", "multiplicity",
                                 "minorcheck",  "run",    "hessian-probe"};
    for (const auto* name : subcommands) {
        const CliResult result = run_cli(std::string(name) + " --help");
        CHECK(result.exit_code == 0);
        CHECK(result.out == golden(std::string("help_") + name + ".txt"));
    }
    const CliResult top = run_cli("--help");
    CHECK(top.exit_code == 0);
    CHECK(top.out == golden("help_top.txt"));
}

TEST_CASE("exit codes follow the contract") {
    CHECK(run_cli("run --config missing.toml").exit_code == 2);
    CHECK(run_cli("run --config missing.toml").out.find("missing.toml") != std::string::npos);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("wegner --no-such-flag").exit_code == 2);
    CHECK(run_cli("minorcheck --u 1,0 --v 0,1 --n 3").exit_code == 2);
    // validation failure: polymer block does not divide the box side
    CHECK(run_cli("wegner --d 1 --L 20 --ell 10 --scheme polymer --b 3 --n 10 --out /tmp/adx").exit_code == 2);
    // runtime failure: empty window in trace
    const CliResult trace = run_cli("trace --d 1 --ell 2 --L 10 --K 0 --E 50 --I=-1,1");
    CHECK(trace.exit_code == 1);
    CHECK(trace.out.find("no eigenvalues in window") != std::string::npos);
}

TEST_CASE("dimension cap honours flag and environment overrides") {
    CHECK(run_cli("spectrum --d 1 --L 10 --K 1").exit_code == 0);
    const CliResult capped = run_cli("spectrum --d 1 --L 10 --K 1 --dimension_cap 10");
    CHECK(capped.exit_code == 2);
    CHECK(capped.out.find("cap") != std::string::npos);

    const std::string env_cmd =
        std::string("ANDERSON_DECORR_CAP=10 ") + ANDERSON_CLI_PATH + " spectrum --d 1 --L 10 --K 1 2>&1";
    FILE* pipe = popen(env_cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buffer{};
    while (fread(buffer.data(), 1, buffer.size(), pipe) > 0) {
    }
    CHECK(WEXITSTATUS(pclose(pipe)) == 2);
}

TEST_CASE("trace subcommand reports a normalized gradient") {
    const CliResult result = run_cli("trace --d 1 --ell 6 --L 6 --K 3 --seed 9 --E 0 --I=-2,2 --json");
    REQUIRE(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.out);
    CHECK(j.at("count").get<int>() >= 1);
    CHECK(j.at("gradient_l1").get<double>() == doctest::Approx(1.0).epsilon(1e-10));
    for (double gs : j.at("gradient").get<std::vector<double>>()) CHECK(gs >= 0.0);
}

TEST_CASE("estimator runs are reproducible byte-for-byte through the CLI") {
    TempDir dir("anderson_cli_repro");
    const std::string base = "wegner --d 1 --L 6,8 --ell 3 --K 2 --E 0 --I=-1,1 --n 700 --seed 5 ";
    const CliResult a = run_cli(base + "--out " + (dir.path / "a").string() + " --json");
    const CliResult b = run_cli(base + "--workers 3 --out " + (dir.path / "b").string() + " --json");
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    CHECK(a.out == b.out);
    CHECK(slurp(dir.path / "a" / "records.ndjson") == slurp(dir.path / "b" / "records.ndjson"));
    CHECK(fs::exists(dir.path / "a" / "manifest.json"));
    CHECK(fs::exists(dir.path / "a" / "tables" / "wegner_6.csv"));
    CHECK(fs::exists(dir.path / "a" / "tables" / "wegner_8.csv"));

    const std::string csv = slurp(dir.path / "a" / "tables" / "wegner_6.csv");
    CHECK(csv.rfind("name,value,ci,n\n", 0) == 0);
}

TEST_CASE("config file drives the run subcommand and flags override it") {
    TempDir dir("anderson_cli_config");
    const fs::path config_path = dir.path / "exp.toml";
    {
        std::ofstream config(config_path);
        config << "[model]\nd = 1\nL = 6\nell = 3\nscheme = rank_one\nK = 2.0\nlaw = uniform\n\n"
               << "[statistic]\nestimator = wegner\nE = 0.0\nI = -1 1\n\n"
               << "[run]\nn_realizations = 500\nbase_seed = 3\nworkers = 1\nout = "
               << (dir.path / "out").string() << "\n";
    }
    const CliResult direct = run_cli("run --config " + config_path.string() + " --json");
    REQUIRE(direct.exit_code == 0);
    const auto record = nlohmann::json::parse(direct.out.substr(0, direct.out.find('\n')));
    CHECK(record.at("name") == "wegner");
    CHECK(record.at("n").get<long>() == 500);
    CHECK(record.at("seed").get<std::uint64_t>() == 3);

    const CliResult overridden = run_cli("run --config " + config_path.string() + " --seed 4 --out " +
                                         (dir.path / "out2").string() + " --json");
    REQUIRE(overridden.exit_code == 0);
    CHECK(nlohmann::json::parse(overridden.out.substr(0, overridden.out.find('\n'))).at("seed").get<int>() == 4);
}

TEST_CASE("ndjson records carry the documented schema keys in order") {
    TempDir dir("anderson_cli_schema");
    const CliResult result = run_cli("minami --d 1 --L 6 --ell 3 --K 2 --E 0 --I=-2,2 --n 400 --seed 6 --out " +
                                     (dir.path / "out").string() + " --json");
    REQUIRE(result.exit_code == 0);
    std::istringstream lines(result.out);
    std::string line;
    int records = 0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::ordered_json::parse(line);
        const std::vector<std::string> keys = {"name", "value", "ci", "n", "params", "seed", "version"};
        std::size_t at = 0;
        for (const auto& [key, value] : j.items()) {
            REQUIRE(at < keys.size());
            CHECK(key == keys[at++]);
        }
        ++records;
    }
    CHECK(records == 2); // minami.tail and minami.product_mean
}
