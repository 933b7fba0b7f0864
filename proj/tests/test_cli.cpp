#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifdef _WIN32
#error "the CLI tests assume a POSIX shell"
#endif
#include <sys/wait.h>

namespace {

using json = nlohmann::ordered_json;

const std::string kCli = TSEOH_CLI_PATH;
const std::string kRepo = TSEOH_REPO_DIR;
const std::string kMockScript = kRepo + "/tests/fixtures/mock_run.json";
const std::string kPrompts = kRepo + "/prompts";

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* tag) {
        path = std::filesystem::temp_directory_path() /
               (std::string("tseoh_cli_") + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

struct RunOutput {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunOutput run_cli(const std::string& args, const std::string& env_prefix = {}) {
    TempDir io("io");
    auto out_path = io.path / "out.txt";
    auto err_path = io.path / "err.txt";
    std::string cmd = env_prefix + kCli + " " + args + " > " + out_path.string() + " 2> " +
                      err_path.string();
    int status = std::system(cmd.c_str());
    RunOutput r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

std::string evolve_args(const std::string& out_dir, const std::string& extra = {}) {
    return "evolve --instance synth:n=30,m=4,seed=5 --population 2 --generations 1 "
           "--strategies M1,E2 --seed 9 --provider mock --mock-script " +
           kMockScript + " --prompts " + kPrompts + " --out " + out_dir + " " + extra;
}

}  // namespace

TEST_CASE("missing subcommand is a usage error") {
    auto r = run_cli("");
    CHECK(r.exit_code == 1);
}

TEST_CASE("ingest synth writes a valid instance JSON") {
    TempDir dir("ingest");
    auto out = (dir.path / "inst.json").string();
    auto r = run_cli("ingest --format synth --n 10 --m 3 --seed 1 --out " + out);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("wrote 10 tasks / 3 servers") != std::string::npos);
    json inst = json::parse(slurp(out));
    CHECK(inst.at("tasks").size() == 10);
    CHECK(inst.at("servers").size() == 3);
}

TEST_CASE("ingest rejects unknown formats with exit 1") {
    TempDir dir("badfmt");
    auto r = run_cli("ingest --format parquet --out " + (dir.path / "x.json").string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("unknown trace format") != std::string::npos);
}

TEST_CASE("simulate runs named baselines and writes reports") {
    TempDir dir("simulate");
    auto r = run_cli("simulate --instance synth:n=20,m=3,seed=2 --policy fcfs --out " +
                     (dir.path / "fcfs").string());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("fitness:") != std::string::npos);
    REQUIRE(std::filesystem::exists(dir.path / "fcfs" / "report.json"));
    REQUIRE(std::filesystem::exists(dir.path / "fcfs" / "utilization.csv"));

    auto r2 = run_cli("simulate --instance synth:n=20,m=3,seed=2 --policy constant --out " +
                      (dir.path / "constant").string());
    CHECK(r2.exit_code == 0);

    json fcfs = json::parse(slurp(dir.path / "fcfs" / "report.json"));
    json constant = json::parse(slurp(dir.path / "constant" / "report.json"));
    CHECK(fcfs.at("fitness") == constant.at("fitness"));
    CHECK(fcfs.at("events") == constant.at("events"));
    CHECK(fcfs.at("alpha") == 150.0);
    CHECK(fcfs.at("beta") == 1.0);

    std::string csv = slurp(dir.path / "fcfs" / "utilization.csv");
    CHECK(csv.rfind("time,server_id,cpu_ratio,io_ratio,bw_ratio,mem_ratio\n", 0) == 0);
}

TEST_CASE("simulate accepts a dsl score file and rejects bad ones") {
    TempDir dir("dsl");
    auto score = dir.path / "h.score";
    std::ofstream(score) << "(wait + exec) / exec\n";
    auto r = run_cli("simulate --instance synth:n=20,m=3,seed=2 --policy dsl:" + score.string());
    CHECK(r.exit_code == 0);

    std::ofstream(score) << "not a formula\n";
    auto bad = run_cli("simulate --instance synth:n=20,m=3,seed=2 --policy dsl:" + score.string());
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find("parse error") != std::string::npos);
}

TEST_CASE("simulate rejects unknown policies with exit 1") {
    auto r = run_cli("simulate --instance synth:n=10,m=2,seed=1 --policy sorcery");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("unknown policy") != std::string::npos);
}

TEST_CASE("simulate runs aco end to end") {
    auto r = run_cli(
        "simulate --instance synth:n=10,m=2,seed=1 --policy aco --aco-ants 3 --aco-iterations 3");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("fitness:") != std::string::npos);
}

TEST_CASE("evolve with the mock provider produces a run directory") {
    TempDir dir("evolve");
    auto out_dir = (dir.path / "run").string();
    auto r = run_cli(evolve_args(out_dir));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("best fitness:") != std::string::npos);
    for (const char* f : {"config.json", "gen_000.json", "gen_001.json", "best.score",
                          "best.json", "report.json", "utilization.csv"})
        CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / f));

    // two strategies, N = 2: the evolution round logs 4 offspring
    json gen1 = json::parse(slurp(std::filesystem::path(out_dir) / "gen_001.json"));
    CHECK(gen1.at("offspring").size() == 4);
}

TEST_CASE("evolve requires instance and out directory") {
    auto r = run_cli("evolve --provider mock --mock-script " + kMockScript);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("--instance is required") != std::string::npos);
}

TEST_CASE("http provider without credentials fails before any work") {
    TempDir dir("nokey");
    auto r = run_cli("evolve --instance synth:n=10,m=2,seed=1 --provider http --out " +
                         (dir.path / "run").string(),
                     "env -u TSEOH_API_KEY ");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("TSEOH_API_KEY") != std::string::npos);
    // nothing was written: the check runs before the run directory is created
    CHECK_FALSE(std::filesystem::exists(dir.path / "run"));
}

TEST_CASE("config file supplies defaults and flags override it") {
    TempDir dir("config");
    auto cfg_path = dir.path / "run.json";
    std::ofstream(cfg_path) << json{{"instance", "synth:n=30,m=4,seed=5"},
                                    {"population", 2},
                                    {"generations", 2},
                                    {"strategies", "M1,E2"},
                                    {"seed", 9},
                                    {"provider", "mock"},
                                    {"mock-script", kMockScript},
                                    {"prompts", kPrompts}}
                                .dump(2);
    auto out_dir = (dir.path / "run").string();
    // --generations 1 on the command line beats the config's 2
    auto r = run_cli("evolve --config " + cfg_path.string() + " --generations 1 --out " + out_dir);
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "gen_001.json"));
    CHECK_FALSE(std::filesystem::exists(std::filesystem::path(out_dir) / "gen_002.json"));

    auto bad = run_cli("evolve --config " + (dir.path / "nope.json").string());
    CHECK(bad.exit_code == 1);

    std::ofstream(cfg_path) << R"({"no-such-flag": 1})";
    auto unknown = run_cli("evolve --config " + cfg_path.string());
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.err.find("no matching flag") != std::string::npos);
}

TEST_CASE("ablate writes csv and markdown tables") {
    TempDir dir("ablate");
    auto out_dir = (dir.path / "abl").string();
    auto r = run_cli("ablate --instance synth:n=30,m=4,seed=5 --population 2 --generations 1 "
                     "--seed 9 --provider mock --mock-script " +
                     kMockScript + " --prompts " + kPrompts + " --out " + out_dir +
                     " --groups \"M1;E2;M1+E2\"");
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "ablation.csv"));
    CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "ablation.md"));
    std::string csv = slurp(std::filesystem::path(out_dir) / "ablation.csv");
    CHECK(csv.find("\nM1,") != std::string::npos);
    CHECK(csv.find("\nM1+E2,") != std::string::npos);
    CHECK(r.out.find("| Group | Resource Utilisation Rate | Running Time | Fitness |") !=
          std::string::npos);
}

TEST_CASE("report renders a run directory and rejects tampered logs") {
    TempDir dir("report");
    auto out_dir = (dir.path / "run").string();
    REQUIRE(run_cli(evolve_args(out_dir)).exit_code == 0);

    auto md = run_cli("report --run-dir " + out_dir);
    CHECK(md.exit_code == 0);
    CHECK(md.out.find("## Final best vs baselines") != std::string::npos);

    auto csv = run_cli("report --run-dir " + out_dir + " --format csv");
    CHECK(csv.exit_code == 0);
    CHECK(csv.out.rfind("generation,archive_best_fitness\n", 0) == 0);

    auto bad_fmt = run_cli("report --run-dir " + out_dir + " --format pdf");
    CHECK(bad_fmt.exit_code == 1);

    // tamper with a sealed log: the report must fail with exit 2
    auto log_path = std::filesystem::path(out_dir) / "gen_001.json";
    json log = json::parse(slurp(log_path));
    log["generation"] = 42;
    std::ofstream(log_path) << log.dump(2);
    auto tampered = run_cli("report --run-dir " + out_dir);
    CHECK(tampered.exit_code == 2);
    CHECK(tampered.err.find("integrity check failed") != std::string::npos);
}
