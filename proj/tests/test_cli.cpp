#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = UWBRL_CLI_PATH;

fs::path fresh(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("uwbrl_cli_" + name);
    fs::remove_all(p);
    return p;
}

struct Run {
    int code = -1;
    std::string err;
};

Run run(const std::string& args, const fs::path& stderr_file) {
    const std::string cmd = kCli + " " + args + " > /dev/null 2> " + stderr_file.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(stderr_file);
    std::getline(in, r.err);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("simulate is reproducible and its manifest is accurate") {
    const fs::path a = fresh("sim_a"), b = fresh("sim_b");
    const fs::path log = fresh("sim_log");
    REQUIRE(run("simulate --env env1 --episodes 2 --seed 7 --scale 0.1 --out " + a.string(), log).code == 0);
    REQUIRE(run("simulate --env env1 --episodes 2 --seed 7 --scale 0.1 --out " + b.string(), log).code == 0);
    for (const char* f : {"episode_000.csv", "episode_001.csv", "episode_000_poses.csv", "manifest.json"}) {
        INFO(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(slurp(a / "episode_000.csv") != slurp(a / "episode_001.csv"));
    CHECK(fs::exists(a / "config.json"));

    const auto manifest = read_json(a / "manifest.json");
    std::size_t total = 0, nlos = 0;
    for (const char* f : {"episode_000.csv", "episode_001.csv"}) {
        const auto rows = read_csv(a / f);
        REQUIRE(rows.size() > 1);
        CHECK(rows[0][0] == "timestamp_s");
        CHECK(rows[0].size() == 158);
        for (std::size_t i = 1; i < rows.size(); ++i) {
            ++total;
            nlos += rows[i][7] == "0" ? 1 : 0;
        }
    }
    CHECK(manifest["samples"].get<std::size_t>() == total);
    CHECK(manifest["nlos_fraction"].get<double>() == doctest::Approx(double(nlos) / double(total)));
}

TEST_CASE("training, resuming and evaluation") {
    const fs::path out = fresh("train");
    const fs::path log = fresh("train_log");
    REQUIRE(run("train-rl --episodes 2 --seed 3 --scale 0.1 --out " + out.string(), log).code == 0);
    auto rows = read_csv(out / "metrics.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"episode", "train_reward_mean", "val_mae_mm", "val_mae_nlos_mm", "epsilon",
                                             "lr_actor", "lr_critic", "target_actor_released"});
    CHECK(rows[2].size() == 8);
    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "checkpoint_last.bin"));

    const std::string ckpt = (out / "checkpoint_last.bin").string();
    REQUIRE(run("train-rl --episodes 3 --seed 3 --scale 0.1 --resume " + ckpt + " --out " + out.string(), log).code == 0);
    rows = read_csv(out / "metrics.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[3][0] == "2");

    const fs::path ev = fresh("eval");
    REQUIRE(run("evaluate --checkpoint " + ckpt + " --split nlos --seed 3 --scale 0.1 --svg --out " + ev.string(), log).code ==
            0);
    const auto report = read_json(ev / "report.json");
    CHECK(report["split"] == "nlos");
    const auto residuals = read_csv(ev / "residuals.csv");
    REQUIRE(residuals.size() > 1);
    std::size_t los_col = 0;
    while (los_col < residuals[0].size() && residuals[0][los_col] != "los_flag") ++los_col;
    REQUIRE(los_col < residuals[0].size());
    for (std::size_t i = 1; i < residuals.size(); ++i) CHECK(residuals[i][los_col] == "0");
    CHECK(fs::exists(ev / "boxplot.svg"));
}

TEST_CASE("errors are reported on one line") {
    const fs::path dir = fresh("errors");
    fs::create_directories(dir);
    const fs::path log = dir / "stderr.txt";
    {
        std::ofstream bad(dir / "bad.bin", std::ios::binary);
        bad << "definitely not a checkpoint";
    }
    Run r = run("evaluate --checkpoint " + (dir / "bad.bin").string() + " --out " + (dir / "o").string(), log);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: CorruptFile: ", 0) == 0);

    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"schema_version": 1, "mystery": true})";
    }
    r = run("--config " + (dir / "cfg.json").string() + " simulate --out " + (dir / "o").string(), log);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: ConfigError: ", 0) == 0);

    r = run("simulate --env env9 --out " + (dir / "o").string(), log);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: ConfigError: ", 0) == 0);
}
