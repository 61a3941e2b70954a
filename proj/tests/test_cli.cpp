#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct CommandResult {
    int exit_code;
    std::string output; // stdout only
};

CommandResult run_command(const std::string& cmd) {
    std::array<char, 512> buffer{};
    std::string output;
    FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buffer.data(), buffer.size(), pipe)) output += buffer.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

std::string cli() { return GGSA_CLI_PATH; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
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

TEST_CASE("version flag") {
    auto r = run_command(cli() + " --version");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("GGAS") != std::string::npos);
    CHECK(r.output.find("GGMD") != std::string::npos);
}

TEST_CASE("unknown subcommand and unknown flags exit 2") {
    CHECK(run_command(cli() + " frobnicate").exit_code == 2);
    CHECK(run_command(cli() + " gen-data --out /tmp/x --no-such-flag").exit_code == 2);
    CHECK(run_command(cli()).exit_code == 2);
}

TEST_CASE("gen-data writes the expected files and is idempotent on inputs") {
    TempDir tmp("ggsa_cli_gen");
    const std::string dir = (tmp.path / "d").string();
    auto r = run_command(cli() + " gen-data --out " + dir +
                         " --patients 3 --slices 4 --site A --seed 7");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(fs::path(dir) / "manifest.json"));
    int ggs = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".ggs") ++ggs;
    }
    CHECK(ggs == 12);

    // same seed twice gives byte-identical slice files
    const std::string dir2 = (tmp.path / "d2").string();
    run_command(cli() + " gen-data --out " + dir2 +
                " --patients 3 --slices 4 --site A --seed 7");
    CHECK(slurp(fs::path(dir) / "A001_02.ggs") == slurp(fs::path(dir2) / "A001_02.ggs"));
    CHECK(slurp(fs::path(dir) / "manifest.json") == slurp(fs::path(dir2) / "manifest.json"));
}

TEST_CASE("suggest on an undersized pool exits 1") {
    TempDir tmp("ggsa_cli_suggest");
    const std::string dir = (tmp.path / "d").string();
    run_command(cli() + " gen-data --out " + dir + " --patients 3 --slices 4 --site A");
    auto r = run_command(cli() + " suggest --data " + dir +
                         " --method random --strategy patient --m 5");
    CHECK(r.exit_code == 1);

    auto ok = run_command(cli() + " suggest --data " + dir +
                          " --method random --strategy patient --m 2 --seed 3");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("# method=random") == 0);
}

TEST_CASE("train, suggest and run round-trip through checkpoints and reports") {
    TempDir tmp("ggsa_cli_flow");
    const std::string dir = (tmp.path / "d").string();
    run_command(cli() + " gen-data --out " + dir +
                " --patients 6 --test-patients 2 --slices 4 --hw 16 --site A --seed 3");

    const std::string vae = (tmp.path / "m.vae.ggmd").string();
    const std::string seg = (tmp.path / "m.seg.ggmd").string();
    CHECK(run_command(cli() + " train-vae --data " + dir + " --out " + vae +
                      " --epochs 2 --latent-dim 4 --seed 5")
              .exit_code == 0);
    CHECK(run_command(cli() + " train-seg --data " + dir + " --out " + seg +
                      " --epochs 2 --seed 5")
              .exit_code == 0);

    // gradient suggestion from two annotated patients
    const std::string annotated = (tmp.path / "annotated.txt").string();
    {
        std::ofstream out(annotated);
        out << "A000\nA001\n";
    }
    const std::string list = (tmp.path / "suggested.txt").string();
    auto sg = run_command(cli() + " suggest --data " + dir + " --method gradient --seg " +
                          seg + " --vae " + vae + " --annotated " + annotated +
                          " --strategy patient --m 2 --out " + list);
    CHECK(sg.exit_code == 0);
    auto listing = slurp(list);
    CHECK(listing.find("# method=gradient strategy=patient") == 0);

    // run: byte-identical CSV across two executions and jobs settings
    const std::string config = (tmp.path / "plan.txt").string();
    {
        std::ofstream out(config);
        out << "scenario = scratch\nstrategy = patient\nmethod = random,gradient\n"
               "budget = 4\nrepeats = 2\nseed = 11\nepochs_initial = 1\n"
               "epochs_after = 1\nvae_epochs = 1\npatients_a = 6\ntest_a = 2\n"
               "slices_per_patient = 4\nimage_hw = 16\nbatch_size = 8\n"
               "record_walltime = false\n";
    }
    const std::string out1 = (tmp.path / "r1").string();
    const std::string out2 = (tmp.path / "r2").string();
    CHECK(run_command(cli() + " run --config " + config + " --out-dir " + out1).exit_code == 0);
    CHECK(run_command(cli() + " run --config " + config + " --out-dir " + out2 +
                      " --jobs 4")
              .exit_code == 0);
    const auto csv1 = slurp(fs::path(out1) / "rounds.csv");
    CHECK(!csv1.empty());
    CHECK(csv1 == slurp(fs::path(out2) / "rounds.csv"));
    CHECK(fs::exists(fs::path(out1) / "dice_scratch_patient.svg"));

    // report regenerates charts from the CSV alone
    const std::string out3 = (tmp.path / "r3").string();
    CHECK(run_command(cli() + " report --csv " + (fs::path(out1) / "rounds.csv").string() +
                      " --out-dir " + out3)
              .exit_code == 0);
    CHECK(fs::exists(fs::path(out3) / "dice_scratch_patient.svg"));
}
