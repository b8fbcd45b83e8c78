#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "covmap/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workdir {
    fs::path path = fs::temp_directory_path() / ("covmap_cli_" + std::to_string(::getpid()));
    Workdir() { fs::create_directories(path); }
    ~Workdir() { fs::remove_all(path); }

    int run(const std::string& args) const {
        const std::string cmd = "cd '" + path.string() + "' && '" COVMAP_CLI "' " + args + " >out.txt 2>err.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string read(const std::string& name) const {
        std::ifstream in(path / name, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    void write(const std::string& name, const std::string& text) const { std::ofstream(path / name) << text; }
};

std::string constant_csv(const std::string& value) {
    std::string out;
    for (int i = 0; i < 32; ++i) {
        for (int j = 0; j < 32; ++j) out += (j ? "," : "") + value;
        out += "\n";
    }
    return out;
}

} // namespace

TEST_CASE("heatmap rounding") {
    const Workdir w;
    for (const auto& [value, gray] : {std::pair{"1", 255}, {"0", 0}, {"0.5", 128}}) {
        w.write("m.csv", constant_csv(value));
        REQUIRE(w.run("heatmap --manifold m.csv --out h.pgm") == 0);
        const auto img = covmap::io::read_pgm(w.path / "h.pgm");
        CHECK(img.width == 32);
        for (auto p : img.pixels) REQUIRE(p == gray);
    }
    w.write("bad.csv", "1,2\n");
    CHECK(w.run("heatmap --manifold bad.csv --out h.pgm") == 2);
    CHECK(json::parse(w.read("err.txt")).contains("error"));
}

TEST_CASE("usage and input errors exit 2 with a JSON line") {
    const Workdir w;
    CHECK(w.run("ingest --cells missing.csv --bounds 0,0,1,1 --side-km 10 --out x") == 2);
    CHECK(json::parse(w.read("err.txt"))["error"] == "io");
    w.write("cells.csv", "lat,lon\n0.5,0.5\n");
    CHECK(w.run("ingest --cells cells.csv --bounds 0,0,0,1 --side-km 10 --out x") == 2);
    CHECK(w.run("frobnicate") == 2);
    CHECK(w.run("plan --roi nowhere --model nomodel --out p.json") == 2);
}

TEST_CASE("ingest writes filter counts") {
    const Workdir w;
    std::string cells = "id,lat,lon\n";
    // 30 towers spread over one 10 km cell near the equator, 2 in another.
    for (int k = 0; k < 30; ++k)
        cells += std::to_string(k) + "," + std::to_string(0.001 + 0.003 * k) + "," + std::to_string(0.002 + 0.0025 * k) + "\n";
    cells += "a,0.5,0.5\nb,0.51,0.5\n";
    w.write("cells.csv", cells);
    REQUIRE(w.run("ingest --cells cells.csv --bounds 0,0,0.9,0.9 --side-km 10 --out rois") == 0);
    const json index = json::parse(w.read("rois/index.json"));
    CHECK(index["kept"] == 1);
    CHECK(index["dropped_low"] == 1);
    CHECK(index["dropped_high"] == 0);
}

TEST_CASE("simulate, train, compare and plan") {
    const Workdir w;
    REQUIRE(w.run("synth --count 6 --seed 3 --out rois") == 0);
    CHECK(w.run("simulate --roi-dir rois --fading rician --out sim") == 2);
    REQUIRE(w.run("simulate --roi-dir rois --mc 20 --gamma-db 0 --fading nakagami:3 --out sim") == 0);
    const json manifest = json::parse(w.read("sim/synth_00000/manifest.json"));
    CHECK(manifest["simulation"]["channel"]["gamma_th"] == 1.0);
    CHECK(manifest["simulation"]["fading"]["shape"] == 3);

    REQUIRE(w.run("train --data sim --epochs 1 --ff-hidden 16 --latent-dim 4 --out model") == 0);
    REQUIRE(w.run("compare --model model --data sim --baseline-model model --out report.csv") == 0);
    std::istringstream report(w.read("report.csv"));
    std::string line;
    std::getline(report, line);
    CHECK(line.ends_with("loss_model_baseline,reduction_vs_model_pct"));
    std::size_t rows = 0;
    while (std::getline(report, line)) {
        ++rows;
        CHECK(line.ends_with(",0"));
    }
    CHECK(rows == 1); // ceil(0.7 * 6) = 5 train, 1 test

    // A coverage threshold of 1 can never be beaten: the plan runs and reports none.
    REQUIRE(w.run("plan --roi rois/synth_00001 --model model --cov-th 1 --max-bs 1 --out plan.json") == 0);
    CHECK(json::parse(w.read("plan.json"))["result"] == "none");
    w.write("th.csv", constant_csv("0"));
    REQUIRE(w.run("plan --roi rois/synth_00001 --model model --cov-th th.csv --frac-th 0.5 --out plan2.json") == 0);
    const json plan = json::parse(w.read("plan2.json"));
    CHECK(plan["result"] == "solution");
    CHECK(plan["config"]["cov_th"] == 0.0);
    CHECK(fs::exists(w.path / "plan2_before.csv"));
    CHECK(fs::exists(w.path / "plan2_after.csv"));
}
