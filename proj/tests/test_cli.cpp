#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "kinfit/kinfit.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using kinfit::cli::run;

namespace {

const std::string models = KINFIT_MODELS_DIR;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("kinfit_cli_" + tag + "_" + std::to_string(std::rand()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    void write(const std::string& name, const std::string& text) const { std::ofstream(file(name)) << text; }
};

struct Result {
    int code;
    std::string out, err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

// Value of column `col` in the row of a CSV whose first field equals `t`.
double csv_value(const std::string& text, double t, std::size_t col) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        if (std::stod(f[0]) == t) return std::stod(f[col]);
    }
    return std::nan("");
}

}  // namespace

TEST_CASE("simulate writes the trajectory") {
    TempDir d("sim");
    const auto r = call({"simulate", "--model", models + "/decay.model", "--grid", "0:1:11", "--rtol", "1e-9", "--out",
                         d.path.string()});
    REQUIRE(r.code == 0);
    const std::string traj = oracle::slurp(d.file("trajectory.csv"));
    CHECK(traj.rfind("time,A\n", 0) == 0);
    // decay.model has k = 2
    CHECK(csv_value(traj, 1.0, 1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-7));
    CHECK(csv_value(traj, 0.5, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-7));
    const auto samples = kinfit::parse_data_csv(oracle::slurp(d.file("samples.csv")));
    CHECK(samples.records.size() == 11);
}

TEST_CASE("simulate with unit rate reproduces exp(-1)") {
    TempDir d("unit");
    d.write("m.model", "@species\nA = 1\n@parameters\nk = 1\n@reactions\nA -> 0 rate k\n");
    const auto r = call({"simulate", "--model", d.file("m.model"), "--t-end", "1", "--rtol", "1e-8", "--out",
                         d.path.string()});
    REQUIRE(r.code == 0);
    CHECK(csv_value(oracle::slurp(d.file("trajectory.csv")), 1.0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("simulate per experiment of a data file") {
    TempDir d("exp");
    const auto r = call({"simulate", "--model", models + "/decay.model", "--data", models + "/decay_data.csv", "--out",
                         d.path.string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(d.file("trajectory_1.csv")));
}

TEST_CASE("sens agrees between methods") {
    TempDir a("vareq"), b("fd");
    const std::vector<std::string> common{"--model", models + "/chain.model", "--grid", "0:2:21", "--rtol", "1e-8"};
    auto args = std::vector<std::string>{"sens"};
    args.insert(args.end(), common.begin(), common.end());
    auto va = args, fa = args;
    va.insert(va.end(), {"--out", a.path.string()});
    fa.insert(fa.end(), {"--jacobian", "fd", "--out", b.path.string()});
    REQUIRE(call(va).code == 0);
    REQUIRE(call(fa).code == 0);
    std::istringstream x(oracle::slurp(a.file("sensitivities.csv"))), y(oracle::slurp(b.file("sensitivities.csv")));
    std::string lx, ly;
    std::getline(x, lx);
    std::getline(y, ly);
    CHECK(lx == "time,species,parameter,value");
    std::size_t rows = 0;
    while (std::getline(x, lx) && std::getline(y, ly)) {
        const double vx = std::stod(lx.substr(lx.rfind(',') + 1)), vy = std::stod(ly.substr(ly.rfind(',') + 1));
        CHECK(std::abs(vx - vy) <= 1e-4 * std::max(1.0, std::abs(vx)));
        ++rows;
    }
    CHECK(rows == 21 * 3 * 2);
}

TEST_CASE("sens warns about undefined rows") {
    TempDir d("undef");
    d.write("m.model", "@species\nA = 1\nZ = 0 thres=0\n@parameters\nk = 1\n@reactions\nA -> 0 rate k\n");
    const auto r = call({"sens", "--model", d.file("m.model"), "--t-end", "1", "--out", d.path.string()});
    CHECK(r.code == 0);
    CHECK(r.err.find("'Z'") != std::string::npos);
}

TEST_CASE("fit writes protocol and statistics") {
    TempDir d("fit");
    const auto r = call({"fit", "--model", models + "/decay.model", "--data", models + "/decay_data.csv", "--xtol",
                         "1e-6", "--out", d.path.string()});
    REQUIRE(r.code == 0);
    const std::string protocol = oracle::slurp(d.file("protocol.txt"));
    CHECK(protocol.rfind(kinfit::format_protocol_header(), 0) == 0);
    CHECK(protocol.find("incompatibility factor:") != std::string::npos);
    CHECK(r.out.find(protocol.substr(0, 200)) == 0);
    CHECK(oracle::slurp(d.file("statistics.csv")).rfind("parameter,estimate,std_abs,std_pct\nk,", 0) == 0);
    CHECK(fs::exists(d.file("parameters.txt")));
    CHECK(fs::exists(d.file("statistics.txt")));
    // Final Normx is below xtol: the '.' row.
    const auto dot = protocol.find("  .  ");
    REQUIRE(dot != std::string::npos);
    CHECK(std::stod(protocol.substr(dot + 5, 12)) <= 1e-6);
}

TEST_CASE("outputs are deterministic") {
    TempDir a("det1"), b("det2");
    for (const auto* dir : {&a, &b})
        REQUIRE(call({"fit", "--model", models + "/chain.model", "--data", models + "/chain_data.csv", "--add-noise",
                      "0.05", "--seed", "11", "--out", dir->path.string()})
                    .code == 0);
    for (const char* f : {"protocol.txt", "statistics.txt", "statistics.csv", "parameters.txt"})
        CHECK(oracle::slurp(a.file(f)) == oracle::slurp(b.file(f)));
}

TEST_CASE("rank reports deficiency of the product model") {
    const auto r = call({"rank", "--model", models + "/product.model", "--data", models + "/product_data.csv", "--out",
                         TempDir("rank").path.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("rank = 1\n") != std::string::npos);
    CHECK(r.out.find("rank deficient (delta*sc >= 1): yes") != std::string::npos);
}

TEST_CASE("exit codes") {
    TempDir d("codes");
    const std::string out = d.path.string();
    SUBCASE("usage") {
        CHECK(call({}).code == 2);
        CHECK(call({"bogus"}).code == 2);
        CHECK(call({"fit", "--model", models + "/decay.model"}).code == 2);
        CHECK(call({"--help"}).code == 0);
    }
    SUBCASE("missing file") {
        const auto r = call({"fit", "--model", models + "/decay.model", "--data", d.file("none.csv"), "--out", out});
        CHECK(r.code == 2);
        CHECK(r.err.find("cannot open data file") != std::string::npos);
        CHECK(call({"simulate", "--model", d.file("none.model"), "--t-end", "1", "--out", out}).code == 2);
    }
    SUBCASE("unknown observable") {
        d.write("bad.csv", "experiment,time,observable,value,tolerance\n1,1,Q,0.5,\n");
        const auto r = call({"fit", "--model", models + "/decay.model", "--data", d.file("bad.csv"), "--out", out});
        CHECK(r.code == 2);
        CHECK(r.err.find("unknown observable 'Q'") != std::string::npos);
    }
    SUBCASE("no data") {
        d.write("empty.csv", "experiment,time,observable,value,tolerance\n1,1,A,nan,\n");
        CHECK(call({"fit", "--model", models + "/decay.model", "--data", d.file("empty.csv"), "--out", out}).code == 2);
    }
    SUBCASE("integration failure") {
        d.write("blow.model", "@species\nA = 1\n@parameters\nk = 1\n@reactions\n2A -> 3A rate k\n");
        const auto r = call({"simulate", "--model", d.file("blow.model"), "--t-end", "2", "--out", out});
        CHECK(r.code == 3);
        CHECK(r.err.find("integration failure") != std::string::npos);
    }
    SUBCASE("non-convergence") {
        const auto r = call({"fit", "--model", models + "/decay.model", "--data", models + "/decay_data.csv",
                             "--max-iter", "1", "--out", out});
        CHECK(r.code == 4);
        CHECK(r.err.find("maximum number of iterations") != std::string::npos);
    }
}
