#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <seectl/adjoint.hpp>
#include <seectl/control.hpp>
#include <seectl/errors.hpp>
#include <seectl/grid.hpp>
#include <seectl/io.hpp>
#include <seectl/noise.hpp>
#include <seectl/problem.hpp>

using namespace seectl;
using Catch::Matchers::ContainsSubstring;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
    fs::path root;

    explicit TempDir(const std::string& tag) {
        root = fs::temp_directory_path() / ("seectl_io_" + tag);
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempDir() { fs::remove_all(root); }

    std::string file(const std::string& name) const { return (root / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void dump(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("config hash matches the fnv reference vectors", "[io]") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("hello") == "a430d84680aabd0b");
    // Stable and sensitive: same input same hash, one byte flips it.
    CHECK(fnv1a_hex("hello") == fnv1a_hex("hello"));
    CHECK(fnv1a_hex("hellp") != fnv1a_hex("hello"));
}

TEST_CASE("noise cache round trips bit exactly", "[io]") {
    TempDir tmp("noise_roundtrip");
    const NoiseEnsemble noise =
        sample_noise(TimeGrid{1.0, 8}, MarkSpace{{1.0, -0.5}, {2.0, 0.25}}, 5, 42);

    const std::string path = tmp.file("noise.bin");
    write_noise_cache(path, noise);
    const NoiseEnsemble back = read_noise_cache(path);

    CHECK(back.seed() == noise.seed());
    CHECK(back.grid().horizon == noise.grid().horizon);
    CHECK(back.grid().steps == noise.grid().steps);
    CHECK(back.paths() == noise.paths());
    REQUIRE(back.marks().size() == 2);
    CHECK(back.marks().atoms == noise.marks().atoms);
    CHECK(back.marks().intensities == noise.marks().intensities);
    CHECK(back.dw_data() == noise.dw_data());
    CHECK(back.jump_data() == noise.jump_data());

    // Rewriting the loaded ensemble reproduces the file byte for byte.
    const std::string again = tmp.file("noise2.bin");
    write_noise_cache(again, back);
    CHECK(slurp(again) == slurp(path));
}

TEST_CASE("noise cache rejects corrupted files", "[io]") {
    TempDir tmp("noise_corrupt");
    const NoiseEnsemble noise = sample_noise(TimeGrid{0.5, 4}, MarkSpace{{1.0}, {1.0}}, 3, 7);
    const std::string good = tmp.file("good.bin");
    write_noise_cache(good, noise);
    const std::string bytes = slurp(good);

    CHECK_THROWS_WITH(read_noise_cache(tmp.file("missing.bin")),
                      ContainsSubstring("cannot open noise cache"));

    const std::string stub = tmp.file("stub.bin");
    dump(stub, bytes.substr(0, 4));
    CHECK_THROWS_WITH(read_noise_cache(stub), ContainsSubstring("cache read truncated at magic"));

    std::string magic = bytes;
    magic[0] = 'X';
    dump(tmp.file("magic.bin"), magic);
    CHECK_THROWS_WITH(read_noise_cache(tmp.file("magic.bin")), ContainsSubstring("wrong magic"));

    std::string version = bytes;
    version[8] = 2;  // layout version lives right after the magic
    dump(tmp.file("version.bin"), version);
    CHECK_THROWS_WITH(read_noise_cache(tmp.file("version.bin")),
                      ContainsSubstring("unsupported version"));

    std::string header = bytes;
    // steps: after magic(8) + version(4) + seed(8) + horizon(8).
    header[28] = 0;
    CHECK(header[29] == 0);  // steps was small, high bytes already zero
    dump(tmp.file("header.bin"), header);
    CHECK_THROWS_WITH(read_noise_cache(tmp.file("header.bin")),
                      ContainsSubstring("header is malformed"));

    dump(tmp.file("short.bin"), bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_WITH(read_noise_cache(tmp.file("short.bin")),
                      ContainsSubstring("cache read truncated at counts"));
}

TEST_CASE("state cache round trips bit exactly", "[io]") {
    TempDir tmp("state_roundtrip");
    StateEnsemble st;
    st.grid = TimeGrid{2.0, 3};
    st.state_dim = 2;
    for (int p = 0; p < 4; ++p) {
        MatrixXd m(4, 2);
        for (int k = 0; k < 4; ++k)
            for (int i = 0; i < 2; ++i) m(k, i) = std::sin(1.0 + p) * (k + 1) / (i + 3.0);
        st.values.push_back(m);
    }

    const std::string path = tmp.file("states.bin");
    write_state_cache(path, st);
    const StateEnsemble back = read_state_cache(path);

    CHECK(back.grid.horizon == st.grid.horizon);
    CHECK(back.grid.steps == st.grid.steps);
    CHECK(back.state_dim == st.state_dim);
    REQUIRE(back.paths() == st.paths());
    for (int p = 0; p < st.paths(); ++p)
        CHECK((back.values[p] - st.values[p]).cwiseAbs().maxCoeff() == 0.0);

    std::string magic = slurp(path);
    magic[7] = '9';
    dump(tmp.file("magic.bin"), magic);
    CHECK_THROWS_WITH(read_state_cache(tmp.file("magic.bin")),
                      ContainsSubstring("state cache has wrong magic"));
}

TEST_CASE("control law text format round trips every kind", "[io]") {
    TempDir tmp("law_roundtrip");
    const VectorXd probe = (VectorXd(3) << 0.3, -1.7, 2.5).finished();

    SECTION("open loop") {
        MatrixXd table(4, 2);
        table << 1.0 / 3.0, -2.5e-7, 0.0, 1e300, -0.125, 3.75, 0.1, -0.2;
        const ControlLaw law = ControlLaw::open_loop(table);
        write_control_law(tmp.file("u.txt"), law);
        const ControlLaw back = read_control_law(tmp.file("u.txt"));

        CHECK(back.kind() == ControlLaw::Kind::open_loop);
        CHECK(back.steps() == 4);
        CHECK(back.udim() == 2);
        CHECK_FALSE(back.has_box());
        for (int k = 0; k < 4; ++k)
            CHECK((back.value(0, k, probe) - law.value(0, k, probe)).cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("linear feedback with box") {
        std::vector<MatrixXd> gains;
        std::vector<VectorXd> offsets;
        for (int k = 0; k < 3; ++k) {
            MatrixXd K(2, 3);
            K << 0.5 * k, -1.0 / 7.0, 2.0, 1e-12, k + 0.25, -3.0;
            gains.push_back(K);
            offsets.push_back(VectorXd::Constant(2, 0.125 * k - 0.7));
        }
        const VectorXd lo = VectorXd::Constant(2, -1.5);
        const VectorXd hi = VectorXd::Constant(2, 1.5);
        const ControlLaw law =
            ControlLaw::linear_feedback(gains, offsets).with_box(lo, hi);

        write_control_law(tmp.file("u.txt"), law);
        const ControlLaw back = read_control_law(tmp.file("u.txt"));

        CHECK(back.kind() == ControlLaw::Kind::linear_feedback);
        REQUIRE(back.has_box());
        CHECK((back.box_lo() - lo).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.box_hi() - hi).cwiseAbs().maxCoeff() == 0.0);
        for (int k = 0; k < 3; ++k)
            CHECK((back.value(0, k, probe) - law.value(0, k, probe)).cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("tabulated") {
        StateEnsemble shape;
        shape.grid = TimeGrid{1.0, 5};
        shape.state_dim = 1;
        shape.values.assign(3, MatrixXd::Zero(6, 1));
        const ControlLaw law = ControlLaw::tabulated(shape, 1, [](int p, int k, const auto&) {
            return VectorXd::Constant(1, std::cos(p + 0.1 * k));
        });

        write_control_law(tmp.file("u.txt"), law);
        const ControlLaw back = read_control_law(tmp.file("u.txt"));

        CHECK(back.kind() == ControlLaw::Kind::tabulated);
        const VectorXd x = VectorXd::Zero(1);
        for (int p = 0; p < 3; ++p)
            for (int k = 0; k < 5; ++k)
                CHECK((back.value(p, k, x) - law.value(p, k, x)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("control law reader rejects malformed files", "[io]") {
    TempDir tmp("law_malformed");

    CHECK_THROWS_WITH(read_control_law(tmp.file("missing.txt")),
                      ContainsSubstring("cannot open control file"));

    dump(tmp.file("header.txt"), "not-a-control 1\n");
    CHECK_THROWS_WITH(read_control_law(tmp.file("header.txt")),
                      ContainsSubstring("wrong header"));

    dump(tmp.file("kind.txt"), "seectl-control 1\nkind banana\nsteps 2\nudim 1\nbox 0\n");
    CHECK_THROWS_WITH(read_control_law(tmp.file("kind.txt")),
                      ContainsSubstring("unknown kind"));

    dump(tmp.file("short.txt"),
         "seectl-control 1\nkind open_loop\nsteps 3\nudim 1\nbox 0\n0.5\n");
    CHECK_THROWS_WITH(read_control_law(tmp.file("short.txt")),
                      ContainsSubstring("control file truncated"));
}

TEST_CASE("state csv uses the documented long layout", "[io]") {
    TempDir tmp("state_csv");
    StateEnsemble st;
    st.grid = TimeGrid{1.0, 2};
    st.state_dim = 2;
    MatrixXd m(3, 2);
    m << 0.5, -0.25, 1.0 / 3.0, 0.0, 2.0, -1.0;
    st.values.push_back(m);

    const std::string path = tmp.file("states.csv");
    write_state_csv(path, st);
    std::ifstream is(path);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "path,step,coordinate,value");

    int rows = 0;
    bool saw_third = false;
    while (std::getline(is, line)) {
        ++rows;
        // 1/3 must survive text round trip through the %.17g format.
        if (line.rfind("0,1,0,", 0) == 0) {
            saw_third = true;
            CHECK(std::stod(line.substr(6)) == 1.0 / 3.0);
        }
    }
    CHECK(rows == 6);  // one path, three grid times, two coordinates
    CHECK(saw_third);
}

TEST_CASE("trace csv content is reproducible verbatim", "[io]") {
    TempDir tmp("trace_csv");
    std::vector<OptimizeTraceRow> trace;
    trace.push_back({0, 0.5, 0.25, 1.0, 0.25});
    trace.push_back({1, -1.5, 0.125, 0.0625, 2.0});

    const std::string path = tmp.file("trace.csv");
    write_trace_csv(path, trace);
    CHECK(slurp(path) ==
          "iteration,J,stderr,residual,step_size\n"
          "0,0.5,0.25,1,0.25\n"
          "1,-1.5,0.125,0.0625,2\n");
}

TEST_CASE("adjoint csv splits into three coordinate files", "[io]") {
    TempDir tmp("adjoint_csv");
    AdjointEnsemble adj;
    adj.grid = TimeGrid{1.0, 2};
    adj.state_dim = 1;
    adj.mark_count = 2;
    adj.p.push_back((MatrixXd(3, 1) << 1.0, 2.0, 3.0).finished());
    adj.q.push_back((MatrixXd(2, 1) << 0.5, -0.5).finished());
    adj.r.push_back((MatrixXd(2, 2) << 0.1, 0.2, 0.3, 0.4).finished());

    write_adjoint_csv(tmp.file("adj"), adj);
    for (const char* suffix : {"_p.csv", "_q.csv", "_r.csv"}) {
        const std::string body = slurp(tmp.file("adj") + suffix);
        CHECK(body.rfind("path,step,coordinate,value\n", 0) == 0);
    }
    // r interleaves marks in the coordinate column.
    CHECK_THAT(slurp(tmp.file("adj_r.csv")), ContainsSubstring("0,1,1,0.4"));
}

TEST_CASE("manifest carries only reproducible fields", "[io]") {
    const nlohmann::json j =
        make_manifest("simulate", "deadbeef00112233", 7, {"states.csv", "noise.bin"});

    CHECK(j.at("format") == "seectl-manifest");
    CHECK(j.at("format_version") == 1);
    CHECK(j.at("tool_version") == "1.0.0");
    CHECK(j.at("subcommand") == "simulate");
    CHECK(j.at("config_hash") == "deadbeef00112233");
    CHECK(j.at("seed") == 7);
    REQUIRE(j.at("artifacts").size() == 2);
    CHECK(j.at("artifacts")[0] == "states.csv");

    // Nothing volatile: no timestamps, host names, or thread counts.
    CHECK_FALSE(j.contains("threads"));
    CHECK_FALSE(j.contains("timestamp"));
    CHECK(j.size() == 7);

    const nlohmann::json k =
        make_manifest("simulate", "deadbeef00112233", 7, {"states.csv", "noise.bin"});
    CHECK(j.dump() == k.dump());
}

TEST_CASE("json and text file helpers round trip", "[io]") {
    TempDir tmp("json_files");
    const nlohmann::json j = {{"alpha", 1.5}, {"name", "probe"}};
    const std::string path = tmp.file("report.json");
    write_json_file(path, j);

    const std::string text = read_text_file(path);
    CHECK(text == j.dump(2) + "\n");
    CHECK(nlohmann::json::parse(text) == j);

    CHECK_THROWS_WITH(read_text_file(tmp.file("missing.json")),
                      ContainsSubstring("cannot open file"));
}
