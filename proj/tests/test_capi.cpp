#include <mplreg/mplreg.h>

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / "mplreg_tests" / "capi" / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(MPLREG_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string take(char* s)
{
    std::string out = s;
    mplreg_string_free(s);
    return out;
}

const char* kQuick = R"({"cascades": 1, "iters_affine": 15, "iters_cascade": 10, "preprocess": {"enabled": false}})";

} // namespace

TEST_CASE("errors carry a status and a message")
{
    mplreg_volume* v = nullptr;
    CHECK(mplreg_volume_read("/no/such/file.nii", 0, &v) == MPLREG_ERR_IO);
    CHECK(v == nullptr);
    CHECK(std::string(mplreg_last_error()).find("/no/such/file.nii") != std::string::npos);
    CHECK(std::string(mplreg_status_name(MPLREG_ERR_IO)) == "I/O error");
    CHECK(std::string(mplreg_status_name(mplreg_status(55))) == "unknown");
    CHECK(mplreg_volume_read(nullptr, 0, &v) == MPLREG_ERR_INVALID_ARGUMENT);

    mplreg_config* c = nullptr;
    CHECK(mplreg_config_parse("{\"bogus\": 1}", &c) == MPLREG_ERR_CONFIG);
    CHECK(mplreg_config_parse("not json", &c) == MPLREG_ERR_CONFIG);
    CHECK(mplreg_config_parse("{}", &c) == MPLREG_OK);
    CHECK(std::string(mplreg_last_error()).empty());
    CHECK(mplreg_config_set_cascades(c, -1) == MPLREG_ERR_CONFIG);
    mplreg_config_free(c);

    const int dims[3] = {2, 2, 2};
    const double bad[8] = {0, 0, 0, 0, 0, 0, 0, 2.0};
    CHECK(mplreg_volume_create(dims, nullptr, nullptr, bad, 1, &v) == MPLREG_ERR_DOMAIN);
    CHECK(std::string(mplreg_version()) == "1.0.0");
}

TEST_CASE("metrics through the C API")
{
    const int dims[3] = {10, 10, 10};
    std::vector<double> a(1000, 0.0), b(1000, 0.0);
    for (int k = 2; k < 6; ++k)
        for (int j = 2; j < 6; ++j)
            for (int i = 2; i < 6; ++i) {
                a[std::size_t(k * 100 + j * 10 + i)] = 1.0;
                b[std::size_t(k * 100 + j * 10 + i + 2)] = 1.0;
            }
    mplreg_volume *va = nullptr, *vb = nullptr;
    REQUIRE(mplreg_volume_create(dims, nullptr, nullptr, a.data(), 1, &va) == MPLREG_OK);
    REQUIRE(mplreg_volume_create(dims, nullptr, nullptr, b.data(), 1, &vb) == MPLREG_OK);
    mplreg_field* zero = nullptr;
    REQUIRE(mplreg_field_create(dims, nullptr, nullptr, &zero) == MPLREG_OK);
    mplreg_metrics m{};
    REQUIRE(mplreg_metrics_compute(va, vb, zero, &m) == MPLREG_OK);
    CHECK(m.dice == 0.5);
    CHECK(m.pct_neg_jacobian == 0.0);
    char* s = nullptr;
    REQUIRE(mplreg_metrics_json(&m, 0, &s) == MPLREG_OK);
    CHECK(take(s).find("\"dice\": 0.5") != std::string::npos);
    REQUIRE(mplreg_metrics_markdown("X", &m, 1, &s) == MPLREG_OK);
    CHECK(take(s).find("| X | 0.500 | 0.00 |") != std::string::npos);

    const int other[3] = {10, 10, 9};
    mplreg_volume* vc = nullptr;
    REQUIRE(mplreg_volume_create(other, nullptr, nullptr, nullptr, 1, &vc) == MPLREG_OK);
    CHECK(mplreg_metrics_compute(va, vc, nullptr, &m) == MPLREG_ERR_GRID_MISMATCH);
    mplreg_volume_free(va);
    mplreg_volume_free(vb);
    mplreg_volume_free(vc);
    mplreg_field_free(zero);
}

TEST_CASE("CLI results equal library results")
{
    const fs::path dir = scratch("case");
    mplreg_phantom* p = nullptr;
    REQUIRE(mplreg_phantom_generate(12, R"({"dims": [24, 24, 24]})", &p) == MPLREG_OK);
    REQUIRE(mplreg_phantom_write(p, dir.c_str()) == MPLREG_OK);

    mplreg_config* c = nullptr;
    REQUIRE(mplreg_config_parse(kQuick, &c) == MPLREG_OK);
    mplreg_result* r = nullptr;
    REQUIRE(mplreg_register(mplreg_phantom_volume(p, MPLREG_PHANTOM_FIXED),
                            mplreg_phantom_volume(p, MPLREG_PHANTOM_FIXED_LABEL),
                            mplreg_phantom_volume(p, MPLREG_PHANTOM_MOVING),
                            mplreg_phantom_volume(p, MPLREG_PHANTOM_MOVING_LABEL), c, nullptr, nullptr,
                            &r) == MPLREG_OK);
    CHECK_FALSE(mplreg_result_is_partial(r));
    CHECK(mplreg_result_stage_count(r) == 2);
    mplreg_metrics m{};
    mplreg_result_metrics(r, &m);
    char* s = nullptr;
    REQUIRE(mplreg_metrics_json(&m, 0, &s) == MPLREG_OK);
    const std::string library = take(s) + "\n";

    const fs::path cfg = scratch("quick.json");
    std::ofstream(cfg) << kQuick;
    const fs::path out = scratch("run");
    REQUIRE(run_cli("register -q --case " + dir.string() + " --config " + cfg.string() + " --out " +
                    out.string()) == 0);
    CHECK(read_text(out / "metrics.json") == library);
    for (const char* f : {"warped_moving.nii", "warped_label.nii", "field.nii", "trace.csv", "manifest.json"})
        CHECK(fs::exists(out / f));

    // replaying the manifest reproduces the metrics byte for byte
    const fs::path again = scratch("replay");
    REQUIRE(run_cli("register -q --replay " + (out / "manifest.json").string() + " --out " + again.string()) == 0);
    CHECK(read_text(again / "metrics.json") == library);

    // the metrics subcommand agrees with the library on the phantom labels
    mplreg_metrics pm{};
    REQUIRE(mplreg_metrics_compute(mplreg_phantom_volume(p, MPLREG_PHANTOM_MOVING_LABEL),
                                   mplreg_phantom_volume(p, MPLREG_PHANTOM_FIXED_LABEL), nullptr, &pm) == MPLREG_OK);
    const fs::path mj = scratch("m.json");
    REQUIRE(run_cli("metrics --case " + dir.string() + " --out " + mj.string()) == 0);
    REQUIRE(mplreg_metrics_json(&pm, 0, &s) == MPLREG_OK);
    CHECK(read_text(mj) == take(s) + "\n");

    // companion carried through the result
    mplreg_volume* carried = nullptr;
    REQUIRE(mplreg_result_apply(r, mplreg_phantom_volume(p, MPLREG_PHANTOM_COMPANION), &carried) == MPLREG_OK);
    mplreg_volume* direct = nullptr;
    REQUIRE(mplreg_field_warp(mplreg_result_field(r), mplreg_phantom_volume(p, MPLREG_PHANTOM_COMPANION), &direct) ==
            MPLREG_OK);
    CHECK(std::equal(mplreg_volume_data(carried), mplreg_volume_data(carried) + 24 * 24 * 24,
                     mplreg_volume_data(direct)));
    mplreg_volume_free(carried);
    mplreg_volume_free(direct);

    REQUIRE(mplreg_result_trace_csv(r, &s) == MPLREG_OK);
    CHECK(take(s).rfind("stage,iter,mi,gpl,reg,total,pct_neg_jacobian\n0,0,", 0) == 0);
    mplreg_result_free(r);
    mplreg_config_free(c);
    mplreg_phantom_free(p);
}

TEST_CASE("CLI exit codes")
{
    const fs::path dir = scratch("case2");
    REQUIRE(run_cli("phantom --seed 2 --size 16 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "phantom.json"));
    CHECK(run_cli("") == 2);
    CHECK(run_cli("frobnicate") == 2);
    const fs::path out = scratch("noout");
    CHECK(run_cli("register -q --case " + dir.string() + " --moving-label " + (dir / "nope.nii").string() +
                  " --out " + out.string()) == 2);
    CHECK_FALSE(fs::exists(out));
    const fs::path cfg = scratch("bad.json");
    std::ofstream(cfg) << R"({"cascades": -2})";
    CHECK(run_cli("register -q --case " + dir.string() + " --config " + cfg.string() + " --out " + out.string()) ==
          2);
    CHECK(run_cli("check-grad --size 9") == 2);
    CHECK(run_cli("check-grad --size 4") == 0);
    CHECK(run_cli("overlay --fixed " + (dir / "fixed.nii").string() + " --moving " + (dir / "moving.nii").string() +
                  " --index 40 --out " + scratch("o.png").string()) == 2);
    CHECK(run_cli("overlay --fixed " + (dir / "fixed.nii").string() + " --moving " + (dir / "moving.nii").string() +
                  " --out " + scratch("o.png").string()) == 0);
    CHECK(run_cli("metrics --warped-label " + (dir / "moving_label.nii").string() + " --fixed-label " +
                  (dir / "fixed_label.nii").string()) == 0);
}

TEST_CASE("divergence leaves partial artifacts and exit code 3")
{
    const fs::path dir = scratch("case3");
    REQUIRE(run_cli("phantom --seed 3 --size 16 --out " + dir.string()) == 0);
    const fs::path cfg = scratch("diverge.json");
    std::ofstream(cfg) << R"({"cascades": 1, "iters_affine": 5, "iters_cascade": 5, "affine_step_size": 1e300,
                            "preprocess": {"enabled": false}})";
    const fs::path out = scratch("diverged");
    CHECK(run_cli("register -q --case " + dir.string() + " --config " + cfg.string() + " --out " + out.string()) ==
          3);
    CHECK(fs::exists(out / "metrics.json"));
    CHECK(read_text(out / "manifest.json").find("\"status\": \"diverged\"") != std::string::npos);
}

TEST_CASE("cascades zero via the CLI")
{
    const fs::path dir = scratch("case4");
    REQUIRE(run_cli("phantom --seed 4 --size 16 --out " + dir.string()) == 0);
    const fs::path out = scratch("affine_only");
    REQUIRE(run_cli("register -q --no-preprocess --cascades 0 --case " + dir.string() + " --out " + out.string()) == 0);
    const std::string trace = read_text(out / "trace.csv");
    CHECK(trace.find("\n1,") == std::string::npos);
}
