// Command-line front end. Talks to the library only through mplreg.h.

#include <mplreg/mplreg.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kDiverged = 3 };

struct Failure {
    int code;
    std::string message;
};

int exit_code(mplreg_status s)
{
    if (s == MPLREG_ERR_DIVERGENCE || s == MPLREG_ERR_GENERATION)
        return kDiverged;
    return kUsage;
}

void check(mplreg_status s, const std::string& what)
{
    if (s != MPLREG_OK)
        throw Failure{exit_code(s), what + ": " + mplreg_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using VolumePtr = std::unique_ptr<mplreg_volume, Deleter<mplreg_volume, mplreg_volume_free>>;
using FieldPtr = std::unique_ptr<mplreg_field, Deleter<mplreg_field, mplreg_field_free>>;
using ConfigPtr = std::unique_ptr<mplreg_config, Deleter<mplreg_config, mplreg_config_free>>;
using ResultPtr = std::unique_ptr<mplreg_result, Deleter<mplreg_result, mplreg_result_free>>;
using PhantomPtr = std::unique_ptr<mplreg_phantom, Deleter<mplreg_phantom, mplreg_phantom_free>>;

std::string take(char* s)
{
    std::string out = s ? s : "";
    mplreg_string_free(s);
    return out;
}

VolumePtr load_volume(const std::string& path, bool label)
{
    mplreg_volume* v = nullptr;
    check(mplreg_volume_read(path.c_str(), label ? 1 : 0, &v), path);
    return VolumePtr(v);
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out)
        throw Failure{kUsage, "cannot write " + path.string()};
}

std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json parse_json(const std::string& text) { return json::parse(text); }

// register

struct RegisterArgs {
    std::string fixed, moving, fixed_label, moving_label, config, out, case_dir, replay, companion;
    std::optional<int> cascades;
    std::optional<std::uint64_t> seed;
    bool no_preprocess = false;
    bool quiet = false;
};

void progress_printer(const mplreg_progress* p, void*)
{
    if (p->iteration % 10 == 0)
        std::fprintf(stderr, "stage %d iter %3d  mi %.5f gpl %.5f reg %.6f total %.5f  %%J %.3f\n", p->stage,
                     p->iteration, p->mi, p->gpl, p->reg, p->total, p->pct_neg_jacobian);
}

int cmd_register(RegisterArgs a)
{
    std::string config_text;
    if (!a.replay.empty()) {
        std::ifstream in(a.replay);
        if (!in)
            throw Failure{kUsage, "cannot read manifest " + a.replay};
        json m;
        try {
            m = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Failure{kUsage, a.replay + ": " + e.what()};
        }
        const auto& inputs = m.at("inputs");
        a.fixed = inputs.at("fixed");
        a.moving = inputs.at("moving");
        a.fixed_label = inputs.at("fixed_label");
        a.moving_label = inputs.at("moving_label");
        a.companion = inputs.value("companion", std::string());
        config_text = m.at("config").dump();
    } else if (!a.case_dir.empty()) {
        const fs::path d(a.case_dir);
        auto fill = [&](std::string& s, const char* name) {
            if (s.empty())
                s = (d / name).string();
        };
        fill(a.fixed, "fixed.nii");
        fill(a.moving, "moving.nii");
        fill(a.fixed_label, "fixed_label.nii");
        fill(a.moving_label, "moving_label.nii");
    }
    for (const auto& [name, value] : {std::pair{"--fixed", &a.fixed}, {"--moving", &a.moving},
                                      {"--fixed-label", &a.fixed_label}, {"--moving-label", &a.moving_label}})
        if (value->empty())
            throw Failure{kUsage, std::string(name) + " is required (or --case / --replay)"};

    // Inputs are loaded before anything is written so a bad path leaves no outputs.
    ConfigPtr config;
    {
        mplreg_config* c = nullptr;
        if (!config_text.empty())
            check(mplreg_config_parse(config_text.c_str(), &c), a.replay);
        else if (a.config.empty())
            check(mplreg_config_default(&c), "config");
        else
            check(mplreg_config_load(a.config.c_str(), &c), a.config);
        config.reset(c);
    }
    if (a.cascades)
        check(mplreg_config_set_cascades(config.get(), *a.cascades), "--cascades");
    if (a.seed)
        check(mplreg_config_set_seed(config.get(), *a.seed), "--seed");
    if (a.no_preprocess)
        check(mplreg_config_set_preprocess(config.get(), 0), "--no-preprocess");
    VolumePtr fixed = load_volume(a.fixed, false);
    VolumePtr moving = load_volume(a.moving, false);
    VolumePtr fixed_label = load_volume(a.fixed_label, true);
    VolumePtr moving_label = load_volume(a.moving_label, true);
    VolumePtr companion;
    if (!a.companion.empty())
        companion = load_volume(a.companion, false);

    const std::string started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    mplreg_result* raw = nullptr;
    const mplreg_status st = mplreg_register(fixed.get(), fixed_label.get(), moving.get(), moving_label.get(),
                                             config.get(), a.quiet ? nullptr : progress_printer, nullptr, &raw);
    ResultPtr result(raw);
    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (st != MPLREG_OK && st != MPLREG_ERR_DIVERGENCE)
        check(st, "register");
    const std::string divergence = st == MPLREG_ERR_DIVERGENCE ? mplreg_last_error() : "";

    const fs::path out(a.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec)
        throw Failure{kUsage, "cannot create " + out.string() + ": " + ec.message()};
    const fs::path warped = out / "warped_moving.nii";
    const fs::path warped_label = out / "warped_label.nii";
    const fs::path field = out / "field.nii";
    const fs::path trace = out / "trace.csv";
    const fs::path metrics = out / "metrics.json";
    check(mplreg_volume_write(mplreg_result_warped(result.get()), warped.c_str()), warped.string());
    check(mplreg_volume_write(mplreg_result_warped_label(result.get()), warped_label.c_str()),
          warped_label.string());
    check(mplreg_field_write(mplreg_result_field(result.get()), field.c_str()), field.string());
    char* s = nullptr;
    check(mplreg_result_trace_csv(result.get(), &s), "trace");
    write_text(trace, take(s));
    mplreg_metrics m{};
    mplreg_result_metrics(result.get(), &m);
    check(mplreg_metrics_json(&m, 0, &s), "metrics");
    write_text(metrics, take(s) + "\n");

    json outputs = {{"warped_moving", warped.string()},
                    {"warped_label", warped_label.string()},
                    {"field", field.string()},
                    {"trace", trace.string()},
                    {"metrics", metrics.string()}};
    if (companion) {
        mplreg_volume* cw = nullptr;
        check(mplreg_result_apply(result.get(), companion.get(), &cw), "companion");
        VolumePtr cwp(cw);
        const fs::path cpath = out / "companion_warped.nii";
        check(mplreg_volume_write(cwp.get(), cpath.c_str()), cpath.string());
        outputs["companion_warped"] = cpath.string();
    }

    check(mplreg_config_to_json(config.get(), &s), "config");
    json manifest;
    manifest["tool"] = "mplreg";
    manifest["version"] = mplreg_version();
    manifest["command"] = "register";
    manifest["status"] = divergence.empty() ? "ok" : "diverged";
    if (!divergence.empty())
        manifest["message"] = divergence;
    manifest["seed"] = mplreg_config_seed(config.get());
    manifest["threads"] = mplreg_get_threads();
    manifest["config"] = parse_json(take(s));
    json inputs = {{"fixed", fs::absolute(a.fixed).string()},
                   {"moving", fs::absolute(a.moving).string()},
                   {"fixed_label", fs::absolute(a.fixed_label).string()},
                   {"moving_label", fs::absolute(a.moving_label).string()}};
    if (!a.companion.empty())
        inputs["companion"] = fs::absolute(a.companion).string();
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;
    manifest["started_utc"] = started;
    manifest["finished_utc"] = utc_now();
    manifest["runtime_seconds"] = runtime;
    write_text(out / "manifest.json", manifest.dump(2) + "\n");

    std::printf("dice %.4f  %%J %.3f  rms %.3f  (%.1f s)\n", m.dice, m.pct_neg_jacobian, m.field_rms, runtime);
    if (!divergence.empty()) {
        std::fprintf(stderr, "diverged: %s\n", divergence.c_str());
        return kDiverged;
    }
    return kOk;
}

// metrics

struct MetricsArgs {
    std::string warped_label, fixed_label, field, out, method = "MPL", case_dir;
};

int cmd_metrics(MetricsArgs a)
{
    if (!a.case_dir.empty()) {
        const fs::path d(a.case_dir);
        if (a.warped_label.empty())
            a.warped_label = (d / "moving_label.nii").string();
        if (a.fixed_label.empty())
            a.fixed_label = (d / "fixed_label.nii").string();
    }
    if (a.warped_label.empty() || a.fixed_label.empty())
        throw Failure{kUsage, "--warped-label and --fixed-label are required (or --case)"};
    VolumePtr w = load_volume(a.warped_label, true);
    VolumePtr f = load_volume(a.fixed_label, true);
    FieldPtr field;
    if (!a.field.empty()) {
        mplreg_field* p = nullptr;
        check(mplreg_field_read(a.field.c_str(), &p), a.field);
        field.reset(p);
    }
    mplreg_metrics m{};
    check(mplreg_metrics_compute(w.get(), f.get(), field.get(), &m), "metrics");
    char* s = nullptr;
    check(mplreg_metrics_json(&m, 0, &s), "metrics");
    const std::string text = take(s);
    check(mplreg_metrics_markdown(a.method.c_str(), &m, 1, &s), "metrics");
    const std::string md = take(s);
    std::printf("%s\n%s\n", text.c_str(), md.c_str());
    if (!a.out.empty())
        write_text(a.out, text + "\n");
    return kOk;
}

// phantom

struct PhantomArgs {
    std::uint64_t seed = 0;
    std::string out, params;
    std::optional<int> size;
    std::optional<double> amplitude, smoothness, noise, gamma;
};

json phantom_overrides(const std::string& params_file, const std::optional<int>& size,
                       const std::optional<double>& amplitude, const std::optional<double>& smoothness,
                       const std::optional<double>& noise, const std::optional<double>& gamma)
{
    json p = json::object();
    if (!params_file.empty()) {
        std::ifstream in(params_file);
        if (!in)
            throw Failure{kUsage, "cannot read " + params_file};
        try {
            p = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Failure{kUsage, params_file + ": " + e.what()};
        }
    }
    if (size)
        p["dims"] = {*size, *size, *size};
    if (amplitude)
        p["amplitude"] = *amplitude;
    if (smoothness)
        p["smoothness"] = *smoothness;
    if (noise)
        p["noise_sigma"] = *noise;
    if (gamma)
        p["gamma"] = *gamma;
    return p;
}

int cmd_phantom(const PhantomArgs& a)
{
    const std::string params =
        phantom_overrides(a.params, a.size, a.amplitude, a.smoothness, a.noise, a.gamma).dump();
    mplreg_phantom* p = nullptr;
    check(mplreg_phantom_generate(a.seed, params.c_str(), &p), "phantom");
    PhantomPtr ph(p);
    check(mplreg_phantom_write(ph.get(), a.out.c_str()), a.out);
    mplreg_metrics m{};
    check(mplreg_metrics_compute(mplreg_phantom_volume(ph.get(), MPLREG_PHANTOM_MOVING_LABEL),
                                 mplreg_phantom_volume(ph.get(), MPLREG_PHANTOM_FIXED_LABEL), nullptr, &m),
          "phantom");
    std::printf("phantom seed %llu written to %s (unregistered dice %.4f)\n", (unsigned long long)a.seed,
                a.out.c_str(), m.dice);
    return kOk;
}

// check-grad

int cmd_check_grad(std::uint64_t seed, int size)
{
    double worst = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    auto report = [](const char* name, size_t n, double err, void*) {
        std::printf("%-28s %6zu params  max rel error %.3e  %s\n", name, n, err,
                    err < mplreg_gradient_tolerance() ? "ok" : "FAIL");
    };
    check(mplreg_check_gradients(seed, size, report, nullptr, &worst), "check-grad");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("worst %.3e (tolerance %.0e), %.2f s\n", worst, mplreg_gradient_tolerance(), secs);
    return worst < mplreg_gradient_tolerance() ? kOk : kCheckFailed;
}

// overlay

struct OverlayArgs {
    std::string fixed, moving, out;
    int axis = 2;
    int index = -1;
    std::optional<double> window, level;
    double quantile = 0.9;
};

int cmd_overlay(const OverlayArgs& a)
{
    VolumePtr f = load_volume(a.fixed, false);
    VolumePtr m = load_volume(a.moving, false);
    mplreg_overlay_options o = mplreg_overlay_defaults();
    o.axis = a.axis;
    o.index = a.index;
    o.edge_quantile = a.quantile;
    if (a.window || a.level) {
        o.use_window = 1;
        o.window = a.window.value_or(1.0);
        o.level = a.level.value_or(0.5);
    }
    int w = 0, h = 0;
    check(mplreg_overlay_png(f.get(), m.get(), &o, a.out.c_str(), &w, &h), "overlay");
    std::printf("%s: %dx%d\n", a.out.c_str(), w, h);
    return kOk;
}

// suite

struct SuiteArgs {
    std::uint64_t seed = 0;
    int count = 10;
    int jobs = 1;
    std::string config, out, markdown, params;
    std::optional<int> cascades, size;
    std::optional<double> amplitude, smoothness;
};

int cmd_suite(const SuiteArgs& a)
{
    mplreg_config* c = nullptr;
    if (a.config.empty())
        check(mplreg_config_default(&c), "config");
    else
        check(mplreg_config_load(a.config.c_str(), &c), a.config);
    ConfigPtr config(c);
    if (a.cascades)
        check(mplreg_config_set_cascades(config.get(), *a.cascades), "--cascades");
    const std::string params =
        phantom_overrides(a.params, a.size, a.amplitude, a.smoothness, std::nullopt, std::nullopt).dump();
    auto on_case = [](const mplreg_suite_case* sc, void*) {
        std::printf("case %3llu  baseline %.4f  dice %.4f  %%J %.3f  %.1f s\n", (unsigned long long)sc->seed,
                    sc->baseline_dice, sc->dice, sc->pct_neg_jacobian, sc->runtime_seconds);
        std::fflush(stdout);
    };
    char* report = nullptr;
    char* md = nullptr;
    check(mplreg_suite_run(a.seed, a.count, params.c_str(), config.get(), a.jobs, on_case, nullptr, &report, &md),
          "suite");
    const std::string report_text = take(report);
    const std::string table = take(md);
    std::printf("\n%s", table.c_str());
    if (!a.out.empty())
        write_text(a.out, report_text + "\n");
    if (!a.markdown.empty())
        write_text(a.markdown, table);
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multimodal deformable registration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mplreg_version()));
    int threads = 0;
    app.add_option("--threads", threads, "Data-parallel workers (0: MPLREG_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);

    RegisterArgs ra;
    auto* reg = app.add_subcommand("register", "Preprocess and register a moving image to a fixed image");
    reg->add_option("--fixed", ra.fixed, "Fixed image (NIfTI)");
    reg->add_option("--moving", ra.moving, "Moving image (NIfTI)");
    reg->add_option("--fixed-label", ra.fixed_label, "Fixed lung mask");
    reg->add_option("--moving-label", ra.moving_label, "Moving lung mask");
    reg->add_option("--case", ra.case_dir, "Phantom case directory supplying the four inputs");
    reg->add_option("--companion", ra.companion, "Volume co-aligned with the moving image to carry along");
    reg->add_option("--config", ra.config, "JSON config");
    reg->add_option("--cascades", ra.cascades, "Override the number of cascades")->check(CLI::NonNegativeNumber);
    reg->add_option("--seed", ra.seed, "Override the config seed");
    reg->add_flag("--no-preprocess", ra.no_preprocess, "Use the inputs as they are (same grid required)");
    reg->add_option("--replay", ra.replay, "Re-run from a manifest.json");
    reg->add_flag("-q,--quiet", ra.quiet, "No per-iteration progress");
    reg->add_option("--out", ra.out, "Output directory")->required();

    MetricsArgs ma;
    auto* met = app.add_subcommand("metrics", "Dice and %J for a warped label");
    met->add_option("--warped-label", ma.warped_label, "Warped moving label");
    met->add_option("--fixed-label", ma.fixed_label, "Fixed label");
    met->add_option("--case", ma.case_dir, "Phantom case directory (unregistered labels)");
    met->add_option("--field", ma.field, "Displacement field for %J");
    met->add_option("--method", ma.method, "Row name for the Markdown table");
    met->add_option("--out", ma.out, "Write the JSON here too");

    PhantomArgs pa;
    auto* ph = app.add_subcommand("phantom", "Write a synthetic phantom case");
    ph->add_option("--seed", pa.seed, "Seed")->required();
    ph->add_option("--out", pa.out, "Case directory")->required();
    ph->add_option("--params", pa.params, "JSON file with generator parameters");
    ph->add_option("--size", pa.size, "Cube edge in voxels")->check(CLI::Range(8, 512));
    ph->add_option("--amplitude", pa.amplitude, "Max displacement, voxels");
    ph->add_option("--smoothness", pa.smoothness, "Field smoothing sigma, voxels");
    ph->add_option("--noise", pa.noise, "Noise sigma");
    ph->add_option("--gamma", pa.gamma, "Modality B exponent");

    std::uint64_t grad_seed = 0;
    int grad_size = 6;
    auto* cg = app.add_subcommand("check-grad", "Compare analytic gradients with finite differences");
    cg->add_option("--seed", grad_seed, "Seed");
    cg->add_option("--size", grad_size, "Cube edge (4..8)")->check(CLI::Range(4, 8));

    OverlayArgs oa;
    auto* ov = app.add_subcommand("overlay", "PNG of a fixed slice with moving-image edges");
    ov->add_option("--fixed", oa.fixed, "Fixed image")->required();
    ov->add_option("--moving", oa.moving, "Warped moving image")->required();
    ov->add_option("--out", oa.out, "PNG path")->required();
    ov->add_option("--axis", oa.axis, "Slice axis")->check(CLI::Range(0, 2));
    ov->add_option("--index", oa.index, "Slice index (default middle)");
    ov->add_option("--window", oa.window, "Display window");
    ov->add_option("--level", oa.level, "Display level");
    ov->add_option("--edge-quantile", oa.quantile, "Edge threshold quantile")->check(CLI::Range(0.0, 1.0));

    SuiteArgs sa;
    auto* su = app.add_subcommand("suite", "Register a batch of phantom cases and report means");
    su->add_option("--seed", sa.seed, "First seed");
    su->add_option("--count", sa.count, "Cases")->check(CLI::PositiveNumber);
    su->add_option("--jobs", sa.jobs, "Cases run at once")->check(CLI::PositiveNumber);
    su->add_option("--config", sa.config, "JSON config");
    su->add_option("--cascades", sa.cascades, "Override the number of cascades")->check(CLI::NonNegativeNumber);
    su->add_option("--params", sa.params, "JSON file with generator parameters");
    su->add_option("--size", sa.size, "Cube edge in voxels")->check(CLI::Range(8, 512));
    su->add_option("--amplitude", sa.amplitude, "Max displacement, voxels");
    su->add_option("--smoothness", sa.smoothness, "Field smoothing sigma, voxels");
    su->add_option("--out", sa.out, "Report JSON");
    su->add_option("--markdown", sa.markdown, "Report table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    if (threads > 0)
        mplreg_set_threads(threads);

    try {
        if (*reg)
            return cmd_register(ra);
        if (*met)
            return cmd_metrics(ma);
        if (*ph)
            return cmd_phantom(pa);
        if (*cg)
            return cmd_check_grad(grad_seed, grad_size);
        if (*ov)
            return cmd_overlay(oa);
        if (*su)
            return cmd_suite(sa);
    } catch (const Failure& f) {
        std::fprintf(stderr, "mplreg: %s\n", f.message.c_str());
        return f.code;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "mplreg: %s\n", e.what());
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "mplreg: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
