#include "mplreg/mplreg.h"

#include "config.hpp"
#include "gradcheck.hpp"
#include "nifti.hpp"
#include "overlay.hpp"
#include "parallel.hpp"
#include "suite.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>

using namespace mplreg;

struct mplreg_volume {
    Volume v;
    bool label = false;
};

struct mplreg_field {
    DisplacementField f;
};

struct mplreg_config {
    RunConfig c;
};

struct mplreg_result {
    RegistrationResult r;
    PreparedPair prepared;
    PreprocessSettings preprocess;
    Volume raw_moving;
    bool partial = false;
    mplreg_volume fixed, fixed_label, moving, warped, warped_label;
    mplreg_field field;
};

struct mplreg_phantom {
    PhantomCase c;
    mplreg_volume parts[6];
    mplreg_field true_field;
};

namespace {

thread_local std::string last_error;

mplreg_status to_status(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return MPLREG_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return MPLREG_ERR_IO;
    case ErrorCode::Format: return MPLREG_ERR_FORMAT;
    case ErrorCode::Unsupported: return MPLREG_ERR_UNSUPPORTED;
    case ErrorCode::GridMismatch: return MPLREG_ERR_GRID_MISMATCH;
    case ErrorCode::Domain: return MPLREG_ERR_DOMAIN;
    case ErrorCode::Config: return MPLREG_ERR_CONFIG;
    case ErrorCode::EmptyRoi: return MPLREG_ERR_EMPTY_ROI;
    case ErrorCode::NonDifferentiable: return MPLREG_ERR_NON_DIFFERENTIABLE;
    case ErrorCode::Divergence: return MPLREG_ERR_DIVERGENCE;
    case ErrorCode::Generation: return MPLREG_ERR_GENERATION;
    }
    return MPLREG_ERR_INTERNAL;
}

template <class F>
mplreg_status guarded(F&& body)
{
    last_error.clear();
    try {
        body();
        return MPLREG_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return to_status(e.code());
    } catch (const nlohmann::json::exception& e) {
        last_error = e.what();
        return MPLREG_ERR_CONFIG;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return MPLREG_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return MPLREG_ERR_INTERNAL;
    }
}

void require(const void* p, const char* what)
{
    if (!p)
        fail(ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s)
{
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out)
        throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

LabelMask as_label(const mplreg_volume* v)
{
    return image_cast<LabelTag>(v->v);
}

mplreg_volume wrap(const Volume& v, bool label) { return {v, label}; }

mplreg_volume wrap(const LabelMask& v) { return {image_cast<IntensityTag>(v), true}; }

void fill_views(mplreg_result& out)
{
    out.fixed = wrap(out.prepared.pair.fixed, false);
    out.fixed_label = wrap(out.prepared.pair.fixed_label);
    out.moving = wrap(out.prepared.pair.moving, false);
    out.warped = wrap(out.r.warped_moving, false);
    out.warped_label = wrap(out.r.warped_label);
    out.field.f = out.r.final_field;
}

mplreg_metrics to_c(const MetricsReport& m)
{
    return {m.dice, m.pct_neg_jacobian, m.field_rms, m.runtime_seconds};
}

MetricsReport from_c(const mplreg_metrics& m)
{
    MetricsReport r;
    r.dice = m.dice;
    r.pct_neg_jacobian = m.pct_neg_jacobian;
    r.field_rms = m.field_rms;
    r.runtime_seconds = m.runtime_seconds;
    return r;
}

GridMeta grid_from(const int dims[3], const double spacing[3], const double origin[3])
{
    require(dims, "dims");
    Vec3 sp{1.0, 1.0, 1.0}, org{0.0, 0.0, 0.0};
    if (spacing)
        sp = {spacing[0], spacing[1], spacing[2]};
    if (origin)
        org = {origin[0], origin[1], origin[2]};
    return make_grid({dims[0], dims[1], dims[2]}, sp, org);
}

PhantomParams params_from(const char* json_text)
{
    if (!json_text || !*json_text)
        return {};
    return parse_phantom_params(nlohmann::json::parse(json_text));
}

} // namespace

extern "C" {

const char* mplreg_version(void) { return "1.0.0"; }

const char* mplreg_status_name(mplreg_status status)
{
    switch (status) {
    case MPLREG_OK: return "ok";
    case MPLREG_ERR_INTERNAL: return "internal";
    default: break;
    }
    if (status >= MPLREG_ERR_INVALID_ARGUMENT && status <= MPLREG_ERR_GENERATION)
        return to_string(static_cast<ErrorCode>(status));
    return "unknown";
}

const char* mplreg_last_error(void) { return last_error.c_str(); }

void mplreg_set_threads(int n) { set_worker_count(n < 0 ? 0 : n); }

int mplreg_get_threads(void) { return worker_count(); }

void mplreg_string_free(char* s) { std::free(s); }

// volumes

mplreg_status mplreg_volume_read(const char* path, int is_label, mplreg_volume** out)
{
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        if (is_label)
            *out = new mplreg_volume{wrap(read_nifti_label(path))};
        else
            *out = new mplreg_volume{read_nifti(path), false};
    });
}

mplreg_status mplreg_volume_create(const int dims[3], const double spacing[3], const double origin[3],
                                   const double* data, int is_label, mplreg_volume** out)
{
    return guarded([&] {
        require(out, "out");
        *out = nullptr;
        const GridMeta g = grid_from(dims, spacing, origin);
        std::vector<double> values(g.voxel_count(), 0.0);
        if (data)
            values.assign(data, data + g.voxel_count());
        if (is_label)
            *out = new mplreg_volume{wrap(LabelMask(g, std::move(values)))};
        else
            *out = new mplreg_volume{Volume(g, std::move(values)), false};
    });
}

mplreg_status mplreg_volume_write(const mplreg_volume* v, const char* path)
{
    return guarded([&] {
        require(v, "volume");
        require(path, "path");
        write_nifti(v->v, path);
    });
}

void mplreg_volume_dims(const mplreg_volume* v, int dims[3])
{
    for (int d = 0; d < 3; ++d)
        dims[d] = v ? v->v.dims()[d] : 0;
}

void mplreg_volume_spacing(const mplreg_volume* v, double spacing[3])
{
    for (int d = 0; d < 3; ++d)
        spacing[d] = v ? v->v.grid().spacing[d] : 0.0;
}

int mplreg_volume_is_label(const mplreg_volume* v) { return v && v->label ? 1 : 0; }

const double* mplreg_volume_data(const mplreg_volume* v) { return v ? v->v.data().data() : nullptr; }

void mplreg_volume_free(mplreg_volume* v) { delete v; }

// fields

mplreg_status mplreg_field_read(const char* path, mplreg_field** out)
{
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        *out = new mplreg_field{read_field(path)};
    });
}

mplreg_status mplreg_field_create(const int dims[3], const double spacing[3], const double* flat,
                                  mplreg_field** out)
{
    return guarded([&] {
        require(out, "out");
        *out = nullptr;
        const GridMeta g = grid_from(dims, spacing, nullptr);
        if (flat)
            *out = new mplreg_field{DisplacementField::from_flat(g, {flat, 3 * g.voxel_count()})};
        else
            *out = new mplreg_field{DisplacementField(g)};
    });
}

mplreg_status mplreg_field_write(const mplreg_field* f, const char* path)
{
    return guarded([&] {
        require(f, "field");
        require(path, "path");
        write_field(f->f, path);
    });
}

void mplreg_field_dims(const mplreg_field* f, int dims[3])
{
    for (int d = 0; d < 3; ++d)
        dims[d] = f ? f->f.grid().dims[d] : 0;
}

const double* mplreg_field_component(const mplreg_field* f, int axis)
{
    if (!f || axis < 0 || axis > 2)
        return nullptr;
    return f->f.component(axis).data();
}

mplreg_status mplreg_field_warp(const mplreg_field* f, const mplreg_volume* v, mplreg_volume** out)
{
    return guarded([&] {
        require(f, "field");
        require(v, "volume");
        require(out, "out");
        *out = nullptr;
        if (v->label)
            *out = new mplreg_volume{wrap(warp(as_label(v), f->f))};
        else
            *out = new mplreg_volume{warp(v->v, f->f), false};
    });
}

void mplreg_field_free(mplreg_field* f) { delete f; }

// configuration

mplreg_status mplreg_config_default(mplreg_config** out)
{
    return guarded([&] {
        require(out, "out");
        *out = new mplreg_config{};
    });
}

mplreg_status mplreg_config_parse(const char* json_text, mplreg_config** out)
{
    return guarded([&] {
        require(json_text, "json");
        require(out, "out");
        *out = nullptr;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(json_text);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::Config, std::string("config: ") + e.what());
        }
        *out = new mplreg_config{parse_run_config(j)};
    });
}

mplreg_status mplreg_config_load(const char* path, mplreg_config** out)
{
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        *out = new mplreg_config{load_run_config(path)};
    });
}

mplreg_status mplreg_config_to_json(const mplreg_config* c, char** out)
{
    return guarded([&] {
        require(c, "config");
        require(out, "out");
        *out = dup_string(to_json(c->c).dump(2));
    });
}

mplreg_status mplreg_config_set_cascades(mplreg_config* c, int cascades)
{
    return guarded([&] {
        require(c, "config");
        if (cascades < 0)
            fail(ErrorCode::Config, "cascades must be >= 0");
        c->c.registration.cascades = cascades;
    });
}

mplreg_status mplreg_config_set_preprocess(mplreg_config* c, int enabled)
{
    return guarded([&] {
        require(c, "config");
        c->c.preprocess.enabled = enabled != 0;
    });
}

mplreg_status mplreg_config_set_seed(mplreg_config* c, uint64_t seed)
{
    return guarded([&] {
        require(c, "config");
        c->c.registration.seed = seed;
    });
}

uint64_t mplreg_config_seed(const mplreg_config* c) { return c ? c->c.registration.seed : 0; }

void mplreg_config_free(mplreg_config* c) { delete c; }

// registration

mplreg_status mplreg_register(const mplreg_volume* fixed, const mplreg_volume* fixed_label,
                              const mplreg_volume* moving, const mplreg_volume* moving_label,
                              const mplreg_config* config, mplreg_progress_fn progress, void* user,
                              mplreg_result** out)
{
    return guarded([&] {
        require(fixed, "fixed");
        require(fixed_label, "fixed_label");
        require(moving, "moving");
        require(moving_label, "moving_label");
        require(config, "config");
        require(out, "out");
        *out = nullptr;
        auto res = std::make_unique<mplreg_result>();
        res->preprocess = config->c.preprocess;
        res->raw_moving = moving->v;
        res->prepared =
            prepare_pair(fixed->v, as_label(fixed_label), moving->v, as_label(moving_label), config->c.preprocess);
        ProgressCallback cb;
        if (progress)
            cb = [&](const StageTrace& s, const TraceEntry& e) {
                const mplreg_progress p{s.index,    e.iteration, e.loss.mi, e.loss.gpl,
                                        e.loss.reg, e.loss.total, e.pct_neg_jacobian};
                progress(&p, user);
            };
        const auto start = std::chrono::steady_clock::now();
        const RegistrationPair& pair = res->prepared.pair;
        try {
            res->r = register_images(pair, config->c.registration, cb);
        } catch (const DivergenceError& e) {
            RegistrationResult& r = res->r;
            r.stages = e.stages;
            if (e.last_field)
                r.final_field = *e.last_field;
            else if (e.last_affine)
                r.final_field = affine_to_field(*e.last_affine, pair.fixed.grid());
            else
                r.final_field = DisplacementField(pair.fixed.grid());
            if (e.last_affine)
                r.affine = *e.last_affine;
            r.warped_moving = warp(pair.moving, r.final_field);
            r.warped_label = warp(pair.moving_label, r.final_field);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            r.metrics = evaluate_metrics(r.warped_label, pair.fixed_label, &r.final_field, secs);
            res->partial = true;
            fill_views(*res);
            *out = res.release();
            throw;
        }
        fill_views(*res);
        *out = res.release();
    });
}

int mplreg_result_is_partial(const mplreg_result* r) { return r && r->partial ? 1 : 0; }

const mplreg_volume* mplreg_result_fixed(const mplreg_result* r) { return r ? &r->fixed : nullptr; }

const mplreg_volume* mplreg_result_fixed_label(const mplreg_result* r) { return r ? &r->fixed_label : nullptr; }

const mplreg_volume* mplreg_result_moving(const mplreg_result* r) { return r ? &r->moving : nullptr; }

const mplreg_volume* mplreg_result_warped(const mplreg_result* r) { return r ? &r->warped : nullptr; }

const mplreg_volume* mplreg_result_warped_label(const mplreg_result* r) { return r ? &r->warped_label : nullptr; }

const mplreg_field* mplreg_result_field(const mplreg_result* r) { return r ? &r->field : nullptr; }

int mplreg_result_stage_count(const mplreg_result* r) { return r ? int(r->r.stages.size()) : 0; }

double mplreg_result_stage_dice(const mplreg_result* r, int stage)
{
    if (!r || stage < 0 || std::size_t(stage) >= r->r.stages.size())
        return 0.0;
    return r->r.stages[std::size_t(stage)].dice_after;
}

mplreg_status mplreg_result_trace_csv(const mplreg_result* r, char** out)
{
    return guarded([&] {
        require(r, "result");
        require(out, "out");
        std::string s = "stage,iter,mi,gpl,reg,total,pct_neg_jacobian\n";
        char line[256];
        for (const StageTrace& st : r->r.stages)
            for (const TraceEntry& e : st.entries) {
                std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", st.index, e.iteration,
                              e.loss.mi, e.loss.gpl, e.loss.reg, e.loss.total, e.pct_neg_jacobian);
                s += line;
            }
        *out = dup_string(s);
    });
}

mplreg_status mplreg_result_apply(const mplreg_result* r, const mplreg_volume* companion, mplreg_volume** out)
{
    return guarded([&] {
        require(r, "result");
        require(companion, "companion");
        require(out, "out");
        *out = nullptr;
        const Volume prepared = prepare_companion(companion->v, r->raw_moving, r->prepared, r->preprocess);
        *out = new mplreg_volume{apply_to_companion(r->r, prepared), false};
    });
}

void mplreg_result_free(mplreg_result* r) { delete r; }

// metrics

mplreg_status mplreg_metrics_compute(const mplreg_volume* warped_label, const mplreg_volume* fixed_label,
                                     const mplreg_field* field, mplreg_metrics* out)
{
    return guarded([&] {
        require(warped_label, "warped_label");
        require(fixed_label, "fixed_label");
        require(out, "out");
        *out = to_c(evaluate_metrics(as_label(warped_label), as_label(fixed_label), field ? &field->f : nullptr));
    });
}

void mplreg_result_metrics(const mplreg_result* r, mplreg_metrics* out)
{
    if (r && out)
        *out = to_c(r->r.metrics);
}

mplreg_status mplreg_metrics_json(const mplreg_metrics* m, int include_runtime, char** out)
{
    return guarded([&] {
        require(m, "metrics");
        require(out, "out");
        *out = dup_string(metrics_to_json(from_c(*m), include_runtime != 0));
    });
}

mplreg_status mplreg_metrics_markdown(const char* method, const mplreg_metrics* m, int with_header, char** out)
{
    return guarded([&] {
        require(m, "metrics");
        require(out, "out");
        std::string s;
        if (with_header)
            s = metrics_markdown_header() + "\n";
        s += metrics_markdown_row(method ? method : "MPL", from_c(*m));
        *out = dup_string(s);
    });
}

// phantoms

namespace {

mplreg_phantom* wrap_phantom(PhantomCase c)
{
    auto p = std::make_unique<mplreg_phantom>();
    p->c = std::move(c);
    p->parts[MPLREG_PHANTOM_FIXED] = wrap(p->c.fixed, false);
    p->parts[MPLREG_PHANTOM_MOVING] = wrap(p->c.moving, false);
    p->parts[MPLREG_PHANTOM_FIXED_LABEL] = wrap(p->c.fixed_label);
    p->parts[MPLREG_PHANTOM_MOVING_LABEL] = wrap(p->c.moving_label);
    p->parts[MPLREG_PHANTOM_COMPANION] = wrap(p->c.companion, false);
    p->parts[MPLREG_PHANTOM_COMPANION_FIXED] = wrap(p->c.companion_fixed, false);
    p->true_field.f = p->c.true_field;
    return p.release();
}

} // namespace

mplreg_status mplreg_phantom_generate(uint64_t seed, const char* params_json, mplreg_phantom** out)
{
    return guarded([&] {
        require(out, "out");
        *out = nullptr;
        *out = wrap_phantom(generate_phantom_pair(seed, params_from(params_json)));
    });
}

mplreg_status mplreg_phantom_read(const char* dir, mplreg_phantom** out)
{
    return guarded([&] {
        require(dir, "dir");
        require(out, "out");
        *out = nullptr;
        *out = wrap_phantom(read_phantom_case(dir));
    });
}

mplreg_status mplreg_phantom_write(const mplreg_phantom* p, const char* dir)
{
    return guarded([&] {
        require(p, "phantom");
        require(dir, "dir");
        write_phantom_case(p->c, dir);
    });
}

const mplreg_volume* mplreg_phantom_volume(const mplreg_phantom* p, mplreg_phantom_part part)
{
    if (!p || part < MPLREG_PHANTOM_FIXED || part > MPLREG_PHANTOM_COMPANION_FIXED)
        return nullptr;
    return &p->parts[part];
}

const mplreg_field* mplreg_phantom_true_field(const mplreg_phantom* p) { return p ? &p->true_field : nullptr; }

uint64_t mplreg_phantom_seed(const mplreg_phantom* p) { return p ? p->c.seed : 0; }

void mplreg_phantom_free(mplreg_phantom* p) { delete p; }

// gradient checks

double mplreg_gradient_tolerance(void) { return kGradTolerance; }

mplreg_status mplreg_check_gradients(uint64_t seed, int n, mplreg_gradcheck_fn fn, void* user, double* worst)
{
    return guarded([&] {
        double w = 0.0;
        std::vector<GradCheckResult> all{quadratic_self_test()};
        for (GradCheckResult& r : run_gradient_suite(seed, n))
            all.push_back(std::move(r));
        for (const GradCheckResult& r : all) {
            w = std::max(w, r.max_rel_error);
            if (fn)
                fn(r.name.c_str(), r.parameters, r.max_rel_error, user);
        }
        if (worst)
            *worst = w;
    });
}

// overlays

mplreg_overlay_options mplreg_overlay_defaults(void)
{
    const OverlaySettings s;
    return {s.axis, s.index, 0, 1.0, 0.5, s.edge_quantile};
}

mplreg_status mplreg_overlay_png(const mplreg_volume* fixed, const mplreg_volume* moving,
                                 const mplreg_overlay_options* options, const char* path, int* width, int* height)
{
    return guarded([&] {
        require(fixed, "fixed");
        require(moving, "moving");
        require(path, "path");
        const mplreg_overlay_options o = options ? *options : mplreg_overlay_defaults();
        OverlaySettings s;
        s.axis = o.axis;
        s.index = o.index;
        if (o.use_window) {
            s.window = o.window;
            s.level = o.level;
        }
        s.edge_quantile = o.edge_quantile;
        const Gray8 img = render_overlay(fixed->v, moving->v, s);
        write_png(img, path);
        if (width)
            *width = img.width;
        if (height)
            *height = img.height;
    });
}

// suite

mplreg_status mplreg_suite_run(uint64_t first_seed, int count, const char* phantom_params_json,
                               const mplreg_config* config, int jobs, mplreg_suite_fn fn, void* user,
                               char** report_json, char** markdown)
{
    return guarded([&] {
        require(config, "config");
        require(report_json, "report_json");
        const PhantomParams params = params_from(phantom_params_json);
        params.validate();
        std::function<void(const SuiteCase&)> on_case;
        if (fn)
            on_case = [&](const SuiteCase& c) {
                const mplreg_suite_case sc{c.seed, c.baseline_dice, c.metrics.dice, c.metrics.pct_neg_jacobian,
                                           c.metrics.runtime_seconds};
                fn(&sc, user);
            };
        const auto cases = run_suite(first_seed, count, params, config->c.registration, jobs, on_case);
        const SuiteSummary s = summarize(cases);

        nlohmann::ordered_json j;
        j["phantom"] = to_json(params);
        j["config"] = to_json(config->c)["registration"];
        j["cases"] = nlohmann::ordered_json::array();
        for (const SuiteCase& c : cases) {
            nlohmann::ordered_json row;
            row["seed"] = c.seed;
            row["baseline_dice"] = c.baseline_dice;
            row["dice"] = c.metrics.dice;
            row["pct_neg_jacobian"] = c.metrics.pct_neg_jacobian;
            row["runtime_seconds"] = c.metrics.runtime_seconds;
            row["stage_dice"] = c.stage_dice;
            j["cases"].push_back(row);
        }
        nlohmann::ordered_json sum;
        sum["cases"] = s.cases;
        sum["mean_baseline_dice"] = s.mean_baseline_dice;
        sum["mean_dice"] = s.mean_dice;
        sum["mean_pct_neg_jacobian"] = s.mean_pct_neg_jacobian;
        sum["max_runtime_seconds"] = s.max_runtime_seconds;
        sum["mean_stage_dice"] = s.mean_stage_dice;
        j["summary"] = sum;
        *report_json = dup_string(j.dump(2));

        if (markdown) {
            std::ostringstream md;
            md << metrics_markdown_header() << "\n";
            MetricsReport base;
            base.dice = s.mean_baseline_dice;
            md << metrics_markdown_row("Unregistered", base) << "\n";
            if (!s.mean_stage_dice.empty()) {
                MetricsReport aff;
                aff.dice = s.mean_stage_dice.front();
                md << metrics_markdown_row("Affine", aff) << "\n";
            }
            MetricsReport full;
            full.dice = s.mean_dice;
            full.pct_neg_jacobian = s.mean_pct_neg_jacobian;
            const std::string name = "MPL (" + std::to_string(config->c.registration.cascades) + " cascades)";
            md << metrics_markdown_row(name, full) << "\n";
            *markdown = dup_string(md.str());
        }
    });
}

} // extern "C"
