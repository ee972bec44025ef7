#include "config.hpp"

#include <fstream>
#include <set>

namespace mplreg {

namespace {

using nlohmann::json;

// Reads keys off one JSON object and rejects the ones nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object())
            fail(ErrorCode::Config, where_ + ": expected a JSON object");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            fail(ErrorCode::Config, where_ + "." + key + ": wrong type");
        }
    }

    const json* child(const char* key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                fail(ErrorCode::Config, where_ + ": unknown key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

Dims3 read_dims(const json& j, const std::string& where)
{
    if (!j.is_array() || j.size() != 3)
        fail(ErrorCode::Config, where + ": expected three integers");
    Dims3 d;
    for (int i = 0; i < 3; ++i) {
        if (!j[std::size_t(i)].is_number_integer())
            fail(ErrorCode::Config, where + ": expected three integers");
        d[i] = j[std::size_t(i)].get<int>();
    }
    return d;
}

std::optional<std::pair<double, double>> read_clip(const json* j, const std::string& where)
{
    if (!j || j->is_null())
        return std::nullopt;
    if (!j->is_array() || j->size() != 2 || !(*j)[0].is_number() || !(*j)[1].is_number())
        fail(ErrorCode::Config, where + ": expected [lo, hi] or null");
    return std::make_pair((*j)[0].get<double>(), (*j)[1].get<double>());
}

json clip_json(const std::optional<std::pair<double, double>>& c)
{
    return c ? json::array({c->first, c->second}) : json(nullptr);
}

} // namespace

const char* to_string(GplMode mode)
{
    return mode == GplMode::SoftDice ? "soft_dice" : "mse";
}

RunConfig parse_run_config(const json& j)
{
    RunConfig c;
    RegistrationConfig& r = c.registration;
    Reader top(j, "config");
    top.get("cascades", r.cascades);
    top.get("iters_affine", r.iters_affine);
    top.get("iters_cascade", r.iters_cascade);
    top.get("step_size", r.step_size);
    top.get("affine_step_size", r.affine_step_size);
    top.get("adam_beta1", r.adam_beta1);
    top.get("adam_beta2", r.adam_beta2);
    top.get("adam_eps", r.adam_eps);
    top.get("stop_tol", r.stop_tol);
    top.get("stop_window", r.stop_window);
    top.get("increment_smoothing", r.increment_smoothing);
    top.get("max_neg_jacobian_pct", r.max_neg_jacobian_pct);
    top.get("keep_stage_fields", r.keep_stage_fields);
    top.get("seed", r.seed);

    if (const json* lj = top.child("loss")) {
        Reader l(*lj, "config.loss");
        LossSettings& ls = r.loss;
        l.get("alpha", ls.weights.alpha);
        l.get("beta", ls.weights.beta);
        l.get("lambda", ls.weights.lambda);
        l.get("gpl_scales", ls.weights.scales);
        std::string mode = to_string(ls.weights.gpl_mode);
        l.get("gpl_mode", mode);
        if (mode == "soft_dice")
            ls.weights.gpl_mode = GplMode::SoftDice;
        else if (mode == "mse")
            ls.weights.gpl_mode = GplMode::Mse;
        else
            fail(ErrorCode::Config, "config.loss.gpl_mode: expected soft_dice or mse");
        l.get("bins", ls.histogram.bins);
        l.get("parzen_sigma", ls.histogram.parzen_sigma);
        l.get("mi_use_fixed_mask", ls.mi_use_fixed_mask);
        l.finish();
    }

    if (const json* pj = top.child("preprocess")) {
        Reader p(*pj, "config.preprocess");
        PreprocessSettings& ps = c.preprocess;
        p.get("enabled", ps.enabled);
        p.get("target_spacing", ps.target_spacing);
        if (const json* d = p.child("out_dims"))
            ps.out_dims = read_dims(*d, "config.preprocess.out_dims");
        p.get("margin", ps.margin);
        p.get("fixed_pad", ps.fixed_pad);
        p.get("moving_pad", ps.moving_pad);
        ps.fixed_clip = read_clip(p.child("fixed_clip"), "config.preprocess.fixed_clip");
        ps.moving_clip = read_clip(p.child("moving_clip"), "config.preprocess.moving_clip");
        p.finish();
    }
    top.finish();
    r.validate();
    c.preprocess.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::Io, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Config, "config " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

nlohmann::ordered_json to_json(const RunConfig& c)
{
    const RegistrationConfig& r = c.registration;
    const PreprocessSettings& p = c.preprocess;
    nlohmann::ordered_json j;
    j["cascades"] = r.cascades;
    j["iters_affine"] = r.iters_affine;
    j["iters_cascade"] = r.iters_cascade;
    j["step_size"] = r.step_size;
    j["affine_step_size"] = r.affine_step_size;
    j["adam_beta1"] = r.adam_beta1;
    j["adam_beta2"] = r.adam_beta2;
    j["adam_eps"] = r.adam_eps;
    j["stop_tol"] = r.stop_tol;
    j["stop_window"] = r.stop_window;
    j["increment_smoothing"] = r.increment_smoothing;
    j["max_neg_jacobian_pct"] = r.max_neg_jacobian_pct;
    j["keep_stage_fields"] = r.keep_stage_fields;
    j["seed"] = r.seed;
    nlohmann::ordered_json l;
    l["alpha"] = r.loss.weights.alpha;
    l["beta"] = r.loss.weights.beta;
    l["lambda"] = r.loss.weights.lambda;
    l["gpl_scales"] = r.loss.weights.scales;
    l["gpl_mode"] = to_string(r.loss.weights.gpl_mode);
    l["bins"] = r.loss.histogram.bins;
    l["parzen_sigma"] = r.loss.histogram.parzen_sigma;
    l["mi_use_fixed_mask"] = r.loss.mi_use_fixed_mask;
    j["loss"] = l;
    nlohmann::ordered_json q;
    q["enabled"] = p.enabled;
    q["target_spacing"] = p.target_spacing;
    q["out_dims"] = {p.out_dims[0], p.out_dims[1], p.out_dims[2]};
    q["margin"] = p.margin;
    q["fixed_pad"] = p.fixed_pad;
    q["moving_pad"] = p.moving_pad;
    q["fixed_clip"] = clip_json(p.fixed_clip);
    q["moving_clip"] = clip_json(p.moving_clip);
    j["preprocess"] = q;
    return j;
}

PhantomParams parse_phantom_params(const json& j)
{
    PhantomParams p;
    Reader r(j, "phantom");
    if (const json* d = r.child("dims"))
        p.dims = read_dims(*d, "phantom.dims");
    if (const json* s = r.child("spacing")) {
        if (!s->is_array() || s->size() != 3)
            fail(ErrorCode::Config, "phantom.spacing: expected three numbers");
        for (int i = 0; i < 3; ++i)
            p.spacing[i] = (*s)[std::size_t(i)].get<double>();
    }
    r.get("lung_count", p.lung_count);
    r.get("amplitude", p.amplitude);
    r.get("smoothness", p.smoothness);
    r.get("noise_sigma", p.noise_sigma);
    r.get("gamma", p.gamma);
    r.get("render_blur", p.render_blur);
    r.get("vessels_per_lung", p.vessels_per_lung);
    r.finish();
    try {
        p.validate();
    } catch (const Error& e) {
        fail(ErrorCode::Config, e.what());
    }
    return p;
}

nlohmann::ordered_json to_json(const PhantomParams& p)
{
    nlohmann::ordered_json j;
    j["dims"] = {p.dims[0], p.dims[1], p.dims[2]};
    j["spacing"] = {p.spacing[0], p.spacing[1], p.spacing[2]};
    j["lung_count"] = p.lung_count;
    j["amplitude"] = p.amplitude;
    j["smoothness"] = p.smoothness;
    j["noise_sigma"] = p.noise_sigma;
    j["gamma"] = p.gamma;
    j["render_blur"] = p.render_blur;
    j["vessels_per_lung"] = p.vessels_per_lung;
    return j;
}

} // namespace mplreg
