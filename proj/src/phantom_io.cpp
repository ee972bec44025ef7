#include "config.hpp"
#include "nifti.hpp"
#include "phantom.hpp"

#include <fstream>

namespace mplreg {

void write_phantom_case(const PhantomCase& c, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    write_nifti(c.fixed, dir / "fixed.nii");
    write_nifti(c.moving, dir / "moving.nii");
    write_nifti(c.fixed_label, dir / "fixed_label.nii");
    write_nifti(c.moving_label, dir / "moving_label.nii");
    write_nifti(c.companion, dir / "companion.nii");
    write_nifti(c.companion_fixed, dir / "companion_fixed.nii");
    write_field(c.true_field, dir / "true_field.nii");

    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["params"] = to_json(c.params);
    j["baseline_dice"] = dice(c.moving_label, c.fixed_label);
    j["true_field_max_norm"] = field_max_norm(c.true_field);
    j["files"] = {{"fixed", "fixed.nii"},           {"moving", "moving.nii"},
                  {"fixed_label", "fixed_label.nii"}, {"moving_label", "moving_label.nii"},
                  {"companion", "companion.nii"},     {"companion_fixed", "companion_fixed.nii"},
                  {"true_field", "true_field.nii"}};
    std::ofstream out(dir / "phantom.json");
    out << j.dump(2) << "\n";
    if (!out)
        fail(ErrorCode::Io, "cannot write " + (dir / "phantom.json").string());
}

PhantomCase read_phantom_case(const std::filesystem::path& dir)
{
    const auto manifest = dir / "phantom.json";
    std::ifstream in(manifest);
    if (!in)
        fail(ErrorCode::Io, "no phantom.json in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::Format, manifest.string() + ": " + e.what());
    }
    PhantomCase c;
    c.seed = j.value("seed", std::uint64_t(0));
    if (j.contains("params"))
        c.params = parse_phantom_params(j["params"]);
    c.fixed = read_nifti(dir / "fixed.nii");
    c.moving = read_nifti(dir / "moving.nii");
    c.fixed_label = read_nifti_label(dir / "fixed_label.nii");
    c.moving_label = read_nifti_label(dir / "moving_label.nii");
    if (std::filesystem::exists(dir / "companion.nii"))
        c.companion = read_nifti(dir / "companion.nii");
    if (std::filesystem::exists(dir / "companion_fixed.nii"))
        c.companion_fixed = read_nifti(dir / "companion_fixed.nii");
    if (std::filesystem::exists(dir / "true_field.nii"))
        c.true_field = read_field(dir / "true_field.nii");
    return c;
}

} // namespace mplreg
