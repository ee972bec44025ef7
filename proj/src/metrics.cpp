#include "metrics.hpp"

#include <json.hpp>

#include <cstdio>

namespace mplreg {

double dice(const LabelMask& a, const LabelMask& b, double threshold)
{
    require_compatible(a.grid(), b.grid(), "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const bool in_a = a[n] > threshold;
        const bool in_b = b[n] > threshold;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if (na + nb == 0)
        return 1.0;
    return 2.0 * double(both) / double(na + nb);
}

MetricsReport evaluate_metrics(const LabelMask& warped_label, const LabelMask& fixed_label,
                               const DisplacementField* field, double runtime_seconds)
{
    MetricsReport m;
    m.dice = dice(warped_label, fixed_label);
    if (field) {
        require_compatible(field->grid(), fixed_label.grid(), "evaluate_metrics");
        m.pct_neg_jacobian = 100.0 * fraction_negative_jacobian(*field);
        m.field_rms = field_rms(*field);
    }
    m.runtime_seconds = runtime_seconds;
    return m;
}

std::string metrics_to_json(const MetricsReport& m, bool include_runtime)
{
    nlohmann::ordered_json j;
    j["dice"] = m.dice;
    j["pct_neg_jacobian"] = m.pct_neg_jacobian;
    j["field_rms"] = m.field_rms;
    if (include_runtime)
        j["runtime_seconds"] = m.runtime_seconds;
    return j.dump(2);
}

std::string metrics_markdown_header()
{
    return "| Method | DSC | %J_phi |\n|---|---|---|";
}

std::string metrics_markdown_row(const std::string& method, const MetricsReport& m)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "| %s | %.3f | %.2f |", method.c_str(), m.dice, m.pct_neg_jacobian);
    return buf;
}

} // namespace mplreg
