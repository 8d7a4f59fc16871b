#pragma once

#include <string>

namespace loralab {

// Renders a metrics file as an SVG line chart: one series per
// (method, scheme) pair, x = n on a log scale, y = the median over seeds with
// a min-max band. `metric` selects which records to plot (e.g. exact_match,
// rouge_l_f1, mcq_accuracy). Output bytes are a pure function of the input
// records. Series with fewer than two points are a plot error.
void emit_plot(const std::string& metrics_path, const std::string& metric,
               const std::string& out_path);

}  // namespace loralab
