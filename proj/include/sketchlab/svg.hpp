#pragma once

// SVG rendering of absolute-frame sketches: one polyline per stroke plus
// numbered per-point order markers. Output bytes are a pure function of the
// sequence and options.

#include <string>

#include "sketchlab/stroke5.hpp"

namespace sketchlab {

struct SvgOptions {
    double size = 400;          // square canvas edge in px
    double margin = 20;
    bool order_markers = true;  // numbered dots showing drawing order
};

std::string sketch_svg(const Stroke5Sequence& seq_abs, const SvgOptions& opts = {});

} // namespace sketchlab
