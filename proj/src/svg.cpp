#include "sketchlab/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace sketchlab {

namespace {

// fixed two-decimal formatting keeps the byte stream reproducible across
// locales and stdlib versions
std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

} // namespace

std::string sketch_svg(const Stroke5Sequence& seq_abs, const SvgOptions& opts) {
    if (seq_abs.frame != Frame::Absolute)
        throw FrameError("sketch_svg expects an absolute-frame sequence");
    require_valid(seq_abs);

    double lox = seq_abs.points[0].x, hix = lox;
    double loy = seq_abs.points[0].y, hiy = loy;
    for (const auto& p : seq_abs.points) {
        lox = std::min(lox, p.x);
        hix = std::max(hix, p.x);
        loy = std::min(loy, p.y);
        hiy = std::max(hiy, p.y);
    }
    double span = std::max({hix - lox, hiy - loy, 1e-9});
    double inner = opts.size - 2 * opts.margin;
    auto sx = [&](double x) { return opts.margin + (x - lox) / span * inner; };
    auto sy = [&](double y) { return opts.margin + (y - loy) / span * inner; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(opts.size)
       << "\" height=\"" << num(opts.size) << "\" viewBox=\"0 0 " << num(opts.size) << " "
       << num(opts.size) << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    auto spans = strokes_of(seq_abs);
    for (const auto& sp : spans) {
        const char* color = kPalette[size_t(sp.stroke_index) % 8];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (int i = sp.start; i <= sp.end; ++i) {
            if (i > sp.start) os << " ";
            os << num(sx(seq_abs.points[size_t(i)].x)) << ","
               << num(sy(seq_abs.points[size_t(i)].y));
        }
        os << "\"/>\n";
    }
    if (opts.order_markers) {
        for (const auto& sp : spans) {
            const char* color = kPalette[size_t(sp.stroke_index) % 8];
            for (int i = sp.start; i <= sp.end; ++i) {
                double x = sx(seq_abs.points[size_t(i)].x);
                double y = sy(seq_abs.points[size_t(i)].y);
                os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y)
                   << "\" r=\"3\" fill=\"" << color << "\"/>\n";
                os << "<text x=\"" << num(x + 4) << "\" y=\"" << num(y - 4)
                   << "\" font-size=\"8\" fill=\"#333\">" << i << "</text>\n";
            }
        }
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace sketchlab
