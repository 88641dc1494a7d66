#pragma once

// Shared test utilities: random valid sketch generation and small comparisons.

#include <cmath>
#include <vector>

#include "sketchlab/rng.hpp"
#include "sketchlab/stroke5.hpp"

namespace sketchlab::testutil {

// Random valid sketch in the requested frame with 1..max_points points and
// random stroke boundaries.
inline Stroke5Sequence random_sketch(Rng& rng, int max_points = 24,
                                     Frame frame = Frame::Absolute) {
    int n = 1 + int(rng.below(uint64_t(max_points)));
    Stroke5Sequence seq;
    seq.frame = frame;
    for (int i = 0; i < n; ++i) {
        double x = rng.uniform(-50.0, 50.0);
        double y = rng.uniform(-50.0, 50.0);
        Pen p = Pen::Drawing;
        if (i == n - 1)
            p = Pen::EndOfSketch;
        else if (rng.uniform01() < 0.25)
            p = Pen::EndOfStroke;
        seq.points.push_back(Stroke5Point::make(x, y, p));
    }
    return seq;
}

inline double max_coord_diff(const Stroke5Sequence& a, const Stroke5Sequence& b) {
    if (a.points.size() != b.points.size()) return 1e300;
    double m = 0.0;
    for (size_t i = 0; i < a.points.size(); ++i) {
        m = std::max(m, std::fabs(a.points[i].x - b.points[i].x));
        m = std::max(m, std::fabs(a.points[i].y - b.points[i].y));
    }
    return m;
}

inline bool same_pens(const Stroke5Sequence& a, const Stroke5Sequence& b) {
    if (a.points.size() != b.points.size()) return false;
    for (size_t i = 0; i < a.points.size(); ++i)
        if (a.points[i].pen != b.points[i].pen) return false;
    return true;
}

// All valid pen structures for sketches of exactly n points.
inline std::vector<std::vector<Pen>> all_pen_structures(int n) {
    std::vector<std::vector<Pen>> out;
    int inner = n - 1;
    for (int bits = 0; bits < (1 << inner); ++bits) {
        std::vector<Pen> pens;
        for (int i = 0; i < inner; ++i)
            pens.push_back((bits >> i) & 1 ? Pen::EndOfStroke : Pen::Drawing);
        pens.push_back(Pen::EndOfSketch);
        out.push_back(pens);
    }
    return out;
}

} // namespace sketchlab::testutil
