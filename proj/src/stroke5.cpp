#include "sketchlab/stroke5.hpp"

#include <cmath>

namespace sketchlab {

ValidationReport validate(const Stroke5Sequence& seq) {
    ValidationReport rep;
    if (seq.points.empty()) {
        rep.violations.push_back("empty sequence");
        return rep;
    }
    for (size_t i = 0; i < seq.points.size(); ++i) {
        const auto& p = seq.points[i];
        if (!p.pen_one_hot())
            rep.violations.push_back("pen not one-hot at point " + std::to_string(i));
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            rep.violations.push_back("non-finite coordinate at point " + std::to_string(i));
    }
    const auto& last = seq.points.back();
    if (last.pen_one_hot() && !last.is(Pen::EndOfSketch))
        rep.violations.push_back("missing end-of-sketch at last point");
    for (size_t i = 0; i + 1 < seq.points.size(); ++i) {
        if (seq.points[i].is(Pen::EndOfSketch))
            rep.violations.push_back("end-of-sketch before last point at " + std::to_string(i));
    }
    if (seq.norm.kind != NormKind::Raw && !(seq.norm.scale > 0.0))
        rep.violations.push_back("non-positive normalization scale");
    return rep;
}

void require_valid(const Stroke5Sequence& seq) {
    auto rep = validate(seq);
    if (!rep.ok()) throw SketchError("invalid sketch: " + rep.violations.front());
}

std::vector<StrokeSpan> strokes_of(const Stroke5Sequence& seq) {
    require_valid(seq);
    std::vector<StrokeSpan> spans;
    int start = 0;
    for (int i = 0; i < int(seq.points.size()); ++i) {
        const auto& p = seq.points[size_t(i)];
        if (p.is(Pen::EndOfStroke) || p.is(Pen::EndOfSketch)) {
            spans.push_back({start, i, int(spans.size())});
            start = i + 1;
        }
    }
    return spans;
}

static void require_frame(const Stroke5Sequence& seq, Frame f, const char* op) {
    if (seq.frame != f)
        throw FrameError(std::string(op) + ": wrong coordinate frame");
}

static void require_raw(const Stroke5Sequence& seq, const char* op) {
    if (seq.norm.kind != NormKind::Raw)
        throw StateError(std::string(op) + ": sequence must be un-normalized");
}

Stroke5Sequence rel_to_abs(const Stroke5Sequence& seq) {
    require_frame(seq, Frame::Relative, "rel_to_abs");
    require_raw(seq, "rel_to_abs");
    Stroke5Sequence out = seq;
    out.frame = Frame::Absolute;
    double x = 0.0, y = 0.0;
    for (size_t i = 0; i < out.points.size(); ++i) {
        x += seq.points[i].x;
        y += seq.points[i].y;
        out.points[i].x = x;
        out.points[i].y = y;
    }
    return out;
}

Stroke5Sequence abs_to_rel(const Stroke5Sequence& seq) {
    require_frame(seq, Frame::Absolute, "abs_to_rel");
    require_raw(seq, "abs_to_rel");
    Stroke5Sequence out = seq;
    out.frame = Frame::Relative;
    for (size_t i = out.points.size(); i-- > 1;) {
        out.points[i].x = seq.points[i].x - seq.points[i - 1].x;
        out.points[i].y = seq.points[i].y - seq.points[i - 1].y;
    }
    return out;
}

Stroke5Sequence normalize_relative(const Stroke5Sequence& seq) {
    require_frame(seq, Frame::Relative, "normalize_relative");
    require_raw(seq, "normalize_relative");
    double s = 0.0;
    for (size_t i = 1; i < seq.points.size(); ++i) {
        s = std::max(s, std::fabs(seq.points[i].x));
        s = std::max(s, std::fabs(seq.points[i].y));
    }
    if (s == 0.0) s = 1.0;
    Stroke5Sequence out = seq;
    for (size_t i = 1; i < out.points.size(); ++i) {
        out.points[i].x /= s;
        out.points[i].y /= s;
    }
    out.norm = NormState::rel_minmax(s);
    return out;
}

Stroke5Sequence normalize_absolute(const Stroke5Sequence& seq) {
    require_frame(seq, Frame::Absolute, "normalize_absolute");
    require_raw(seq, "normalize_absolute");
    double cx = 0.0, cy = 0.0;
    for (const auto& p : seq.points) {
        cx += p.x;
        cy += p.y;
    }
    cx /= double(seq.points.size());
    cy /= double(seq.points.size());
    double r = 0.0;
    for (const auto& p : seq.points)
        r = std::max(r, std::hypot(p.x - cx, p.y - cy));
    if (r == 0.0) r = 1.0;
    Stroke5Sequence out = seq;
    for (auto& p : out.points) {
        p.x = (p.x - cx) / r;
        p.y = (p.y - cy) / r;
    }
    out.norm = NormState::abs_unit_circle({cx, cy}, r);
    return out;
}

Stroke5Sequence denormalize(const Stroke5Sequence& seq) {
    Stroke5Sequence out = seq;
    switch (seq.norm.kind) {
        case NormKind::Raw:
            throw StateError("denormalize: sequence is already raw");
        case NormKind::RelMinMax:
            for (size_t i = 1; i < out.points.size(); ++i) {
                out.points[i].x *= seq.norm.scale;
                out.points[i].y *= seq.norm.scale;
            }
            break;
        case NormKind::AbsUnitCircle:
            for (auto& p : out.points) {
                p.x = p.x * seq.norm.scale + seq.norm.center[0];
                p.y = p.y * seq.norm.scale + seq.norm.center[1];
            }
            break;
    }
    out.norm = NormState::raw();
    return out;
}

PaddedSequence pad_or_truncate(const Stroke5Sequence& seq, int max_len) {
    if (max_len < 1) throw SketchError("pad_or_truncate: max_len must be >= 1");
    PaddedSequence out;
    out.seq = seq;
    int n = int(seq.points.size());
    if (n > max_len) {
        out.seq.points.resize(size_t(max_len));
        auto& lastp = out.seq.points.back();
        lastp.pen = {0, 0, 0};
        lastp.pen[size_t(Pen::EndOfSketch)] = 1;
        n = max_len;
    }
    out.mask.assign(size_t(max_len), 0);
    for (int i = 0; i < n; ++i) out.mask[size_t(i)] = 1;
    while (int(out.seq.points.size()) < max_len)
        out.seq.points.push_back(Stroke5Point::make(0.0, 0.0, Pen::EndOfSketch));
    return out;
}

} // namespace sketchlab
