#pragma once

// Canonical stroke-5 sketch representation: per point a 2D coordinate and a
// one-hot pen state {drawing, end-of-stroke, end-of-sketch}. A sequence is
// tagged with its coordinate frame (relative offsets vs absolute positions)
// and its normalization state, so ill-ordered transforms are caught early.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sketchlab {

struct SketchError : std::runtime_error {
    explicit SketchError(const std::string& msg) : std::runtime_error(msg) {}
};
struct FrameError : SketchError {
    explicit FrameError(const std::string& msg) : SketchError(msg) {}
};
struct StateError : SketchError {
    explicit StateError(const std::string& msg) : SketchError(msg) {}
};

enum class Pen : uint8_t { Drawing = 0, EndOfStroke = 1, EndOfSketch = 2 };

struct Stroke5Point {
    double x = 0.0;
    double y = 0.0;
    std::array<uint8_t, 3> pen{1, 0, 0};

    static Stroke5Point make(double x, double y, Pen p) {
        Stroke5Point pt;
        pt.x = x;
        pt.y = y;
        pt.pen = {0, 0, 0};
        pt.pen[size_t(p)] = 1;
        return pt;
    }
    bool pen_one_hot() const { return int(pen[0]) + pen[1] + pen[2] == 1 &&
                                      pen[0] <= 1 && pen[1] <= 1 && pen[2] <= 1; }
    int pen_index() const {
        for (int i = 0; i < 3; ++i)
            if (pen[size_t(i)]) return i;
        return -1;
    }
    bool is(Pen p) const { return pen[size_t(p)] == 1 && pen_one_hot(); }
};

enum class Frame : uint8_t { Relative = 0, Absolute = 1 };

enum class NormKind : uint8_t { Raw = 0, RelMinMax = 1, AbsUnitCircle = 2 };

struct NormState {
    NormKind kind = NormKind::Raw;
    double scale = 1.0;                  // RelMinMax and AbsUnitCircle
    std::array<double, 2> center{0, 0};  // AbsUnitCircle only

    static NormState raw() { return NormState{}; }
    static NormState rel_minmax(double s) { return NormState{NormKind::RelMinMax, s, {0, 0}}; }
    static NormState abs_unit_circle(std::array<double, 2> c, double r) {
        return NormState{NormKind::AbsUnitCircle, r, c};
    }
};

struct Stroke5Sequence {
    std::vector<Stroke5Point> points;
    Frame frame = Frame::Absolute;
    NormState norm;

    size_t size() const { return points.size(); }
};

struct StrokeSpan {
    int start = 0;
    int end = 0;  // inclusive
    int stroke_index = 0;
    int length() const { return end - start + 1; }
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate(const Stroke5Sequence& seq);

// Throws SketchError with the first violation if the sequence is invalid.
void require_valid(const Stroke5Sequence& seq);

std::vector<StrokeSpan> strokes_of(const Stroke5Sequence& seq);

Stroke5Sequence rel_to_abs(const Stroke5Sequence& seq);
Stroke5Sequence abs_to_rel(const Stroke5Sequence& seq);

// Divides every offset (origin excluded) by the max absolute offset over both
// axes. A degenerate all-zero sketch keeps scale 1 so the transform inverts.
Stroke5Sequence normalize_relative(const Stroke5Sequence& seq);

// Centers at the centroid and divides by the max distance from it, so every
// point lands inside the closed unit disk.
Stroke5Sequence normalize_absolute(const Stroke5Sequence& seq);

Stroke5Sequence denormalize(const Stroke5Sequence& seq);

struct PaddedSequence {
    Stroke5Sequence seq;
    std::vector<uint8_t> mask;  // true for real points
};

PaddedSequence pad_or_truncate(const Stroke5Sequence& seq, int max_len);

} // namespace sketchlab
