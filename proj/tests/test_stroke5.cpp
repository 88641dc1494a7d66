#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sketchlab/stroke5.hpp"

using namespace sketchlab;
using namespace sketchlab::testutil;

static Stroke5Sequence seq_from(std::vector<std::array<double, 2>> pts,
                                std::vector<Pen> pens, Frame frame) {
    Stroke5Sequence s;
    s.frame = frame;
    for (size_t i = 0; i < pts.size(); ++i)
        s.points.push_back(Stroke5Point::make(pts[i][0], pts[i][1], pens[i]));
    return s;
}

TEST_CASE("validate: minimal legal sketch") {
    Stroke5Sequence s = seq_from({{0, 0}}, {Pen::EndOfSketch}, Frame::Absolute);
    CHECK(validate(s).ok());
}

TEST_CASE("validate: missing end-of-sketch") {
    Stroke5Sequence s = seq_from({{0, 0}}, {Pen::Drawing}, Frame::Absolute);
    auto rep = validate(s);
    CHECK_FALSE(rep.ok());
    CHECK(rep.violations.front().find("end-of-sketch") != std::string::npos);
}

TEST_CASE("validate: pen not one-hot") {
    Stroke5Sequence s = seq_from({{0, 0}, {1, 1}}, {Pen::Drawing, Pen::EndOfSketch},
                                 Frame::Absolute);
    s.points[0].pen = {1, 1, 0};
    auto rep = validate(s);
    CHECK_FALSE(rep.ok());
    CHECK(rep.violations.front().find("one-hot") != std::string::npos);
}

TEST_CASE("validate: non-finite coordinate and early end-of-sketch") {
    Stroke5Sequence s = seq_from({{0, 0}, {1, 0}, {2, 0}},
                                 {Pen::EndOfSketch, Pen::Drawing, Pen::EndOfSketch},
                                 Frame::Absolute);
    s.points[1].x = std::nan("");
    auto rep = validate(s);
    CHECK(rep.violations.size() == 2);
}

TEST_CASE("strokes_of: spans follow pen semantics") {
    auto s = seq_from({{0, 0}, {1, 0}, {2, 0}},
                      {Pen::Drawing, Pen::EndOfStroke, Pen::EndOfSketch}, Frame::Absolute);
    auto spans = strokes_of(s);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].start == 0);
    CHECK(spans[0].end == 1);
    CHECK(spans[1].start == 2);
    CHECK(spans[1].end == 2);
    CHECK(spans[1].stroke_index == 1);
}

TEST_CASE("strokes_of: single point") {
    auto s = seq_from({{3, 4}}, {Pen::EndOfSketch}, Frame::Absolute);
    auto spans = strokes_of(s);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].start == 0);
    CHECK(spans[0].end == 0);
}

TEST_CASE("strokes_of: five points with boundary at index 2") {
    auto s = seq_from({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}},
                      {Pen::Drawing, Pen::Drawing, Pen::EndOfStroke, Pen::Drawing,
                       Pen::EndOfSketch},
                      Frame::Absolute);
    auto spans = strokes_of(s);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].end == 2);
    CHECK(spans[1].start == 3);
    CHECK(spans[1].end == 4);
}

TEST_CASE("strokes_of: partitions and span count matches pen count") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        auto s = random_sketch(rng);
        auto spans = strokes_of(s);
        int covered = 0;
        int prev_end = -1;
        for (const auto& sp : spans) {
            CHECK(sp.start == prev_end + 1);
            prev_end = sp.end;
            covered += sp.length();
        }
        CHECK(covered == int(s.points.size()));
        int eos = 0;
        for (const auto& p : s.points)
            if (p.is(Pen::EndOfStroke)) ++eos;
        CHECK(int(spans.size()) == eos + 1);
    }
}

TEST_CASE("rel_to_abs: prefix sum") {
    auto s = seq_from({{0, 0}, {2, 0}, {0, 3}},
                      {Pen::Drawing, Pen::Drawing, Pen::EndOfSketch}, Frame::Relative);
    auto a = rel_to_abs(s);
    CHECK(a.frame == Frame::Absolute);
    CHECK(a.points[0].x == doctest::Approx(0));
    CHECK(a.points[1].x == doctest::Approx(2));
    CHECK(a.points[2].x == doctest::Approx(2));
    CHECK(a.points[2].y == doctest::Approx(3));
    CHECK(same_pens(s, a));
}

TEST_CASE("rel_to_abs: all-zero offsets give constant sequence") {
    auto s = seq_from({{5, 7}, {0, 0}, {0, 0}},
                      {Pen::Drawing, Pen::Drawing, Pen::EndOfSketch}, Frame::Relative);
    auto a = rel_to_abs(s);
    for (const auto& p : a.points) {
        CHECK(p.x == doctest::Approx(5));
        CHECK(p.y == doctest::Approx(7));
    }
}

TEST_CASE("rel_to_abs: wrong frame throws") {
    auto s = seq_from({{0, 0}}, {Pen::EndOfSketch}, Frame::Absolute);
    CHECK_THROWS_AS((void)rel_to_abs(s), FrameError);
    CHECK_THROWS_AS((void)abs_to_rel(seq_from({{0, 0}}, {Pen::EndOfSketch}, Frame::Relative)),
                    FrameError);
}

TEST_CASE("abs_to_rel: differences to previous point") {
    auto s = seq_from({{0, 0}, {2, 0}, {2, 3}},
                      {Pen::Drawing, Pen::Drawing, Pen::EndOfSketch}, Frame::Absolute);
    auto r = abs_to_rel(s);
    CHECK(r.frame == Frame::Relative);
    CHECK(r.points[0].x == doctest::Approx(0));
    CHECK(r.points[1].x == doctest::Approx(2));
    CHECK(r.points[2].x == doctest::Approx(0));
    CHECK(r.points[2].y == doctest::Approx(3));
}

TEST_CASE("rel<->abs round trip identity within 1e-9") {
    Rng rng(42);
    for (int t = 0; t < 1000; ++t) {
        auto abs = random_sketch(rng, 24, Frame::Absolute);
        auto back = rel_to_abs(abs_to_rel(abs));
        CHECK(max_coord_diff(abs, back) < 1e-9);
        CHECK(same_pens(abs, back));

        auto rel = random_sketch(rng, 24, Frame::Relative);
        auto back2 = abs_to_rel(rel_to_abs(rel));
        CHECK(max_coord_diff(rel, back2) < 1e-9);
    }
}

TEST_CASE("normalize_relative: direct rule application") {
    auto s = seq_from({{0, 0}, {2, 0}, {0, -4}},
                      {Pen::Drawing, Pen::Drawing, Pen::EndOfSketch}, Frame::Relative);
    auto n = normalize_relative(s);
    CHECK(n.norm.kind == NormKind::RelMinMax);
    CHECK(n.norm.scale == doctest::Approx(4));
    CHECK(n.points[1].x == doctest::Approx(0.5));
    CHECK(n.points[2].y == doctest::Approx(-1.0));
}

TEST_CASE("normalize_relative: degenerate all-zero offsets keep scale 1") {
    auto s = seq_from({{1, 2}, {0, 0}}, {Pen::Drawing, Pen::EndOfSketch}, Frame::Relative);
    auto n = normalize_relative(s);
    CHECK(n.norm.scale == doctest::Approx(1));
    CHECK(n.points[0].x == doctest::Approx(1));
    CHECK(n.points[1].x == doctest::Approx(0));
}

TEST_CASE("normalize_relative: max offset magnitude becomes exactly 1") {
    Rng rng(7);
    for (int t = 0; t < 300; ++t) {
        auto s = random_sketch(rng, 20, Frame::Relative);
        if (s.points.size() < 2) continue;
        bool nondegenerate = false;
        for (size_t i = 1; i < s.points.size(); ++i)
            if (s.points[i].x != 0.0 || s.points[i].y != 0.0) nondegenerate = true;
        if (!nondegenerate) continue;
        auto n = normalize_relative(s);
        double m = 0.0;
        for (size_t i = 1; i < n.points.size(); ++i) {
            m = std::max(m, std::fabs(n.points[i].x));
            m = std::max(m, std::fabs(n.points[i].y));
        }
        CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("normalize_absolute: already canonical input unchanged") {
    auto s = seq_from({{1, 0}, {-1, 0}}, {Pen::Drawing, Pen::EndOfSketch}, Frame::Absolute);
    auto n = normalize_absolute(s);
    CHECK(n.norm.center[0] == doctest::Approx(0));
    CHECK(n.norm.scale == doctest::Approx(1));
    CHECK(max_coord_diff(s, n) < 1e-12);
}

TEST_CASE("normalize_absolute: hand-computed centroid and radius") {
    // points (2,0),(0,0): centroid (1,0), max radius 1 -> (1,0),(-1,0)
    auto s = seq_from({{2, 0}, {0, 0}}, {Pen::Drawing, Pen::EndOfSketch}, Frame::Absolute);
    auto n = normalize_absolute(s);
    CHECK(n.norm.center[0] == doctest::Approx(1));
    CHECK(n.norm.center[1] == doctest::Approx(0));
    CHECK(n.points[0].x == doctest::Approx(1));
    CHECK(n.points[1].x == doctest::Approx(-1));
}

TEST_CASE("normalize_absolute: unit disk and centered output") {
    Rng rng(9);
    for (int t = 0; t < 300; ++t) {
        auto s = random_sketch(rng, 20, Frame::Absolute);
        auto n = normalize_absolute(s);
        double maxr = 0.0, cx = 0.0, cy = 0.0;
        for (const auto& p : n.points) {
            maxr = std::max(maxr, std::hypot(p.x, p.y));
            cx += p.x;
            cy += p.y;
        }
        CHECK(maxr <= 1.0 + 1e-12);
        if (s.points.size() > 1) CHECK(maxr == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::fabs(cx / double(n.points.size())) < 1e-9);
        CHECK(std::fabs(cy / double(n.points.size())) < 1e-9);
    }
}

TEST_CASE("denormalize: round trips within 1e-9") {
    Rng rng(3);
    for (int t = 0; t < 1000; ++t) {
        auto rel = random_sketch(rng, 20, Frame::Relative);
        auto r2 = denormalize(normalize_relative(rel));
        CHECK(max_coord_diff(rel, r2) < 1e-9);

        auto abs = random_sketch(rng, 20, Frame::Absolute);
        auto a2 = denormalize(normalize_absolute(abs));
        CHECK(max_coord_diff(abs, a2) < 1e-9);
    }
}

TEST_CASE("denormalize: raw input is a state error") {
    auto s = seq_from({{0, 0}}, {Pen::EndOfSketch}, Frame::Absolute);
    CHECK_THROWS_AS((void)denormalize(s), StateError);
}

TEST_CASE("normalize: wrong state errors") {
    auto s = seq_from({{0, 0}}, {Pen::EndOfSketch}, Frame::Absolute);
    CHECK_THROWS_AS((void)normalize_relative(s), FrameError);
    auto n = normalize_absolute(s);
    CHECK_THROWS_AS((void)normalize_absolute(n), StateError);
}

TEST_CASE("pad_or_truncate: padding") {
    auto s = seq_from({{1, 1}, {2, 2}, {3, 3}},
                      {Pen::Drawing, Pen::Drawing, Pen::EndOfSketch}, Frame::Absolute);
    auto [padded, mask] = pad_or_truncate(s, 5);
    REQUIRE(padded.points.size() == 5);
    CHECK(mask == std::vector<uint8_t>{1, 1, 1, 0, 0});
    CHECK(padded.points[3].is(Pen::EndOfSketch));
    CHECK(padded.points[3].x == 0.0);
    CHECK(padded.points[4].is(Pen::EndOfSketch));
}

TEST_CASE("pad_or_truncate: exact length unchanged") {
    Rng rng(5);
    auto s = random_sketch(rng, 10);
    auto [padded, mask] = pad_or_truncate(s, int(s.points.size()));
    CHECK(max_coord_diff(s, padded) == 0.0);
    for (auto m : mask) CHECK(m == 1);
}

TEST_CASE("pad_or_truncate: truncation forces terminal pen") {
    auto s = seq_from({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}, {6, 0}},
                      {Pen::Drawing, Pen::Drawing, Pen::EndOfStroke, Pen::Drawing,
                       Pen::Drawing, Pen::Drawing, Pen::EndOfSketch},
                      Frame::Absolute);
    auto [padded, mask] = pad_or_truncate(s, 5);
    REQUIRE(padded.points.size() == 5);
    CHECK(padded.points[4].is(Pen::EndOfSketch));
    CHECK(validate(padded).ok());
    for (auto m : mask) CHECK(m == 1);
}

TEST_CASE("coordinate operations never alter pen states") {
    Rng rng(13);
    for (int t = 0; t < 200; ++t) {
        auto abs = random_sketch(rng, 16, Frame::Absolute);
        CHECK(same_pens(abs, normalize_absolute(abs)));
        CHECK(same_pens(abs, abs_to_rel(abs)));
        auto rel = abs_to_rel(abs);
        CHECK(same_pens(rel, normalize_relative(rel)));
        CHECK(same_pens(rel, rel_to_abs(rel)));
    }
}
