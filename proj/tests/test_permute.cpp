#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "helpers.hpp"
#include "sketchlab/permute.hpp"

using namespace sketchlab;
using namespace sketchlab::testutil;

static std::multiset<std::pair<double, double>> coord_multiset(const Stroke5Sequence& s) {
    std::multiset<std::pair<double, double>> m;
    for (const auto& p : s.points) m.insert({p.x, p.y});
    return m;
}

static std::multiset<int> span_lengths(const Stroke5Sequence& s) {
    std::multiset<int> m;
    for (const auto& sp : strokes_of(s)) m.insert(sp.length());
    return m;
}

static Stroke5Sequence sketch_with_pens(const std::vector<Pen>& pens, Rng& rng) {
    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    for (size_t i = 0; i < pens.size(); ++i)
        s.points.push_back(
            Stroke5Point::make(double(i) + rng.uniform01(), rng.uniform(-3, 3), pens[i]));
    return s;
}

TEST_CASE("none permutation is the identity") {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        auto s = random_sketch(rng);
        auto out = apply(PermutationSpec{}, s, uint64_t(t));
        CHECK(max_coord_diff(s, out) == 0.0);
        CHECK(same_pens(s, out));
    }
}

TEST_CASE("permutations preserve N, coordinate multiset and validity") {
    Rng rng(2);
    std::vector<PermKind> kinds = {PermKind::InterStroke, PermKind::IntraStroke,
                                   PermKind::IntraStrokeReverse, PermKind::StrokeShuffle};
    for (int t = 0; t < 1000; ++t) {
        auto s = random_sketch(rng, 16);
        for (auto k : kinds) {
            PermutationSpec spec(k, uint64_t(t));
            auto out = apply(spec, s, uint64_t(t));
            CHECK(out.points.size() == s.points.size());
            CHECK(coord_multiset(out) == coord_multiset(s));
            CHECK(validate(out).ok());
        }
    }
}

TEST_CASE("exhaustive small-sketch invariants") {
    Rng coords(77);
    std::vector<PermKind> kinds = {PermKind::InterStroke, PermKind::IntraStroke,
                                   PermKind::IntraStrokeReverse, PermKind::StrokeShuffle};
    for (int n = 1; n <= 4; ++n) {
        for (const auto& pens : all_pen_structures(n)) {
            auto s = sketch_with_pens(pens, coords);
            for (auto k : kinds) {
                for (uint64_t seed = 0; seed < 8; ++seed) {
                    PermutationSpec spec(k, seed);
                    auto out = apply(spec, s, 5);
                    CHECK(validate(out).ok());
                    CHECK(coord_multiset(out) == coord_multiset(s));
                    CHECK(span_lengths(out) == span_lengths(s));
                    // determinism
                    auto out2 = apply(spec, s, 5);
                    CHECK(max_coord_diff(out, out2) == 0.0);
                    CHECK(same_pens(out, out2));
                }
            }
        }
    }
}

TEST_CASE("inter-stroke preserves stroke sizes and scatters globally") {
    // 3 points in strokes of sizes [2, 1]: output must be one of the 3! fillings
    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    s.points = {Stroke5Point::make(1, 0, Pen::Drawing),
                Stroke5Point::make(2, 0, Pen::EndOfStroke),
                Stroke5Point::make(3, 0, Pen::EndOfSketch)};
    std::vector<std::vector<double>> allowed;
    std::vector<double> xs = {1, 2, 3};
    std::sort(xs.begin(), xs.end());
    do { allowed.push_back(xs); } while (std::next_permutation(xs.begin(), xs.end()));

    for (uint64_t seed = 0; seed < 32; ++seed) {
        auto out = apply(PermutationSpec(PermKind::InterStroke, seed), s, seed);
        std::vector<double> got = {out.points[0].x, out.points[1].x, out.points[2].x};
        CHECK(std::find(allowed.begin(), allowed.end(), got) != allowed.end());
        CHECK(same_pens(out, s));  // skeleton [2,1] intact
    }
}

TEST_CASE("intra-stroke with single-point strokes is the identity") {
    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    s.points = {Stroke5Point::make(1, 1, Pen::EndOfStroke),
                Stroke5Point::make(2, 2, Pen::EndOfStroke),
                Stroke5Point::make(3, 3, Pen::EndOfSketch)};
    auto out = apply(PermutationSpec(PermKind::IntraStroke, 99), s);
    CHECK(max_coord_diff(s, out) == 0.0);
}

TEST_CASE("intra-stroke actually perturbs strokes with >= 2 points") {
    Rng rng(4);
    for (uint64_t t = 0; t < 100; ++t) {
        Stroke5Sequence s;
        s.frame = Frame::Absolute;
        int n = 2 + int(rng.below(6));
        for (int i = 0; i < n; ++i)
            s.points.push_back(Stroke5Point::make(double(i), 0.0,
                                                  i == n - 1 ? Pen::EndOfSketch : Pen::Drawing));
        auto out = apply(PermutationSpec(PermKind::IntraStroke, t), s, t);
        CHECK(max_coord_diff(s, out) > 0.0);
    }
}

TEST_CASE("stroke shuffle moves whole strokes and perturbs when possible") {
    Rng rng(6);
    for (uint64_t t = 0; t < 200; ++t) {
        auto s = random_sketch(rng, 14);
        auto spans = strokes_of(s);
        auto out = apply(PermutationSpec(PermKind::StrokeShuffle, t), s, t);
        // within-stroke order preserved: each output stroke equals some input stroke
        auto out_spans = strokes_of(out);
        REQUIRE(out_spans.size() == spans.size());
        std::set<int> used;
        for (const auto& osp : out_spans) {
            bool found = false;
            for (size_t i = 0; i < spans.size() && !found; ++i) {
                if (used.count(int(i)) || spans[i].length() != osp.length()) continue;
                bool eq = true;
                for (int k = 0; k < osp.length(); ++k) {
                    const auto& a = out.points[size_t(osp.start + k)];
                    const auto& b = s.points[size_t(spans[i].start + k)];
                    if (a.x != b.x || a.y != b.y) { eq = false; break; }
                }
                if (eq) { used.insert(int(i)); found = true; }
            }
            CHECK(found);
        }
        if (spans.size() >= 2) {
            bool moved = false;
            for (size_t i = 0; i < s.points.size(); ++i)
                if (s.points[i].x != out.points[i].x || s.points[i].y != out.points[i].y)
                    moved = true;
            CHECK(moved);
        }
    }
}

TEST_CASE("double reversal with the same seed is the identity") {
    Rng rng(8);
    for (uint64_t t = 0; t < 300; ++t) {
        auto s = random_sketch(rng, 16);
        PermutationSpec spec(PermKind::IntraStrokeReverse, t);
        auto once = apply(spec, s, t);
        auto twice = apply(spec, once, t);
        CHECK(max_coord_diff(s, twice) == 0.0);
        CHECK(same_pens(s, twice));
    }
}

TEST_CASE("intra-stroke-reverse reverses ceil(fraction * S) strokes") {
    // 4 strokes of 2 points each; fraction 0.5 -> exactly 2 strokes reversed
    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    for (int st = 0; st < 4; ++st) {
        s.points.push_back(Stroke5Point::make(st * 10.0, 0, Pen::Drawing));
        s.points.push_back(Stroke5Point::make(st * 10.0 + 1, 0,
                                              st == 3 ? Pen::EndOfSketch : Pen::EndOfStroke));
    }
    for (uint64_t seed = 0; seed < 50; ++seed) {
        auto out = apply(PermutationSpec(PermKind::IntraStrokeReverse, seed, 0.5), s, seed);
        int reversed = 0;
        for (int st = 0; st < 4; ++st)
            if (out.points[size_t(2 * st)].x > out.points[size_t(2 * st + 1)].x) ++reversed;
        CHECK(reversed == 2);
    }
}

TEST_CASE("invalid fraction is rejected") {
    Rng rng(10);
    auto s = random_sketch(rng);
    CHECK_THROWS_AS((void)apply(PermutationSpec(PermKind::IntraStrokeReverse, 1, 0.0), s),
                    SketchError);
    CHECK_THROWS_AS((void)apply(PermutationSpec(PermKind::IntraStrokeReverse, 1, 1.5), s),
                    SketchError);
}

TEST_CASE("relative-frame input is a frame error") {
    Rng rng(12);
    auto s = random_sketch(rng, 8, Frame::Relative);
    CHECK_THROWS_AS((void)apply(PermutationSpec(PermKind::StrokeShuffle, 1), s), FrameError);
}

TEST_CASE("compose: identity law and equality law") {
    Rng rng(14);
    PermutationSpec idspec;  // None
    for (uint64_t t = 0; t < 200; ++t) {
        auto s = random_sketch(rng, 14);
        PermutationSpec a(PermKind::StrokeShuffle, t);
        PermutationSpec b(PermKind::IntraStroke, t + 1);

        auto composed = apply(compose(idspec, a), s, t);
        auto direct = apply(a, s, t);
        CHECK(max_coord_diff(composed, direct) == 0.0);

        auto lhs = apply(compose(a, b), s, t);
        auto rhs = apply(b, apply(a, s, t), t);
        CHECK(max_coord_diff(lhs, rhs) == 0.0);
        CHECK(same_pens(lhs, rhs));
    }
}

TEST_CASE("compose chains three stages in order") {
    Rng rng(15);
    auto s = random_sketch(rng, 14);
    PermutationSpec a(PermKind::StrokeShuffle, 3);
    PermutationSpec b(PermKind::IntraStroke, 4);
    PermutationSpec c(PermKind::IntraStrokeReverse, 5);
    auto chained = apply(compose(compose(a, b), c), s, 7);
    auto manual = apply(c, apply(b, apply(a, s, 7), 7), 7);
    CHECK(max_coord_diff(chained, manual) == 0.0);
}

TEST_CASE("stroke shuffle + intra-stroke preserves per-stroke multisets up to relocation") {
    Rng rng(16);
    for (uint64_t t = 0; t < 100; ++t) {
        auto s = random_sketch(rng, 14);
        auto combo = compose(PermutationSpec(PermKind::StrokeShuffle, t),
                             PermutationSpec(PermKind::IntraStroke, t + 9));
        auto out = apply(combo, s, t);
        // multiset of per-stroke coordinate multisets is preserved
        auto collect = [](const Stroke5Sequence& q) {
            std::multiset<std::multiset<std::pair<double, double>>> all;
            for (const auto& sp : strokes_of(q)) {
                std::multiset<std::pair<double, double>> one;
                for (int i = sp.start; i <= sp.end; ++i)
                    one.insert({q.points[size_t(i)].x, q.points[size_t(i)].y});
                all.insert(one);
            }
            return all;
        };
        CHECK(collect(s) == collect(out));
    }
}

TEST_CASE("mapping tracks point origins") {
    Rng rng(17);
    for (uint64_t t = 0; t < 100; ++t) {
        auto s = random_sketch(rng, 14);
        auto res = apply_with_mapping(PermutationSpec(PermKind::InterStroke, t), s, t);
        for (size_t i = 0; i < res.seq.points.size(); ++i) {
            CHECK(res.seq.points[i].x == s.points[size_t(res.mapping[i])].x);
            CHECK(res.seq.points[i].y == s.points[size_t(res.mapping[i])].y);
        }
    }
}
