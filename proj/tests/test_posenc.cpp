#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sketchlab/permute.hpp"
#include "sketchlab/posenc.hpp"

using namespace sketchlab;
using namespace sketchlab::testutil;

TEST_CASE("sinusoidal fixed values") {
    auto z = sinusoidal(0, 6);
    CHECK(z == std::vector<double>{0, 1, 0, 1, 0, 1});

    // d=4: frequencies 1 and 1/100
    auto one = sinusoidal(1, 4);
    CHECK(one[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    CHECK(one[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
    CHECK(one[2] == doctest::Approx(std::sin(0.01)).epsilon(1e-15));
    CHECK(one[3] == doctest::Approx(std::cos(0.01)).epsilon(1e-15));

    for (int pos : {0, 1, 7, 100, 9999})
        for (double v : sinusoidal(pos, 32)) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }

    CHECK_THROWS_AS((void)sinusoidal(0, 5), ConfigError);
}

TEST_CASE("sketch position: by slot index, pairwise distinct, content-blind") {
    Rng rng(1);
    auto s = random_sketch(rng, 10);
    const int d = 16, max_len = 64;
    auto m = sketch_position(s, d, max_len);
    const int n = int(s.points.size());
    for (int i = 0; i < n; ++i) {
        auto row = sinusoidal(i, d);
        for (int j = 0; j < d; ++j) CHECK(m[size_t(i * d + j)] == row[size_t(j)]);
    }

    // all rows distinct up to max_len
    for (int a = 0; a < max_len; ++a) {
        auto ra = sinusoidal(a, d);
        for (int b = a + 1; b < max_len; ++b) {
            auto rb = sinusoidal(b, d);
            double diff = 0;
            for (int j = 0; j < d; ++j) diff = std::max(diff, std::abs(ra[size_t(j)] - rb[size_t(j)]));
            CHECK(diff > 1e-6);
        }
    }

    // depends only on length: another sketch with the same N gives the same matrix
    auto s2 = random_sketch(rng, 10);
    while (s2.points.size() != s.points.size()) s2 = random_sketch(rng, 10);
    CHECK(sketch_position(s2, d, max_len) == m);

    // permuting the points changes nothing: encoding tracks slots, not content
    auto shuffled = apply(PermutationSpec(PermKind::InterStroke, 5), s, 5);
    CHECK(sketch_position(shuffled, d, max_len) == m);

    Stroke5Sequence big;
    big.frame = Frame::Absolute;
    for (int i = 0; i < 65; ++i)
        big.points.push_back(Stroke5Point::make(double(i), 0,
                                                i == 64 ? Pen::EndOfSketch : Pen::Drawing));
    CHECK_THROWS_AS((void)sketch_position(big, d, 64), LengthError);
}

TEST_CASE("stroke position: intra-stroke indices reset at boundaries") {
    // pens: drawing, end-of-stroke, end-of-sketch -> intra indices [0, 1, 0]
    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    s.points = {Stroke5Point::make(0, 0, Pen::Drawing),
                Stroke5Point::make(1, 0, Pen::EndOfStroke),
                Stroke5Point::make(2, 0, Pen::EndOfSketch)};
    CHECK(intra_stroke_indices(s) == std::vector<int>{0, 1, 0});

    const int d = 8;
    auto m = stroke_position(s, d, 16);
    auto s0 = sinusoidal(0, d);
    auto s1 = sinusoidal(1, d);
    for (int j = 0; j < d; ++j) {
        CHECK(m[size_t(j)] == s0[size_t(j)]);
        CHECK(m[size_t(d + j)] == s1[size_t(j)]);
        CHECK(m[size_t(2 * d + j)] == s0[size_t(j)]);
    }
}

TEST_CASE("stroke position equals sketch position on single-stroke sketches") {
    Rng rng(2);
    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    for (int i = 0; i < 9; ++i)
        s.points.push_back(Stroke5Point::make(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                              i == 8 ? Pen::EndOfSketch : Pen::Drawing));
    CHECK(stroke_position(s, 12, 32) == sketch_position(s, 12, 32));
}

TEST_CASE("stroke position enumerates sinusoidal(0..L-1) within each stroke") {
    Rng rng(3);
    const int d = 8;
    for (int t = 0; t < 50; ++t) {
        auto s = random_sketch(rng, 20);
        auto m = stroke_position(s, d, 32);
        for (const auto& sp : strokes_of(s)) {
            for (int i = sp.start; i <= sp.end; ++i) {
                auto want = sinusoidal(i - sp.start, d);
                for (int j = 0; j < d; ++j) CHECK(m[size_t(i * d + j)] == want[size_t(j)]);
            }
        }
    }
}

TEST_CASE("stroke embedding: block-constant, capacity-checked, slot-ordinal based") {
    const int d = 4, max_strokes = 8;
    std::vector<double> table(size_t(max_strokes * d));
    for (size_t i = 0; i < table.size(); ++i) table[i] = double(i);

    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    s.points = {Stroke5Point::make(0, 0, Pen::Drawing),
                Stroke5Point::make(1, 0, Pen::EndOfStroke),
                Stroke5Point::make(2, 0, Pen::Drawing),
                Stroke5Point::make(3, 0, Pen::EndOfSketch)};
    auto m = stroke_embedding(s, table, max_strokes, d);
    for (int j = 0; j < d; ++j) {
        CHECK(m[size_t(j)] == table[size_t(j)]);           // stroke 0
        CHECK(m[size_t(d + j)] == table[size_t(j)]);       // still stroke 0
        CHECK(m[size_t(2 * d + j)] == table[size_t(d + j)]);  // stroke 1
        CHECK(m[size_t(3 * d + j)] == table[size_t(d + j)]);
    }

    std::vector<double> zeros(table.size(), 0.0);
    auto mz = stroke_embedding(s, zeros, max_strokes, d);
    for (double v : mz) CHECK(v == 0.0);

    // a sketch with more strokes than the table has rows
    Stroke5Sequence many;
    many.frame = Frame::Absolute;
    for (int i = 0; i < 9; ++i)
        many.points.push_back(Stroke5Point::make(double(i), 0,
                                                 i == 8 ? Pen::EndOfSketch : Pen::EndOfStroke));
    CHECK_THROWS_AS((void)stroke_embedding(many, table, max_strokes, d), CapacityError);
}

TEST_CASE("after stroke shuffle the embedding follows the new ordinal") {
    Rng rng(4);
    const int d = 4, max_strokes = 16;
    std::vector<double> table(size_t(max_strokes * d));
    for (size_t i = 0; i < table.size(); ++i) table[i] = double(i) * 0.25;

    for (uint64_t t = 0; t < 30; ++t) {
        auto s = random_sketch(rng, 16);
        auto out = apply(PermutationSpec(PermKind::StrokeShuffle, t), s, t);
        // indices recomputed from the permuted layout are nondecreasing from 0
        auto idx = stroke_indices(out);
        CHECK(idx.front() == 0);
        for (size_t i = 1; i < idx.size(); ++i) {
            CHECK(idx[i] >= idx[i - 1]);
            CHECK(idx[i] - idx[i - 1] <= 1);
        }
        // and the embedding matrix is block-constant over the new spans
        auto m = stroke_embedding(out, table, max_strokes, d);
        for (const auto& sp : strokes_of(out))
            for (int i = sp.start; i <= sp.end; ++i)
                for (int j = 0; j < d; ++j)
                    CHECK(m[size_t(i * d + j)] == m[size_t(sp.start * d + j)]);
    }
}

TEST_CASE("pen state channels select proj rows by pen index") {
    const int d = 3;
    std::vector<double> proj = {1, 2, 3, 4, 5, 6, 7, 8, 9};  // rows: drawing, eos, eosk
    Stroke5Sequence s;
    s.frame = Frame::Absolute;
    s.points = {Stroke5Point::make(0, 0, Pen::Drawing),
                Stroke5Point::make(1, 0, Pen::Drawing),
                Stroke5Point::make(2, 0, Pen::EndOfStroke),
                Stroke5Point::make(3, 0, Pen::EndOfSketch)};
    auto m = pen_state_channels(s, proj, d);
    CHECK(std::vector<double>(m.begin(), m.begin() + 3) == std::vector<double>{1, 2, 3});
    CHECK(std::vector<double>(m.begin() + 3, m.begin() + 6) == std::vector<double>{1, 2, 3});
    CHECK(std::vector<double>(m.begin() + 6, m.begin() + 9) == std::vector<double>{4, 5, 6});
    CHECK(std::vector<double>(m.begin() + 9, m.end()) == std::vector<double>{7, 8, 9});

    std::vector<double> zeros(9, 0.0);
    for (double v : pen_state_channels(s, zeros, d)) CHECK(v == 0.0);
}

TEST_CASE("combine: empty is zero, singletons match parts, pairs add") {
    Rng rng(5);
    auto s = random_sketch(rng, 12);
    PosEncSpec spec;
    spec.d_model = 8;
    spec.max_len = 32;
    spec.max_strokes = 16;
    PosEncTables tables;
    tables.stroke_emb.resize(size_t(spec.max_strokes * spec.d_model));
    tables.pen_proj.resize(size_t(3 * spec.d_model));
    for (auto& v : tables.stroke_emb) v = rng.normal();
    for (auto& v : tables.pen_proj) v = rng.normal();

    auto zero = combine(spec, s, tables);
    for (double v : zero) CHECK(v == 0.0);

    spec.parts = {PosEncPart::SketchPos};
    CHECK(combine(spec, s, tables) == sketch_position(s, spec.d_model, spec.max_len));

    spec.parts = {PosEncPart::PenState, PosEncPart::SketchPos};
    auto both = combine(spec, s, tables);
    auto a = sketch_position(s, spec.d_model, spec.max_len);
    auto b = pen_state_channels(s, tables.pen_proj, spec.d_model);
    for (size_t i = 0; i < both.size(); ++i)
        CHECK(both[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-15));
}

TEST_CASE("part names round trip") {
    for (PosEncPart p : {PosEncPart::SketchPos, PosEncPart::StrokePos, PosEncPart::StrokeEmb,
                         PosEncPart::PenState})
        CHECK(posenc_part_from_name(posenc_part_name(p)) == p);
    CHECK_THROWS_AS((void)posenc_part_from_name("nope"), ConfigError);
}
