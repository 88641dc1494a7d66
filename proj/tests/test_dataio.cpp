#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <doctest.h>

#include "helpers.hpp"
#include "sketchlab/dataio.hpp"
#include "sketchlab/optim.hpp"
#include "sketchlab/posenc.hpp"

using namespace sketchlab;

namespace {

bool same_items(const LabeledSketch& a, const LabeledSketch& b) {
    if (a.id != b.id || a.class_label != b.class_label) return false;
    if (a.point_labels != b.point_labels) return false;
    if (a.seq.points.size() != b.seq.points.size()) return false;
    for (size_t i = 0; i < a.seq.points.size(); ++i) {
        // bitwise, not approximate: determinism and the cache are exact
        if (std::memcmp(&a.seq.points[i].x, &b.seq.points[i].x, sizeof(double)) != 0)
            return false;
        if (std::memcmp(&a.seq.points[i].y, &b.seq.points[i].y, sizeof(double)) != 0)
            return false;
        if (a.seq.points[i].pen_index() != b.seq.points[i].pen_index()) return false;
    }
    return true;
}

// Pooled hand features the shape classes were designed to separate: size,
// stroke structure, step statistics, start-point offset, and signed angular
// progress around the centroid (order-sensitive; ±4pi for the spirals).
std::vector<double> features(const LabeledSketch& item) {
    const auto& pts = item.seq.points;
    double mx = 0, my = 0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= double(pts.size());
    my /= double(pts.size());
    double rms = 0;
    for (const auto& p : pts) rms += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
    rms = std::sqrt(rms / double(pts.size()));
    auto spans = strokes_of(item.seq);
    double step = 0;
    int nstep = 0;
    for (const auto& sp : spans)
        for (int i = sp.start + 1; i <= sp.end; ++i) {
            double dx = pts[size_t(i)].x - pts[size_t(i) - 1].x;
            double dy = pts[size_t(i)].y - pts[size_t(i) - 1].y;
            step += std::sqrt(dx * dx + dy * dy);
            ++nstep;
        }
    if (nstep > 0) step /= nstep;
    double start = std::sqrt((pts[0].x - mx) * (pts[0].x - mx) +
                             (pts[0].y - my) * (pts[0].y - my));
    double turn = 0;
    for (size_t i = 1; i < pts.size(); ++i) {
        double ax = pts[i - 1].x - mx, ay = pts[i - 1].y - my;
        double bx = pts[i].x - mx, by = pts[i].y - my;
        turn += std::atan2(ax * by - ay * bx, ax * bx + ay * by);
    }
    return {mx,   my,    rms,  double(spans.size()),
            step, start, turn, double(pts.size())};
}

// Multinomial logistic regression on z-scored pooled features, full-batch
// gradient descent from zero init. Train accuracy, i.e. a direct linear
// separability probe.
double linear_probe_accuracy(const Dataset& ds) {
    size_t dim = features(ds.items[0]).size();
    size_t n = ds.items.size();
    std::vector<std::vector<double>> feats;
    for (const auto& item : ds.items) feats.push_back(features(item));

    std::vector<double> mean(dim, 0), sd(dim, 0);
    for (const auto& f : feats)
        for (size_t d = 0; d < dim; ++d) mean[d] += f[d];
    for (size_t d = 0; d < dim; ++d) mean[d] /= double(n);
    for (const auto& f : feats)
        for (size_t d = 0; d < dim; ++d) sd[d] += (f[d] - mean[d]) * (f[d] - mean[d]);
    for (size_t d = 0; d < dim; ++d) sd[d] = std::max(std::sqrt(sd[d] / double(n)), 1e-9);
    for (auto& f : feats)
        for (size_t d = 0; d < dim; ++d) f[d] = (f[d] - mean[d]) / sd[d];

    size_t nc = ds.class_names.size();
    std::vector<double> w(nc * (dim + 1), 0.0);  // last column is the bias
    std::vector<double> logits(nc), grad(nc * (dim + 1));
    auto fwd = [&](const std::vector<double>& f) {
        for (size_t c = 0; c < nc; ++c) {
            double z = w[c * (dim + 1) + dim];
            for (size_t d = 0; d < dim; ++d) z += w[c * (dim + 1) + d] * f[d];
            logits[c] = z;
        }
        double hi = *std::max_element(logits.begin(), logits.end());
        double sum = 0;
        for (size_t c = 0; c < nc; ++c) {
            logits[c] = std::exp(logits[c] - hi);
            sum += logits[c];
        }
        for (size_t c = 0; c < nc; ++c) logits[c] /= sum;
    };
    for (int iter = 0; iter < 600; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            fwd(feats[i]);
            for (size_t c = 0; c < nc; ++c) {
                double g = logits[c] - (int(c) == ds.items[i].class_label ? 1.0 : 0.0);
                for (size_t d = 0; d < dim; ++d) grad[c * (dim + 1) + d] += g * feats[i][d];
                grad[c * (dim + 1) + dim] += g;
            }
        }
        for (size_t k = 0; k < w.size(); ++k) w[k] -= 1.0 / double(n) * grad[k];
    }
    int hits = 0;
    for (size_t i = 0; i < n; ++i) {
        fwd(feats[i]);
        int best = int(std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (best == ds.items[i].class_label) ++hits;
    }
    return double(hits) / double(n);
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

} // namespace

TEST_CASE("synth generator is deterministic and valid") {
    SynthSpec spec;
    spec.per_class = 8;
    spec.seed = 42;
    Dataset a = synth_generate(spec);
    Dataset b = synth_generate(spec);
    REQUIRE(a.items.size() == 80);
    CHECK(a.class_names.size() == 10);
    CHECK(std::is_sorted(a.class_names.begin(), a.class_names.end()));
    REQUIRE(b.items.size() == a.items.size());
    for (size_t i = 0; i < a.items.size(); ++i) CHECK(same_items(a.items[i], b.items[i]));

    std::map<int, int> per_class;
    std::set<uint64_t> ids;
    for (const auto& item : a.items) {
        CHECK(validate(item.seq).ok());
        CHECK(item.seq.frame == Frame::Absolute);
        CHECK(item.point_labels.size() == item.seq.points.size());
        CHECK(ids.insert(item.id).second);
        ++per_class[item.class_label];
        // part labels are constant within each stroke
        for (const auto& sp : strokes_of(item.seq))
            for (int i = sp.start; i <= sp.end; ++i)
                CHECK(item.point_labels[size_t(i)] ==
                      item.point_labels[size_t(sp.start)]);
        CHECK(item.seq.points.size() >= 12);
        CHECK(item.seq.points.size() <= 24);
    }
    for (auto& [cls, n] : per_class) CHECK(n == 8);

    SynthSpec other = spec;
    other.seed = 43;
    Dataset c = synth_generate(other);
    bool any_diff = false;
    for (size_t i = 0; i < a.items.size() && !any_diff; ++i)
        any_diff = !same_items(a.items[i], c.items[i]);
    CHECK(any_diff);

    CHECK_THROWS_AS(synth_generate(SynthSpec{11, 1, 8, 1.0, 0}), ConfigError);
    CHECK_THROWS_AS(synth_generate(SynthSpec{10, 0, 8, 1.0, 0}), ConfigError);
    CHECK_THROWS_AS(synth_generate(SynthSpec{10, 1, 2, 1.0, 0}), ConfigError);
}

TEST_CASE("synth classes are separable by pooled hand features") {
    SynthSpec clean;
    clean.per_class = 6;
    clean.jitter = 0.0;
    CHECK(linear_probe_accuracy(synth_generate(clean)) == 1.0);

    // at jitter 0 every instance of a class is the identical template
    Dataset ds = synth_generate(clean);
    for (int cls = 0; cls < 10; ++cls) {
        const LabeledSketch* first = nullptr;
        for (const auto& item : ds.items) {
            if (item.class_label != cls) continue;
            if (!first) {
                first = &item;
                continue;
            }
            CHECK(item.seq.points.size() == first->seq.points.size());
            CHECK(testutil::max_coord_diff(item.seq, first->seq) == 0.0);
        }
    }

    SynthSpec noisy;
    noisy.per_class = 40;
    noisy.jitter = 1.0;
    noisy.seed = 7;
    CHECK(linear_probe_accuracy(synth_generate(noisy)) > 0.95);
}

TEST_CASE("quickdraw ndjson parsing, issue collection, filter, subsample") {
    const char* path = "qd_test_tmp.ndjson";
    write_file(path,
               "{\"word\":\"cat\",\"drawing\":[[[0,10],[0,0]]]}\n"
               "{\"word\":\"dog\",\"drawing\":[[[0,1],[0,0]],[[5,6],[5,5]]]}\n"
               "{\"word\":\"cat\",\"drawing\":[[[0\n"
               "{\"word\":\"cat\",\"drawing\":[]}\n"
               "{\"word\":\"bird\",\"drawing\":[[[1,2],[1]]]}\n"
               "\n"
               "{\"word\":\"cat\",\"drawing\":[[[3,4,5],[3,3,3]]]}\n");
    Dataset ds = parse_quickdraw_ndjson(path);
    REQUIRE(ds.items.size() == 3);
    REQUIRE(ds.issues.size() == 3);
    CHECK(ds.issues[0].line == 3);
    CHECK(ds.issues[1].line == 4);
    CHECK(ds.issues[2].line == 5);
    CHECK(ds.class_names == std::vector<std::string>{"cat", "dog"});

    const auto& first = ds.items[0];
    CHECK(first.id == 1);
    CHECK(first.class_label == 0);
    REQUIRE(first.seq.points.size() == 2);
    CHECK(first.seq.points[0].x == 0.0);
    CHECK(first.seq.points[0].y == 0.0);
    CHECK(first.seq.points[1].x == 10.0);
    CHECK(first.seq.points[1].y == 0.0);
    CHECK(first.seq.points[0].is(Pen::Drawing));
    CHECK(first.seq.points[1].is(Pen::EndOfSketch));

    const auto& dog = ds.items[1];
    REQUIRE(dog.seq.points.size() == 4);
    CHECK(dog.seq.points[0].is(Pen::Drawing));
    CHECK(dog.seq.points[1].is(Pen::EndOfStroke));
    CHECK(dog.seq.points[2].is(Pen::Drawing));
    CHECK(dog.seq.points[3].is(Pen::EndOfSketch));
    CHECK(dog.point_labels.empty());

    Dataset cats = parse_quickdraw_ndjson(path, {"cat"});
    CHECK(cats.items.size() == 2);
    CHECK(cats.class_names == std::vector<std::string>{"cat"});

    Dataset sub = parse_quickdraw_ndjson(path, {}, 1, 9);
    CHECK(sub.items.size() == 2);  // one cat + one dog
    Dataset sub2 = parse_quickdraw_ndjson(path, {}, 1, 9);
    REQUIRE(sub2.items.size() == sub.items.size());
    for (size_t i = 0; i < sub.items.size(); ++i)
        CHECK(sub.items[i].id == sub2.items[i].id);

    CHECK_THROWS_AS(parse_quickdraw_ndjson("no_such_file.ndjson"), IoError);
    std::remove(path);
}

TEST_CASE("spg parsing with part labels and range check") {
    const char* path = "spg_test_tmp.json";
    write_file(path,
               "[{\"label\":\"face\",\"strokes\":["
               "{\"points\":[[0,0],[1,0]],\"part\":3},"
               "{\"points\":[[2,2],[3,3],[4,4]],\"part\":7}]},"
               "{\"label\":\"angel\",\"strokes\":[{\"points\":[[0,0]],\"part\":200}]},"
               "{\"label\":\"angel\",\"strokes\":[{\"points\":[[1,1],[2,1]],\"part\":0}]}]");
    Dataset ds = parse_spg(path);
    REQUIRE(ds.items.size() == 2);
    REQUIRE(ds.issues.size() == 1);
    CHECK(ds.issues[0].line == 2);
    CHECK(ds.class_names == std::vector<std::string>{"angel", "face"});

    const auto& face = ds.items[0];
    CHECK(face.class_label == 1);
    REQUIRE(face.seq.points.size() == 5);
    CHECK(face.point_labels == std::vector<int>{3, 3, 7, 7, 7});
    CHECK(face.seq.points[1].is(Pen::EndOfStroke));
    CHECK(face.seq.points[4].is(Pen::EndOfSketch));
    CHECK(validate(face.seq).ok());
    CHECK(ds.items[1].class_label == 0);

    write_file(path, "{\"not\":\"an array\"}");
    CHECK_THROWS_AS(parse_spg(path), IoError);
    std::remove(path);
}

TEST_CASE("per-class split: sizes, disjoint, exhaustive, deterministic") {
    SynthSpec spec;
    spec.per_class = 20;
    spec.seed = 5;
    Dataset ds = synth_generate(spec);
    SplitSpec sp;
    sp.train_per_class = 12;
    sp.val_per_class = 3;
    sp.test_per_class = 5;
    sp.split_seed = 11;
    DatasetSplits s = split_dataset(ds.items, sp);
    CHECK(s.train.size() == 120);
    CHECK(s.val.size() == 30);
    CHECK(s.test.size() == 50);

    std::map<int, int> test_per_class;
    for (const auto& item : s.test) ++test_per_class[item.class_label];
    for (auto& [cls, n] : test_per_class) CHECK(n == 5);

    std::set<uint64_t> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (const auto& item : *part) CHECK(seen.insert(item.id).second);
    CHECK(seen.size() == ds.items.size());

    DatasetSplits again = split_dataset(ds.items, sp);
    REQUIRE(again.test.size() == s.test.size());
    for (size_t i = 0; i < s.test.size(); ++i) CHECK(again.test[i].id == s.test[i].id);

    auto test_ids = [](const DatasetSplits& d) {
        std::set<uint64_t> ids;
        for (const auto& item : d.test) ids.insert(item.id);
        return ids;
    };
    std::set<std::set<uint64_t>> distinct;
    for (int k = 0; k < 5; ++k) {
        SplitSpec rep = sp;
        rep.split_index = k;
        distinct.insert(test_ids(split_dataset(ds.items, rep)));
    }
    CHECK(distinct.size() == 5);

    SplitSpec too_big = sp;
    too_big.train_per_class = 30;
    CHECK_THROWS_AS(split_dataset(ds.items, too_big), ConfigError);
}

TEST_CASE("99th percentile length") {
    std::vector<LabeledSketch> items;
    for (int n = 1; n <= 100; ++n) {
        LabeledSketch item;
        item.seq.points.resize(size_t(n));
        items.push_back(item);
    }
    CHECK(percentile99_len(items) == 99);
    items.resize(1);
    CHECK(percentile99_len(items) == 1);
    items.clear();
    CHECK_THROWS_AS(percentile99_len(items), ConfigError);
}

TEST_CASE("binary cache round trips bit-exactly") {
    SynthSpec spec;
    spec.n_classes = 3;
    spec.per_class = 5;
    spec.jitter = 1.0;
    spec.seed = 99;
    Dataset ds = synth_generate(spec);
    const char* path = "cache_test_tmp.sldc";
    save_cache(path, ds);
    Dataset back = load_cache(path);
    CHECK(back.class_names == ds.class_names);
    CHECK(back.part_names == ds.part_names);
    REQUIRE(back.items.size() == ds.items.size());
    for (size_t i = 0; i < ds.items.size(); ++i) CHECK(same_items(ds.items[i], back.items[i]));

    // unlabeled items keep their empty label vector
    ds.items[0].point_labels.clear();
    save_cache(path, ds);
    CHECK(load_cache(path).items[0].point_labels.empty());

    write_file(path, "not a cache");
    CHECK_THROWS_AS(load_cache(path), IoError);
    CHECK_THROWS_AS(load_cache("no_such_file.sldc"), IoError);
    std::remove(path);
}
