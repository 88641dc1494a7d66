#include "sketchlab/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "sketchlab/optim.hpp"
#include "sketchlab/posenc.hpp"
#include "sketchlab/rng.hpp"

namespace sketchlab {

namespace {

using json = nlohmann::json;

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---- synthetic shape classes ------------------------------------------------

// The ten classes form five confusable pairs. Within a pair the point
// multisets coincide (circle, spiral, square, ring, zigzag geometry), and the
// distinguishing signal is exactly one of: pen structure (circle_one vs
// circle_two, zigzag_one vs zigzag_three), point order direction (spiral_out
// vs spiral_in), stroke membership (square_sides vs square_weave), or
// within-stroke adjacency (ring_walk visits its arcs smoothly, ring_step jumps
// inside the same arcs). That makes classification sensitive to positional
// encodings and to the order permutations in a controlled way.

constexpr int kPartLoop = 0, kPartArc = 1, kPartCoil = 2, kPartSide = 3,
              kPartBase = 4, kPartWeave = 5, kPartRim = 6, kPartChord = 7,
              kPartZig = 8, kPartMid = 9;

const char* const kPartNames[] = {"loop", "arc",  "coil", "side", "base",
                                  "weave", "rim", "chord", "zig",  "mid"};

// Sorted by name; class label = index into this array.
const char* const kClassNames[] = {
    "circle_one", "circle_two", "ring_step",    "ring_walk",    "spiral_in",
    "spiral_out", "square_sides", "square_weave", "zigzag_one", "zigzag_three"};

struct Vec2 {
    double x, y;
};

struct Template {
    std::vector<std::vector<Vec2>> strokes;
    std::vector<int> stroke_parts;
};

Template make_circle(int n, int n_strokes, int part) {
    std::vector<Vec2> ring(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double th = 2.0 * M_PI * i / n - M_PI / 2.0;
        ring[size_t(i)] = {0.8 * std::cos(th), 0.8 * std::sin(th)};
    }
    Template t;
    int per = n / n_strokes;
    for (int s = 0; s < n_strokes; ++s) {
        t.strokes.emplace_back(ring.begin() + s * per,
                               s + 1 == n_strokes ? ring.end() : ring.begin() + (s + 1) * per);
        t.stroke_parts.push_back(part);
    }
    return t;
}

Template make_spiral(int n, bool inward) {
    std::vector<Vec2> pts(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double u = double(i) / (n - 1);
        double r = 0.08 + 0.72 * u;
        double th = 4.0 * M_PI * u;
        pts[size_t(i)] = {r * std::cos(th), r * std::sin(th)};
    }
    if (inward) std::reverse(pts.begin(), pts.end());
    Template t;
    t.strokes.push_back(std::move(pts));
    t.stroke_parts.push_back(kPartCoil);
    return t;
}

Template make_square(bool weave) {
    const Vec2 corners[4] = {{-0.8, -0.8}, {0.8, -0.8}, {0.8, 0.8}, {-0.8, 0.8}};
    std::vector<std::vector<Vec2>> sides(4);
    for (int k = 0; k < 4; ++k) {
        Vec2 a = corners[k], b = corners[(k + 1) % 4];
        for (int i = 0; i < 4; ++i) {
            double u = i / 3.0;
            sides[size_t(k)].push_back({a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u});
        }
    }
    Template t;
    if (!weave) {
        for (int k = 0; k < 4; ++k) {
            t.strokes.push_back(sides[size_t(k)]);
            t.stroke_parts.push_back(k == 0 ? kPartBase : kPartSide);
        }
    } else {
        // stroke k takes the k-th point of every side: same multiset,
        // different membership
        for (int k = 0; k < 4; ++k) {
            std::vector<Vec2> s;
            for (int side = 0; side < 4; ++side) s.push_back(sides[size_t(side)][size_t(k)]);
            t.strokes.push_back(std::move(s));
            t.stroke_parts.push_back(kPartWeave);
        }
    }
    return t;
}

Template make_ring(bool step) {
    std::vector<Vec2> ring(18);
    for (int i = 0; i < 18; ++i) {
        double th = 2.0 * M_PI * i / 18 - M_PI / 2.0;
        ring[size_t(i)] = {0.8 * std::cos(th), 0.8 * std::sin(th)};
    }
    // visiting order inside each 6-point arc: smooth walk vs fixed jumps
    const int walk[6] = {0, 1, 2, 3, 4, 5};
    const int jump[6] = {0, 3, 1, 4, 2, 5};
    const int* order = step ? jump : walk;
    Template t;
    for (int s = 0; s < 3; ++s) {
        std::vector<Vec2> stroke;
        for (int i = 0; i < 6; ++i) stroke.push_back(ring[size_t(6 * s + order[i])]);
        t.strokes.push_back(std::move(stroke));
        t.stroke_parts.push_back(step ? kPartChord : kPartRim);
    }
    return t;
}

Template make_zigzag(int n, int n_strokes) {
    std::vector<Vec2> pts(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = -0.8 + 1.6 * i / (n - 1);
        pts[size_t(i)] = {x, i % 2 ? 0.5 : -0.5};
    }
    Template t;
    int per = n / n_strokes;
    for (int s = 0; s < n_strokes; ++s) {
        t.strokes.emplace_back(pts.begin() + s * per,
                               s + 1 == n_strokes ? pts.end() : pts.begin() + (s + 1) * per);
        t.stroke_parts.push_back(n_strokes == 3 && s == 1 ? kPartMid : kPartZig);
    }
    return t;
}

int pick_count(Rng& rng, double jitter, std::initializer_list<int> choices, int fixed) {
    if (jitter <= 0) return fixed;
    auto it = choices.begin();
    std::advance(it, long(rng.below(uint64_t(choices.size()))));
    return *it;
}

Template make_template(int cls, Rng& rng, double jitter) {
    switch (cls) {
        case 0: return make_circle(pick_count(rng, jitter, {12, 16, 20}, 16), 1, kPartLoop);
        case 1: return make_circle(pick_count(rng, jitter, {12, 16, 20}, 16), 2, kPartArc);
        case 2: return make_ring(true);
        case 3: return make_ring(false);
        case 4: return make_spiral(pick_count(rng, jitter, {16, 20, 24}, 20), true);
        case 5: return make_spiral(pick_count(rng, jitter, {16, 20, 24}, 20), false);
        case 6: return make_square(false);
        case 7: return make_square(true);
        case 8: return make_zigzag(pick_count(rng, jitter, {12, 15, 18}, 15), 1);
        case 9: return make_zigzag(pick_count(rng, jitter, {12, 15, 18}, 15), 3);
    }
    throw ConfigError("synth: unknown class index");
}

// ---- shared parser plumbing -------------------------------------------------

// Assigns class labels through a name table sorted by class name, so label
// ids are stable across runs and machines.
void finalize_classes(Dataset& ds, std::vector<std::string>& names_per_item) {
    std::vector<std::string> names = names_per_item;
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    ds.class_names = names;
    for (size_t i = 0; i < ds.items.size(); ++i) {
        auto it = std::lower_bound(names.begin(), names.end(), names_per_item[i]);
        ds.items[i].class_label = int(it - names.begin());
    }
}

} // namespace

Dataset synth_generate(const SynthSpec& spec) {
    if (spec.n_classes < 1 || spec.n_classes > 10)
        throw ConfigError("synth: n_classes must be in [1, 10]");
    if (spec.per_class < 1) throw ConfigError("synth: per_class must be positive");
    if (spec.jitter < 0) throw ConfigError("synth: jitter must be nonnegative");
    if (spec.max_strokes < 4)
        throw ConfigError("synth: templates need up to 4 strokes");

    Dataset ds;
    ds.class_names.assign(kClassNames, kClassNames + spec.n_classes);
    ds.part_names.assign(kPartNames, kPartNames + 10);
    for (int cls = 0; cls < spec.n_classes; ++cls) {
        for (int k = 0; k < spec.per_class; ++k) {
            Rng rng = Rng::substream(spec.seed, {uint64_t(cls), uint64_t(k)});
            Template t = make_template(cls, rng, spec.jitter);
            double scale = 1.0, cx = 0.0, cy = 0.0;
            if (spec.jitter > 0) {
                scale = 1.0 + 0.2 * spec.jitter * rng.uniform(-1.0, 1.0);
                cx = 0.2 * spec.jitter * rng.uniform(-1.0, 1.0);
                cy = 0.2 * spec.jitter * rng.uniform(-1.0, 1.0);
            }
            LabeledSketch item;
            item.id = uint64_t(cls) * uint64_t(spec.per_class) + uint64_t(k) + 1;
            item.class_label = cls;
            item.seq.frame = Frame::Absolute;
            for (size_t s = 0; s < t.strokes.size(); ++s) {
                const auto& stroke = t.strokes[s];
                for (size_t i = 0; i < stroke.size(); ++i) {
                    double x = stroke[i].x * scale + cx;
                    double y = stroke[i].y * scale + cy;
                    if (spec.jitter > 0) {
                        x += 0.02 * spec.jitter * rng.normal();
                        y += 0.02 * spec.jitter * rng.normal();
                    }
                    bool stroke_end = i + 1 == stroke.size();
                    bool sketch_end = stroke_end && s + 1 == t.strokes.size();
                    item.seq.points.push_back(Stroke5Point::make(
                        x, y,
                        sketch_end ? Pen::EndOfSketch
                                   : (stroke_end ? Pen::EndOfStroke : Pen::Drawing)));
                    item.point_labels.push_back(t.stroke_parts[s]);
                }
            }
            ds.items.push_back(std::move(item));
        }
    }
    return ds;
}

Dataset parse_quickdraw_ndjson(const std::string& path,
                               const std::vector<std::string>& class_filter,
                               int per_class, uint64_t subsample_seed) {
    std::ifstream in(path);
    if (!in) throw IoError("quickdraw: cannot open " + path);
    Dataset ds;
    std::vector<std::string> item_class;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            std::string word = j.value("word", std::string());
            if (word.empty()) throw std::runtime_error("missing word field");
            if (!class_filter.empty() &&
                std::find(class_filter.begin(), class_filter.end(), word) ==
                    class_filter.end())
                continue;
            const json& drawing = j.at("drawing");
            LabeledSketch item;
            item.id = uint64_t(lineno);
            item.seq.frame = Frame::Absolute;
            for (const json& stroke : drawing) {
                const json& xs = stroke.at(0);
                const json& ys = stroke.at(1);
                if (xs.size() != ys.size())
                    throw std::runtime_error("stroke x/y length mismatch");
                for (size_t i = 0; i < xs.size(); ++i)
                    item.seq.points.push_back(Stroke5Point::make(
                        xs[i].get<double>(), ys[i].get<double>(),
                        i + 1 == xs.size() ? Pen::EndOfStroke : Pen::Drawing));
            }
            if (item.seq.points.empty()) {
                ds.issues.push_back({lineno, "empty drawing, skipped"});
                continue;
            }
            item.seq.points.back() = Stroke5Point::make(item.seq.points.back().x,
                                                        item.seq.points.back().y,
                                                        Pen::EndOfSketch);
            auto report = validate(item.seq);
            if (!report.ok()) {
                ds.issues.push_back({lineno, "invalid sketch: " + report.violations[0]});
                continue;
            }
            ds.items.push_back(std::move(item));
            item_class.push_back(word);
        } catch (const std::exception& e) {
            ds.issues.push_back({lineno, e.what()});
        }
    }
    if (per_class > 0) {
        // deterministic per-class subsample: keep the per_class smallest hash
        // ranks, a stable stand-in for reservoir sampling
        std::map<std::string, std::vector<size_t>> by_class;
        for (size_t i = 0; i < ds.items.size(); ++i)
            by_class[item_class[i]].push_back(i);
        std::vector<char> keep(ds.items.size(), 0);
        for (auto& [name, idx] : by_class) {
            std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
                uint64_t ra = mix_stream(subsample_seed, {fnv1a(name), ds.items[a].id});
                uint64_t rb = mix_stream(subsample_seed, {fnv1a(name), ds.items[b].id});
                return ra != rb ? ra < rb : a < b;
            });
            for (size_t k = 0; k < idx.size() && k < size_t(per_class); ++k)
                keep[idx[k]] = 1;
        }
        Dataset filtered;
        filtered.issues = ds.issues;
        std::vector<std::string> fclass;
        for (size_t i = 0; i < ds.items.size(); ++i)
            if (keep[i]) {
                filtered.items.push_back(std::move(ds.items[i]));
                fclass.push_back(item_class[i]);
            }
        ds = std::move(filtered);
        item_class = std::move(fclass);
    }
    finalize_classes(ds, item_class);
    return ds;
}

Dataset parse_spg(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("spg: cannot open " + path);
    json root;
    try {
        in >> root;
    } catch (const std::exception& e) {
        throw IoError(std::string("spg: top-level parse failure: ") + e.what());
    }
    if (!root.is_array()) throw IoError("spg: expected a top-level array of records");

    Dataset ds;
    std::vector<std::string> item_class;
    for (size_t r = 0; r < root.size(); ++r) {
        int recno = int(r) + 1;
        try {
            const json& rec = root[r];
            std::string label = rec.at("label").get<std::string>();
            LabeledSketch item;
            item.id = uint64_t(recno);
            item.seq.frame = Frame::Absolute;
            const json& strokes = rec.at("strokes");
            if (strokes.empty()) throw std::runtime_error("record has no strokes");
            for (size_t s = 0; s < strokes.size(); ++s) {
                const json& pts = strokes[s].at("points");
                int part = strokes[s].at("part").get<int>();
                if (part < 0 || part >= 109)
                    throw std::runtime_error("part label out of range [0, 109)");
                if (pts.empty()) throw std::runtime_error("empty stroke");
                for (size_t i = 0; i < pts.size(); ++i) {
                    bool stroke_end = i + 1 == pts.size();
                    bool sketch_end = stroke_end && s + 1 == strokes.size();
                    item.seq.points.push_back(Stroke5Point::make(
                        pts[i].at(0).get<double>(), pts[i].at(1).get<double>(),
                        sketch_end ? Pen::EndOfSketch
                                   : (stroke_end ? Pen::EndOfStroke : Pen::Drawing)));
                    item.point_labels.push_back(part);
                }
            }
            auto report = validate(item.seq);
            if (!report.ok())
                throw std::runtime_error("invalid sketch: " + report.violations[0]);
            ds.items.push_back(std::move(item));
            item_class.push_back(label);
        } catch (const std::exception& e) {
            ds.issues.push_back({recno, e.what()});
        }
    }
    finalize_classes(ds, item_class);
    return ds;
}

DatasetSplits split_dataset(const std::vector<LabeledSketch>& items, const SplitSpec& spec) {
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < items.size(); ++i)
        by_class[items[i].class_label].push_back(i);

    int need = spec.train_per_class + spec.val_per_class + spec.test_per_class;
    DatasetSplits out;
    for (auto& [cls, idx] : by_class) {
        if (int(idx.size()) < need)
            throw ConfigError("split: class " + std::to_string(cls) + " has " +
                              std::to_string(idx.size()) + " items, needs " +
                              std::to_string(need));
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            uint64_t ra = mix_stream(spec.split_seed,
                                     {items[a].id, uint64_t(spec.split_index)});
            uint64_t rb = mix_stream(spec.split_seed,
                                     {items[b].id, uint64_t(spec.split_index)});
            return ra != rb ? ra < rb : items[a].id < items[b].id;
        });
        size_t at = 0;
        for (int k = 0; k < spec.test_per_class; ++k) out.test.push_back(items[idx[at++]]);
        for (int k = 0; k < spec.val_per_class; ++k) out.val.push_back(items[idx[at++]]);
        // train absorbs the remainder so the splits stay exhaustive
        for (; at < idx.size(); ++at) out.train.push_back(items[idx[at]]);
    }
    return out;
}

int percentile99_len(const std::vector<LabeledSketch>& train) {
    if (train.empty()) throw ConfigError("percentile99_len: empty training set");
    std::vector<int> lens;
    lens.reserve(train.size());
    for (const auto& item : train) lens.push_back(int(item.seq.points.size()));
    std::sort(lens.begin(), lens.end());
    size_t rank = size_t(std::ceil(0.99 * double(lens.size())));
    if (rank == 0) rank = 1;
    return lens[rank - 1];
}

namespace {

template <class T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
void put_str(std::ofstream& out, const std::string& s) {
    put(out, uint32_t(s.size()));
    out.write(s.data(), long(s.size()));
}
std::string get_str(std::ifstream& in) {
    uint32_t n = get<uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), long(n));
    return s;
}

} // namespace

void save_cache(const std::string& path, const Dataset& ds) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cache: cannot open " + tmp + " for writing");
        out.write("SLDC", 4);
        put(out, uint32_t(1));
        put(out, uint32_t(ds.class_names.size()));
        for (const auto& s : ds.class_names) put_str(out, s);
        put(out, uint32_t(ds.part_names.size()));
        for (const auto& s : ds.part_names) put_str(out, s);
        put(out, uint64_t(ds.items.size()));
        for (const auto& item : ds.items) {
            put(out, item.id);
            put(out, int32_t(item.class_label));
            put(out, uint32_t(item.seq.points.size()));
            put(out, uint8_t(item.point_labels.empty() ? 0 : 1));
            for (const auto& p : item.seq.points) {
                put(out, p.x);
                put(out, p.y);
                put(out, uint8_t(p.pen_index()));
            }
            for (int lab : item.point_labels) put(out, int32_t(lab));
        }
        if (!out) throw IoError("cache: write failure on " + tmp);
    }
    // Publish atomically so an interrupted save never leaves a torn file.
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cache: cannot move into place: " + path + " (" + ec.message() + ")");
}

Dataset load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cache: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SLDC", 4) != 0)
        throw IoError("cache: bad magic in " + path);
    if (get<uint32_t>(in) != 1) throw IoError("cache: unsupported version");
    Dataset ds;
    uint32_t nc = get<uint32_t>(in);
    for (uint32_t i = 0; i < nc; ++i) ds.class_names.push_back(get_str(in));
    uint32_t np = get<uint32_t>(in);
    for (uint32_t i = 0; i < np; ++i) ds.part_names.push_back(get_str(in));
    uint64_t n = get<uint64_t>(in);
    for (uint64_t i = 0; i < n; ++i) {
        LabeledSketch item;
        item.id = get<uint64_t>(in);
        item.class_label = get<int32_t>(in);
        uint32_t pts = get<uint32_t>(in);
        uint8_t has_labels = get<uint8_t>(in);
        item.seq.frame = Frame::Absolute;
        for (uint32_t p = 0; p < pts; ++p) {
            double x = get<double>(in);
            double y = get<double>(in);
            Pen pen = Pen(get<uint8_t>(in));
            item.seq.points.push_back(Stroke5Point::make(x, y, pen));
        }
        if (has_labels)
            for (uint32_t p = 0; p < pts; ++p)
                item.point_labels.push_back(get<int32_t>(in));
        ds.items.push_back(std::move(item));
    }
    if (!in) throw IoError("cache: truncated file " + path);
    return ds;
}

} // namespace sketchlab
