#include "sketchlab/permute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sketchlab/rng.hpp"

namespace sketchlab {

const char* perm_kind_name(PermKind k) {
    switch (k) {
        case PermKind::None: return "none";
        case PermKind::InterStroke: return "inter_stroke";
        case PermKind::IntraStroke: return "intra_stroke";
        case PermKind::IntraStrokeReverse: return "intra_stroke_reverse";
        case PermKind::StrokeShuffle: return "stroke_shuffle";
    }
    return "none";
}

PermKind perm_kind_from_name(const std::string& name) {
    if (name == "none") return PermKind::None;
    if (name == "inter_stroke") return PermKind::InterStroke;
    if (name == "intra_stroke") return PermKind::IntraStroke;
    if (name == "intra_stroke_reverse") return PermKind::IntraStrokeReverse;
    if (name == "stroke_shuffle") return PermKind::StrokeShuffle;
    throw SketchError("unknown permutation kind: " + name);
}

PermutationSpec compose(const PermutationSpec& first, const PermutationSpec& second) {
    PermutationSpec out = first;
    if (!out.then) {
        out.then = std::make_shared<PermutationSpec>(second);
        return out;
    }
    // copy the chain and append at the tail
    std::vector<PermutationSpec> chain;
    for (const PermutationSpec* p = out.then.get(); p; p = p->then.get())
        chain.push_back(*p);
    std::shared_ptr<const PermutationSpec> tail = std::make_shared<PermutationSpec>(second);
    for (size_t i = chain.size(); i-- > 0;) {
        PermutationSpec node = chain[i];
        node.then = tail;
        tail = std::make_shared<PermutationSpec>(node);
    }
    out.then = tail;
    return out;
}

// Fisher-Yates that retries until the permutation moves something.
static void shuffle_non_identity(std::vector<int>& idx, Rng& rng) {
    if (idx.size() < 2) return;
    std::vector<int> orig = idx;
    for (int tries = 0; tries < 256; ++tries) {
        rng.shuffle(idx);
        if (idx != orig) return;
    }
    std::swap(idx[0], idx[1]);
}

// Rebuilds pen states for a given stroke layout: interior points draw, each
// stroke ends with end-of-stroke, the final point carries end-of-sketch.
static void rebuild_pens(Stroke5Sequence& seq, const std::vector<int>& stroke_lengths) {
    size_t pos = 0;
    for (size_t s = 0; s < stroke_lengths.size(); ++s) {
        for (int k = 0; k < stroke_lengths[s]; ++k, ++pos) {
            Pen p = Pen::Drawing;
            if (k == stroke_lengths[s] - 1)
                p = (s == stroke_lengths.size() - 1) ? Pen::EndOfSketch : Pen::EndOfStroke;
            seq.points[pos].pen = {0, 0, 0};
            seq.points[pos].pen[size_t(p)] = 1;
        }
    }
}

static std::vector<int> one_stage(PermKind kind, double fraction, Rng& rng,
                                  const Stroke5Sequence& seq,
                                  const std::vector<StrokeSpan>& spans,
                                  std::vector<int>* stroke_order_out) {
    const int n = int(seq.points.size());
    std::vector<int> map(static_cast<size_t>(n));
    std::iota(map.begin(), map.end(), 0);

    switch (kind) {
        case PermKind::None:
            break;
        case PermKind::InterStroke:
            rng.shuffle(map);
            break;
        case PermKind::IntraStroke:
            for (const auto& sp : spans) {
                if (sp.length() < 2) continue;
                std::vector<int> idx(map.begin() + sp.start, map.begin() + sp.end + 1);
                shuffle_non_identity(idx, rng);
                std::copy(idx.begin(), idx.end(), map.begin() + sp.start);
            }
            break;
        case PermKind::IntraStrokeReverse: {
            const int s_count = int(spans.size());
            std::vector<int> chosen;
            if (s_count == 1) {
                if (rng.uniform01() < 0.5) chosen.push_back(0);
            } else {
                int k = int(std::ceil(fraction * double(s_count)));
                k = std::min(k, s_count);
                std::vector<int> ids(static_cast<size_t>(s_count));
                std::iota(ids.begin(), ids.end(), 0);
                for (int i = 0; i < k; ++i) {
                    int j = i + int(rng.below(uint64_t(s_count - i)));
                    std::swap(ids[size_t(i)], ids[size_t(j)]);
                }
                chosen.assign(ids.begin(), ids.begin() + k);
            }
            for (int s : chosen) {
                const auto& sp = spans[size_t(s)];
                std::reverse(map.begin() + sp.start, map.begin() + sp.end + 1);
            }
            break;
        }
        case PermKind::StrokeShuffle: {
            std::vector<int> order(spans.size());
            std::iota(order.begin(), order.end(), 0);
            shuffle_non_identity(order, rng);
            std::vector<int> out;
            out.reserve(size_t(n));
            for (int s : order)
                for (int i = spans[size_t(s)].start; i <= spans[size_t(s)].end; ++i)
                    out.push_back(i);
            map = out;
            if (stroke_order_out) *stroke_order_out = order;
            break;
        }
    }
    return map;
}

PermutedSketch apply_with_mapping(const PermutationSpec& spec, const Stroke5Sequence& seq,
                                  uint64_t sketch_id) {
    if (seq.frame != Frame::Absolute)
        throw FrameError("permute: sequence must be in the absolute frame");
    require_valid(seq);

    PermutedSketch cur;
    cur.seq = seq;
    cur.mapping.resize(seq.points.size());
    std::iota(cur.mapping.begin(), cur.mapping.end(), 0);

    for (const PermutationSpec* stage = &spec; stage; stage = stage->then.get()) {
        if (stage->kind == PermKind::IntraStrokeReverse &&
            !(stage->fraction > 0.0 && stage->fraction <= 1.0))
            throw SketchError("permute: fraction must be in (0, 1]");

        auto spans = strokes_of(cur.seq);
        Rng rng = Rng::substream(stage->seed, {sketch_id, uint64_t(stage->kind)});
        std::vector<int> stroke_order;
        std::vector<int> map = one_stage(stage->kind, stage->fraction, rng, cur.seq, spans,
                                         &stroke_order);

        Stroke5Sequence next = cur.seq;
        std::vector<int> next_mapping(cur.mapping.size());
        for (size_t i = 0; i < map.size(); ++i) {
            next.points[i].x = cur.seq.points[size_t(map[i])].x;
            next.points[i].y = cur.seq.points[size_t(map[i])].y;
            next_mapping[i] = cur.mapping[size_t(map[i])];
        }

        if (stage->kind == PermKind::StrokeShuffle) {
            std::vector<int> lengths;
            for (int s : stroke_order) lengths.push_back(spans[size_t(s)].length());
            rebuild_pens(next, lengths);
        } else {
            // skeleton unchanged: pens stay by slot
            for (size_t i = 0; i < next.points.size(); ++i)
                next.points[i].pen = cur.seq.points[i].pen;
        }
        cur.seq = std::move(next);
        cur.mapping = std::move(next_mapping);
    }
    return cur;
}

} // namespace sketchlab
