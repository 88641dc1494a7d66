#include "sketchlab/posenc.hpp"

#include <cmath>

namespace sketchlab {

const char* posenc_part_name(PosEncPart p) {
    switch (p) {
        case PosEncPart::SketchPos: return "sketch_pos";
        case PosEncPart::StrokePos: return "stroke_pos";
        case PosEncPart::StrokeEmb: return "stroke_emb";
        case PosEncPart::PenState: return "pen_state";
    }
    return "sketch_pos";
}

PosEncPart posenc_part_from_name(const std::string& name) {
    if (name == "sketch_pos") return PosEncPart::SketchPos;
    if (name == "stroke_pos") return PosEncPart::StrokePos;
    if (name == "stroke_emb") return PosEncPart::StrokeEmb;
    if (name == "pen_state") return PosEncPart::PenState;
    throw ConfigError("unknown positional encoding part: " + name);
}

std::vector<double> sinusoidal(int pos, int d_model) {
    if (d_model <= 0 || d_model % 2 != 0)
        throw ConfigError("sinusoidal: d_model must be positive and even");
    if (pos < 0) throw ConfigError("sinusoidal: position must be nonnegative");
    std::vector<double> v(static_cast<size_t>(d_model));
    for (int k = 0; k < d_model / 2; ++k) {
        double denom = std::pow(10000.0, 2.0 * k / d_model);
        v[size_t(2 * k)] = std::sin(pos / denom);
        v[size_t(2 * k + 1)] = std::cos(pos / denom);
    }
    return v;
}

std::vector<int> stroke_indices(const Stroke5Sequence& seq) {
    std::vector<int> idx(seq.points.size());
    int stroke = 0;
    for (size_t i = 0; i < seq.points.size(); ++i) {
        idx[i] = stroke;
        if (!seq.points[i].is(Pen::Drawing)) ++stroke;
    }
    return idx;
}

std::vector<int> intra_stroke_indices(const Stroke5Sequence& seq) {
    std::vector<int> idx(seq.points.size());
    int j = 0;
    for (size_t i = 0; i < seq.points.size(); ++i) {
        idx[i] = j;
        j = seq.points[i].is(Pen::Drawing) ? j + 1 : 0;
    }
    return idx;
}

static void check_len(const Stroke5Sequence& seq, int max_len) {
    if (int(seq.points.size()) > max_len)
        throw LengthError("positional encoding: sequence length " +
                          std::to_string(seq.points.size()) + " exceeds max_len " +
                          std::to_string(max_len));
}

std::vector<double> sketch_position(const Stroke5Sequence& seq, int d_model, int max_len) {
    check_len(seq, max_len);
    const int n = int(seq.points.size());
    std::vector<double> out(size_t(n) * size_t(d_model));
    for (int i = 0; i < n; ++i) {
        auto row = sinusoidal(i, d_model);
        std::copy(row.begin(), row.end(), out.begin() + int64_t(i) * d_model);
    }
    return out;
}

std::vector<double> stroke_position(const Stroke5Sequence& seq, int d_model, int max_len) {
    check_len(seq, max_len);
    const int n = int(seq.points.size());
    auto intra = intra_stroke_indices(seq);
    std::vector<double> out(size_t(n) * size_t(d_model));
    for (int i = 0; i < n; ++i) {
        auto row = sinusoidal(intra[size_t(i)], d_model);
        std::copy(row.begin(), row.end(), out.begin() + int64_t(i) * d_model);
    }
    return out;
}

std::vector<double> stroke_embedding(const Stroke5Sequence& seq, const std::vector<double>& table,
                                     int max_strokes, int d_model) {
    if (int64_t(table.size()) != int64_t(max_strokes) * d_model)
        throw ConfigError("stroke_embedding: table size mismatch");
    auto idx = stroke_indices(seq);
    const int n = int(seq.points.size());
    std::vector<double> out(size_t(n) * size_t(d_model));
    for (int i = 0; i < n; ++i) {
        int s = idx[size_t(i)];
        if (s >= max_strokes)
            throw CapacityError("stroke_embedding: stroke count exceeds max_strokes " +
                                std::to_string(max_strokes));
        std::copy_n(table.begin() + int64_t(s) * d_model, d_model,
                    out.begin() + int64_t(i) * d_model);
    }
    return out;
}

std::vector<double> pen_state_channels(const Stroke5Sequence& seq,
                                       const std::vector<double>& proj, int d_model) {
    if (int64_t(proj.size()) != 3 * int64_t(d_model))
        throw ConfigError("pen_state_channels: proj must be 3 x d_model");
    const int n = int(seq.points.size());
    std::vector<double> out(size_t(n) * size_t(d_model));
    for (int i = 0; i < n; ++i) {
        int p = seq.points[size_t(i)].pen_index();
        std::copy_n(proj.begin() + int64_t(p) * d_model, d_model,
                    out.begin() + int64_t(i) * d_model);
    }
    return out;
}

std::vector<double> combine(const PosEncSpec& spec, const Stroke5Sequence& seq,
                            const PosEncTables& tables) {
    const int n = int(seq.points.size());
    std::vector<double> out(size_t(n) * size_t(spec.d_model), 0.0);
    auto accum = [&](const std::vector<double>& part) {
        for (size_t i = 0; i < out.size(); ++i) out[i] += part[i];
    };
    for (PosEncPart p : spec.parts) {
        switch (p) {
            case PosEncPart::SketchPos:
                accum(sketch_position(seq, spec.d_model, spec.max_len));
                break;
            case PosEncPart::StrokePos:
                accum(stroke_position(seq, spec.d_model, spec.max_len));
                break;
            case PosEncPart::StrokeEmb:
                accum(stroke_embedding(seq, tables.stroke_emb, spec.max_strokes, spec.d_model));
                break;
            case PosEncPart::PenState:
                accum(pen_state_channels(seq, tables.pen_proj, spec.d_model));
                break;
        }
    }
    return out;
}

} // namespace sketchlab
