#include "sketchlab/model.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace sketchlab {

using nlohmann::json;

const char* decoder_variant_name(DecoderVariant v) {
    switch (v) {
        case DecoderVariant::AR: return "ar";
        case DecoderVariant::AR_noCA: return "ar_no_ca";
        case DecoderVariant::NAR: return "nar";
        case DecoderVariant::NAR_noCA: return "nar_no_ca";
        case DecoderVariant::NAR_noCA_noSA: return "nar_no_ca_no_sa";
    }
    return "nar_no_ca";
}

DecoderVariant decoder_variant_from_name(const std::string& name) {
    if (name == "ar") return DecoderVariant::AR;
    if (name == "ar_no_ca") return DecoderVariant::AR_noCA;
    if (name == "nar") return DecoderVariant::NAR;
    if (name == "nar_no_ca") return DecoderVariant::NAR_noCA;
    if (name == "nar_no_ca_no_sa") return DecoderVariant::NAR_noCA_noSA;
    throw ConfigError("unknown decoder variant: " + name);
}

const char* task_name(Task t) {
    switch (t) {
        case Task::Classification: return "classification";
        case Task::Segmentation: return "segmentation";
        case Task::Reconstruction: return "reconstruction";
    }
    return "reconstruction";
}

Task task_from_name(const std::string& name) {
    if (name == "classification") return Task::Classification;
    if (name == "segmentation") return Task::Segmentation;
    if (name == "reconstruction") return Task::Reconstruction;
    throw ConfigError("unknown task: " + name);
}

const char* frame_name(Frame f) { return f == Frame::Relative ? "relative" : "absolute"; }

Frame frame_from_name(const std::string& name) {
    if (name == "relative") return Frame::Relative;
    if (name == "absolute") return Frame::Absolute;
    throw ConfigError("unknown frame: " + name);
}

const char* pool_name(Pool p) {
    switch (p) {
        case Pool::Mean: return "mean";
        case Pool::Max: return "max";
        case Pool::First: return "first";
    }
    return "mean";
}

Pool pool_from_name(const std::string& name) {
    if (name == "mean") return Pool::Mean;
    if (name == "max") return Pool::Max;
    if (name == "first") return Pool::First;
    throw ConfigError("unknown pool: " + name);
}

std::string ModelConfig::to_json() const {
    json j;
    j["d_model"] = d_model;
    j["heads"] = heads;
    j["enc_layers"] = enc_layers;
    j["dec_layers"] = dec_layers;
    j["decoder_variant"] = decoder_variant_name(decoder_variant);
    j["input_frame"] = frame_name(input_frame);
    j["output_frame"] = frame_name(output_frame);
    j["task"] = task_name(task);
    j["n_classes"] = n_classes;
    j["n_point_classes"] = n_point_classes;
    j["max_len"] = max_len;
    j["max_strokes"] = max_strokes;
    j["pool"] = pool_name(pool);
    json parts = json::array();
    for (PosEncPart p : posenc.parts) parts.push_back(posenc_part_name(p));
    j["posenc"] = parts;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.enc_layers = j.at("enc_layers").get<int>();
    c.dec_layers = j.at("dec_layers").get<int>();
    c.decoder_variant = decoder_variant_from_name(j.at("decoder_variant").get<std::string>());
    c.input_frame = frame_from_name(j.at("input_frame").get<std::string>());
    c.output_frame = frame_from_name(j.at("output_frame").get<std::string>());
    c.task = task_from_name(j.at("task").get<std::string>());
    c.n_classes = j.at("n_classes").get<int>();
    c.n_point_classes = j.at("n_point_classes").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.max_strokes = j.at("max_strokes").get<int>();
    c.pool = pool_from_name(j.value("pool", "mean"));
    for (const auto& p : j.at("posenc"))
        c.posenc.parts.insert(posenc_part_from_name(p.get<std::string>()));
    c.posenc.d_model = c.d_model;
    c.posenc.max_len = c.max_len;
    c.posenc.max_strokes = c.max_strokes;
    return c;
}

int SketchModel::budget_ffn_hidden(int d_model) {
    // Width h solving 2dh + h + d = 4d^2 + 4d, the parameter count of the
    // q/k/v/o projections the extra FFN replaces.
    double d = double(d_model);
    return int(std::llround((4.0 * d * d + 3.0 * d) / (2.0 * d + 1.0)));
}

Tensor SketchModel::make_weight(const std::string& name, Shape shape) {
    std::vector<float> v(size_t(numel(shape)));
    for (auto& x : v) x = float(init_rng_.truncated_normal(0.02));
    return params.add(name, Tensor::param(std::move(shape), std::move(v)));
}

Tensor SketchModel::make_zeros(const std::string& name, Shape shape) {
    return params.add(name, Tensor::param(std::move(shape)));
}

Tensor SketchModel::make_ones(const std::string& name, Shape shape) {
    std::vector<float> v(size_t(numel(shape)), 1.0f);
    return params.add(name, Tensor::param(std::move(shape), std::move(v)));
}

SketchModel::LinearP SketchModel::make_linear(const std::string& name, int din, int dout) {
    return {make_weight(name + ".W", {din, dout}), make_zeros(name + ".b", {dout})};
}

SketchModel::LnP SketchModel::make_ln(const std::string& name) {
    return {make_ones(name + ".g", {cfg_.d_model}), make_zeros(name + ".b", {cfg_.d_model})};
}

SketchModel::AttnP SketchModel::make_attn(const std::string& name) {
    int d = cfg_.d_model;
    return {make_linear(name + ".q", d, d), make_linear(name + ".k", d, d),
            make_linear(name + ".v", d, d), make_linear(name + ".o", d, d)};
}

SketchModel::Block SketchModel::make_block(const std::string& name, bool causal, bool with_sa,
                                           bool with_ca, bool with_extra) {
    Block b;
    b.causal = causal;
    b.has_sa = with_sa;
    if (with_sa) {
        b.ln_sa = make_ln(name + ".ln_sa");
        b.sa = make_attn(name + ".sa");
    }
    b.has_extra = with_extra;
    if (with_extra) {
        int h = budget_ffn_hidden(cfg_.d_model);
        b.ln_extra = make_ln(name + ".ln_extra");
        b.extra1 = make_linear(name + ".extra1", cfg_.d_model, h);
        b.extra2 = make_linear(name + ".extra2", h, cfg_.d_model);
    }
    b.has_ca = with_ca;
    if (with_ca) {
        b.ln_ca = make_ln(name + ".ln_ca");
        b.ca = make_attn(name + ".ca");
    }
    b.ln_ffn = make_ln(name + ".ln_ffn");
    b.ffn1 = make_linear(name + ".ffn1", cfg_.d_model, 4 * cfg_.d_model);
    b.ffn2 = make_linear(name + ".ffn2", 4 * cfg_.d_model, cfg_.d_model);
    return b;
}

SketchModel::SketchModel(ModelConfig cfg, uint64_t seed)
    : cfg_(std::move(cfg)), init_rng_(Rng::substream(seed, {0x6d6f64656cULL})) {
    if (cfg_.d_model % 2 != 0) throw ConfigError("d_model must be even");
    if (cfg_.d_model % cfg_.heads != 0) throw ConfigError("d_model not divisible by heads");
    cfg_.posenc.d_model = cfg_.d_model;
    cfg_.posenc.max_len = cfg_.max_len;
    cfg_.posenc.max_strokes = cfg_.max_strokes;

    const bool use_pen = cfg_.posenc.parts.count(PosEncPart::PenState) > 0;
    const bool use_semb = cfg_.posenc.parts.count(PosEncPart::StrokeEmb) > 0;

    enc_lift_ = make_linear("enc.lift", 2, cfg_.d_model);
    if (use_pen) enc_pen_proj_ = make_weight("enc.pos.pen", {3, cfg_.d_model});
    if (use_semb) enc_stroke_emb_ = make_weight("enc.pos.stroke", {cfg_.max_strokes, cfg_.d_model});
    for (int i = 0; i < cfg_.enc_layers; ++i)
        enc_blocks_.push_back(
            make_block("enc.b" + std::to_string(i), false, true, false, false));
    enc_final_ln_ = make_ln("enc.final_ln");

    if (cfg_.task == Task::Reconstruction) {
        has_decoder_ = true;
        const auto v = cfg_.decoder_variant;
        const bool ar = (v == DecoderVariant::AR || v == DecoderVariant::AR_noCA);
        const bool with_ca = (v == DecoderVariant::AR || v == DecoderVariant::NAR);
        const bool with_sa = (v != DecoderVariant::NAR_noCA_noSA);
        const bool with_extra = (v == DecoderVariant::NAR_noCA_noSA);

        if (ar) {
            dec_lift_ = make_linear("dec.lift", 2, cfg_.d_model);
            dec_start_tok_ = make_weight("dec.start", {cfg_.d_model});
        } else {
            dec_query_tok_ = make_weight("dec.query", {cfg_.d_model});
        }
        if (use_pen) dec_pen_proj_ = make_weight("dec.pos.pen", {3, cfg_.d_model});
        if (use_semb)
            dec_stroke_emb_ = make_weight("dec.pos.stroke", {cfg_.max_strokes, cfg_.d_model});
        for (int i = 0; i < cfg_.dec_layers; ++i)
            dec_blocks_.push_back(
                make_block("dec.b" + std::to_string(i), ar, with_sa, with_ca, with_extra));
        dec_final_ln_ = make_ln("dec.final_ln");
        dec_head_ = make_linear("dec.head", cfg_.d_model, 2);
    } else if (cfg_.task == Task::Classification) {
        if (cfg_.n_classes < 2) throw ConfigError("classification needs n_classes >= 2");
        cls_head_ = make_linear("head.cls", cfg_.d_model, cfg_.n_classes);
    } else {
        if (cfg_.n_point_classes < 2) throw ConfigError("segmentation needs n_point_classes >= 2");
        seg_head_ = make_linear("head.seg", cfg_.d_model, cfg_.n_point_classes);
    }
}

// Builds [B, L, d] input states: coordinate lift (or a query token), plus the
// configured positional channels. side selects the encoder or decoder tables.
Tensor SketchModel::input_encoding(const std::string& side, const SketchBatch& batch,
                                   const std::vector<float>& coords, bool shift_coords) {
    const int B = batch.B, L = batch.L, d = cfg_.d_model;
    const bool enc = (side == "enc");
    Tensor x;
    if (!coords.empty()) {
        auto c = Tensor::constant({B, L, 2}, coords);
        const LinearP& lift = enc ? enc_lift_ : dec_lift_;
        x = linear(c, lift.W, lift.b);
        if (shift_coords)
            x = concat_axis1(expand_token(dec_start_tok_, B, 1), slice_axis1(x, 0, L - 1));
    } else {
        x = expand_token(dec_query_tok_, B, L);
    }

    for (PosEncPart part : cfg_.posenc.parts) {
        switch (part) {
            case PosEncPart::SketchPos: {
                std::vector<float> buf(size_t(B) * size_t(L) * size_t(d));
                for (int l = 0; l < L; ++l) {
                    auto row = sinusoidal(l, d);
                    for (int b = 0; b < B; ++b)
                        for (int j = 0; j < d; ++j)
                            buf[size_t((int64_t(b) * L + l) * d + j)] = float(row[size_t(j)]);
                }
                x = add_const(x, buf);
                break;
            }
            case PosEncPart::StrokePos: {
                std::vector<float> buf(size_t(B) * size_t(L) * size_t(d));
                for (int b = 0; b < B; ++b)
                    for (int l = 0; l < L; ++l) {
                        auto row = sinusoidal(batch.intra_idx[size_t(b * L + l)], d);
                        for (int j = 0; j < d; ++j)
                            buf[size_t((int64_t(b) * L + l) * d + j)] = float(row[size_t(j)]);
                    }
                x = add_const(x, buf);
                break;
            }
            case PosEncPart::StrokeEmb: {
                for (int i : batch.stroke_idx)
                    if (i >= cfg_.max_strokes)
                        throw CapacityError("stroke ordinal exceeds max_strokes");
                const Tensor& table = enc ? enc_stroke_emb_ : dec_stroke_emb_;
                x = add(x, gather_rows(table, batch.stroke_idx, {B, L}));
                break;
            }
            case PosEncPart::PenState: {
                const Tensor& table = enc ? enc_pen_proj_ : dec_pen_proj_;
                x = add(x, gather_rows(table, batch.pen, {B, L}));
                break;
            }
        }
    }
    return x;
}

Tensor SketchModel::run_block(const Block& blk, Tensor x, const AttentionMask& self_mask,
                              const Tensor* memory) {
    if (blk.has_sa) {
        auto h = layer_norm(x, blk.ln_sa.g, blk.ln_sa.b);
        auto a = multi_head_attention(linear(h, blk.sa.q.W, blk.sa.q.b),
                                      linear(h, blk.sa.k.W, blk.sa.k.b),
                                      linear(h, blk.sa.v.W, blk.sa.v.b), cfg_.heads, self_mask);
        x = add(x, linear(a, blk.sa.o.W, blk.sa.o.b));
    }
    if (blk.has_extra) {
        auto h = layer_norm(x, blk.ln_extra.g, blk.ln_extra.b);
        x = add(x, linear(gelu(linear(h, blk.extra1.W, blk.extra1.b)), blk.extra2.W,
                          blk.extra2.b));
    }
    if (blk.has_ca && memory) {
        auto h = layer_norm(x, blk.ln_ca.g, blk.ln_ca.b);
        auto a = multi_head_attention(linear(h, blk.ca.q.W, blk.ca.q.b),
                                      linear(*memory, blk.ca.k.W, blk.ca.k.b),
                                      linear(*memory, blk.ca.v.W, blk.ca.v.b), cfg_.heads,
                                      AttentionMask::none());
        x = add(x, linear(a, blk.ca.o.W, blk.ca.o.b));
    }
    auto h = layer_norm(x, blk.ln_ffn.g, blk.ln_ffn.b);
    return add(x, linear(gelu(linear(h, blk.ffn1.W, blk.ffn1.b)), blk.ffn2.W, blk.ffn2.b));
}

SketchModel::Encoded SketchModel::encode(const SketchBatch& batch) {
    if (batch.L > cfg_.max_len) throw LengthError("batch length exceeds max_len");
    auto x = input_encoding("enc", batch, batch.coords, false);
    auto mask = AttentionMask::padding(batch.mask, batch.B, batch.L);
    for (const auto& blk : enc_blocks_) x = run_block(blk, x, mask, nullptr);
    x = layer_norm(x, enc_final_ln_.g, enc_final_ln_.b);
    Tensor pooled;
    switch (cfg_.pool) {
        case Pool::Mean: pooled = masked_mean_pool(x, batch.mask); break;
        case Pool::Max: pooled = masked_max_pool(x, batch.mask); break;
        case Pool::First:
            pooled = reshape(slice_axis1(x, 0, 1), {batch.B, cfg_.d_model});
            break;
    }
    return {x, pooled};
}

Tensor SketchModel::decoder_states(const SketchBatch& batch, const Encoded& enc,
                                   const std::vector<float>& target_coords) {
    const auto v = cfg_.decoder_variant;
    const bool ar = (v == DecoderVariant::AR || v == DecoderVariant::AR_noCA);
    const bool with_ca = (v == DecoderVariant::AR || v == DecoderVariant::NAR);

    Tensor x = ar ? input_encoding("dec", batch, target_coords, true)
                  : input_encoding("dec", batch, {}, false);
    if (!with_ca) x = add_rows(x, enc.pooled);

    AttentionMask self_mask =
        ar ? AttentionMask::causal_padding(batch.mask, batch.B, batch.L)
           : AttentionMask::padding(batch.mask, batch.B, batch.L);
    Tensor memory;
    if (with_ca) memory = reshape(enc.pooled, {batch.B, 1, cfg_.d_model});

    for (const auto& blk : dec_blocks_)
        x = run_block(blk, x, self_mask, with_ca ? &memory : nullptr);
    return layer_norm(x, dec_final_ln_.g, dec_final_ln_.b);
}

Tensor SketchModel::decode_teacher_forced(const SketchBatch& batch, const Encoded& enc) {
    if (!has_decoder_) throw VariantError("decode on a model without a decoder");
    auto states = decoder_states(batch, enc, batch.target_coords);
    return linear(states, dec_head_.W, dec_head_.b);
}

std::vector<float> SketchModel::decode_autoregressive(const SketchBatch& batch,
                                                      const Encoded& enc) {
    if (!has_decoder_) throw VariantError("decode on a model without a decoder");
    const auto v = cfg_.decoder_variant;
    if (v != DecoderVariant::AR && v != DecoderVariant::AR_noCA)
        throw VariantError("free-running decode requires an autoregressive variant");
    NoGrad ng;
    const int B = batch.B, L = batch.L;
    std::vector<float> pred(size_t(B) * size_t(L) * 2, 0.0f);
    for (int step = 0; step < L; ++step) {
        auto states = decoder_states(batch, enc, pred);
        auto out = linear(states, dec_head_.W, dec_head_.b);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < 2; ++c)
                pred[size_t((int64_t(b) * L + step) * 2 + c)] =
                    out.value()[size_t((int64_t(b) * L + step) * 2 + c)];
    }
    return pred;
}

Tensor SketchModel::classification_logits(const Encoded& enc) {
    if (cfg_.task != Task::Classification) throw VariantError("model has no classification head");
    return linear(enc.pooled, cls_head_.W, cls_head_.b);
}

Tensor SketchModel::segmentation_logits(const Encoded& enc) {
    if (cfg_.task != Task::Segmentation) throw VariantError("model has no segmentation head");
    return linear(enc.points, seg_head_.W, seg_head_.b);
}

int64_t SketchModel::decoder_param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params.items())
        if (name.rfind("dec.", 0) == 0) n += t.size();
    return n;
}

int64_t SketchModel::encoder_param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params.items())
        if (name.rfind("enc.", 0) == 0) n += t.size();
    return n;
}

void save_model(const std::string& path_stem, const SketchModel& model) {
    save_params(path_stem + ".sltc", model.params);
    std::ofstream os(path_stem + ".json");
    if (!os) throw IoError("cannot write model config: " + path_stem + ".json");
    os << model.config().to_json() << "\n";
}

SketchModel load_model(const std::string& path_stem) {
    std::ifstream is(path_stem + ".json");
    if (!is) throw IoError("cannot read model config: " + path_stem + ".json");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    SketchModel model(ModelConfig::from_json(text), 0);
    load_params(path_stem + ".sltc", model.params);
    return model;
}

} // namespace sketchlab
