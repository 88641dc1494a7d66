#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sketchlab/optim.hpp"
#include "sketchlab/posenc.hpp"
#include "sketchlab/rng.hpp"
#include "sketchlab/stroke5.hpp"
#include "sketchlab/tensor.hpp"

// Pre-LN transformer encoder plus the five reconstruction-decoder ablations:
// AR (causal self-attention over right-shifted targets), NAR (learnable query
// token per slot), each with or without cross-attention to the pooled sketch
// vector, and a variant replacing self-attention with an extra feed-forward
// block sized to keep the parameter budget. Encoder-only configurations carry
// a linear classification or segmentation head instead of a decoder.

namespace sketchlab {

struct VariantError : SketchError {
    using SketchError::SketchError;
};

enum class DecoderVariant { AR, AR_noCA, NAR, NAR_noCA, NAR_noCA_noSA };
enum class Task { Classification, Segmentation, Reconstruction };
enum class Pool { Mean, Max, First };

const char* decoder_variant_name(DecoderVariant v);
DecoderVariant decoder_variant_from_name(const std::string& name);
const char* task_name(Task t);
Task task_from_name(const std::string& name);
const char* frame_name(Frame f);
Frame frame_from_name(const std::string& name);
const char* pool_name(Pool p);
Pool pool_from_name(const std::string& name);

struct ModelConfig {
    int d_model = 64;
    int heads = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    DecoderVariant decoder_variant = DecoderVariant::NAR_noCA;
    Frame input_frame = Frame::Absolute;
    Frame output_frame = Frame::Absolute;
    PosEncSpec posenc;
    Task task = Task::Reconstruction;
    int n_classes = 0;
    int n_point_classes = 0;
    int max_len = 32;
    int max_strokes = 16;
    Pool pool = Pool::Mean;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// One prepared training/eval batch. Coordinates are already in the model's
// input/output frames and normalized; mask marks real points. The gt_* fields
// carry what evaluation needs to compare in the normalized absolute frame.
struct SketchBatch {
    int B = 0;
    int L = 0;
    std::vector<float> coords;         // [B*L*2] model inputs (possibly corrupted)
    std::vector<float> target_coords;  // [B*L*2] clean targets in the output frame
    std::vector<int> pen;              // [B*L] pen index per slot
    std::vector<uint8_t> mask;         // [B*L] 1 = real point
    std::vector<int> stroke_idx;       // [B*L] stroke ordinal per slot
    std::vector<int> intra_idx;        // [B*L] index within the slot's stroke
    std::vector<int> class_labels;     // [B] when present
    std::vector<int> point_labels;     // [B*L] when present
    std::vector<double> gt_norm_abs;   // [B*L*2] unit-circle-normalized gt positions
    std::vector<double> norm_center;   // [B*2] gt unit-circle center
    std::vector<double> norm_radius;   // [B] gt unit-circle radius
    std::vector<double> rel_scale;     // [B] offset scale when output frame is relative
    std::vector<uint64_t> sketch_ids;  // [B] stable ids for seeded corruption
};

class SketchModel {
public:
    SketchModel(ModelConfig cfg, uint64_t seed);

    struct Encoded {
        Tensor points;  // [B, L, d]
        Tensor pooled;  // [B, d]
    };

    Encoded encode(const SketchBatch& batch);

    // One parallel pass; AR variants consume right-shifted target coords,
    // NAR variants ignore targets entirely. Returns [B, L, 2].
    Tensor decode_teacher_forced(const SketchBatch& batch, const Encoded& enc);

    // Free-running AR decode: L sequential forward calls, each feeding back
    // the model's own coordinate predictions. AR variants only.
    std::vector<float> decode_autoregressive(const SketchBatch& batch, const Encoded& enc);

    Tensor classification_logits(const Encoded& enc);       // [B, n_classes]
    Tensor segmentation_logits(const Encoded& enc);         // [B, L, n_point_classes]

    int64_t param_count() const { return params.total_params(); }
    int64_t decoder_param_count() const;
    int64_t encoder_param_count() const;

    // Width of the budget-matching extra FFN used by NAR_noCA_noSA.
    static int budget_ffn_hidden(int d_model);

    const ModelConfig& config() const { return cfg_; }

    ParamStore params;

private:
    struct LinearP {
        Tensor W, b;
    };
    struct LnP {
        Tensor g, b;
    };
    struct AttnP {
        LinearP q, k, v, o;
    };
    struct Block {
        LnP ln_sa;
        AttnP sa;
        bool has_sa = false;
        bool causal = false;
        LnP ln_extra;
        LinearP extra1, extra2;  // budget FFN standing in for removed SA
        bool has_extra = false;
        LnP ln_ca;
        AttnP ca;
        bool has_ca = false;
        LnP ln_ffn;
        LinearP ffn1, ffn2;
    };

    Tensor make_weight(const std::string& name, Shape shape);
    Tensor make_zeros(const std::string& name, Shape shape);
    Tensor make_ones(const std::string& name, Shape shape);
    LinearP make_linear(const std::string& name, int din, int dout);
    LnP make_ln(const std::string& name);
    AttnP make_attn(const std::string& name);
    Block make_block(const std::string& name, bool causal, bool with_sa, bool with_ca,
                     bool with_extra);

    Tensor run_block(const Block& blk, Tensor x, const AttentionMask& self_mask,
                     const Tensor* memory);
    Tensor input_encoding(const std::string& side, const SketchBatch& batch,
                          const std::vector<float>& coords, bool shift_coords);
    Tensor decoder_states(const SketchBatch& batch, const Encoded& enc,
                          const std::vector<float>& target_coords);

    ModelConfig cfg_;
    Rng init_rng_;

    // encoder
    LinearP enc_lift_;
    Tensor enc_pen_proj_;    // [3, d]
    Tensor enc_stroke_emb_;  // [max_strokes, d]
    std::vector<Block> enc_blocks_;
    LnP enc_final_ln_;

    // decoder (Reconstruction only)
    bool has_decoder_ = false;
    LinearP dec_lift_;       // target coord lift (AR only)
    Tensor dec_start_tok_;   // [d] (AR only)
    Tensor dec_query_tok_;   // [d] (NAR only)
    Tensor dec_pen_proj_;
    Tensor dec_stroke_emb_;
    std::vector<Block> dec_blocks_;
    LnP dec_final_ln_;
    LinearP dec_head_;       // d -> 2

    // task heads
    LinearP cls_head_;
    LinearP seg_head_;
};

// Checkpoint pair: <stem>.sltc holds the parameters, <stem>.json the config.
void save_model(const std::string& path_stem, const SketchModel& model);
SketchModel load_model(const std::string& path_stem);

} // namespace sketchlab
