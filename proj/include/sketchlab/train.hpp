#pragma once

// Batch preparation, losses, denoising corruption, task metrics, per-position
// error analysis, the training loop, and one-epoch transfer.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sketchlab/dataio.hpp"
#include "sketchlab/model.hpp"
#include "sketchlab/permute.hpp"

namespace sketchlab {

struct PrepConfig {
    Frame input_frame = Frame::Absolute;
    Frame output_frame = Frame::Absolute;
    int max_len = 32;
    std::shared_ptr<const PermutationSpec> permutation;  // optional order transform
    bool refresh_per_epoch = true;  // fresh permutation draw each training epoch
};

// Truncates raw sketches to max_len, applies the order transform (remapping
// point labels through it), anchors the first point at the origin, converts
// and normalizes into the requested frames, and pads. The gt_* fields keep the
// unit-circle view of the same (possibly permuted) sketch for evaluation.
SketchBatch prepare_batch(const std::vector<LabeledSketch>& items,
                          const std::vector<size_t>& subset,
                          const PrepConfig& prep, int epoch = 0);
SketchBatch prepare_batch(const std::vector<LabeledSketch>& items,
                          const PrepConfig& prep, int epoch = 0);

struct DenoiseSpec {
    double gaussian_sigma = 0.05;  // in normalized coordinate units
    double dropout_rate_max = 0.5;
    uint64_t seed = 0;
};

// Input-coordinate corruption for denoising pretraining: per sketch draw
// r ~ U(0, rate_max), zero each real point's input coords with probability r,
// add N(0, sigma^2) to the surviving ones. Targets and pen states stay
// untouched. Deterministic per (spec.seed, sketch id, epoch).
SketchBatch corrupt(SketchBatch batch, const DenoiseSpec& spec, int epoch);

Tensor l2_coord_loss(const Tensor& pred, const SketchBatch& batch);
Tensor classification_loss(const Tensor& logits, const SketchBatch& batch);
Tensor segmentation_loss(const Tensor& logits, const SketchBatch& batch);

// MSE in the unit-circle-normalized absolute frame, pooled over all unmasked
// (point, axis) entries. Relative predictions are denormalized by the ground
// truth's offset scale, prefix-summed, and mapped with the ground truth's
// unit-circle parameters before comparison.
double mse_point(const std::vector<float>& pred, const SketchBatch& batch,
                 Frame output_frame);

double p_metric(const std::vector<int>& pred_labels, const std::vector<int>& gt_labels,
                const std::vector<uint8_t>& mask);
double accuracy(const std::vector<int>& pred_classes, const std::vector<int>& gt_classes);

std::vector<int> argmax_rows(const Tensor& logits);  // [.., C] -> one label per row

struct PositionErrorCurve {
    std::vector<double> mean, stddev;  // per position, over sketches longer than it
    std::vector<int64_t> count;
    std::vector<int64_t> length_hist;  // index = real sketch length
};

class PositionErrorAccum {
public:
    // pred is [B, L, 2] in output_frame; errors land in the normalized
    // absolute frame, averaged over the two axes per position.
    void add(const std::vector<float>& pred, const SketchBatch& batch, Frame output_frame);
    PositionErrorCurve finish() const;

private:
    std::vector<double> sum_, sumsq_;
    std::vector<int64_t> count_, hist_;
};

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 32;
    int epochs = 10;
    uint64_t seed = 0;
    std::optional<DenoiseSpec> denoise;
};

struct FitResult {
    std::vector<double> epoch_losses;  // mean training loss per epoch
    std::vector<double> val_metrics;   // per epoch when a validation set is given
};

FitResult fit(SketchModel& model, const std::vector<LabeledSketch>& train_items,
              const std::vector<LabeledSketch>& val_items,
              const PrepConfig& prep, const TrainConfig& tc);

struct EvalOptions {
    bool free_running = false;  // AR variants: decode on own predictions
    int batch_size = 64;
};

// Task metric over a dataset: reconstruction -> MSE-point (lower is better),
// classification -> accuracy, segmentation -> P-metric.
double evaluate(SketchModel& model, const std::vector<LabeledSketch>& items,
                const PrepConfig& prep, const EvalOptions& opts = {});

PositionErrorCurve position_errors(SketchModel& model,
                                   const std::vector<LabeledSketch>& items,
                                   const PrepConfig& prep, const EvalOptions& opts = {});

// One-epoch transfer: fresh classification model, encoder weights loaded from
// the checkpoint stem when one is given (empty = from-scratch reference),
// exactly one training epoch, returns test accuracy.
double finetune_transfer(const std::string& encoder_ckpt_stem, ModelConfig cls_cfg,
                         uint64_t seed, const std::vector<LabeledSketch>& train_items,
                         const std::vector<LabeledSketch>& test_items,
                         const PrepConfig& prep, const TrainConfig& tc);

} // namespace sketchlab
