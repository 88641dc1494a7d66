#include "sketchlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sketchlab/optim.hpp"
#include "sketchlab/posenc.hpp"

namespace sketchlab {

namespace {

uint64_t perm_stream_id(uint64_t sketch_id, int epoch, bool refresh) {
    return refresh ? mix_stream(sketch_id, {uint64_t(epoch)}) : sketch_id;
}

// Per-slot squared error (averaged over x and y) in the normalized absolute
// frame for one batch row. Padding is trailing, so the walk stops at the
// first masked-out slot.
void abs_frame_sq_errors(const float* pred, const SketchBatch& batch, int b,
                         Frame output_frame, std::vector<double>& out) {
    const int L = batch.L;
    out.clear();
    double ax = 0, ay = 0;
    for (int l = 0; l < L; ++l) {
        if (!batch.mask[size_t(b * L + l)]) break;
        double px = pred[size_t((b * L + l) * 2)];
        double py = pred[size_t((b * L + l) * 2 + 1)];
        double nx, ny;
        if (output_frame == Frame::Relative) {
            if (l == 0) {
                ax = px;  // slot 0 holds the unscaled origin
                ay = py;
            } else {
                ax += px * batch.rel_scale[size_t(b)];
                ay += py * batch.rel_scale[size_t(b)];
            }
            double r = batch.norm_radius[size_t(b)];
            nx = (ax - batch.norm_center[size_t(b * 2)]) / r;
            ny = (ay - batch.norm_center[size_t(b * 2 + 1)]) / r;
        } else {
            nx = px;
            ny = py;
        }
        double dx = nx - batch.gt_norm_abs[size_t((b * L + l) * 2)];
        double dy = ny - batch.gt_norm_abs[size_t((b * L + l) * 2 + 1)];
        out.push_back(0.5 * (dx * dx + dy * dy));
    }
}

Tensor task_loss(SketchModel& model, const SketchBatch& batch) {
    auto enc = model.encode(batch);
    switch (model.config().task) {
        case Task::Reconstruction:
            return l2_coord_loss(model.decode_teacher_forced(batch, enc), batch);
        case Task::Classification:
            return classification_loss(model.classification_logits(enc), batch);
        case Task::Segmentation:
            return segmentation_loss(model.segmentation_logits(enc), batch);
    }
    throw VariantError("task_loss: unknown task");
}

} // namespace

SketchBatch prepare_batch(const std::vector<LabeledSketch>& items,
                          const std::vector<size_t>& subset,
                          const PrepConfig& prep, int epoch) {
    const int L = prep.max_len;
    SketchBatch batch;
    batch.B = int(subset.size());
    batch.L = L;
    size_t BL = size_t(batch.B) * size_t(L);
    batch.coords.assign(BL * 2, 0.0f);
    batch.target_coords.assign(BL * 2, 0.0f);
    batch.pen.assign(BL, int(Pen::EndOfSketch));
    batch.mask.assign(BL, 0);
    batch.stroke_idx.assign(BL, 0);
    batch.intra_idx.assign(BL, 0);
    batch.class_labels.assign(size_t(batch.B), -1);
    batch.point_labels.assign(BL, 0);
    batch.gt_norm_abs.assign(BL * 2, 0.0);
    batch.norm_center.assign(size_t(batch.B) * 2, 0.0);
    batch.norm_radius.assign(size_t(batch.B), 1.0);
    batch.rel_scale.assign(size_t(batch.B), 1.0);
    batch.sketch_ids.assign(size_t(batch.B), 0);

    for (int b = 0; b < batch.B; ++b) {
        const LabeledSketch& item = items[subset[size_t(b)]];
        if (item.seq.frame != Frame::Absolute || item.seq.norm.kind != NormKind::Raw)
            throw FrameError("prepare_batch: items must be raw absolute sketches");
        require_valid(item.seq);

        Stroke5Sequence s = item.seq;
        std::vector<int> labels = item.point_labels;
        if (int(s.points.size()) > L) {
            s = pad_or_truncate(s, L).seq;
            if (!labels.empty()) labels.resize(size_t(L));
        }
        if (prep.permutation) {
            auto pm = apply_with_mapping(
                *prep.permutation, s,
                perm_stream_id(item.id, epoch, prep.refresh_per_epoch));
            if (!labels.empty()) {
                std::vector<int> moved(labels.size());
                for (size_t l = 0; l < pm.mapping.size(); ++l)
                    moved[l] = labels[size_t(pm.mapping[l])];
                labels = std::move(moved);
            }
            s = std::move(pm.seq);
        }
        // anchor the first point at the origin so the stored origin carries
        // no information about the sketch's canvas placement
        double x0 = s.points[0].x, y0 = s.points[0].y;
        for (auto& p : s.points) {
            p.x -= x0;
            p.y -= y0;
        }

        auto gt_abs = normalize_absolute(s);
        Stroke5Sequence input_seq = (prep.input_frame == Frame::Relative)
                                        ? normalize_relative(abs_to_rel(s))
                                        : gt_abs;
        Stroke5Sequence target_seq = (prep.output_frame == Frame::Relative)
                                         ? normalize_relative(abs_to_rel(s))
                                         : gt_abs;
        if (prep.output_frame == Frame::Relative)
            batch.rel_scale[size_t(b)] = target_seq.norm.scale;

        auto in_p = pad_or_truncate(input_seq, L);
        auto tg_p = pad_or_truncate(target_seq, L);
        auto sidx = stroke_indices(s);
        auto iidx = intra_stroke_indices(s);
        int n = int(s.points.size());
        for (int l = 0; l < L; ++l) {
            size_t at = size_t(b * L + l);
            batch.coords[at * 2] = float(in_p.seq.points[size_t(l)].x);
            batch.coords[at * 2 + 1] = float(in_p.seq.points[size_t(l)].y);
            batch.target_coords[at * 2] = float(tg_p.seq.points[size_t(l)].x);
            batch.target_coords[at * 2 + 1] = float(tg_p.seq.points[size_t(l)].y);
            batch.pen[at] = in_p.seq.points[size_t(l)].pen_index();
            batch.mask[at] = in_p.mask[size_t(l)];
            if (l < n) {
                batch.stroke_idx[at] = sidx[size_t(l)];
                batch.intra_idx[at] = iidx[size_t(l)];
                if (!labels.empty()) batch.point_labels[at] = labels[size_t(l)];
                batch.gt_norm_abs[at * 2] = gt_abs.points[size_t(l)].x;
                batch.gt_norm_abs[at * 2 + 1] = gt_abs.points[size_t(l)].y;
            }
        }
        batch.norm_center[size_t(b) * 2] = gt_abs.norm.center[0];
        batch.norm_center[size_t(b) * 2 + 1] = gt_abs.norm.center[1];
        batch.norm_radius[size_t(b)] = gt_abs.norm.scale;
        batch.class_labels[size_t(b)] = item.class_label;
        batch.sketch_ids[size_t(b)] = item.id;
    }
    return batch;
}

SketchBatch prepare_batch(const std::vector<LabeledSketch>& items,
                          const PrepConfig& prep, int epoch) {
    std::vector<size_t> all(items.size());
    std::iota(all.begin(), all.end(), size_t(0));
    return prepare_batch(items, all, prep, epoch);
}

SketchBatch corrupt(SketchBatch batch, const DenoiseSpec& spec, int epoch) {
    for (int b = 0; b < batch.B; ++b) {
        Rng rng = Rng::substream(spec.seed,
                                 {batch.sketch_ids[size_t(b)], uint64_t(epoch)});
        double r = rng.uniform01() * spec.dropout_rate_max;
        for (int l = 0; l < batch.L; ++l) {
            if (!batch.mask[size_t(b * batch.L + l)]) continue;
            float* c = batch.coords.data() + size_t(b * batch.L + l) * 2;
            if (rng.uniform01() < r) {
                c[0] = 0.0f;
                c[1] = 0.0f;
            } else if (spec.gaussian_sigma > 0) {
                c[0] += float(spec.gaussian_sigma * rng.normal());
                c[1] += float(spec.gaussian_sigma * rng.normal());
            }
        }
    }
    return batch;
}

Tensor l2_coord_loss(const Tensor& pred, const SketchBatch& batch) {
    return masked_mse(pred, batch.target_coords, batch.mask);
}

Tensor classification_loss(const Tensor& logits, const SketchBatch& batch) {
    std::vector<float> w(size_t(batch.B), 1.0f);
    return cross_entropy_mean(logits, batch.class_labels, w);
}

Tensor segmentation_loss(const Tensor& logits, const SketchBatch& batch) {
    std::vector<float> w(batch.mask.size());
    for (size_t i = 0; i < w.size(); ++i) w[i] = batch.mask[i] ? 1.0f : 0.0f;
    return cross_entropy_mean(logits, batch.point_labels, w);
}

double mse_point(const std::vector<float>& pred, const SketchBatch& batch,
                 Frame output_frame) {
    if (int64_t(pred.size()) != int64_t(batch.B) * batch.L * 2)
        throw ShapeError("mse_point: prediction must be [B, L, 2]");
    double sum = 0;
    int64_t n = 0;
    std::vector<double> errs;
    for (int b = 0; b < batch.B; ++b) {
        abs_frame_sq_errors(pred.data(), batch, b, output_frame, errs);
        for (double e : errs) sum += e;
        n += int64_t(errs.size());
    }
    return n ? sum / double(n) : 0.0;
}

double p_metric(const std::vector<int>& pred_labels, const std::vector<int>& gt_labels,
                const std::vector<uint8_t>& mask) {
    if (pred_labels.size() != gt_labels.size() || pred_labels.size() != mask.size())
        throw ShapeError("p_metric: label and mask sizes must match");
    int64_t hit = 0, n = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        hit += pred_labels[i] == gt_labels[i];
        ++n;
    }
    return n ? double(hit) / double(n) : 0.0;
}

double accuracy(const std::vector<int>& pred_classes, const std::vector<int>& gt_classes) {
    if (pred_classes.size() != gt_classes.size())
        throw ShapeError("accuracy: prediction and label counts must match");
    if (pred_classes.empty()) return 0.0;
    int64_t hit = 0;
    for (size_t i = 0; i < pred_classes.size(); ++i)
        hit += pred_classes[i] == gt_classes[i];
    return double(hit) / double(pred_classes.size());
}

std::vector<int> argmax_rows(const Tensor& logits) {
    int C = logits.shape().back();
    int64_t rows = int64_t(logits.value().size()) / C;
    std::vector<int> out(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const float* z = logits.value().data() + r * C;
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (z[c] > z[best]) best = c;
        out[size_t(r)] = best;
    }
    return out;
}

void PositionErrorAccum::add(const std::vector<float>& pred, const SketchBatch& batch,
                             Frame output_frame) {
    if (int64_t(pred.size()) != int64_t(batch.B) * batch.L * 2)
        throw ShapeError("PositionErrorAccum: prediction must be [B, L, 2]");
    std::vector<double> errs;
    for (int b = 0; b < batch.B; ++b) {
        abs_frame_sq_errors(pred.data(), batch, b, output_frame, errs);
        size_t len = errs.size();
        if (sum_.size() < len) {
            sum_.resize(len, 0.0);
            sumsq_.resize(len, 0.0);
            count_.resize(len, 0);
        }
        if (hist_.size() < len + 1) hist_.resize(len + 1, 0);
        ++hist_[len];
        for (size_t l = 0; l < len; ++l) {
            sum_[l] += errs[l];
            sumsq_[l] += errs[l] * errs[l];
            ++count_[l];
        }
    }
}

PositionErrorCurve PositionErrorAccum::finish() const {
    PositionErrorCurve curve;
    curve.count = count_;
    curve.length_hist = hist_;
    curve.mean.resize(sum_.size());
    curve.stddev.resize(sum_.size());
    for (size_t l = 0; l < sum_.size(); ++l) {
        double m = count_[l] ? sum_[l] / double(count_[l]) : 0.0;
        double v = count_[l] ? sumsq_[l] / double(count_[l]) - m * m : 0.0;
        curve.mean[l] = m;
        curve.stddev[l] = std::sqrt(std::max(0.0, v));
    }
    return curve;
}

FitResult fit(SketchModel& model, const std::vector<LabeledSketch>& train_items,
              const std::vector<LabeledSketch>& val_items,
              const PrepConfig& prep, const TrainConfig& tc) {
    AdamConfig ac;
    ac.lr = tc.lr;
    Adam opt(model.params, ac);
    FitResult res;
    std::vector<size_t> order(train_items.size());
    std::iota(order.begin(), order.end(), size_t(0));
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        Rng shuffle_rng = Rng::substream(tc.seed, {0x6f72646572ULL, uint64_t(epoch)});
        shuffle_rng.shuffle(order);
        double loss_sum = 0;
        int64_t seen = 0;
        for (size_t at = 0; at < order.size(); at += size_t(tc.batch_size)) {
            size_t hi = std::min(order.size(), at + size_t(tc.batch_size));
            std::vector<size_t> idx(order.begin() + long(at), order.begin() + long(hi));
            SketchBatch batch = prepare_batch(train_items, idx, prep, epoch);
            if (tc.denoise) batch = corrupt(std::move(batch), *tc.denoise, epoch);
            model.params.zero_grads();
            Tensor loss = task_loss(model, batch);
            loss.backward();
            opt.step();
            loss_sum += double(loss.item()) * double(idx.size());
            seen += int64_t(idx.size());
        }
        res.epoch_losses.push_back(seen ? loss_sum / double(seen) : 0.0);
        if (!val_items.empty()) res.val_metrics.push_back(evaluate(model, val_items, prep));
    }
    return res;
}

double evaluate(SketchModel& model, const std::vector<LabeledSketch>& items,
                const PrepConfig& prep, const EvalOptions& opts) {
    NoGrad ng;
    double sum = 0;
    int64_t n = 0;
    std::vector<double> errs;
    for (size_t at = 0; at < items.size(); at += size_t(opts.batch_size)) {
        size_t hi = std::min(items.size(), at + size_t(opts.batch_size));
        std::vector<size_t> idx(hi - at);
        std::iota(idx.begin(), idx.end(), at);
        SketchBatch batch = prepare_batch(items, idx, prep, 0);
        auto enc = model.encode(batch);
        switch (model.config().task) {
            case Task::Reconstruction: {
                std::vector<float> pred =
                    opts.free_running ? model.decode_autoregressive(batch, enc)
                                      : model.decode_teacher_forced(batch, enc).value();
                for (int b = 0; b < batch.B; ++b) {
                    abs_frame_sq_errors(pred.data(), batch, b, prep.output_frame, errs);
                    for (double e : errs) sum += e;
                    n += int64_t(errs.size());
                }
                break;
            }
            case Task::Classification: {
                auto lab = argmax_rows(model.classification_logits(enc));
                for (int b = 0; b < batch.B; ++b) {
                    sum += lab[size_t(b)] == batch.class_labels[size_t(b)] ? 1.0 : 0.0;
                    ++n;
                }
                break;
            }
            case Task::Segmentation: {
                auto lab = argmax_rows(model.segmentation_logits(enc));
                for (size_t i = 0; i < batch.mask.size(); ++i) {
                    if (!batch.mask[i]) continue;
                    sum += lab[i] == batch.point_labels[i] ? 1.0 : 0.0;
                    ++n;
                }
                break;
            }
        }
    }
    return n ? sum / double(n) : 0.0;
}

PositionErrorCurve position_errors(SketchModel& model,
                                   const std::vector<LabeledSketch>& items,
                                   const PrepConfig& prep, const EvalOptions& opts) {
    NoGrad ng;
    PositionErrorAccum accum;
    for (size_t at = 0; at < items.size(); at += size_t(opts.batch_size)) {
        size_t hi = std::min(items.size(), at + size_t(opts.batch_size));
        std::vector<size_t> idx(hi - at);
        std::iota(idx.begin(), idx.end(), at);
        SketchBatch batch = prepare_batch(items, idx, prep, 0);
        auto enc = model.encode(batch);
        std::vector<float> pred =
            opts.free_running ? model.decode_autoregressive(batch, enc)
                              : model.decode_teacher_forced(batch, enc).value();
        accum.add(pred, batch, prep.output_frame);
    }
    return accum.finish();
}

double finetune_transfer(const std::string& encoder_ckpt_stem, ModelConfig cls_cfg,
                         uint64_t seed, const std::vector<LabeledSketch>& train_items,
                         const std::vector<LabeledSketch>& test_items,
                         const PrepConfig& prep, const TrainConfig& tc) {
    cls_cfg.task = Task::Classification;
    SketchModel model(cls_cfg, seed);
    if (!encoder_ckpt_stem.empty())
        load_params_prefix(encoder_ckpt_stem + ".sltc", model.params, "enc.");
    TrainConfig one = tc;
    one.epochs = 1;
    fit(model, train_items, {}, prep, one);
    EvalOptions ev;
    ev.batch_size = tc.batch_size;
    return evaluate(model, test_items, prep, ev);
}

} // namespace sketchlab
