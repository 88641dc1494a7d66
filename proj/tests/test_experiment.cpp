#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "sketchlab/blockcheck.hpp"
#include "sketchlab/experiment.hpp"
#include "sketchlab/posenc.hpp"
#include "sketchlab/svg.hpp"

using namespace sketchlab;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const std::string& out_dir) {
    RunConfig rc;
    rc.dataset.synth.n_classes = 3;
    rc.dataset.synth.per_class = 10;
    rc.dataset.synth.seed = 4;
    rc.dataset.split.train_per_class = 6;
    rc.dataset.split.val_per_class = 1;
    rc.dataset.split.test_per_class = 3;
    ModelConfig mc;
    mc.d_model = 16;
    mc.heads = 2;
    mc.enc_layers = 1;
    mc.dec_layers = 1;
    mc.task = Task::Classification;
    mc.posenc.parts = {PosEncPart::PenState};
    rc.models = {mc};
    rc.permutations = {PermutationSpec()};
    rc.train.epochs = 1;
    rc.train.batch_size = 16;
    rc.seeds = {1};
    rc.out_dir = out_dir;
    return rc;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("run config parsing: defaults, round trip, rejection") {
    std::string text = R"({
        "dataset": {"kind": "synth",
                    "synth": {"n_classes": 4, "per_class": 20},
                    "split": {"train_per_class": 14, "val_per_class": 2, "test_per_class": 4}},
        "models": [{"task": "classification", "d_model": 32}],
        "train": {"lr": 0.002, "epochs": 5},
        "seeds": [7, 8]
    })";
    RunConfig rc = parse_run_config(text);
    CHECK(rc.dataset.synth.n_classes == 4);
    CHECK(rc.models.size() == 1);
    CHECK(rc.models[0].d_model == 32);
    CHECK(rc.models[0].task == Task::Classification);
    CHECK(rc.models[0].enc_layers == 2);  // untouched keys keep defaults
    CHECK(rc.permutations.size() == 1);   // implicit identity
    CHECK(rc.permutations[0].kind == PermKind::None);
    CHECK(rc.train.lr == 0.002);
    CHECK(rc.train.epochs == 5);
    CHECK(rc.seeds == std::vector<uint64_t>{7, 8});
    CHECK(!rc.denoise.has_value());

    // canonical serialization round trips
    std::string canon = run_config_json(rc);
    CHECK(run_config_json(parse_run_config(canon)) == canon);

    CHECK_THROWS_AS(parse_run_config("{\"modles\": []}"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{\"models\": []}"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("not json at all"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"models": [{"task": "classification"}],
        "train": {"epochs": 0}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"models": [{"d_model": 16}], "seeds": []})"),
                    ConfigError);
}

TEST_CASE("cell names are stable and unambiguous") {
    ModelConfig mc;
    mc.task = Task::Reconstruction;
    mc.decoder_variant = DecoderVariant::NAR_noCA;
    mc.input_frame = Frame::Absolute;
    mc.output_frame = Frame::Relative;
    PermutationSpec perm(PermKind::IntraStrokeReverse, 3, 0.5);
    CHECK(cell_name(mc, perm, false) ==
          "recon__nar_no_ca__abs2rel__pe-none__perm-intra_stroke_reverse50");
    mc.posenc.parts = {PosEncPart::SketchPos, PosEncPart::PenState};
    CHECK(cell_name(mc, PermutationSpec(), true) ==
          "recon__nar_no_ca__abs2rel__pe-sketch_pos+pen_state__perm-none__dn");
}

TEST_CASE("run_cell trains, marks completion, and resumes without recompute") {
    fs::path dir = fs::temp_directory_path() / "sl_cell_test";
    fs::remove_all(dir);
    RunConfig rc = tiny_config(dir.string());
    DatasetSplits splits = load_dataset(rc.dataset);
    CHECK(rc.dataset.max_len > 0);  // resolved from the 99th percentile

    CellResult first = run_cell(rc, 0, 0, 1, splits, true);
    REQUIRE(first.error.empty());
    CHECK(first.param_count > 0);
    CHECK(fs::exists(fs::path(first.ckpt_stem + ".sltc")));

    // tamper with the marker: a resumed cell must come from the marker alone
    fs::path marker = dir / "cells" / first.cell / "s1" / "result.json";
    REQUIRE(fs::exists(marker));
    CellResult tampered = first;
    tampered.metric = 42.0;
    {
        std::ofstream f(marker);
        f << tampered.to_json();
    }
    CellResult resumed = run_cell(rc, 0, 0, 1, splits, true);
    CHECK(resumed.metric == 42.0);

    CellResult fresh = run_cell(rc, 0, 0, 1, splits, false);
    CHECK(fresh.metric == first.metric);

    // a config change invalidates the marker via the cell hash
    RunConfig changed = rc;
    changed.train.epochs = 2;
    CellResult rerun = run_cell(changed, 0, 0, 1, splits, true);
    CHECK(rerun.cfg_hash != first.cfg_hash);
    CHECK(rerun.epoch_losses.size() == 2);
    fs::remove_all(dir);
}

TEST_CASE("run_grid isolates failing cells and reports aggregate") {
    fs::path dir = fs::temp_directory_path() / "sl_grid_test";
    fs::remove_all(dir);
    RunConfig rc = tiny_config(dir.string());
    ModelConfig broken = rc.models[0];
    broken.heads = 5;  // does not divide d_model 16
    rc.models.push_back(broken);
    rc.seeds = {1, 2};
    DatasetSplits splits = load_dataset(rc.dataset);

    auto results = run_grid(rc, splits, 1, true);
    REQUIRE(results.size() == 4);
    CHECK(results[0].error.empty());
    CHECK(results[1].error.empty());
    CHECK(!results[2].error.empty());
    CHECK(!results[3].error.empty());

    write_reports(rc, results);
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "report_long.csv"));
    CHECK(fs::exists(dir / "report_summary.csv"));
    std::string pivot = slurp(dir / "report_pivot_cls.csv");
    CHECK(pivot.find("row,abs2abs") != std::string::npos);
    CHECK(pivot.find("nar_no_ca__pe-pen_state__perm-none,") != std::string::npos);
    // failed cells never reach the summary
    std::string summary = slurp(dir / "report_summary.csv");
    CHECK(summary.find("nar_no_ca") != std::string::npos);
    int lines = 0;
    for (char c : summary)
        if (c == '\n') ++lines;
    CHECK(lines == 2);  // header + the one successful cell
    fs::remove_all(dir);
}

TEST_CASE("svg: one polyline per stroke, deterministic bytes, permutation shows") {
    Stroke5Sequence one;
    one.frame = Frame::Absolute;
    one.points = {Stroke5Point::make(0, 0, Pen::Drawing),
                  Stroke5Point::make(10, 5, Pen::Drawing),
                  Stroke5Point::make(20, 0, Pen::EndOfSketch)};
    std::string svg = sketch_svg(one);
    size_t n = 0, at = 0;
    while ((at = svg.find("<polyline", at)) != std::string::npos) {
        ++n;
        at += 9;
    }
    CHECK(n == 1);
    CHECK(svg == sketch_svg(one));
    CHECK(svg.find("<svg") == 0);

    Stroke5Sequence three;
    three.frame = Frame::Absolute;
    for (int s = 0; s < 3; ++s)
        for (int i = 0; i < 4; ++i) {
            bool stroke_end = i == 3;
            bool sketch_end = stroke_end && s == 2;
            three.points.push_back(Stroke5Point::make(
                s * 10 + i, (s * 7 + i * 3) % 5,
                sketch_end ? Pen::EndOfSketch
                           : (stroke_end ? Pen::EndOfStroke : Pen::Drawing)));
        }
    PermutationSpec shuffle(PermKind::StrokeShuffle, 9);
    std::string orig = sketch_svg(three);
    std::string perm = sketch_svg(apply(shuffle, three, 5));
    CHECK(orig != perm);

    Stroke5Sequence rel = abs_to_rel(three);
    CHECK_THROWS_AS(sketch_svg(rel), FrameError);
}

TEST_CASE("cache save is byte-deterministic") {
    SynthSpec spec;
    spec.n_classes = 2;
    spec.per_class = 4;
    Dataset ds = synth_generate(spec);
    fs::path a = fs::temp_directory_path() / "sl_cache_a.sldc";
    fs::path b = fs::temp_directory_path() / "sl_cache_b.sldc";
    save_cache(a.string(), ds);
    save_cache(b.string(), ds);
    CHECK(slurp(a) == slurp(b));
    fs::remove(a);
    fs::remove(b);
}

TEST_CASE("block gradcheck suite passes, injected bug is caught") {
    auto checks = run_block_gradchecks(7, false);
    CHECK(checks.size() >= 14);
    for (const auto& c : checks) {
        INFO(c.name, " max_rel_err=", c.max_rel_err);
        CHECK(c.pass);
        CHECK(c.max_rel_err < 1e-4);
    }
    auto with_bug = run_block_gradchecks(7, true);
    REQUIRE(with_bug.size() == checks.size() + 1);
    CHECK(with_bug.back().name == "injected-sign-flip");
    CHECK(!with_bug.back().pass);
}
