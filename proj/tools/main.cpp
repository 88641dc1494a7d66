// sketchlab command line: dataset ingestion and generation, ablation grids,
// figure data, SVG rendering, and gradient verification.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sketchlab/blockcheck.hpp"
#include "sketchlab/dataio.hpp"
#include "sketchlab/experiment.hpp"
#include "sketchlab/optim.hpp"
#include "sketchlab/posenc.hpp"
#include "sketchlab/svg.hpp"
#include "sketchlab/train.hpp"

namespace fs = std::filesystem;
using namespace sketchlab;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_class_counts(const Dataset& ds) {
    std::map<int, int> counts;
    for (const auto& item : ds.items) ++counts[item.class_label];
    for (const auto& [cls, n] : counts) {
        std::string name = cls >= 0 && cls < int(ds.class_names.size())
                               ? ds.class_names[size_t(cls)]
                               : "(unlabeled)";
        std::printf("  %-20s %d\n", name.c_str(), n);
    }
    if (!ds.issues.empty())
        std::printf("  %zu record(s) skipped; first: line %d: %s\n", ds.issues.size(),
                    ds.issues[0].line, ds.issues[0].message.c_str());
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << header << "\n";
    for (const auto& r : rows) f << r << "\n";
}

struct SynthArgs {
    int classes = 10, per_class = 500, max_strokes = 8;
    double jitter = 1.0;
    uint64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    SynthSpec spec{a.classes, a.per_class, a.max_strokes, a.jitter, a.seed};
    Dataset ds = synth_generate(spec);
    fs::create_directories(fs::path(a.out).parent_path().empty()
                               ? "."
                               : fs::path(a.out).parent_path());
    save_cache(a.out, ds);
    std::printf("synth: %zu sketches -> %s\n", ds.items.size(), a.out.c_str());
    print_class_counts(ds);
    return 0;
}

struct IngestArgs {
    std::string format = "quickdraw";
    std::string in, out;
    std::vector<std::string> classes;
    int per_class = 0;
    uint64_t subsample_seed = 0;
};

int cmd_ingest(const IngestArgs& a) {
    Dataset ds;
    if (a.format == "quickdraw")
        ds = parse_quickdraw_ndjson(a.in, a.classes, a.per_class, a.subsample_seed);
    else if (a.format == "spg")
        ds = parse_spg(a.in);
    else
        throw ConfigError("ingest: format must be quickdraw or spg");
    save_cache(a.out, ds);
    std::printf("ingest: %zu sketches (%zu issues) -> %s\n", ds.items.size(),
                ds.issues.size(), a.out.c_str());
    print_class_counts(ds);
    return 0;
}

struct RunArgs {
    std::string config, out_override;
    std::vector<uint64_t> seeds_override;
    int jobs = 1;
    bool fresh = false;
    bool dry_run = false;
};

int cmd_run(const RunArgs& a) {
    RunConfig rc = parse_run_config(read_file(a.config));
    if (!a.out_override.empty()) rc.out_dir = a.out_override;
    if (!a.seeds_override.empty()) rc.seeds = a.seeds_override;

    if (a.dry_run) {
        std::printf("dry run: %zu models x %zu permutations x %zu seeds = %zu cells\n",
                    rc.models.size(), rc.permutations.size(), rc.seeds.size(),
                    rc.models.size() * rc.permutations.size() * rc.seeds.size());
        bool dn = rc.denoise.has_value();
        for (const auto& m : rc.models)
            for (const auto& p : rc.permutations)
                std::printf("  %s\n", cell_name(m, p, dn).c_str());
        return 0;
    }

    fs::create_directories(rc.out_dir);
    {
        std::ofstream f(fs::path(rc.out_dir) / "config.json");
        f << run_config_json(rc) << "\n";
    }
    DatasetSplits splits = load_dataset(rc.dataset);
    std::printf("run: train %zu  val %zu  test %zu  max_len %d\n", splits.train.size(),
                splits.val.size(), splits.test.size(), rc.dataset.max_len);
    std::printf("run: %zu models x %zu permutations x %zu seeds = %zu cells, jobs=%d\n",
                rc.models.size(), rc.permutations.size(), rc.seeds.size(),
                rc.models.size() * rc.permutations.size() * rc.seeds.size(), a.jobs);

    auto results = run_grid(rc, splits, a.jobs, !a.fresh);
    write_reports(rc, results);

    int failures = 0;
    for (const auto& r : results) {
        if (r.error.empty()) {
            std::printf("  %-60s s%llu  metric %.5f  (%.1fs)\n", r.cell.c_str(),
                        (unsigned long long)r.seed, r.metric, r.wall_seconds);
        } else {
            std::printf("  %-60s s%llu  FAILED: %s\n", r.cell.c_str(),
                        (unsigned long long)r.seed, r.error.c_str());
            ++failures;
        }
    }
    std::printf("run: reports in %s\n", rc.out_dir.c_str());
    if (failures > 0) {
        std::fprintf(stderr, "run: %d cell(s) failed\n", failures);
        return 1;
    }
    return 0;
}

int cmd_report(const std::string& out_dir) {
    RunConfig rc = parse_run_config(read_file((fs::path(out_dir) / "config.json").string()));
    rc.out_dir = out_dir;
    std::vector<CellResult> results;
    fs::path cells = fs::path(out_dir) / "cells";
    if (fs::exists(cells))
        for (const auto& cell_dir : fs::directory_iterator(cells))
            for (const auto& seed_dir : fs::directory_iterator(cell_dir))
                if (fs::exists(seed_dir.path() / "result.json"))
                    results.push_back(
                        CellResult::from_json(read_file((seed_dir.path() / "result.json").string())));
    if (results.empty()) throw ConfigError("report: no cell results under " + out_dir);
    write_reports(rc, results);
    std::printf("report: %zu cell results -> %s\n", results.size(), out_dir.c_str());
    return 0;
}

struct Figure2Args {
    std::string config, ckpt, out;
    bool free_running = false;
};

int cmd_figure2(const Figure2Args& a) {
    RunConfig rc = parse_run_config(read_file(a.config));
    if (!fs::exists(a.ckpt + ".sltc"))
        throw IoError("figure2: missing checkpoint " + a.ckpt + ".sltc");
    SketchModel model = load_model(a.ckpt);
    DatasetSplits splits = load_dataset(rc.dataset);

    PrepConfig prep;
    prep.input_frame = model.config().input_frame;
    prep.output_frame = model.config().output_frame;
    prep.max_len = model.config().max_len;
    EvalOptions opts;
    opts.free_running = a.free_running;
    PositionErrorCurve curve = position_errors(model, splits.test, prep, opts);

    fs::create_directories(a.out);
    std::vector<std::string> rows;
    for (size_t i = 0; i < curve.mean.size(); ++i) {
        std::ostringstream os;
        os << i << "," << curve.mean[i] << "," << curve.stddev[i] << "," << curve.count[i];
        rows.push_back(os.str());
    }
    write_csv(fs::path(a.out) / "position_error.csv", "position,mean,std,count", rows);

    auto hist_rows = [](const std::vector<LabeledSketch>& items) {
        std::map<size_t, int64_t> h;
        for (const auto& it : items) ++h[it.seq.points.size()];
        std::vector<std::string> out;
        for (const auto& [len, n] : h) {
            std::ostringstream os;
            os << len << "," << n;
            out.push_back(os.str());
        }
        return out;
    };
    write_csv(fs::path(a.out) / "length_hist_train.csv", "length,count",
              hist_rows(splits.train));
    write_csv(fs::path(a.out) / "length_hist_test.csv", "length,count",
              hist_rows(splits.test));
    std::printf("figure2: %zu positions -> %s\n", curve.mean.size(), a.out.c_str());
    return 0;
}

struct RenderArgs {
    std::string cache, out = "render";
    int index = 0;
    std::string perm = "none";
    uint64_t perm_seed = 0;
    double fraction = 0.5;
};

int cmd_render(const RenderArgs& a) {
    Dataset ds = load_cache(a.cache);
    if (a.index < 0 || size_t(a.index) >= ds.items.size())
        throw ConfigError("render: index out of range");
    const LabeledSketch& item = ds.items[size_t(a.index)];

    fs::create_directories(a.out);
    {
        std::ofstream f(fs::path(a.out) / "original.svg");
        f << sketch_svg(item.seq);
    }
    std::printf("render: %s\n", (fs::path(a.out) / "original.svg").string().c_str());
    if (a.perm != "none") {
        PermutationSpec spec(perm_kind_from_name(a.perm), a.perm_seed, a.fraction);
        Stroke5Sequence permuted = apply(spec, item.seq, item.id);
        std::ofstream f(fs::path(a.out) / "permuted.svg");
        f << sketch_svg(permuted);
        std::printf("render: %s\n", (fs::path(a.out) / "permuted.svg").string().c_str());
    }
    return 0;
}

int cmd_gradcheck(uint64_t seed, bool inject_bug) {
    auto checks = run_block_gradchecks(seed, inject_bug);
    bool all_pass = true;
    for (const auto& c : checks) {
        std::printf("%-32s max_rel_err %.3e  tol %.0e  %s\n", c.name.c_str(), c.max_rel_err,
                    c.tol, c.pass ? "PASS" : "FAIL");
        if (!c.pass) {
            std::printf("    worst parameter: %s\n", c.worst_param.c_str());
            all_pass = false;
        }
    }
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sketchlab: sketch sequence modeling laboratory"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate the synthetic shape dataset");
    synth->add_option("--out", synth_args.out, "cache file to write")->required();
    synth->add_option("--classes", synth_args.classes, "number of shape classes (<= 10)");
    synth->add_option("--per-class", synth_args.per_class, "sketches per class");
    synth->add_option("--jitter", synth_args.jitter, "perturbation scale, 0 = templates");
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_option("--max-strokes", synth_args.max_strokes, "stroke budget");

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "parse source data into a binary cache");
    ingest->add_option("--format", ingest_args.format, "quickdraw | spg");
    ingest->add_option("--in", ingest_args.in, "source file")->required();
    ingest->add_option("--out", ingest_args.out, "cache file to write")->required();
    ingest->add_option("--classes", ingest_args.classes, "class filter (quickdraw)");
    ingest->add_option("--per-class", ingest_args.per_class, "per-class subsample size");
    ingest->add_option("--subsample-seed", ingest_args.subsample_seed, "subsample seed");

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "execute an ablation grid from a config file");
    run->add_option("--config", run_args.config, "run config JSON")->required();
    run->add_option("--out", run_args.out_override, "override output directory");
    run->add_option("--seeds", run_args.seeds_override, "override seed list");
    run->add_option("--jobs", run_args.jobs, "cells in flight");
    auto* fresh_flag = run->add_flag("--fresh", run_args.fresh, "ignore completion markers");
    run->add_flag("--resume", "reuse completion markers (the default)")->excludes(fresh_flag);
    run->add_flag("--dry-run", run_args.dry_run, "validate the config and list cells, no training");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "rebuild reports from cell results");
    report->add_option("--out", report_dir, "run output directory")->required();

    Figure2Args fig_args;
    auto* figure2 = app.add_subcommand("figure2", "per-position error curves and length histograms");
    figure2->add_option("--config", fig_args.config, "run config JSON (dataset section)")->required();
    figure2->add_option("--ckpt", fig_args.ckpt, "checkpoint stem")->required();
    figure2->add_option("--out", fig_args.out, "output directory")->required();
    figure2->add_flag("--free-running", fig_args.free_running, "AR rollout instead of teacher forcing");

    RenderArgs render_args;
    auto* render = app.add_subcommand("render", "render sketches as SVG with order markers");
    render->add_option("--cache", render_args.cache, "dataset cache")->required();
    render->add_option("--out", render_args.out, "output directory");
    render->add_option("--index", render_args.index, "sketch index in the cache");
    render->add_option("--perm", render_args.perm,
                       "none | inter_stroke | intra_stroke | intra_stroke_reverse | stroke_shuffle");
    render->add_option("--perm-seed", render_args.perm_seed, "permutation seed");
    render->add_option("--fraction", render_args.fraction, "reversal fraction");

    uint64_t gc_seed = 7;
    bool gc_bug = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all blocks");
    gradcheck->add_option("--seed", gc_seed, "parameter seed");
    gradcheck->add_flag("--inject-bug", gc_bug, "self-test: add a wrong gradient that must fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(synth_args);
        if (*ingest) return cmd_ingest(ingest_args);
        if (*run) return cmd_run(run_args);
        if (*report) return cmd_report(report_dir);
        if (*figure2) return cmd_figure2(fig_args);
        if (*render) return cmd_render(render_args);
        if (*gradcheck) return cmd_gradcheck(gc_seed, gc_bug);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
