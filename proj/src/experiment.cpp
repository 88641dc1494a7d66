#include "sketchlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sketchlab/optim.hpp"
#include "sketchlab/posenc.hpp"
#include "sketchlab/rng.hpp"

namespace fs = std::filesystem;

namespace sketchlab {

namespace {

using json = nlohmann::json;

uint64_t fnv1a_bytes(const std::string& s, uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

json perm_to_json(const PermutationSpec& p) {
    json j;
    j["kind"] = perm_kind_name(p.kind);
    j["seed"] = p.seed;
    j["fraction"] = p.fraction;
    if (p.then) j["then"] = perm_to_json(*p.then);
    return j;
}

PermutationSpec perm_from_json(const json& j) {
    PermutationSpec p;
    p.kind = perm_kind_from_name(j.value("kind", "none"));
    p.seed = j.value("seed", uint64_t(0));
    p.fraction = j.value("fraction", 0.5);
    if (j.contains("then"))
        p.then = std::make_shared<PermutationSpec>(perm_from_json(j.at("then")));
    return p;
}

std::string perm_sig(const PermutationSpec& p) {
    if (p.kind == PermKind::None && !p.then) return "none";
    std::ostringstream os;
    os << perm_kind_name(p.kind);
    if (p.kind == PermKind::IntraStrokeReverse)
        os << int(std::lround(p.fraction * 100));
    if (p.then) os << "+" << perm_sig(*p.then);
    return os.str();
}

std::string posenc_sig(const PosEncSpec& pe) {
    if (pe.parts.empty()) return "none";
    std::string s;
    for (PosEncPart p : pe.parts) {
        if (!s.empty()) s += "+";
        s += posenc_part_name(p);
    }
    return s;
}

std::string frame_sig(Frame f) { return f == Frame::Absolute ? "abs" : "rel"; }

std::string task_sig(Task t) {
    switch (t) {
        case Task::Reconstruction: return "recon";
        case Task::Classification: return "cls";
        case Task::Segmentation: return "seg";
    }
    return "task";
}

json denoise_to_json(const DenoiseSpec& d) {
    json j;
    j["gaussian_sigma"] = d.gaussian_sigma;
    j["dropout_rate_max"] = d.dropout_rate_max;
    j["seed"] = d.seed;
    return j;
}

json dataset_to_json(const DatasetSpec& ds) {
    json j;
    j["kind"] = ds.kind;
    if (!ds.cache_path.empty()) j["cache"] = ds.cache_path;
    j["synth"] = {{"n_classes", ds.synth.n_classes},
                  {"per_class", ds.synth.per_class},
                  {"max_strokes", ds.synth.max_strokes},
                  {"jitter", ds.synth.jitter},
                  {"seed", ds.synth.seed}};
    j["split"] = {{"train_per_class", ds.split.train_per_class},
                  {"val_per_class", ds.split.val_per_class},
                  {"test_per_class", ds.split.test_per_class},
                  {"split_seed", ds.split.split_seed},
                  {"split_index", ds.split.split_index}};
    j["max_len"] = ds.max_len;
    return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
}

} // namespace

// double underscore separates components; single underscores stay inside names
std::string cell_name(const ModelConfig& mc, const PermutationSpec& perm, bool denoised) {
    std::ostringstream os;
    os << task_sig(mc.task) << "__" << decoder_variant_name(mc.decoder_variant) << "__"
       << frame_sig(mc.input_frame) << "2" << frame_sig(mc.output_frame) << "__pe-"
       << posenc_sig(mc.posenc) << "__perm-" << perm_sig(perm);
    if (denoised) os << "__dn";
    return os.str();
}

std::string run_config_json(const RunConfig& rc) {
    json j;
    j["dataset"] = dataset_to_json(rc.dataset);
    json models = json::array();
    for (const auto& mc : rc.models) models.push_back(json::parse(mc.to_json()));
    j["models"] = models;
    json perms = json::array();
    for (const auto& p : rc.permutations) perms.push_back(perm_to_json(p));
    j["permutations"] = perms;
    if (rc.denoise) j["denoise"] = denoise_to_json(*rc.denoise);
    j["train"] = {{"lr", rc.train.lr},
                  {"batch_size", rc.train.batch_size},
                  {"epochs", rc.train.epochs}};
    j["seeds"] = rc.seeds;
    j["out"] = rc.out_dir;
    j["free_running_ar"] = rc.free_running_ar;
    return j.dump(2);
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        // allow_exceptions on, ignore_comments on: run configs may carry //
        // annotations.
        j = json::parse(text, nullptr, true, true);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: parse failure: ") + e.what());
    }
    try {
        check_keys(j, {"dataset", "models", "permutations", "denoise", "train", "seeds",
                       "out", "free_running_ar"},
                   "top level");
        RunConfig rc;
        const json& d = j.at("dataset");
        check_keys(d, {"kind", "cache", "synth", "split", "max_len"}, "dataset");
        rc.dataset.kind = d.value("kind", "synth");
        if (rc.dataset.kind != "synth" && rc.dataset.kind != "cache")
            throw ConfigError("config: dataset.kind must be synth or cache");
        rc.dataset.cache_path = d.value("cache", "");
        if (d.contains("synth")) {
            const json& s = d.at("synth");
            check_keys(s, {"n_classes", "per_class", "max_strokes", "jitter", "seed"},
                       "dataset.synth");
            rc.dataset.synth.n_classes = s.value("n_classes", 10);
            rc.dataset.synth.per_class = s.value("per_class", 500);
            rc.dataset.synth.max_strokes = s.value("max_strokes", 8);
            rc.dataset.synth.jitter = s.value("jitter", 1.0);
            rc.dataset.synth.seed = s.value("seed", uint64_t(0));
        }
        if (d.contains("split")) {
            const json& s = d.at("split");
            check_keys(s, {"train_per_class", "val_per_class", "test_per_class",
                           "split_seed", "split_index"},
                       "dataset.split");
            rc.dataset.split.train_per_class = s.value("train_per_class", 650);
            rc.dataset.split.val_per_class = s.value("val_per_class", 50);
            rc.dataset.split.test_per_class = s.value("test_per_class", 100);
            rc.dataset.split.split_seed = s.value("split_seed", uint64_t(0));
            rc.dataset.split.split_index = s.value("split_index", 0);
        }
        rc.dataset.max_len = d.value("max_len", 0);

        for (const json& m : j.at("models")) {
            ModelConfig base;
            json filled = json::parse(base.to_json());
            check_keys(m, [&] {
                std::set<std::string> keys;
                for (auto it = filled.begin(); it != filled.end(); ++it) keys.insert(it.key());
                return keys;
            }(), "models[]");
            for (auto it = m.begin(); it != m.end(); ++it) filled[it.key()] = it.value();
            rc.models.push_back(ModelConfig::from_json(filled.dump()));
        }
        if (rc.models.empty()) throw ConfigError("config: models list is empty");

        if (j.contains("permutations"))
            for (const json& p : j.at("permutations")) {
                check_keys(p, {"kind", "seed", "fraction", "then"}, "permutations[]");
                rc.permutations.push_back(perm_from_json(p));
            }
        if (rc.permutations.empty()) rc.permutations.emplace_back();

        if (j.contains("denoise")) {
            const json& dn = j.at("denoise");
            check_keys(dn, {"gaussian_sigma", "dropout_rate_max", "seed"}, "denoise");
            DenoiseSpec spec;
            spec.gaussian_sigma = dn.value("gaussian_sigma", 0.05);
            spec.dropout_rate_max = dn.value("dropout_rate_max", 0.5);
            spec.seed = dn.value("seed", uint64_t(0));
            if (spec.gaussian_sigma < 0 || spec.dropout_rate_max < 0 ||
                spec.dropout_rate_max > 1)
                throw ConfigError("config: denoise parameters out of range");
            rc.denoise = spec;
        }

        if (j.contains("train")) {
            const json& t = j.at("train");
            check_keys(t, {"lr", "batch_size", "epochs"}, "train");
            rc.train.lr = t.value("lr", 1e-3);
            rc.train.batch_size = t.value("batch_size", 32);
            rc.train.epochs = t.value("epochs", 10);
            if (rc.train.lr <= 0 || rc.train.batch_size < 1 || rc.train.epochs < 1)
                throw ConfigError("config: train parameters out of range");
        }
        if (j.contains("seeds")) {
            rc.seeds.clear();
            for (const json& s : j.at("seeds")) rc.seeds.push_back(s.get<uint64_t>());
        }
        if (rc.seeds.empty()) throw ConfigError("config: seeds list is empty");
        rc.out_dir = j.value("out", "runs/out");
        rc.free_running_ar = j.value("free_running_ar", true);
        return rc;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string CellResult::to_json() const {
    json j;
    j["cell"] = cell;
    j["seed"] = seed;
    j["cfg_hash"] = cfg_hash;
    j["metric"] = metric;
    j["metric_teacher"] = metric_teacher;
    j["epoch_losses"] = epoch_losses;
    j["wall_seconds"] = wall_seconds;
    j["param_count"] = param_count;
    j["ckpt_stem"] = ckpt_stem;
    j["error"] = error;
    return j.dump(2);
}

CellResult CellResult::from_json(const std::string& text) {
    json j = json::parse(text);
    CellResult r;
    r.cell = j.at("cell").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.cfg_hash = j.at("cfg_hash").get<uint64_t>();
    r.metric = j.at("metric").get<double>();
    r.metric_teacher = j.at("metric_teacher").get<double>();
    r.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.param_count = j.at("param_count").get<size_t>();
    r.ckpt_stem = j.at("ckpt_stem").get<std::string>();
    r.error = j.value("error", "");
    return r;
}

DatasetSplits load_dataset(DatasetSpec& spec) {
    Dataset ds;
    if (spec.kind == "synth") {
        ds = synth_generate(spec.synth);
    } else if (spec.kind == "cache") {
        if (spec.cache_path.empty()) throw ConfigError("dataset: cache kind needs a path");
        ds = load_cache(spec.cache_path);
    } else {
        throw ConfigError("dataset: unknown kind " + spec.kind);
    }
    DatasetSplits splits = split_dataset(ds.items, spec.split);
    if (spec.max_len == 0) spec.max_len = percentile99_len(splits.train);
    return splits;
}

uint64_t cell_hash(const RunConfig& rc, size_t model_idx, size_t perm_idx, uint64_t seed) {
    json j;
    j["dataset"] = dataset_to_json(rc.dataset);
    j["model"] = json::parse(rc.models[model_idx].to_json());
    j["perm"] = perm_to_json(rc.permutations[perm_idx]);
    if (rc.denoise) j["denoise"] = denoise_to_json(*rc.denoise);
    j["train"] = {{"lr", rc.train.lr},
                  {"batch_size", rc.train.batch_size},
                  {"epochs", rc.train.epochs}};
    j["seed"] = seed;
    j["free_running_ar"] = rc.free_running_ar;
    return fnv1a_bytes(j.dump());
}

namespace {

// class and part counts a model needs when the config leaves them at 0
void resolve_model_dims(ModelConfig& mc, const DatasetSplits& splits, int max_len) {
    mc.max_len = max_len;
    if (mc.task == Task::Classification && mc.n_classes == 0) {
        int hi = 0;
        for (const auto& it : splits.train) hi = std::max(hi, it.class_label);
        mc.n_classes = hi + 1;
    }
    if (mc.task == Task::Segmentation && mc.n_point_classes == 0) {
        int hi = 0;
        for (const auto& it : splits.train)
            for (int l : it.point_labels) hi = std::max(hi, l);
        mc.n_point_classes = hi + 1;
    }
    int strokes = 1;
    for (const auto& it : splits.train)
        strokes = std::max(strokes, int(strokes_of(it.seq).size()));
    mc.max_strokes = std::max(mc.max_strokes, strokes);
    mc.posenc.d_model = mc.d_model;
    mc.posenc.max_len = mc.max_len;
    mc.posenc.max_strokes = mc.max_strokes;
}

} // namespace

CellResult run_cell(const RunConfig& rc, size_t model_idx, size_t perm_idx, uint64_t seed,
                    const DatasetSplits& splits, bool resume) {
    ModelConfig mc = rc.models[model_idx];
    const PermutationSpec& perm = rc.permutations[perm_idx];

    CellResult res;
    res.cell = cell_name(mc, perm, rc.denoise.has_value());
    res.seed = seed;
    res.cfg_hash = cell_hash(rc, model_idx, perm_idx, seed);

    fs::path dir = fs::path(rc.out_dir) / "cells" / res.cell / ("s" + std::to_string(seed));
    fs::path marker = dir / "result.json";
    if (resume && fs::exists(marker)) {
        try {
            std::ifstream in(marker);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            CellResult prev = CellResult::from_json(text);
            if (prev.cfg_hash == res.cfg_hash && prev.error.empty()) return prev;
        } catch (...) {
            // unreadable marker: fall through and recompute
        }
    }

    auto t0 = std::chrono::steady_clock::now();
    try {
        fs::create_directories(dir);
        resolve_model_dims(mc, splits, rc.dataset.max_len);

        PrepConfig prep;
        prep.input_frame = mc.input_frame;
        prep.output_frame = mc.output_frame;
        prep.max_len = mc.max_len;
        if (perm.kind != PermKind::None || perm.then)
            prep.permutation = std::make_shared<PermutationSpec>(perm);

        TrainConfig tc = rc.train;
        tc.seed = seed;
        tc.denoise = rc.denoise;

        SketchModel model(mc, seed);
        res.param_count = model.param_count();
        FitResult fr = fit(model, splits.train, splits.val, prep, tc);
        res.epoch_losses = fr.epoch_losses;

        EvalOptions teacher;
        res.metric_teacher = evaluate(model, splits.test, prep, teacher);
        bool ar_recon = mc.task == Task::Reconstruction &&
                        (mc.decoder_variant == DecoderVariant::AR ||
                         mc.decoder_variant == DecoderVariant::AR_noCA);
        if (ar_recon && rc.free_running_ar) {
            EvalOptions fr_opts;
            fr_opts.free_running = true;
            res.metric = evaluate(model, splits.test, prep, fr_opts);
        } else {
            res.metric = res.metric_teacher;
        }

        res.ckpt_stem = (dir / "model").string();
        save_model(res.ckpt_stem, model);
    } catch (const std::exception& e) {
        res.error = e.what();
    }
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ofstream out(marker);
    out << res.to_json() << "\n";
    return res;
}

std::vector<CellResult> run_grid(const RunConfig& rc_in, const DatasetSplits& splits, int jobs,
                                 bool resume) {
    RunConfig rc = rc_in;
    if (rc.permutations.empty()) rc.permutations.emplace_back();

    struct Item {
        size_t model, perm;
        uint64_t seed;
    };
    std::vector<Item> items;
    for (size_t m = 0; m < rc.models.size(); ++m)
        for (size_t p = 0; p < rc.permutations.size(); ++p)
            for (uint64_t s : rc.seeds) items.push_back({m, p, s});

    std::vector<CellResult> results(items.size());
    if (jobs < 1) jobs = 1;
    std::mutex mu;
    size_t next = 0;
    auto worker = [&] {
        for (;;) {
            size_t i;
            {
                std::lock_guard<std::mutex> lk(mu);
                if (next == items.size()) return;
                i = next++;
            }
            results[i] =
                run_cell(rc, items[i].model, items[i].perm, items[i].seed, splits, resume);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

namespace {

struct Agg {
    std::vector<double> metrics, teachers;
};

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v), s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(5);
    os << std::fixed << x;
    return os.str();
}

} // namespace

void write_reports(const RunConfig& rc, const std::vector<CellResult>& results) {
    fs::path out(rc.out_dir);
    fs::create_directories(out);
    uint64_t run_hash = fnv1a_bytes(run_config_json(rc));

    std::vector<CellResult> sorted = results;
    std::sort(sorted.begin(), sorted.end(), [](const CellResult& a, const CellResult& b) {
        return a.cell != b.cell ? a.cell < b.cell : a.seed < b.seed;
    });

    {
        json j;
        j["config_hash"] = run_hash;
        j["config"] = json::parse(run_config_json(rc));
        json cells = json::array();
        for (const auto& r : sorted) cells.push_back(json::parse(r.to_json()));
        j["cells"] = cells;
        std::ofstream f(out / "report.json");
        f << j.dump(2) << "\n";
    }

    {
        std::ofstream f(out / "report_long.csv");
        f << "cell,seed,metric,metric_teacher,wall_seconds,params,cfg_hash,error\n";
        for (const auto& r : sorted)
            f << r.cell << "," << r.seed << "," << fmt(r.metric) << ","
              << fmt(r.metric_teacher) << "," << fmt(r.wall_seconds) << "," << r.param_count
              << "," << r.cfg_hash << "," << (r.error.empty() ? "" : "\"" + r.error + "\"")
              << "\n";
    }

    std::map<std::string, Agg> by_cell;
    for (const auto& r : sorted)
        if (r.error.empty()) {
            by_cell[r.cell].metrics.push_back(r.metric);
            by_cell[r.cell].teachers.push_back(r.metric_teacher);
        }

    {
        std::ofstream f(out / "report_summary.csv");
        f << "cell,n_seeds,metric_mean,metric_std,teacher_mean,teacher_std\n";
        for (const auto& [cell, agg] : by_cell)
            f << cell << "," << agg.metrics.size() << "," << fmt(mean_of(agg.metrics)) << ","
              << fmt(std_of(agg.metrics)) << "," << fmt(mean_of(agg.teachers)) << ","
              << fmt(std_of(agg.teachers)) << "\n";
    }

    // pivot per task: rows keyed by everything except the frame combination
    std::map<std::string, std::map<std::string, std::map<std::string, std::string>>> pivots;
    for (const auto& [cell, agg] : by_cell) {
        // cell = <task>__<variant>__<in>2<out>__pe-<sig>__perm-<sig>[__dn]
        std::vector<std::string> parts;
        size_t at = 0;
        while (at <= cell.size()) {
            size_t next = cell.find("__", at);
            if (next == std::string::npos) {
                parts.push_back(cell.substr(at));
                break;
            }
            parts.push_back(cell.substr(at, next - at));
            at = next + 2;
        }
        if (parts.size() < 5) continue;
        std::string task = parts[0];
        std::string frames = parts[2];
        std::string row = parts[1];
        for (size_t k = 3; k < parts.size(); ++k) row += "__" + parts[k];
        std::string text = fmt(mean_of(agg.metrics)) + " +- " + fmt(std_of(agg.metrics));
        pivots[task][row][frames] = text;
    }
    for (const auto& [task, rows] : pivots) {
        std::set<std::string> cols;
        for (const auto& [row, cells] : rows)
            for (const auto& [col, text] : cells) cols.insert(col);
        std::ofstream f(out / ("report_pivot_" + task + ".csv"));
        f << "row";
        for (const auto& c : cols) f << "," << c;
        f << "\n";
        for (const auto& [row, cells] : rows) {
            f << row;
            for (const auto& c : cols) {
                auto it = cells.find(c);
                f << "," << (it == cells.end() ? "" : it->second);
            }
            f << "\n";
        }
    }
}

} // namespace sketchlab
