// Copyright 2026 The ihcq Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Every command writes <out>/report.json, which embeds a run
// manifest; `ihcq rerun --manifest <report.json>` replays it.

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ihcq/ihcq.hpp"
#include "run_context.hpp"

namespace ihcq::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "RNG seed, overrides the config");
    sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", c.out, "output directory")->required();
}

ojson class_counts(std::span<const Detection> dets) {
    std::int64_t neg = 0, pos = 0;
    for (const auto& d : dets) (d.cls == CellClass::TcPos ? pos : neg) += 1;
    return ojson{{"TC_NEG", neg}, {"TC_POS", pos}};
}

std::string category_name(TpsCategory c) { return std::string(to_string(c)); }

// ---------------------------------------------------------------- rasterize

struct RasterizeOpts {
    std::string annotations;
    int width = 0;
    int height = 0;
    std::optional<int> radius;
};

ojson cmd_rasterize(RunContext& ctx, const RasterizeOpts& o) {
    ctx.add_input(o.annotations);
    const auto ann = read_annotations(o.annotations);
    const int radius = o.radius.value_or(ctx.config.disk_radius);
    const auto map = rasterize(ann, o.width, o.height, radius);
    write_label_png(map, ctx.out("labels.png"));
    std::int64_t neg = 0, pos = 0;
    for (const auto v : map.values) {
        neg += v == static_cast<std::uint8_t>(CellClass::TcNeg);
        pos += v == static_cast<std::uint8_t>(CellClass::TcPos);
    }
    ojson r;
    r["width"] = o.width;
    r["height"] = o.height;
    r["radius"] = radius;
    r["annotations"] = ann.size();
    r["pixels"] = {{"TC_NEG", neg}, {"TC_POS", pos}};
    r["labels"] = "labels.png";
    return r;
}

// ---------------------------------------------------------------- slide helpers

void add_manifest_inputs(RunContext& ctx, const fs::path& manifest_path, const SlideManifest& m) {
    ctx.add_input(manifest_path);
    for (const auto& t : m.tiles) ctx.add_input(m.resolve(t.path));
    if (m.exclusion_mask) ctx.add_input(m.resolve(m.exclusion_mask->path));
}

StainParams stain_params(const RunContext& ctx) { return ctx.config.backend.stain; }

// ---------------------------------------------------------------- infer

struct InferOpts {
    std::string image;
    std::optional<double> mpp;
    std::string manifest;
    std::vector<std::string> mean;
    std::string backend;
};

ojson cmd_infer(RunContext& ctx, const InferOpts& o) {
    const int modes = !o.image.empty() + !o.manifest.empty() + !o.mean.empty();
    if (modes != 1) {
        throw Error(ErrorKind::InvalidArgument, "infer needs exactly one of --image, --manifest or --mean");
    }
    const std::string backend = o.backend.empty() ? ctx.config.backend.name : o.backend;
    if (o.mean.empty() && backend != "deconv") {
        throw Error(ErrorKind::InvalidArgument, "infer only runs the 'deconv' backend; external models write PMAP files themselves");
    }
    const Mpp target(ctx.config.reference_mpp);
    ojson r;
    if (!o.image.empty()) {
        if (!o.mpp) throw Error(ErrorKind::InvalidArgument, "--image requires --mpp");
        ctx.add_input(o.image);
        const auto img = resample_to_reference(read_rgb_png(o.image, Mpp(*o.mpp)), target);
        const auto map = baseline_infer(img, stain_params(ctx));
        write_pmap(map, ctx.out("pmap.json"));
        r["mode"] = "image";
        r["width"] = map.width;
        r["height"] = map.height;
        r["pmap"] = "pmap.json";
        return r;
    }
    if (!o.mean.empty()) {
        std::vector<ProbabilityMap> reps;
        for (const auto& p : o.mean) {
            ctx.add_input(p);
            ctx.add_input(pmap_payload_path(p));
            reps.push_back(read_pmap(p));
        }
        const auto map = mean_replicate(reps);
        write_pmap(map, ctx.out("pmap.json"));
        r["mode"] = "mean";
        r["replicates"] = reps.size();
        r["width"] = map.width;
        r["height"] = map.height;
        r["pmap"] = "pmap.json";
        return r;
    }
    auto manifest = load_manifest(o.manifest);
    add_manifest_inputs(ctx, o.manifest, manifest);
    const SlideReader reader(std::move(manifest), ctx.config.tile_options());
    const DeconvolutionBackend deconv(stain_params(ctx));
    fs::create_directories(ctx.out("pmaps"));
    std::vector<char> written(reader.size(), 0);
    parallel_for(reader.size(), ctx.workers(), [&](std::size_t i) {
        const auto tile = reader.load(i);
        if (!tile) return;
        write_pmap(deconv.infer(*tile), ctx.out("pmaps") / PmapDirectoryBackend::tile_name(tile->gx, tile->gy));
        written[i] = 1;
    });
    r["mode"] = "manifest";
    r["slide_id"] = reader.manifest().slide_id;
    r["tiles_total"] = reader.size();
    r["tiles_written"] = std::count(written.begin(), written.end(), 1);
    r["pmap_dir"] = "pmaps";
    return r;
}

// ---------------------------------------------------------------- detect

struct DetectOpts {
    std::string manifest;
    std::string pmap;
    std::string backend;
    std::string pmap_dir;
    std::optional<int> min_distance;
    std::optional<double> threshold;
};

ojson cmd_detect(RunContext& ctx, const DetectOpts& o) {
    if (o.manifest.empty() == o.pmap.empty()) {
        throw Error(ErrorKind::InvalidArgument, "detect needs exactly one of --manifest or --pmap");
    }
    auto& cfg = ctx.config;
    if (o.min_distance) cfg.peak.min_distance = *o.min_distance;
    if (o.threshold) cfg.peak.foreground_threshold = *o.threshold;
    if (!o.backend.empty()) cfg.backend.name = o.backend;
    if (!o.pmap_dir.empty()) cfg.backend.pmap_dir = o.pmap_dir;

    ojson r;
    std::vector<Detection> dets;
    if (!o.pmap.empty()) {
        ctx.add_input(o.pmap);
        ctx.add_input(pmap_payload_path(o.pmap));
        dets = extract_detections(read_pmap(o.pmap), cfg.peak);
        sort_detections(dets);
        r["source"] = "pmap";
    } else {
        auto manifest = load_manifest(o.manifest);
        add_manifest_inputs(ctx, o.manifest, manifest);
        std::unique_ptr<InferenceBackend> backend;
        if (cfg.backend.name == "deconv") {
            backend = std::make_unique<DeconvolutionBackend>(cfg.backend.stain);
        } else if (cfg.backend.name == "pmap_dir") {
            if (cfg.backend.pmap_dir.empty()) {
                throw Error(ErrorKind::InvalidArgument, "the pmap_dir backend needs --pmap-dir or backend.pmap_dir");
            }
            for (const auto& t : manifest.tiles) {
                const fs::path h = fs::path(cfg.backend.pmap_dir) / PmapDirectoryBackend::tile_name(t.gx, t.gy);
                if (fs::exists(h)) {
                    ctx.add_input(h);
                    ctx.add_input(pmap_payload_path(h));
                }
            }
            backend = std::make_unique<PmapDirectoryBackend>(cfg.backend.pmap_dir);
        } else {
            throw Error(ErrorKind::InvalidArgument, "unknown backend '" + cfg.backend.name + "'");
        }
        const SlideReader reader(std::move(manifest), cfg.tile_options());
        auto sd = detect_slide(reader, *backend, cfg.peak, ctx.workers());
        dets = std::move(sd.detections);
        r["source"] = "manifest";
        r["slide_id"] = reader.manifest().slide_id;
        r["backend"] = cfg.backend.name;
        r["tiles_total"] = sd.tiles_total;
        r["tiles_processed"] = sd.tiles_processed;
    }
    write_detections(dets, ctx.out("detections.csv"));
    r["detections"] = dets.size();
    r["counts"] = class_counts(dets);
    r["detections_csv"] = "detections.csv";
    return r;
}

// ---------------------------------------------------------------- match

struct MatchOpts {
    std::string pred;
    std::string gt;
    std::optional<double> max_dist;
};

ojson cmd_match(RunContext& ctx, const MatchOpts& o) {
    if (o.max_dist) ctx.config.match_max_dist = *o.max_dist;
    ctx.add_input(o.pred);
    ctx.add_input(o.gt);
    const auto preds = read_detections(o.pred);
    const auto gts = read_annotations(o.gt);
    auto r = to_json(f1_from_counts(greedy_match(preds, gts, ctx.config.match_max_dist)));
    r["max_dist"] = ctx.config.match_max_dist;
    return r;
}

// ---------------------------------------------------------------- tps

struct TpsOpts {
    std::vector<std::string> detections;
    std::vector<std::string> slide_ids;
};

ojson cmd_tps(RunContext& ctx, const TpsOpts& o) {
    if (!o.slide_ids.empty() && o.slide_ids.size() != o.detections.size()) {
        throw Error(ErrorKind::InvalidArgument, "--slide-id must be given once per --detections file");
    }
    std::string csv = "slide_id,n_pos,n_neg,tps,category\n";
    ojson slides = ojson::array();
    for (std::size_t i = 0; i < o.detections.size(); ++i) {
        const auto& path = o.detections[i];
        ctx.add_input(path);
        const std::string id = o.slide_ids.empty() ? fs::path(path).stem().string() : o.slide_ids[i];
        const auto dets = read_detections(path);
        TpsResult t;
        try {
            t = compute_tps(dets, id);
        } catch (const Error& e) {
            throw Error(e.kind(), "slide '" + id + "': " + e.what());
        }
        const auto cat = bin_tps(t.tps, ctx.config.cutoffs);
        csv += id + "," + std::to_string(t.n_pos) + "," + std::to_string(t.n_neg) + "," + csv::format_double(t.tps) +
               "," + category_name(cat) + "\n";
        slides.push_back({{"slide_id", id}, {"n_pos", t.n_pos}, {"n_neg", t.n_neg}, {"tps", t.tps},
                          {"category", category_name(cat)}});
    }
    ctx.write_text("tps.csv", csv);
    ojson r;
    r["cutoffs"] = {ctx.config.cutoffs.c1, ctx.config.cutoffs.c2};
    r["slides"] = slides;
    r["tps_csv"] = "tps.csv";
    return r;
}

// ---------------------------------------------------------------- ground-truth tables

struct SlideRow {
    std::string slide_id;
    std::string dataset;
    double tps = 0.0;
    TpsCategory category = TpsCategory::Lt1;
    bool no_majority = false;
    std::optional<bool> label;
};

/// Reads slide_id plus either r1,r2,r3 (consensus), tps, or label; optional dataset column.
std::vector<SlideRow> read_ground_truth(const fs::path& path, const Cutoffs& cutoffs, bool allow_label = false) {
    const auto t = csv::read(path);
    const int cid = t.column("slide_id");
    const int cds = t.column("dataset");
    const int ctps = t.column("tps");
    const int clab = t.column("label");
    const std::array<int, 3> cr = {t.column("r1"), t.column("r2"), t.column("r3")};
    const bool raters = cr[0] >= 0 && cr[1] >= 0 && cr[2] >= 0;
    if (cid < 0 || (!raters && ctps < 0 && !(allow_label && clab >= 0))) {
        throw Error(ErrorKind::Format, path.string() + ": expected slide_id with r1,r2,r3 or tps" +
                                           std::string(allow_label ? " or label" : "") + " columns");
    }
    std::vector<SlideRow> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
        SlideRow s;
        s.slide_id = row[cid];
        if (!seen.insert(s.slide_id).second) {
            throw Error(ErrorKind::Format, where + ": duplicate slide_id '" + s.slide_id + "'");
        }
        if (cds >= 0) s.dataset = row[cds];
        if (raters) {
            RaterPanel p{s.slide_id, {}};
            for (int k = 0; k < 3; ++k) p.tps_by_rater[k] = csv::parse_double(row[cr[k]], where);
            const auto c = consensus_category(p, cutoffs);
            s.category = c.category;
            s.no_majority = c.no_majority;
            s.tps = consensus_tps(p);
        } else if (ctps >= 0) {
            s.tps = csv::parse_double(row[ctps], where);
            check_tps_range(s.tps, where);
            s.category = bin_tps(s.tps, cutoffs);
        }
        if (allow_label && clab >= 0) {
            const auto v = csv::parse_int(row[clab], where);
            if (v != 0 && v != 1) throw Error(ErrorKind::Format, where + ": label must be 0 or 1");
            s.label = v == 1;
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw Error(ErrorKind::InvalidArgument, path.string() + ": no slides");
    return out;
}

/// slide_id -> value of the first present column among `names`.
std::map<std::string, double> read_slide_values(const fs::path& path, std::initializer_list<const char*> names) {
    const auto t = csv::read(path);
    const int cid = t.column("slide_id");
    int cv = -1;
    for (const char* n : names) {
        if (cv < 0) cv = t.column(n);
    }
    if (cid < 0 || cv < 0) {
        std::string want;
        for (const char* n : names) want += std::string(want.empty() ? "" : " or ") + n;
        throw Error(ErrorKind::Format, path.string() + ": expected slide_id and " + want + " columns");
    }
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
        if (!out.emplace(t.rows[i][cid], csv::parse_double(t.rows[i][cv], where)).second) {
            throw Error(ErrorKind::Format, where + ": duplicate slide_id '" + t.rows[i][cid] + "'");
        }
    }
    return out;
}

std::vector<double> aligned(const std::vector<SlideRow>& gt, const std::map<std::string, double>& pred,
                            const std::string& pred_path) {
    std::vector<double> out;
    std::vector<std::string> missing;
    for (const auto& s : gt) {
        const auto it = pred.find(s.slide_id);
        if (it == pred.end()) {
            missing.push_back(s.slide_id);
        } else {
            out.push_back(it->second);
        }
    }
    if (!missing.empty()) {
        throw Error(ErrorKind::InvalidArgument, pred_path + " lacks " + std::to_string(missing.size()) + " ground-truth slide(s)",
                    missing);
    }
    return out;
}

ojson kappa_json(const KappaResult& k) {
    return ojson{{"kappa", k.kappa}, {"observed", k.observed}, {"expected", k.expected}, {"degenerate", k.degenerate}};
}

// ---------------------------------------------------------------- consensus

struct ConsensusOpts {
    std::string raters;
};

ojson cmd_consensus(RunContext& ctx, const ConsensusOpts& o) {
    ctx.add_input(o.raters);
    const auto t = csv::read(o.raters);
    const int cid = t.column("slide_id");
    const std::array<int, 3> cr = {t.column("r1"), t.column("r2"), t.column("r3")};
    if (cid < 0 || cr[0] < 0 || cr[1] < 0 || cr[2] < 0) {
        throw Error(ErrorKind::Format, o.raters + ": expected slide_id,r1,r2,r3 columns");
    }
    const auto rows = read_ground_truth(o.raters, ctx.config.cutoffs);
    std::string csv = "slide_id,tps,category,no_majority\n";
    ojson slides = ojson::array();
    std::size_t flagged = 0;
    for (const auto& s : rows) {
        csv += s.slide_id + "," + csv::format_double(s.tps) + "," + category_name(s.category) + "," +
               (s.no_majority ? "1" : "0") + "\n";
        slides.push_back({{"slide_id", s.slide_id}, {"tps", s.tps}, {"category", category_name(s.category)},
                          {"no_majority", s.no_majority}});
        flagged += s.no_majority;
    }
    ctx.write_text("consensus.csv", csv);
    ojson r;
    r["slides"] = slides;
    r["no_majority"] = flagged;
    r["consensus_csv"] = "consensus.csv";
    return r;
}

// ---------------------------------------------------------------- evaluate

struct EvalOpts {
    std::string gt;
    std::string pred;
};

ojson cmd_evaluate(RunContext& ctx, const EvalOpts& o) {
    ctx.add_input(o.gt);
    ctx.add_input(o.pred);
    const auto& cut = ctx.config.cutoffs;
    const auto gt = read_ground_truth(o.gt, cut);
    const auto pred_tps = aligned(gt, read_slide_values(o.pred, {"tps"}), o.pred);
    std::vector<TpsCategory> g, p;
    std::string csv = "slide_id,dataset,gt_category,pred_category\n";
    for (std::size_t i = 0; i < gt.size(); ++i) {
        check_tps_range(pred_tps[i], o.pred + " slide '" + gt[i].slide_id + "'");
        g.push_back(gt[i].category);
        p.push_back(bin_tps(pred_tps[i], cut));
        csv += gt[i].slide_id + "," + gt[i].dataset + "," + category_name(g.back()) + "," + category_name(p.back()) + "\n";
    }
    ctx.write_text("evaluate.csv", csv);
    ojson r;
    r["n"] = gt.size();
    r["accuracy"] = accuracy(g, p);
    r["kappa"] = kappa_json(cohens_kappa(g, p));
    r["confusion"] = to_json(confusion(g, p));

    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<TpsCategory>, std::vector<TpsCategory>>> by_ds;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i].dataset.empty()) continue;
        auto [it, fresh] = by_ds.try_emplace(gt[i].dataset);
        if (fresh) order.push_back(gt[i].dataset);
        it->second.first.push_back(g[i]);
        it->second.second.push_back(p[i]);
    }
    if (!order.empty()) {
        ojson ds = ojson::array();
        std::vector<double> kappas;
        for (const auto& name : order) {
            const auto& [dg, dp] = by_ds.at(name);
            const auto k = cohens_kappa(dg, dp);
            kappas.push_back(k.kappa);
            ds.push_back({{"dataset", name}, {"n", dg.size()}, {"accuracy", accuracy(dg, dp)}, {"kappa", kappa_json(k)}});
        }
        r["datasets"] = ds;
        r["macro_kappa"] = macro_kappa(kappas);
    }
    r["evaluate_csv"] = "evaluate.csv";
    return r;
}

// ---------------------------------------------------------------- roc

struct RocOpts {
    std::string gt;
    std::string pred;
};

ojson cmd_roc(RunContext& ctx, const RocOpts& o) {
    ctx.add_input(o.gt);
    ctx.add_input(o.pred);
    const auto gt = read_ground_truth(o.gt, ctx.config.cutoffs, true);
    const auto scores = aligned(gt, read_slide_values(o.pred, {"score", "tps"}), o.pred);
    std::vector<bool> positive;
    for (const auto& s : gt) positive.push_back(s.label ? *s.label : s.category != TpsCategory::Lt1);
    const auto roc = auroc(positive, scores);
    std::string csv = "threshold,fpr,tpr\n";
    ojson pts = ojson::array();
    for (const auto& pt : roc.points) {
        const bool inf = std::isinf(pt.threshold);
        csv += (inf ? std::string("inf") : csv::format_double(pt.threshold)) + "," + csv::format_double(pt.fpr) + "," +
               csv::format_double(pt.tpr) + "\n";
        pts.push_back({{"threshold", inf ? ojson(nullptr) : ojson(pt.threshold)}, {"fpr", pt.fpr}, {"tpr", pt.tpr}});
    }
    ctx.write_text("roc.csv", csv);
    ojson r;
    r["n"] = gt.size();
    r["positives"] = std::count(positive.begin(), positive.end(), true);
    r["auc"] = roc.auc;
    r["points"] = pts;
    r["roc_csv"] = "roc.csv";
    return r;
}

// ---------------------------------------------------------------- sweep

struct SweepOpts {
    std::string gt;
    std::string pred;
    std::optional<double> c2_min, c2_max, step;
};

ojson cmd_sweep(RunContext& ctx, const SweepOpts& o) {
    auto& s = ctx.config.sweep;
    if (o.c2_min) s.c2_min = *o.c2_min;
    if (o.c2_max) s.c2_max = *o.c2_max;
    if (o.step) s.step = *o.step;
    ctx.add_input(o.gt);
    ctx.add_input(o.pred);
    const auto gt = read_ground_truth(o.gt, ctx.config.cutoffs);
    const auto pred = aligned(gt, read_slide_values(o.pred, {"tps"}), o.pred);
    std::vector<double> gt_tps;
    for (const auto& row : gt) gt_tps.push_back(row.tps);
    const auto points = cutoff_sweep(gt_tps, pred, SweepRange{ctx.config.cutoffs.c1, s.c2_min, s.c2_max, s.step});
    std::string csv = "c2,accuracy\n";
    ojson pts = ojson::array();
    const SweepPoint* best = nullptr;
    for (const auto& pt : points) {
        csv += csv::format_double(pt.c2) + "," + csv::format_double(pt.accuracy) + "\n";
        pts.push_back({{"c2", pt.c2}, {"accuracy", pt.accuracy}});
        if (!best || pt.accuracy > best->accuracy) best = &pt;
    }
    ctx.write_text("sweep.csv", csv);
    ojson r;
    r["c1"] = ctx.config.cutoffs.c1;
    r["points"] = pts;
    r["best"] = best ? ojson{{"c2", best->c2}, {"accuracy", best->accuracy}} : ojson(nullptr);
    r["sweep_csv"] = "sweep.csv";
    return r;
}

// ---------------------------------------------------------------- groupstats

struct GroupOpts {
    std::string input;
};

ojson cmd_groupstats(RunContext& ctx, const GroupOpts& o) {
    ctx.add_input(o.input);
    const auto t = csv::read(o.input);
    const int cg = t.column("group");
    const int ct = t.column("tps");
    if (cg < 0 || ct < 0) throw Error(ErrorKind::Format, o.input + ": expected group,tps columns");
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> groups;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const std::string where = o.input + ":" + std::to_string(t.line_numbers[i]);
        const double v = csv::parse_double(t.rows[i][ct], where);
        check_tps_range(v, where);
        auto [it, fresh] = groups.try_emplace(t.rows[i][cg]);
        if (fresh) order.push_back(t.rows[i][cg]);
        it->second.push_back(v);
    }
    if (order.empty()) throw Error(ErrorKind::InvalidArgument, o.input + ": no rows");
    const auto stats = group_summary(groups);
    std::string csv = "group,n,mean,sd,summary\n";
    ojson out = ojson::array();
    for (const auto& name : order) {
        const auto& s = stats.at(name);
        csv += name + "," + std::to_string(s.n) + "," + csv::format_double(s.mean) + "," +
               (s.sd ? csv::format_double(*s.sd) : std::string()) + "," + s.format() + "\n";
        out.push_back({{"group", name}, {"n", s.n}, {"mean", s.mean}, {"sd", s.sd ? ojson(*s.sd) : ojson(nullptr)},
                       {"summary", s.format()}});
    }
    ctx.write_text("groupstats.csv", csv);
    ojson r;
    r["groups"] = out;
    r["groupstats_csv"] = "groupstats.csv";
    return r;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    std::optional<int> grid_w, grid_h, cells, tile_size;
    std::optional<double> pos_fraction, noise_sigma, blank_fraction;
    std::string slide_id;
    bool pmaps = false;
};

ojson cmd_synth(RunContext& ctx, const SynthOpts& o) {
    auto& s = ctx.config.synth;
    if (o.grid_w) s.grid_w = *o.grid_w;
    if (o.grid_h) s.grid_h = *o.grid_h;
    if (o.cells) s.tile.n_cells = *o.cells;
    if (o.tile_size) s.tile.width = s.tile.height = *o.tile_size;
    if (o.pos_fraction) s.tile.pos_fraction = *o.pos_fraction;
    if (o.noise_sigma) s.tile.noise_sigma = *o.noise_sigma;
    if (o.blank_fraction) s.blank_fraction = *o.blank_fraction;
    if (!o.slide_id.empty()) s.slide_id = o.slide_id;
    s.tile.seed = ctx.config.seed;

    const auto slide = generate_slide(s, ctx.out_dir, ctx.workers());
    ctx.write_text("truth.csv", format_annotations(slide.truth.annotations));

    ojson r;
    r["slide_id"] = s.slide_id;
    r["grid"] = {s.grid_w, s.grid_h};
    r["tile_size"] = s.tile.width;
    r["cells"] = slide.truth.annotations.size();
    std::int64_t pos = 0;
    for (const auto& a : slide.truth.annotations) pos += a.cls == CellClass::TcPos;
    r["counts"] = {{"TC_NEG", static_cast<std::int64_t>(slide.truth.annotations.size()) - pos}, {"TC_POS", pos}};
    const auto tps = slide.truth.true_tps();
    r["true_tps"] = tps ? ojson(*tps) : ojson(nullptr);
    r["manifest"] = "manifest.json";
    r["truth_csv"] = "truth.csv";

    if (o.pmaps) {
        const int side = s.tile.width;
        const std::size_t n = static_cast<std::size_t>(s.grid_w) * s.grid_h;
        std::vector<std::vector<CellAnnotation>> local(n);
        for (auto a : slide.truth.annotations) {
            const std::size_t index = static_cast<std::size_t>(a.y / side) * s.grid_w + a.x / side;
            a.x %= side;
            a.y %= side;
            local[index].push_back(a);
        }
        fs::create_directories(ctx.out("pmaps"));
        parallel_for(n, ctx.workers(), [&](std::size_t index) {
            PmapSynthOptions opts = ctx.config.pmap_synth;
            opts.seed = ctx.config.seed ^ static_cast<std::uint64_t>(index);
            const int gx = static_cast<int>(index % s.grid_w);
            const int gy = static_cast<int>(index / s.grid_w);
            write_pmap(synthesize_pmap(local[index], side, side, opts),
                       ctx.out("pmaps") / PmapDirectoryBackend::tile_name(gx, gy));
        });
        r["pmap_dir"] = "pmaps";
    }
    return r;
}

// ---------------------------------------------------------------- embed

struct EmbedOpts {
    std::string patches;
    std::string features;
    std::string projection;
    std::optional<int> grid_n;
    std::optional<int> thumb;
};

ojson cmd_embed(RunContext& ctx, const EmbedOpts& o) {
    if (o.patches.empty() == o.features.empty()) {
        throw Error(ErrorKind::InvalidArgument, "embed needs exactly one of --patches or --features");
    }
    if (o.grid_n) ctx.config.embed.grid_n = *o.grid_n;
    if (o.thumb) ctx.config.embed.thumb = *o.thumb;
    const Mpp target(ctx.config.reference_mpp);

    std::vector<FeatureVector> features;
    std::vector<PatchImage> images;
    std::map<std::string, double> tps;
    if (!o.patches.empty()) {
        ctx.add_input(o.patches);
        const auto t = csv::read(o.patches);
        const int cid = t.column("patch_id"), cco = t.column("cohort_id"), cpath = t.column("path");
        const int ctps = t.column("tps"), cmpp = t.column("mpp");
        if (cid < 0 || cco < 0 || cpath < 0) {
            throw Error(ErrorKind::Format, o.patches + ": expected patch_id,cohort_id,path columns");
        }
        const fs::path base = fs::path(o.patches).parent_path();
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const auto& row = t.rows[i];
            const std::string where = o.patches + ":" + std::to_string(t.line_numbers[i]);
            const fs::path img_path = base / row[cpath];
            ctx.add_input(img_path);
            const Mpp mpp = cmpp >= 0 ? Mpp(csv::parse_double(row[cmpp], where)) : target;
            images.push_back(resample_to_reference(read_rgb_png(img_path, mpp), target));
            features.push_back(pixel_features(images.back(), row[cid], row[cco]));
            if (ctps >= 0) tps[row[cid]] = csv::parse_double(row[ctps], where);
        }
        ctx.write_text("features.csv", format_features(features));
    } else {
        ctx.add_input(o.features);
        features = read_features(o.features);
    }
    if (features.empty()) throw Error(ErrorKind::InvalidArgument, "no patches to embed");

    Projection2D proj;
    if (!o.projection.empty()) {
        ctx.add_input(o.projection);
        proj = read_projection(o.projection, features);
    } else {
        proj = project_pca(features);
    }
    ctx.write_text("projection.csv", format_projection(proj));

    std::string scatter = "patch_id,u,v,tps,cohort_id\n";
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto it = tps.find(features[i].patch_id);
        scatter += features[i].patch_id + "," + csv::format_double(proj.u[i]) + "," + csv::format_double(proj.v[i]) + "," +
                   (it == tps.end() ? std::string() : csv::format_double(it->second)) + "," + features[i].cohort_id + "\n";
    }
    ctx.write_text("scatter.csv", scatter);

    const auto layout = mosaic(proj, ctx.config.embed.grid_n);
    ctx.write_text("mosaic.json", to_json(layout, proj).dump(2) + "\n");
    ojson r;
    r["patches"] = features.size();
    r["dims"] = features.front().values.size();
    r["method"] = proj.method == ProjectionMethod::Pca ? "pca" : "external";
    r["mosaic_cells"] = layout.cells.size();
    if (!images.empty()) {
        write_rgb_png(render_mosaic(layout, images, ctx.config.embed.thumb), ctx.out("mosaic.png"));
        r["mosaic_png"] = "mosaic.png";
    }
    std::set<std::string> cohorts;
    for (const auto& f : features) cohorts.insert(f.cohort_id);
    if (cohorts.size() >= 2) {
        const auto sim = cohort_similarity(features);
        r["similarity"] = {{"cohorts", sim.cohorts}, {"p_values", sim.p_values}, {"summary", sim.summary}};
    } else {
        r["similarity"] = nullptr;
    }
    r["files"] = {"projection.csv", "scatter.csv", "mosaic.json"};
    return r;
}

// ---------------------------------------------------------------- compare

struct CompareOpts {
    std::string a, b;
    std::string name_a = "a", name_b = "b";
};

std::vector<double> read_scores(const std::string& path) {
    const auto t = csv::read(path);
    const int c = t.column("score");
    if (c < 0) throw Error(ErrorKind::Format, path + ": expected a score column");
    std::vector<double> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        out.push_back(csv::parse_double(t.rows[i][c], path + ":" + std::to_string(t.line_numbers[i])));
    }
    return out;
}

ojson cmd_compare(RunContext& ctx, const CompareOpts& o) {
    ctx.add_input(o.a);
    ctx.add_input(o.b);
    return to_json(compare_models(ReplicateScores{o.name_a, read_scores(o.a)}, ReplicateScores{o.name_b, read_scores(o.b)}));
}

// ---------------------------------------------------------------- driver

/// Arguments after the program name, minus those that never change results.
std::vector<std::string> replay_args(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a == "--out" || a == "--workers") {
            ++i;
            continue;
        }
        if (a.starts_with("--out=") || a.starts_with("--workers=")) continue;
        out.push_back(a);
    }
    return out;
}

int run(std::vector<std::string> args, const std::optional<std::string>& timestamp);

struct RerunOpts {
    std::string manifest;
    std::string out;
    std::optional<int> workers;
};

int rerun(const RerunOpts& o) {
    nlohmann::json report;
    try {
        report = nlohmann::json::parse(read_file(o.manifest));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, o.manifest + ": " + e.what());
    }
    if (!report.contains("run_manifest")) throw Error(ErrorKind::Format, o.manifest + ": no run_manifest");
    const auto& m = report["run_manifest"];
    const fs::path cwd = m.at("cwd").get<std::string>();
    std::vector<std::string> changed;
    for (const auto& in : m.at("inputs")) {
        const fs::path p = cwd / in.at("path").get<std::string>();
        if (!fs::exists(p) || sha256_file(p) != in.at("sha256").get<std::string>()) {
            changed.push_back(in.at("path").get<std::string>());
        }
    }
    if (!changed.empty()) {
        throw Error(ErrorKind::Format, "inputs differ from the recorded digests", changed);
    }
    auto args = m.at("argv").get<std::vector<std::string>>();
    args.push_back("--out");
    args.push_back(fs::absolute(o.out).string());
    if (o.workers) {
        args.push_back("--workers");
        args.push_back(std::to_string(*o.workers));
    }
    const auto here = fs::current_path();
    fs::current_path(cwd);
    const int rc = run(args, m.at("created_at").get<std::string>());
    fs::current_path(here);
    return rc;
}

int run(std::vector<std::string> args, const std::optional<std::string>& timestamp) {
    CLI::App app{"Whole-slide IHC quantification toolkit", "ihcq"};
    app.require_subcommand(1);
    app.set_version_flag("--version", IHCQ_VERSION);

    Common common;
    RasterizeOpts ras;
    InferOpts inf;
    DetectOpts det;
    MatchOpts mat;
    TpsOpts tps;
    ConsensusOpts con;
    EvalOpts ev;
    RocOpts roc;
    SweepOpts sw;
    GroupOpts grp;
    SynthOpts syn;
    EmbedOpts emb;
    CompareOpts cmp;
    RerunOpts rer;

    auto* s_ras = app.add_subcommand("rasterize", "rasterize point annotations into a label map");
    s_ras->add_option("--annotations", ras.annotations, "x,y,class CSV")->required()->check(CLI::ExistingFile);
    s_ras->add_option("--width", ras.width)->required();
    s_ras->add_option("--height", ras.height)->required();
    s_ras->add_option("--radius", ras.radius, "disk radius in pixels");

    auto* s_inf = app.add_subcommand("infer", "write probability maps with the stain-deconvolution baseline");
    s_inf->add_option("--image", inf.image, "single RGB PNG")->check(CLI::ExistingFile);
    s_inf->add_option("--mpp", inf.mpp, "resolution of --image");
    s_inf->add_option("--manifest", inf.manifest, "slide manifest")->check(CLI::ExistingFile);
    s_inf->add_option("--mean", inf.mean, "PMAP headers to average")->check(CLI::ExistingFile);
    s_inf->add_option("--backend", inf.backend);

    auto* s_det = app.add_subcommand("detect", "extract classified cell detections");
    s_det->add_option("--manifest", det.manifest, "slide manifest")->check(CLI::ExistingFile);
    s_det->add_option("--pmap", det.pmap, "single PMAP header")->check(CLI::ExistingFile);
    s_det->add_option("--backend", det.backend, "deconv or pmap_dir");
    s_det->add_option("--pmap-dir", det.pmap_dir, "per-tile PMAP directory");
    s_det->add_option("--min-distance", det.min_distance);
    s_det->add_option("--threshold", det.threshold, "foreground threshold");

    auto* s_mat = app.add_subcommand("match", "score detections against annotations");
    s_mat->add_option("--pred", mat.pred, "detections CSV")->required()->check(CLI::ExistingFile);
    s_mat->add_option("--gt", mat.gt, "annotations CSV")->required()->check(CLI::ExistingFile);
    s_mat->add_option("--max-dist", mat.max_dist);

    auto* s_tps = app.add_subcommand("tps", "tumor proportion score per slide");
    s_tps->add_option("--detections", tps.detections)->required()->check(CLI::ExistingFile);
    s_tps->add_option("--slide-id", tps.slide_ids);

    auto* s_con = app.add_subcommand("consensus", "majority category of three raters");
    s_con->add_option("--raters", con.raters, "slide_id,r1,r2,r3 CSV")->required()->check(CLI::ExistingFile);

    auto* s_ev = app.add_subcommand("evaluate", "accuracy, kappa and confusion of predicted categories");
    s_ev->add_option("--gt", ev.gt)->required()->check(CLI::ExistingFile);
    s_ev->add_option("--pred", ev.pred)->required()->check(CLI::ExistingFile);

    auto* s_roc = app.add_subcommand("roc", "ROC curve of predicted scores against binary truth");
    s_roc->add_option("--gt", roc.gt)->required()->check(CLI::ExistingFile);
    s_roc->add_option("--pred", roc.pred)->required()->check(CLI::ExistingFile);

    auto* s_sw = app.add_subcommand("sweep", "accuracy over a range of upper cutoffs");
    s_sw->add_option("--gt", sw.gt)->required()->check(CLI::ExistingFile);
    s_sw->add_option("--pred", sw.pred)->required()->check(CLI::ExistingFile);
    s_sw->add_option("--c2-min", sw.c2_min);
    s_sw->add_option("--c2-max", sw.c2_max);
    s_sw->add_option("--step", sw.step);

    auto* s_grp = app.add_subcommand("groupstats", "mean and SD of TPS per group");
    s_grp->add_option("--input", grp.input, "group,tps CSV")->required()->check(CLI::ExistingFile);

    auto* s_syn = app.add_subcommand("synth", "generate a synthetic slide with known truth");
    s_syn->add_option("--grid-w", syn.grid_w);
    s_syn->add_option("--grid-h", syn.grid_h);
    s_syn->add_option("--cells", syn.cells, "cells per tile");
    s_syn->add_option("--tile-size", syn.tile_size);
    s_syn->add_option("--pos-fraction", syn.pos_fraction);
    s_syn->add_option("--noise-sigma", syn.noise_sigma);
    s_syn->add_option("--blank-fraction", syn.blank_fraction);
    s_syn->add_option("--slide-id", syn.slide_id);
    s_syn->add_flag("--pmaps", syn.pmaps, "also write per-tile probability maps");

    auto* s_emb = app.add_subcommand("embed", "project patches to 2-D, build a mosaic, compare cohorts");
    s_emb->add_option("--patches", emb.patches, "patch_id,cohort_id,path[,tps][,mpp] CSV")->check(CLI::ExistingFile);
    s_emb->add_option("--features", emb.features, "precomputed features CSV")->check(CLI::ExistingFile);
    s_emb->add_option("--projection", emb.projection, "external patch_id,u,v CSV")->check(CLI::ExistingFile);
    s_emb->add_option("--grid-n", emb.grid_n);
    s_emb->add_option("--thumb", emb.thumb);

    auto* s_cmp = app.add_subcommand("compare", "paired replicate comparison of two models");
    s_cmp->add_option("--a", cmp.a, "CSV with a score column")->required()->check(CLI::ExistingFile);
    s_cmp->add_option("--b", cmp.b, "CSV with a score column")->required()->check(CLI::ExistingFile);
    s_cmp->add_option("--name-a", cmp.name_a);
    s_cmp->add_option("--name-b", cmp.name_b);

    for (auto* sub : {s_ras, s_inf, s_det, s_mat, s_tps, s_con, s_ev, s_roc, s_sw, s_grp, s_syn, s_emb, s_cmp}) {
        add_common(sub, common);
    }

    auto* s_rer = app.add_subcommand("rerun", "replay a command from the manifest embedded in its report");
    s_rer->add_option("--manifest", rer.manifest, "report.json")->required()->check(CLI::ExistingFile);
    s_rer->add_option("--out", rer.out)->required();
    s_rer->add_option("--workers", rer.workers)->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        print_error("invalid_argument", e.what(), {});
        return 2;
    }

    if (s_rer->parsed()) {
        return rerun(rer);
    }

    RunContext ctx;
    for (auto* sub : app.get_subcommands()) ctx.command = sub->get_name();
    ctx.argv = replay_args(args);
    ctx.cwd = fs::current_path().string();
    ctx.created_at = timestamp ? *timestamp : current_timestamp();
    if (!common.config.empty()) {
        ctx.config = load_config(common.config);
        ctx.add_input(common.config);
    }
    if (common.seed) ctx.config.seed = *common.seed;
    if (common.workers) ctx.config.workers = *common.workers;
    ctx.out_dir = common.out;
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create '" + common.out + "': " + ec.message());

    ojson result;
    if (s_ras->parsed()) result = cmd_rasterize(ctx, ras);
    else if (s_inf->parsed()) result = cmd_infer(ctx, inf);
    else if (s_det->parsed()) result = cmd_detect(ctx, det);
    else if (s_mat->parsed()) result = cmd_match(ctx, mat);
    else if (s_tps->parsed()) result = cmd_tps(ctx, tps);
    else if (s_con->parsed()) result = cmd_consensus(ctx, con);
    else if (s_ev->parsed()) result = cmd_evaluate(ctx, ev);
    else if (s_roc->parsed()) result = cmd_roc(ctx, roc);
    else if (s_sw->parsed()) result = cmd_sweep(ctx, sw);
    else if (s_grp->parsed()) result = cmd_groupstats(ctx, grp);
    else if (s_syn->parsed()) result = cmd_synth(ctx, syn);
    else if (s_emb->parsed()) result = cmd_embed(ctx, emb);
    else if (s_cmp->parsed()) result = cmd_compare(ctx, cmp);
    ctx.write_report(result);
    return 0;
}

} // namespace
} // namespace ihcq::cli

int main(int argc, char** argv) {
    using namespace ihcq;
    try {
        return cli::run(std::vector<std::string>(argv + 1, argv + argc), std::nullopt);
    } catch (const Error& e) {
        cli::print_error(to_string(e.kind()), e.what(), e.details());
        return cli::exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        cli::print_error("io", e.what(), {});
        return 3;
    } catch (const std::exception& e) {
        cli::print_error("internal", e.what(), {});
        return 1;
    }
}
