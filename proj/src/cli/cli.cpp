/*
 * pcle-toolkit
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pcle/cli.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcle/baselines.hpp"
#include "pcle/csv.hpp"
#include "pcle/dataset.hpp"
#include "pcle/error.hpp"
#include "pcle/fibresim.hpp"
#include "pcle/hash.hpp"
#include "pcle/image_io.hpp"
#include "pcle/iqa.hpp"
#include "pcle/mosaic.hpp"
#include "pcle/parallel.hpp"
#include "pcle/rng.hpp"
#include "pcle/survey.hpp"

#ifndef PCLE_VERSION
#define PCLE_VERSION "unknown"
#endif

namespace pcle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Provenance of one command: resolved config plus hashes of everything read and written.
struct RunRecord {
    std::vector<std::string> args;
    std::string command;
    json config = json::object();
    std::optional<std::uint64_t> seed;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;

    void input_file(const fs::path& p) {
        if (!fs::is_regular_file(p)) throw IoError("missing input " + p.string());
        inputs[p.generic_string()] = sha256_file(p);
    }
    void input_images(const fs::path& dir) {
        if (!fs::is_directory(dir)) throw IoError("missing input directory " + dir.string());
        for (const auto& f : list_image_files(dir)) input_file(f);
    }
    void output(const fs::path& p) { outputs[p.generic_string()] = sha256_file(p); }

    void write(const fs::path& dir) const {
        json j = {{"tool", "pcle"},
                  {"version", PCLE_VERSION},
                  {"argv", args},
                  {"cwd", fs::current_path().generic_string()},
                  {"command", command},
                  {"config", config},
                  {"inputs", inputs},
                  {"outputs", outputs}};
        j["seed"] = seed ? json(*seed) : json(nullptr);
        fs::create_directories(dir);
        std::ofstream out(dir / "run.json", std::ios::binary);
        if (!out) throw IoError("cannot write " + (dir / "run.json").string());
        out << j.dump(2) << '\n';
        if (!out.flush()) throw IoError("failed writing " + (dir / "run.json").string());
    }
};

int resolve_threads(int threads) { return threads > 0 ? threads : default_threads(); }

std::optional<Mask> optional_mask(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return load_mask(path);
}

Image with_mask(Image img, const std::optional<Mask>& mask, const fs::path& origin) {
    if (mask) {
        if (mask->rows() != img.height() || mask->cols() != img.width())
            throw InvalidArgument("FoV mask size does not match " + origin.string());
        img.set_fov(*mask);
    }
    return img;
}

ImageSet load_set(const fs::path& dir, const std::optional<Mask>& mask, RunRecord& rec) {
    rec.input_images(dir);
    ImageSet set;
    for (const auto& f : list_image_files(dir)) {
        if (set.count(f.stem().string())) throw InvalidArgument("image id '" + f.stem().string() + "' repeats in " + dir.string());
        set.emplace(f.stem().string(), with_mask(load_image(f), mask, f));
    }
    if (set.empty()) throw InvalidArgument("no images in " + dir.string());
    return set;
}

std::pair<std::string, fs::path> parse_named_dir(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw InvalidArgument("expected NAME=DIR, got '" + spec + "'");
    return {spec.substr(0, eq), fs::path(spec.substr(eq + 1))};
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string hr, out, fov_mask, layout;
    LayoutParams layout_params;
    NoiseModel noise;
    std::string extraction = "voronoi_average";
    std::uint64_t seed = 0;
    int threads = 0;
};

void simulate(const SimulateArgs& a, RunRecord& rec, std::ostream& out) {
    a.noise.validate();
    const ExtractionMode mode = parse_extraction_mode(a.extraction);
    if (a.layout.empty()) a.layout_params.validate();
    rec.seed = a.seed;
    rec.config = {{"hr", a.hr},
                  {"out", a.out},
                  {"fov_mask", a.fov_mask},
                  {"layout", a.layout},
                  {"layout_spacing", a.layout_params.spacing},
                  {"layout_jitter", a.layout_params.jitter},
                  {"layout_seed", a.layout_params.seed},
                  {"sigma_mult", a.noise.sigma_mult},
                  {"sigma_add_rel", a.noise.sigma_add_rel},
                  {"extraction", to_string(mode)}};
    const auto mask = optional_mask(a.fov_mask);
    if (!a.fov_mask.empty()) rec.input_file(a.fov_mask);
    if (!a.layout.empty()) rec.input_file(a.layout);
    rec.input_images(a.hr);
    const auto files = list_image_files(a.hr);
    if (files.empty()) throw InvalidArgument("no images in " + a.hr);

    std::vector<Image> hr;
    for (const auto& f : files) hr.push_back(with_mask(load_image(f), mask, f));
    // One layout per frame size.
    std::map<std::pair<Index, Index>, std::shared_ptr<const FibreLayout>> layouts;
    for (const auto& img : hr) {
        auto& slot = layouts[{img.width(), img.height()}];
        if (slot) continue;
        const Mask fov = img.has_fov() ? *img.fov() : Mask::Constant(img.height(), img.width(), true);
        slot = std::make_shared<const FibreLayout>(a.layout.empty()
                                                       ? generate_layout(img.width(), img.height(), fov, a.layout_params)
                                                       : load_layout(a.layout, img.width(), img.height(), fov));
    }

    const fs::path dir(a.out);
    fs::create_directories(dir);
    std::vector<SimulationResult> results(hr.size());
    parallel_for(hr.size(), resolve_threads(a.threads), [&](std::size_t i) {
        NoiseModel noise = a.noise;
        noise.seed = derive_seed(a.seed, files[i].stem().string());
        results[i] = simulate_lr(hr[i], *layouts.at({hr[i].width(), hr[i].height()}), noise, mode);
    });
    for (std::size_t i = 0; i < hr.size(); ++i) {
        const std::string stem = files[i].stem().string();
        const auto stats = save_image(results[i].lr, dir / (stem + ".png"));
        const auto& m = results[i].metadata;
        std::ofstream side(dir / (stem + ".json"), std::ios::binary);
        side << json{{"layout_hash", m.layout_hash},
                     {"seed", m.seed},
                     {"sigma_mult", m.sigma_mult},
                     {"sigma_add_rel", m.sigma_add_rel},
                     {"mode", to_string(m.mode)},
                     {"clamped_pixels", stats.clamped}}
                    .dump(2)
             << '\n';
        side.close();
        rec.output(dir / (stem + ".png"));
        rec.output(dir / (stem + ".json"));
    }
    for (const auto& [size, layout] : layouts) {
        const fs::path p = dir / ("layout_" + std::to_string(size.first) + "x" + std::to_string(size.second) + ".csv");
        save_layout(*layout, p);
        rec.output(p);
    }
    out << "simulated " << hr.size() << " frames into " << a.out << "\n";
}

// ---------------------------------------------------------------- mosaic

struct MosaicArgs {
    std::string frames, sequences, root, id, fov_mask, out;
    MosaicParams params;
    double residual_threshold = std::numeric_limits<double>::infinity();
    int threads = 0;
};

void mosaic(const MosaicArgs& a, RunRecord& rec, std::ostream& out) {
    a.params.validate();
    if (a.frames.empty() == a.sequences.empty()) throw InvalidArgument("give exactly one of --frames or --sequences");
    rec.config = {{"frames", a.frames},
                  {"sequences", a.sequences},
                  {"root", a.root},
                  {"id", a.id},
                  {"fov_mask", a.fov_mask},
                  {"out", a.out},
                  {"min_overlap", a.params.min_overlap},
                  {"max_frame_residual", std::isfinite(a.params.max_frame_residual) ? json(a.params.max_frame_residual)
                                                                                     : json("inf")},
                  {"residual_threshold", std::isfinite(a.residual_threshold) ? json(a.residual_threshold) : json("inf")}};
    std::vector<std::pair<std::string, fs::path>> jobs;
    if (!a.frames.empty()) {
        jobs.push_back({a.id.empty() ? fs::path(a.frames).filename().string() : a.id, a.frames});
    } else {
        rec.input_file(a.sequences);
        for (const auto& r : load_sequence_records(a.sequences))
            jobs.push_back({r.sequence_id, fs::path(a.root) / r.frame_dir});
    }
    std::optional<fs::path> mask;
    if (!a.fov_mask.empty()) {
        mask = a.fov_mask;
        rec.input_file(*mask);
    }
    for (const auto& [id, dir] : jobs) rec.input_images(dir);

    std::vector<MosaicResult> results(jobs.size());
    std::vector<FrameSequence> seqs(jobs.size());
    parallel_for(jobs.size(), resolve_threads(a.threads), [&](std::size_t i) {
        seqs[i] = load_sequence(jobs[i].second, mask);
        seqs[i].id = jobs[i].first;
        results[i] = build_mosaic(seqs[i], a.params);
        results[i].report.sequence_id = jobs[i].first;
    });

    std::vector<RegistrationReport> reports;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const fs::path dir = fs::path(a.out) / jobs[i].first;
        fs::create_directories(dir / "hr");
        save_image(results[i].canvas.fused(), dir / "mosaic.png");
        rec.output(dir / "mosaic.png");
        write_registration_report(results[i].report, dir / "registration.csv");
        rec.output(dir / "registration.csv");
        const auto back = backproject(results[i].canvas, seqs[i], results[i].report);
        const auto names = list_image_files(jobs[i].second);
        for (std::size_t k = 0; k < back.frames.size(); ++k) {
            const fs::path p = dir / "hr" / (names[back.frame_index[k]].stem().string() + ".png");
            save_image(back.frames[k], p);
            rec.output(p);
        }
        reports.push_back(results[i].report);
        out << jobs[i].first << ": " << results[i].report.accepted_count() << "/" << seqs[i].frames.size()
            << " frames accepted, median residual " << fmt(results[i].report.median_residual()) << "\n";
    }
    const auto filter = filter_sequences(reports, a.residual_threshold);
    CsvTable t;
    t.columns = {"sequence_id", "median_residual", "accepted"};
    for (const auto& d : filter.diagnostics) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9f", d.median_residual);
        t.rows.push_back({d.sequence_id, buf, d.accepted ? "1" : "0"});
    }
    write_csv(fs::path(a.out) / "sequences.csv", t);
    rec.output(fs::path(a.out) / "sequences.csv");
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string lr, hr, fov_mask, out;
    std::vector<std::string> methods;
    SsimParams ssim;
    GcfParams gcf;
    int threads = 0;
};

void evaluate_cmd(const EvaluateArgs& a, RunRecord& rec, std::ostream& out) {
    a.ssim.validate();
    a.gcf.validate();
    if (a.methods.empty()) throw InvalidArgument("give at least one --method NAME=DIR");
    rec.config = {{"lr", a.lr},
                  {"hr", a.hr},
                  {"fov_mask", a.fov_mask},
                  {"out", a.out},
                  {"method", a.methods},
                  {"ssim_window", a.ssim.window},
                  {"ssim_sigma", a.ssim.sigma},
                  {"ssim_k1", a.ssim.k1},
                  {"ssim_k2", a.ssim.k2},
                  {"ssim_dynamic_range", a.ssim.dynamic_range},
                  {"gcf_gamma", a.gcf.gamma},
                  {"gcf_factors", a.gcf.factors},
                  {"gcf_weights", a.gcf.weights}};
    const auto mask = optional_mask(a.fov_mask);
    if (mask) rec.input_file(a.fov_mask);
    std::map<std::string, ImageSet> methods;
    for (const auto& spec : a.methods) {
        const auto [name, dir] = parse_named_dir(spec);
        if (methods.count(name)) throw InvalidArgument("method '" + name + "' given twice");
        methods[name] = load_set(dir, mask, rec);
    }
    const ImageSet lr = load_set(a.lr, mask, rec);
    const ImageSet hr = load_set(a.hr, mask, rec);
    const auto report = evaluate(methods, lr, hr, a.ssim, a.gcf, resolve_threads(a.threads));
    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_metrics_report(report, dir / "metrics_rows.csv", dir / "metrics_summary.csv");
    rec.output(dir / "metrics_rows.csv");
    rec.output(dir / "metrics_summary.csv");
    out << "method  SSIM_vs_HR  dGCF_vs_HR  dGCF_vs_LR  Tot_cs\n";
    for (const auto& m : report.methods)
        out << m.method << "  " << fmt(m.ssim_vs_hr.mean) << "+-" << fmt(m.ssim_vs_hr.std) << "  "
            << fmt(m.dgcf_vs_hr.mean) << "+-" << fmt(m.dgcf_vs_hr.std) << "  " << fmt(m.dgcf_vs_lr.mean) << "+-"
            << fmt(m.dgcf_vs_lr.std) << "  " << fmt(m.tot_cs) << "\n";
}

// ---------------------------------------------------------------- baselines

struct BaselineArgs {
    std::string in, out, fov_mask;
    WienerParams wiener;
    std::string boundary = "symmetric";
    SharpenParams sharpen;
    int threads = 0;
};

void baseline(const BaselineArgs& a, bool is_wiener, RunRecord& rec, std::ostream& out) {
    json params;
    WienerParams wp = a.wiener;
    if (is_wiener) {
        wp.boundary = parse_boundary(a.boundary);
        wp.validate();
        params = {{"operation", "wiener"},
                  {"psf_sigma", wp.psf_sigma},
                  {"nsr", wp.nsr},
                  {"psf_support", wp.psf_support},
                  {"boundary", to_string(wp.boundary)}};
    } else {
        a.sharpen.validate();
        params = {{"operation", "sharpen"},
                  {"radius", a.sharpen.radius},
                  {"amount", a.sharpen.amount},
                  {"clamp", a.sharpen.clamp}};
    }
    rec.config = params;
    rec.config["in"] = a.in;
    rec.config["out"] = a.out;
    rec.config["fov_mask"] = a.fov_mask;
    const auto mask = optional_mask(a.fov_mask);
    if (mask) rec.input_file(a.fov_mask);
    const ImageSet images = load_set(a.in, mask, rec);
    std::vector<std::pair<std::string, Image>> items(images.begin(), images.end());
    std::vector<Image> results(items.size());
    parallel_for(items.size(), resolve_threads(a.threads), [&](std::size_t i) {
        results[i] = is_wiener ? wiener_deconvolve(items[i].second, wp) : unsharp_sharpen(items[i].second, a.sharpen);
    });
    const fs::path dir(a.out);
    fs::create_directories(dir);
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const fs::path p = dir / (items[i].first + ".png");
        clamped += save_image(results[i], p).clamped;
        rec.output(p);
    }
    std::ofstream side(dir / "baseline.json", std::ios::binary);
    side << params.dump(2) << '\n';
    side.close();
    rec.output(dir / "baseline.json");
    out << params["operation"].get<std::string>() << ": " << items.size() << " images, " << clamped
        << " pixels clamped to [0, 1] on save\n";
}

// ---------------------------------------------------------------- dataset

struct SplitArgs {
    std::string records, out, fractions = "0.7,0.15,0.15";
    std::vector<std::string> vocabulary;
    std::uint64_t seed = 0;
    std::size_t min_per_label = 3;
};

void dataset_split(const SplitArgs& a, RunRecord& rec, std::ostream& out) {
    const SplitFractions f = parse_fractions(a.fractions);
    rec.seed = a.seed;
    rec.config = {{"records", a.records},
                  {"out", a.out},
                  {"fractions", f.values},
                  {"vocabulary", a.vocabulary},
                  {"min_per_label", a.min_per_label}};
    rec.input_file(a.records);
    const auto records = load_sequence_records(a.records, a.vocabulary);
    const auto m = stratified_split(records, f, a.seed, a.min_per_label);
    const fs::path p = fs::path(a.out) / "split.csv";
    write_split_manifest(m, p);
    rec.output(p);
    std::set<std::string> labels;
    for (const auto& r : records) labels.insert(r.tissue_label);
    for (const auto& l : labels) {
        const auto c = m.counts(l);
        out << l << ": train " << c[0] << ", validation " << c[1] << ", test " << c[2] << "\n";
    }
}

struct PairsArgs {
    std::string records, split, hr_root, lr_root, layout, fov_mask, out, origin = "syn";
    std::string extraction = "voronoi_average";
    LayoutParams layout_params;
    NoiseModel noise;
    std::uint64_t seed = 0;
    int threads = 0;
};

void dataset_pairs(const PairsArgs& a, RunRecord& rec, std::ostream& out) {
    PairOptions opt;
    opt.origin = parse_origin(a.origin);
    opt.lr_root = a.lr_root;
    opt.layout_params = a.layout_params;
    opt.noise = a.noise;
    opt.mode = parse_extraction_mode(a.extraction);
    opt.seed = a.seed;
    opt.threads = resolve_threads(a.threads);
    opt.validate();
    if (opt.origin == Origin::syn && a.layout.empty()) a.layout_params.validate();
    rec.seed = a.seed;
    rec.config = {{"records", a.records},
                  {"split", a.split},
                  {"hr_root", a.hr_root},
                  {"lr_root", a.lr_root},
                  {"origin", a.origin},
                  {"layout", a.layout},
                  {"fov_mask", a.fov_mask},
                  {"out", a.out},
                  {"layout_spacing", a.layout_params.spacing},
                  {"layout_jitter", a.layout_params.jitter},
                  {"layout_seed", a.layout_params.seed},
                  {"sigma_mult", a.noise.sigma_mult},
                  {"sigma_add_rel", a.noise.sigma_add_rel},
                  {"extraction", to_string(opt.mode)}};
    rec.input_file(a.records);
    rec.input_file(a.split);
    const auto records = load_sequence_records(a.records);
    const auto split = load_split_manifest(a.split);
    for (const auto& r : records)
        if (split.split_of(r.sequence_id)) {
            rec.input_images(fs::path(a.hr_root) / r.frame_dir);
            if (opt.origin == Origin::org) rec.input_images(fs::path(a.lr_root) / r.frame_dir);
        }
    if (!a.fov_mask.empty()) {
        rec.input_file(a.fov_mask);
        opt.fov = load_mask(a.fov_mask);
    }
    if (!a.layout.empty()) {
        rec.input_file(a.layout);
        if (!opt.fov) throw InvalidArgument("--layout needs --fov-mask to fix the frame size");
        opt.layout = std::make_shared<const FibreLayout>(load_layout(a.layout, opt.fov->cols(), opt.fov->rows(), *opt.fov));
    }
    const auto m = build_pairs(split, records, a.hr_root, a.out, opt);
    const fs::path p = fs::path(a.out) / "pairs.csv";
    write_pair_manifest(m, p);
    rec.output(p);
    for (const auto& r : m.rows)
        if (r.origin == Origin::syn) rec.output(fs::path(a.out) / r.lr_path);
    for (const auto& s : m.skipped)
        out << "skipped " << s.sequence_id << " frame " << s.frame_index << ": " << s.reason << "\n";
    out << m.rows.size() << " pairs written to " << p.string() << "\n";
}

// ---------------------------------------------------------------- survey

struct PrepArgs {
    std::vector<std::string> methods, raters;
    std::string input, hr, out;
    std::size_t n_cases = 46;
    std::uint64_t seed = 0;
};

void survey_prep_cmd(const PrepArgs& a, RunRecord& rec, std::ostream& out) {
    SurveyPrepInputs in;
    for (const auto& spec : a.methods) {
        const auto [name, dir] = parse_named_dir(spec);
        if (!in.methods.emplace(name, dir).second) throw InvalidArgument("method '" + name + "' given twice");
        rec.input_images(dir);
    }
    in.input_dir = a.input;
    in.hr_dir = a.hr;
    rec.input_images(in.input_dir);
    rec.input_images(in.hr_dir);
    SurveyPrepParams p{a.n_cases, a.seed, a.raters};
    rec.seed = a.seed;
    rec.config = {{"method", a.methods}, {"input", a.input}, {"hr", a.hr},
                  {"out", a.out},        {"n_cases", a.n_cases}, {"rater", a.raters}};
    const fs::path dir(a.out);
    const auto s = survey_prep(in, dir / "bundle", dir / "key.json", p);
    for (const auto& e : fs::recursive_directory_iterator(dir / "bundle"))
        if (e.is_regular_file()) rec.output(e.path());
    rec.output(dir / "key.json");
    out << s.cases << " cases, " << s.images << " images in " << (dir / "bundle").string()
        << "; private key at " << (dir / "key.json").string() << "\n";
}

struct ExportArgs {
    std::string log, key, out;
};

void survey_export(const ExportArgs& a, RunRecord& rec, std::ostream& out) {
    rec.config = {{"log", a.log}, {"key", a.key}, {"out", a.out}};
    rec.input_file(a.log);
    rec.input_file(a.key);
    const auto mos = export_mos(ScoreLog::replay(a.log), a.key);
    const fs::path dir(a.out);
    write_mos(mos, dir / "mos.csv", dir / "raters.csv");
    rec.output(dir / "mos.csv");
    rec.output(dir / "raters.csv");
    out << mos.stats.size() << " (method, question) rows, " << mos.raters.size() << " raters\n";
}

struct ServeArgs {
    std::string bundle, log, static_dir;
    ServeOptions options;
};

SurveyServer* g_server = nullptr;

extern "C" void stop_server(int) {
    if (g_server) g_server->stop();
}

void serve(const ServeArgs& a, std::ostream& out) {
    SurveyService service(SurveyBundle::load(a.bundle), a.log);
    ServeOptions opt = a.options;
    opt.static_dir = a.static_dir;
    opt.threads = resolve_threads(opt.threads);
    SurveyServer server(service, opt);
    out << "serving " << service.bundle().cases.size() << " cases on http://" << opt.host << ":" << server.port()
        << "\n"
        << std::flush;
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    server.run();
    g_server = nullptr;
}

// ---------------------------------------------------------------- replay

int replay(const std::string& path, std::ostream& out, std::ostream& err) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    const auto args = j.at("argv").get<std::vector<std::string>>();
    const auto expected = j.at("outputs").get<std::map<std::string, std::string>>();
    if (args.empty() || args.front() == "replay" || args.front() == "serve")
        throw InvalidArgument(path + " does not record a replayable command");
    if (j.value("version", std::string()) != PCLE_VERSION)
        err << "warning: recorded with version " << j.value("version", std::string("?")) << ", replaying with "
            << PCLE_VERSION << "\n";

    const fs::path previous = fs::current_path();
    fs::current_path(j.at("cwd").get<std::string>());
    int code;
    std::size_t mismatches = 0;
    try {
        std::ostringstream quiet;
        code = run(args, quiet, err);
        if (code == 0)
            for (const auto& [file, digest] : expected) {
                const std::string now = fs::is_regular_file(file) ? sha256_file(file) : std::string("missing");
                if (now != digest) {
                    ++mismatches;
                    err << "mismatch: " << file << "\n";
                }
            }
    } catch (...) {
        fs::current_path(previous);
        throw;
    }
    fs::current_path(previous);
    if (code != 0) return code;
    if (mismatches) {
        err << "replay: " << mismatches << " of " << expected.size() << " outputs differ\n";
        return 3;
    }
    out << "replay: " << expected.size() << " outputs identical\n";
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"pCLE toolkit: fibre-bundle simulation, mosaicking, quality metrics, baselines, datasets and MOS "
                 "surveys.\nThreads default to $PCLE_THREADS or the hardware concurrency.",
                 "pcle"};
    app.set_version_flag("--version", PCLE_VERSION);
    app.require_subcommand(1);
    RunRecord rec;
    rec.args = args;

    auto add_threads = [](CLI::App* c, int& t) { c->add_option("--threads", t, "Worker threads (0: default)"); };
    auto add_layout = [](CLI::App* c, LayoutParams& l) {
        c->add_option("--layout-spacing", l.spacing, "Fibre lattice pitch in pixels")->capture_default_str();
        c->add_option("--layout-jitter", l.jitter, "Jitter as a fraction of the spacing")->capture_default_str();
        c->add_option("--layout-seed", l.seed, "Layout seed")->capture_default_str();
    };
    auto add_noise = [](CLI::App* c, NoiseModel& n) {
        c->add_option("--sigma-mult", n.sigma_mult, "Std of the multiplicative noise term")->capture_default_str();
        c->add_option("--sigma-add-rel", n.sigma_add_rel, "Std of the additive term relative to the signal range")
            ->capture_default_str();
    };

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate LR fibre-bundle frames from HR images");
    c_sim->add_option("--hr", sim.hr, "Directory of HR images")->required();
    c_sim->add_option("--out", sim.out, "Output directory")->required();
    c_sim->add_option("--fov-mask", sim.fov_mask, "FoV mask image");
    c_sim->add_option("--layout", sim.layout, "Fibre layout CSV (fibre_id,x,y) instead of a generated one");
    add_layout(c_sim, sim.layout_params);
    add_noise(c_sim, sim.noise);
    c_sim->add_option("--extraction", sim.extraction, "voronoi_average or seven_pixel_average")->capture_default_str();
    c_sim->add_option("--seed", sim.seed, "Noise seed")->capture_default_str();
    add_threads(c_sim, sim.threads);

    MosaicArgs mos;
    auto* c_mos = app.add_subcommand("mosaic", "Register and fuse frame sequences; back-project per-frame HR estimates");
    c_mos->add_option("--frames", mos.frames, "Directory holding one sequence");
    c_mos->add_option("--id", mos.id, "Sequence id for --frames (default: directory name)");
    c_mos->add_option("--sequences", mos.sequences, "Sequence records CSV");
    c_mos->add_option("--root", mos.root, "Root of the frame directories named in --sequences");
    c_mos->add_option("--fov-mask", mos.fov_mask, "FoV mask image");
    c_mos->add_option("--out", mos.out, "Output directory")->required();
    c_mos->add_option("--min-overlap", mos.params.min_overlap, "Minimum overlap fraction")->capture_default_str();
    c_mos->add_option("--max-frame-residual", mos.params.max_frame_residual, "Reject frames above this residual");
    c_mos->add_option("--residual-threshold", mos.residual_threshold, "Reject sequences above this median residual");
    add_threads(c_mos, mos.threads);

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "SSIM, GCF and Tot_cs for a set of methods");
    c_ev->add_option("--lr", ev.lr, "Directory of LR inputs")->required();
    c_ev->add_option("--hr", ev.hr, "Directory of HR references")->required();
    c_ev->add_option("--method", ev.methods, "NAME=DIR, repeatable")->required();
    c_ev->add_option("--fov-mask", ev.fov_mask, "FoV mask image");
    c_ev->add_option("--out", ev.out, "Output directory")->required();
    c_ev->add_option("--ssim-window", ev.ssim.window)->capture_default_str();
    c_ev->add_option("--ssim-sigma", ev.ssim.sigma)->capture_default_str();
    c_ev->add_option("--ssim-k1", ev.ssim.k1)->capture_default_str();
    c_ev->add_option("--ssim-k2", ev.ssim.k2)->capture_default_str();
    c_ev->add_option("--ssim-dynamic-range", ev.ssim.dynamic_range)->capture_default_str();
    c_ev->add_option("--gcf-gamma", ev.gcf.gamma)->capture_default_str();
    add_threads(c_ev, ev.threads);

    BaselineArgs bl;
    auto* c_bl = app.add_subcommand("baseline", "Classical enhancement baselines");
    c_bl->require_subcommand(1);
    auto* c_wi = c_bl->add_subcommand("wiener", "Wiener deconvolution with a Gaussian PSF");
    auto* c_sh = c_bl->add_subcommand("sharpen", "Unsharp-mask sharpening");
    for (auto* c : {c_wi, c_sh}) {
        c->add_option("--in", bl.in, "Input image directory")->required();
        c->add_option("--out", bl.out, "Output directory")->required();
        c->add_option("--fov-mask", bl.fov_mask, "FoV mask image");
        add_threads(c, bl.threads);
    }
    c_wi->add_option("--psf-sigma", bl.wiener.psf_sigma)->capture_default_str();
    c_wi->add_option("--nsr", bl.wiener.nsr)->capture_default_str();
    c_wi->add_option("--psf-support", bl.wiener.psf_support)->capture_default_str();
    c_wi->add_option("--boundary", bl.boundary, "symmetric or periodic")->capture_default_str();
    c_sh->add_option("--radius", bl.sharpen.radius)->capture_default_str();
    c_sh->add_option("--amount", bl.sharpen.amount)->capture_default_str();
    c_sh->add_flag("--clamp,!--no-clamp", bl.sharpen.clamp, "Clamp to [0, 1]")->capture_default_str();

    SplitArgs sp;
    PairsArgs pa;
    auto* c_ds = app.add_subcommand("dataset", "Stratified splits and LR/HR pair manifests");
    c_ds->require_subcommand(1);
    auto* c_split = c_ds->add_subcommand("split", "Sequence-level stratified split");
    c_split->add_option("--records", sp.records, "Sequence records CSV")->required();
    c_split->add_option("--out", sp.out, "Output directory")->required();
    c_split->add_option("--fractions", sp.fractions, "train,validation,test")->capture_default_str();
    c_split->add_option("--vocabulary", sp.vocabulary, "Allowed tissue labels")->delimiter(',');
    c_split->add_option("--min-per-label", sp.min_per_label)->capture_default_str();
    c_split->add_option("--seed", sp.seed)->capture_default_str();
    auto* c_pairs = c_ds->add_subcommand("pairs", "Build an org or syn pair manifest");
    c_pairs->add_option("--records", pa.records, "Sequence records CSV")->required();
    c_pairs->add_option("--split", pa.split, "Split manifest CSV")->required();
    c_pairs->add_option("--hr-root", pa.hr_root, "Root of the HR frame directories")->required();
    c_pairs->add_option("--origin", pa.origin, "org or syn")->capture_default_str();
    c_pairs->add_option("--lr-root", pa.lr_root, "Root of the original LR frames (origin org)");
    c_pairs->add_option("--layout", pa.layout, "Fibre layout CSV (origin syn)");
    c_pairs->add_option("--fov-mask", pa.fov_mask, "FoV mask image");
    c_pairs->add_option("--out", pa.out, "Output directory")->required();
    c_pairs->add_option("--extraction", pa.extraction)->capture_default_str();
    c_pairs->add_option("--seed", pa.seed)->capture_default_str();
    add_layout(c_pairs, pa.layout_params);
    add_noise(c_pairs, pa.noise);
    add_threads(c_pairs, pa.threads);

    PrepArgs pr;
    ExportArgs ex;
    auto* c_sv = app.add_subcommand("survey", "Blinded MOS survey preparation and export");
    c_sv->require_subcommand(1);
    auto* c_prep = c_sv->add_subcommand("prep", "Build a blinded survey bundle and its private key");
    c_prep->add_option("--method", pr.methods, "NAME=DIR, repeatable (at least four)")->required();
    c_prep->add_option("--input", pr.input, "Directory of LR inputs")->required();
    c_prep->add_option("--hr", pr.hr, "Directory of HR references")->required();
    c_prep->add_option("--out", pr.out, "Output directory (bundle/ and key.json)")->required();
    c_prep->add_option("--n-cases", pr.n_cases)->capture_default_str();
    c_prep->add_option("--seed", pr.seed)->capture_default_str();
    c_prep->add_option("--rater", pr.raters, "Allowed rater id, repeatable");
    auto* c_exp = c_sv->add_subcommand("export", "Unblind and aggregate a score log");
    c_exp->add_option("--log", ex.log, "Score log (NDJSON)")->required();
    c_exp->add_option("--key", ex.key, "Private key file")->required();
    c_exp->add_option("--out", ex.out, "Output directory")->required();

    ServeArgs sv;
    auto* c_serve = app.add_subcommand("serve", "Serve a survey bundle to raters over HTTP");
    c_serve->add_option("--bundle", sv.bundle, "Public bundle directory")->required();
    c_serve->add_option("--log", sv.log, "Score log (NDJSON, appended)")->required();
    c_serve->add_option("--host", sv.options.host)->capture_default_str();
    c_serve->add_option("--port", sv.options.port)->capture_default_str();
    c_serve->add_option("--static", sv.static_dir, "Frontend bundle served at /");
    add_threads(c_serve, sv.options.threads);

    std::string replay_path;
    auto* c_replay = app.add_subcommand("replay", "Re-run a command from its run.json and compare output hashes");
    c_replay->add_option("run_json", replay_path, "run.json of an earlier command")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        std::string out_dir;
        if (c_sim->parsed()) {
            rec.command = "simulate";
            simulate(sim, rec, out);
            out_dir = sim.out;
        } else if (c_mos->parsed()) {
            rec.command = "mosaic";
            mosaic(mos, rec, out);
            out_dir = mos.out;
        } else if (c_ev->parsed()) {
            rec.command = "evaluate";
            evaluate_cmd(ev, rec, out);
            out_dir = ev.out;
        } else if (c_wi->parsed() || c_sh->parsed()) {
            rec.command = c_wi->parsed() ? "baseline wiener" : "baseline sharpen";
            baseline(bl, c_wi->parsed(), rec, out);
            out_dir = bl.out;
        } else if (c_split->parsed()) {
            rec.command = "dataset split";
            dataset_split(sp, rec, out);
            out_dir = sp.out;
        } else if (c_pairs->parsed()) {
            rec.command = "dataset pairs";
            dataset_pairs(pa, rec, out);
            out_dir = pa.out;
        } else if (c_prep->parsed()) {
            rec.command = "survey prep";
            survey_prep_cmd(pr, rec, out);
            out_dir = pr.out;
        } else if (c_exp->parsed()) {
            rec.command = "survey export";
            survey_export(ex, rec, out);
            out_dir = ex.out;
        } else if (c_serve->parsed()) {
            serve(sv, out);
            return 0;
        } else if (c_replay->parsed()) {
            return replay(replay_path, out, err);
        }
        rec.write(out_dir);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return 1;
}

} // namespace pcle::cli
