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

#include "pcle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "pcle/csv.hpp"
#include "pcle/error.hpp"
#include "pcle/image_io.hpp"
#include "pcle/parallel.hpp"
#include "pcle/rng.hpp"

namespace pcle {

namespace fs = std::filesystem;

std::vector<SequenceRecord> load_sequence_records(const fs::path& csv, const std::vector<std::string>& vocabulary) {
    const CsvTable t = read_csv(csv);
    const auto c_id = t.column("sequence_id"), c_label = t.column("tissue_label"), c_probe = t.column("probe_id"),
               c_dir = t.column("frame_dir");
    std::vector<SequenceRecord> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        SequenceRecord rec{r[c_id], r[c_label], r[c_probe], fs::path(r[c_dir])};
        const std::string where = csv.string() + " row " + std::to_string(i + 1);
        if (rec.sequence_id.empty() || rec.tissue_label.empty() || rec.frame_dir.empty())
            throw InvalidArgument(where + ": empty sequence_id, tissue_label or frame_dir");
        if (!vocabulary.empty() &&
            std::find(vocabulary.begin(), vocabulary.end(), rec.tissue_label) == vocabulary.end())
            throw InvalidArgument(where + ": tissue label '" + rec.tissue_label + "' is not in the vocabulary");
        if (!seen.insert(rec.sequence_id).second)
            throw InvalidArgument(where + ": duplicate sequence_id '" + rec.sequence_id + "'");
        out.push_back(std::move(rec));
    }
    return out;
}

void write_sequence_records(const std::vector<SequenceRecord>& records, const fs::path& csv) {
    CsvTable t;
    t.columns = {"sequence_id", "tissue_label", "probe_id", "frame_dir"};
    for (const auto& r : records) t.rows.push_back({r.sequence_id, r.tissue_label, r.probe_id, r.frame_dir.generic_string()});
    write_csv(csv, t);
}

std::string to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "test") return Split::test;
    throw InvalidArgument("unknown split '" + name + "' (expected train, validation or test)");
}

void SplitFractions::validate() const {
    double sum = 0.0;
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("split fractions must be non-negative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
}

SplitFractions parse_fractions(const std::string& text) {
    SplitFractions f;
    std::stringstream in(text);
    std::string item;
    std::size_t n = 0;
    while (std::getline(in, item, ',')) {
        if (n == 3) throw InvalidArgument("expected three split fractions, got more: '" + text + "'");
        std::size_t used = 0;
        try {
            f.values[n] = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw InvalidArgument("malformed split fraction '" + item + "'");
        ++n;
    }
    if (n != 3) throw InvalidArgument("expected three split fractions in '" + text + "'");
    f.validate();
    return f;
}

std::array<std::size_t, 3> SplitManifest::counts(const std::string& label) const {
    std::array<std::size_t, 3> c{};
    for (const auto& a : assignments)
        if (label.empty() || a.tissue_label == label) ++c[std::size_t(a.split)];
    return c;
}

std::optional<Split> SplitManifest::split_of(const std::string& sequence_id) const {
    for (const auto& a : assignments)
        if (a.sequence_id == sequence_id) return a.split;
    return std::nullopt;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions) {
    constexpr double kTie = 1e-9;
    fractions.validate();
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = double(n) * fractions.values[k];
        sizes[k] = std::size_t(std::floor(exact + kTie));
        rem[k] = std::max(0.0, exact - double(sizes[k]));
        assigned += sizes[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    // Remainders within kTie count as equal so decimal fractions like 0.35 and 0.15 tie as they would exactly.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + kTie; });
    // Fractions summing to 1 within tolerance can leave assigned one above n.
    for (std::size_t k = 0; assigned > n; k = (k + 1) % 3)
        if (sizes[order[2 - k]] > 0) {
            --sizes[order[2 - k]];
            --assigned;
        }
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
        ++sizes[order[k]];
        ++assigned;
    }
    return sizes;
}

SplitManifest stratified_split(const std::vector<SequenceRecord>& records, const SplitFractions& fractions,
                               std::uint64_t seed, std::size_t min_per_label) {
    fractions.validate();
    std::map<std::string, std::vector<std::size_t>> by_label;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!ids.insert(records[i].sequence_id).second)
            throw InvalidArgument("duplicate sequence_id '" + records[i].sequence_id + "'");
        by_label[records[i].tissue_label].push_back(i);
    }
    SplitManifest m;
    m.fractions = fractions;
    m.seed = seed;
    m.assignments.resize(records.size());
    for (auto& [label, idx] : by_label) {
        if (idx.size() < min_per_label)
            throw InvalidArgument("tissue label '" + label + "' has " + std::to_string(idx.size()) +
                                  " sequences; at least " + std::to_string(min_per_label) + " are required");
        Rng rng(derive_seed(seed, label));
        portable_shuffle(idx.begin(), idx.end(), rng);
        const auto sizes = split_sizes(idx.size(), fractions);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < sizes[k]; ++j, ++pos) {
                const auto& r = records[idx[pos]];
                m.assignments[idx[pos]] = {r.sequence_id, r.tissue_label, Split(k)};
            }
    }
    return m;
}

void write_split_manifest(const SplitManifest& manifest, const fs::path& csv) {
    CsvTable t;
    t.provenance = {{"kind", "split"},
                    {"seed", manifest.seed},
                    {"fractions", manifest.fractions.values},
                    {"unit", "sequence"}};
    t.columns = {"sequence_id", "tissue_label", "split"};
    for (const auto& a : manifest.assignments) t.rows.push_back({a.sequence_id, a.tissue_label, to_string(a.split)});
    write_csv(csv, t);
}

SplitManifest load_split_manifest(const fs::path& csv) {
    const CsvTable t = read_csv(csv);
    SplitManifest m;
    if (t.provenance.is_object()) {
        m.seed = t.provenance.value("seed", std::uint64_t(0));
        if (t.provenance.contains("fractions")) m.fractions.values = t.provenance["fractions"].get<std::array<double, 3>>();
    }
    const auto c_id = t.column("sequence_id"), c_label = t.column("tissue_label"), c_split = t.column("split");
    std::set<std::string> ids;
    for (const auto& r : t.rows) {
        if (!ids.insert(r[c_id]).second) throw InvalidArgument(csv.string() + ": duplicate sequence_id '" + r[c_id] + "'");
        m.assignments.push_back({r[c_id], r[c_label], parse_split(r[c_split])});
    }
    return m;
}

std::string to_string(Origin o) { return o == Origin::org ? "org" : "syn"; }

Origin parse_origin(const std::string& name) {
    if (name == "org") return Origin::org;
    if (name == "syn") return Origin::syn;
    throw InvalidArgument("unknown origin '" + name + "' (expected org or syn)");
}

void PairOptions::validate() const {
    if (origin == Origin::org && lr_root.empty()) throw InvalidArgument("pairs: origin org needs an LR root");
    if (origin == Origin::syn) noise.validate();
}

namespace {

fs::path relative_to(const fs::path& p, const fs::path& root) {
    return fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(root).lexically_normal());
}

struct FrameTask {
    std::size_t row;
    fs::path hr;
};

class LayoutCache {
public:
    explicit LayoutCache(const PairOptions& opt) : opt_(opt) {}

    std::shared_ptr<const FibreLayout> get(Index w, Index h) {
        if (opt_.layout) {
            if (opt_.layout->width() != w || opt_.layout->height() != h)
                throw InvalidArgument("frame is " + std::to_string(w) + "x" + std::to_string(h) +
                                      " but the layout is " + std::to_string(opt_.layout->width()) + "x" +
                                      std::to_string(opt_.layout->height()));
            return opt_.layout;
        }
        std::lock_guard lock(mutex_);
        if (const auto it = cache_.find({w, h}); it != cache_.end()) return it->second;
        Mask fov = Mask::Constant(h, w, true);
        if (opt_.fov) {
            if (opt_.fov->cols() != w || opt_.fov->rows() != h)
                throw InvalidArgument("FoV mask size does not match the frame");
            fov = *opt_.fov;
        }
        auto layout = std::make_shared<const FibreLayout>(generate_layout(w, h, fov, opt_.layout_params));
        cache_.emplace(std::pair{w, h}, layout);
        return layout;
    }

    std::vector<std::string> hashes() const {
        std::set<std::string> out;
        if (opt_.layout) out.insert(opt_.layout->hash());
        for (const auto& [size, l] : cache_) out.insert(l->hash());
        return {out.begin(), out.end()};
    }

private:
    const PairOptions& opt_;
    std::mutex mutex_;
    std::map<std::pair<Index, Index>, std::shared_ptr<const FibreLayout>> cache_;
};

} // namespace

PairManifest build_pairs(const SplitManifest& split, const std::vector<SequenceRecord>& records,
                         const fs::path& hr_root, const fs::path& out_root, const PairOptions& options) {
    options.validate();
    std::map<std::string, const SequenceRecord*> by_id;
    for (const auto& r : records) by_id[r.sequence_id] = &r;

    PairManifest m;
    m.root = out_root;
    m.origin = options.origin;
    std::vector<FrameTask> tasks;
    for (const auto& a : split.assignments) {
        const auto it = by_id.find(a.sequence_id);
        if (it == by_id.end()) throw InvalidArgument("split names sequence '" + a.sequence_id + "' with no record");
        const fs::path dir = hr_root / it->second->frame_dir;
        if (!fs::is_directory(dir)) throw IoError("missing HR directory " + dir.string());
        const auto frames = list_image_files(dir);
        if (frames.empty()) throw InvalidArgument("sequence '" + a.sequence_id + "' has no HR frames in " + dir.string());
        for (std::size_t f = 0; f < frames.size(); ++f) {
            PairRow row{a.split, a.sequence_id, f, options.origin, {}, relative_to(frames[f], out_root)};
            if (options.origin == Origin::org) {
                const fs::path lr = options.lr_root / it->second->frame_dir / frames[f].filename();
                if (!fs::is_regular_file(lr)) throw IoError("missing LR frame " + lr.string());
                row.lr_path = relative_to(lr, out_root);
            } else {
                tasks.push_back({m.rows.size(), frames[f]});
                fs::path name = frames[f].filename();
                name.replace_extension(".png");
                row.lr_path = fs::path("lr_syn") / a.sequence_id / name;
            }
            m.rows.push_back(std::move(row));
        }
    }

    LayoutCache layouts(options);
    std::vector<std::string> failure(m.rows.size());
    if (!tasks.empty()) {
        const int threads = options.threads > 0 ? options.threads : default_threads();
        parallel_for(tasks.size(), threads, [&](std::size_t t) {
            const auto& task = tasks[t];
            const PairRow& row = m.rows[task.row];
            try {
                const Image hr = load_image(task.hr);
                NoiseModel noise = options.noise;
                noise.seed = derive_seed(options.seed, row.sequence_id + "/" + std::to_string(row.frame_index));
                const auto layout = layouts.get(hr.width(), hr.height());
                const SimulationResult sim = simulate_lr(hr, *layout, noise, options.mode);
                const fs::path out = out_root / row.lr_path;
                fs::create_directories(out.parent_path());
                save_image(sim.lr, out);
            } catch (const Error& e) {
                failure[task.row] = e.what();
            }
        });
    }

    std::vector<PairRow> kept;
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        if (failure[i].empty())
            kept.push_back(std::move(m.rows[i]));
        else
            m.skipped.push_back({m.rows[i].sequence_id, m.rows[i].frame_index, failure[i]});
    }
    m.rows = std::move(kept);

    m.provenance = {{"kind", "pairs"}, {"origin", to_string(options.origin)}, {"split_seed", split.seed}};
    if (options.origin == Origin::syn) {
        m.provenance["seed"] = options.seed;
        m.provenance["layout_hashes"] = layouts.hashes();
        if (!options.layout)
            m.provenance["layout"] = {{"spacing", options.layout_params.spacing},
                                      {"jitter", options.layout_params.jitter},
                                      {"seed", options.layout_params.seed}};
        m.provenance["noise"] = {{"sigma_mult", options.noise.sigma_mult},
                                 {"sigma_add_rel", options.noise.sigma_add_rel}};
        m.provenance["extraction"] = to_string(options.mode);
    }
    m.provenance["skipped"] = m.skipped.size();
    return m;
}

void write_pair_manifest(const PairManifest& manifest, const fs::path& csv) {
    CsvTable t;
    t.provenance = manifest.provenance;
    // Stored relative to the manifest's own directory so the tree can be moved.
    t.provenance["root"] = relative_to(manifest.root, csv.parent_path()).generic_string();
    t.columns = {"split", "sequence_id", "frame_index", "origin", "lr_path", "hr_path"};
    for (const auto& r : manifest.rows)
        t.rows.push_back({to_string(r.split), r.sequence_id, std::to_string(r.frame_index), to_string(r.origin),
                          r.lr_path.generic_string(), r.hr_path.generic_string()});
    write_csv(csv, t);
}

PairManifest load_pair_manifest(const fs::path& csv) {
    const CsvTable t = read_csv(csv);
    PairManifest m;
    m.provenance = t.provenance;
    if (t.provenance.is_object()) {
        m.root = (csv.parent_path() / t.provenance.value("root", std::string("."))).lexically_normal();
        m.origin = parse_origin(t.provenance.value("origin", std::string("org")));
    }
    const auto c_split = t.column("split"), c_id = t.column("sequence_id"), c_f = t.column("frame_index"),
               c_o = t.column("origin"), c_lr = t.column("lr_path"), c_hr = t.column("hr_path");
    for (const auto& r : t.rows)
        m.rows.push_back({parse_split(r[c_split]), r[c_id], std::size_t(std::stoull(r[c_f])), parse_origin(r[c_o]),
                          fs::path(r[c_lr]), fs::path(r[c_hr])});
    return m;
}

} // namespace pcle
