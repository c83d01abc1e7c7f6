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

#include "pcle/survey.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "pcle/csv.hpp"
#include "pcle/error.hpp"
#include "pcle/hash.hpp"
#include "pcle/image_io.hpp"
#include "pcle/rng.hpp"

namespace pcle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("missing image directory " + dir.string());
    std::map<std::string, fs::path> out;
    for (const auto& f : list_image_files(dir))
        if (!out.emplace(f.stem().string(), f).second)
            throw InvalidArgument("image id '" + f.stem().string() + "' appears twice in " + dir.string());
    return out;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out.flush()) throw IoError("failed writing " + path.string());
}

std::string hex_alias(Rng& rng) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

} // namespace

SurveyPrepSummary survey_prep(const SurveyPrepInputs& inputs, const fs::path& bundle_dir, const fs::path& key_path,
                              const SurveyPrepParams& params) {
    if (inputs.methods.size() < std::size_t(kCandidatesPerCase))
        throw InvalidArgument("survey prep needs at least " + std::to_string(kCandidatesPerCase) + " methods, got " +
                              std::to_string(inputs.methods.size()));
    for (const auto& r : params.raters)
        if (!valid_rater_id(r)) throw InvalidArgument("invalid rater id '" + r + "'");
    const fs::path key_abs = fs::absolute(key_path).lexically_normal();
    const fs::path bundle_abs = fs::absolute(bundle_dir).lexically_normal();
    if (key_abs.string().rfind(bundle_abs.string() + "/", 0) == 0)
        throw InvalidArgument("the private key must live outside the public bundle directory");

    std::map<std::string, std::map<std::string, fs::path>> method_files;
    for (const auto& [name, dir] : inputs.methods) method_files[name] = images_by_stem(dir);
    const auto input_files = images_by_stem(inputs.input_dir);
    const auto hr_files = images_by_stem(inputs.hr_dir);

    std::vector<std::string> ids;
    for (const auto& [id, path] : input_files) {
        bool everywhere = hr_files.count(id) > 0;
        for (const auto& [name, files] : method_files) everywhere = everywhere && files.count(id) > 0;
        if (everywhere) ids.push_back(id);
    }
    if (ids.size() < params.n_cases)
        throw InvalidArgument("only " + std::to_string(ids.size()) + " image ids are present in every directory; " +
                              std::to_string(params.n_cases) + " cases requested");
    Rng pick(derive_seed(params.seed, "cases"));
    portable_shuffle(ids.begin(), ids.end(), pick);
    ids.resize(params.n_cases);

    // Aliases change with the seed, so stale images from an earlier run are dropped.
    fs::remove_all(bundle_dir / "images");
    fs::create_directories(bundle_dir / "images");
    Rng alias_rng(derive_seed(params.seed, "aliases"));
    std::set<std::string> used;
    json images = json::object(), key_aliases = json::object(), pub_cases = json::array(), key_cases = json::array();
    SurveyPrepSummary summary;
    auto place = [&](const fs::path& src, const json& meta) {
        std::string alias;
        do alias = hex_alias(alias_rng);
        while (!used.insert(alias).second);
        const std::string file = alias + src.extension().string();
        fs::copy_file(src, bundle_dir / "images" / file, fs::copy_options::overwrite_existing);
        images[alias] = file;
        key_aliases[alias] = meta;
        ++summary.images;
        return alias;
    };

    std::vector<std::string> methods;
    for (const auto& [name, dir] : inputs.methods) methods.push_back(name);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        char case_id[32];
        std::snprintf(case_id, sizeof case_id, "case-%03zu", i + 1);
        const std::string& id = ids[i];
        Rng order(derive_seed(params.seed, std::string("order/") + case_id));
        std::vector<std::string> chosen = methods;
        portable_shuffle(chosen.begin(), chosen.end(), order);
        chosen.resize(kCandidatesPerCase);

        const std::string input_alias =
            place(input_files.at(id), {{"case_id", case_id}, {"image_id", id}, {"role", "input"}});
        const std::string hr_alias = place(hr_files.at(id), {{"case_id", case_id}, {"image_id", id}, {"role", "hr"}});
        json candidates = json::array(), key_candidates = json::object();
        for (const auto& m : chosen) {
            const std::string a = place(method_files[m].at(id),
                                        {{"case_id", case_id}, {"image_id", id}, {"role", "candidate"}, {"method", m}});
            candidates.push_back(a);
            key_candidates[a] = m;
        }
        pub_cases.push_back({{"case_id", case_id},
                             {"candidates", candidates},
                             {"references", {{"input", input_alias}, {"hr", hr_alias}}}});
        key_cases.push_back({{"case_id", case_id}, {"image_id", id}, {"candidates", key_candidates}});
    }
    summary.cases = ids.size();

    write_json(bundle_dir / "bundle.json",
               {{"format", 1}, {"cases", pub_cases}, {"images", images}, {"raters", params.raters}});
    write_json(key_path, {{"format", 1}, {"seed", params.seed}, {"cases", key_cases}, {"aliases", key_aliases}});
    return summary;
}

SurveyBundle SurveyBundle::load(const fs::path& dir) {
    const json j = read_json(dir / "bundle.json");
    SurveyBundle b;
    b.dir = dir;
    try {
        for (const auto& c : j.at("cases")) {
            SurveyCase sc{c.at("case_id").get<std::string>(), c.at("candidates").get<std::vector<std::string>>(),
                          c.at("references").at("input").get<std::string>(),
                          c.at("references").at("hr").get<std::string>()};
            if (sc.candidates.size() != std::size_t(kCandidatesPerCase))
                throw InvalidArgument("case " + sc.case_id + " does not have " + std::to_string(kCandidatesPerCase) +
                                      " candidates");
            b.cases.push_back(std::move(sc));
        }
        b.images = j.at("images").get<std::map<std::string, std::string>>();
        b.raters = j.value("raters", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw IoError((dir / "bundle.json").string() + ": " + e.what());
    }
    for (const auto& c : b.cases) {
        std::vector<std::string> all = c.candidates;
        all.push_back(c.input_alias);
        all.push_back(c.hr_alias);
        for (const auto& a : all)
            if (!b.images.count(a)) throw IoError("bundle references unknown image " + a);
    }
    return b;
}

const SurveyCase* SurveyBundle::find_case(const std::string& case_id) const {
    for (const auto& c : cases)
        if (c.case_id == case_id) return &c;
    return nullptr;
}

bool SurveyBundle::rater_allowed(const std::string& rater_id) const {
    if (!valid_rater_id(rater_id)) return false;
    return raters.empty() || std::find(raters.begin(), raters.end(), rater_id) != raters.end();
}

bool valid_rater_id(const std::string& rater_id) {
    if (rater_id.empty() || rater_id.size() > 64) return false;
    return std::all_of(rater_id.begin(), rater_id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '-' || c == '.';
    });
}

std::vector<std::string> candidate_order(const SurveyCase& c, const std::string& rater_id) {
    std::vector<std::string> order = c.candidates;
    Rng rng(derive_seed(fnv1a64(rater_id), c.case_id));
    portable_shuffle(order.begin(), order.end(), rng);
    return order;
}

json ScoreRecord::to_json() const {
    return {{"rater_id", rater_id}, {"case_id", case_id}, {"alias", alias},
            {"q1", q[0]},           {"q2", q[1]},         {"q3", q[2]},
            {"timestamp", timestamp}};
}

ScoreRecord ScoreRecord::from_json(const json& j) {
    ScoreRecord r;
    try {
        r.rater_id = j.at("rater_id").get<std::string>();
        r.case_id = j.at("case_id").get<std::string>();
        r.alias = j.at("alias").get<std::string>();
        for (int k = 0; k < 3; ++k) {
            const auto& v = j.at("q" + std::to_string(k + 1));
            if (!v.is_number_integer()) throw InvalidArgument("score q" + std::to_string(k + 1) + " must be an integer");
            r.q[std::size_t(k)] = v.get<int>();
        }
        r.timestamp = j.value("timestamp", std::string());
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed score record: ") + e.what());
    }
    return r;
}

std::string ScoreRecord::ack_token() const {
    const json j = {rater_id, case_id, alias, q[0], q[1], q[2]};
    return sha256_hex(j.dump());
}

ScoreLog::ScoreLog(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    for (auto& r : latest_of(replay(path_))) latest_[{r.rater_id, r.case_id, r.alias}] = r;
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open score log " + path_.string());
}

ScoreLog::~ScoreLog() {
    if (fd_ >= 0) ::close(fd_);
}

void ScoreLog::append(const ScoreRecord& record) {
    const std::string line = record.to_json().dump() + "\n";
    std::lock_guard lock(mutex_);
    std::size_t done = 0;
    while (done < line.size()) {
        const auto n = ::write(fd_, line.data() + done, line.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError("write to score log failed");
        }
        done += std::size_t(n);
    }
    if (::fsync(fd_) != 0) throw IoError("fsync of score log failed");
    latest_[{record.rater_id, record.case_id, record.alias}] = record;
}

std::vector<ScoreRecord> ScoreLog::latest() const {
    std::lock_guard lock(mutex_);
    std::vector<ScoreRecord> out;
    for (const auto& [k, r] : latest_) out.push_back(r);
    return out;
}

std::vector<ScoreRecord> ScoreLog::replay(const fs::path& path) {
    std::vector<ScoreRecord> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t start = 0, line_no = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string::npos) break; // torn write
        ++line_no;
        const std::string line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.empty()) continue;
        try {
            out.push_back(ScoreRecord::from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ScoreRecord> ScoreLog::latest_of(const std::vector<ScoreRecord>& records) {
    std::map<std::array<std::string, 3>, std::size_t> last;
    for (std::size_t i = 0; i < records.size(); ++i)
        last[{records[i].rater_id, records[i].case_id, records[i].alias}] = i;
    std::vector<ScoreRecord> out;
    for (const auto& [k, i] : last) out.push_back(records[i]);
    return out;
}

MosAggregate export_mos(const std::vector<ScoreRecord>& log, const fs::path& key_path) {
    const json key = read_json(key_path);
    std::map<std::string, std::string> method_of;
    std::map<std::string, std::size_t> case_size;
    try {
        for (const auto& c : key.at("cases")) {
            const auto& cand = c.at("candidates");
            case_size[c.at("case_id").get<std::string>()] = cand.size();
            for (auto it = cand.begin(); it != cand.end(); ++it) method_of[it.key()] = it.value().get<std::string>();
        }
    } catch (const json::exception& e) {
        throw IoError(key_path.string() + ": " + e.what());
    }

    const auto latest = ScoreLog::latest_of(log);
    std::map<std::string, std::array<std::vector<double>, 3>> scores;
    std::map<std::string, std::map<std::string, std::size_t>> per_rater_case;
    std::map<std::string, std::size_t> per_rater;
    for (const auto& r : latest) {
        const auto it = method_of.find(r.alias);
        if (it == method_of.end()) throw InvalidArgument("alias '" + r.alias + "' is missing from the key");
        for (int k = 0; k < 3; ++k) scores[it->second][std::size_t(k)].push_back(double(r.q[std::size_t(k)]));
        ++per_rater_case[r.rater_id][r.case_id];
        ++per_rater[r.rater_id];
    }

    MosAggregate mos;
    for (const auto& [method, qs] : scores)
        for (int k = 0; k < 3; ++k) {
            const auto& v = qs[std::size_t(k)];
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= double(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            mos.stats.push_back({method, k + 1, mean, std::sqrt(ss / double(v.size())), v.size()});
        }
    for (const auto& [rater, n] : per_rater) {
        RaterCompleteness rc{rater, n, 0, case_size.size()};
        for (const auto& [case_id, count] : per_rater_case[rater])
            if (case_size.count(case_id) && count == case_size[case_id]) ++rc.cases_complete;
        mos.raters.push_back(rc);
    }
    return mos;
}

void write_mos(const MosAggregate& mos, const fs::path& mos_csv, const fs::path& raters_csv) {
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    CsvTable stats;
    stats.provenance = {{"std", "population"}, {"questions", kSurveyQuestions}};
    stats.columns = {"method", "question", "mean", "std", "count"};
    for (const auto& s : mos.stats)
        stats.rows.push_back({s.method, "q" + std::to_string(s.question), num(s.mean), num(s.std), std::to_string(s.count)});
    write_csv(mos_csv, stats);

    CsvTable raters;
    raters.columns = {"rater_id", "records", "cases_complete", "cases_total"};
    for (const auto& r : mos.raters)
        raters.rows.push_back({r.rater_id, std::to_string(r.records), std::to_string(r.cases_complete),
                               std::to_string(r.cases_total)});
    write_csv(raters_csv, raters);
}

} // namespace pcle
