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

#ifndef PCLE_SURVEY_HPP
#define PCLE_SURVEY_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace pcle {

inline constexpr std::array<const char*, 3> kSurveyQuestions{
    "Are there any artefacts/noise in the image?",
    "Can you see an improvement in contrast with respect to the input?",
    "Can you see an improvement in the details with respect to the input?",
};

inline constexpr int kCandidatesPerCase = 4;

struct SurveyPrepParams {
    std::size_t n_cases = 46;
    std::uint64_t seed = 0;
    /// Optional rater allowlist written into the bundle; empty accepts any valid token.
    std::vector<std::string> raters;
};

struct SurveyPrepInputs {
    /// Method name -> directory of outputs; at least four methods.
    std::map<std::string, std::filesystem::path> methods;
    std::filesystem::path input_dir;
    std::filesystem::path hr_dir;
};

struct SurveyPrepSummary {
    std::size_t cases = 0;
    std::size_t images = 0;
};

/**
 * Picks n_cases ids present in every directory (matched by file stem), then
 * copies the images byte for byte into `bundle_dir/images/<alias><ext>` under
 * random opaque aliases. The public `bundle_dir/bundle.json` lists cases with
 * candidates in a per-case shuffled order; `key_path` maps every alias back to
 * its method and image id. With more than four methods, four are drawn per case.
 */
SurveyPrepSummary survey_prep(const SurveyPrepInputs& inputs, const std::filesystem::path& bundle_dir,
                              const std::filesystem::path& key_path, const SurveyPrepParams& params);

struct SurveyCase {
    std::string case_id;
    std::vector<std::string> candidates;
    std::string input_alias;
    std::string hr_alias;
};

struct SurveyBundle {
    std::filesystem::path dir;
    std::vector<SurveyCase> cases;
    std::vector<std::string> raters;
    /// alias -> image file name inside dir/images
    std::map<std::string, std::string> images;

    static SurveyBundle load(const std::filesystem::path& dir);
    const SurveyCase* find_case(const std::string& case_id) const;
    bool rater_allowed(const std::string& rater_id) const;
};

/// Presentation order of the case's candidates for one rater, seeded by (rater_id, case_id).
std::vector<std::string> candidate_order(const SurveyCase& c, const std::string& rater_id);

/// Rater tokens are 1 to 64 characters from [A-Za-z0-9_.-].
bool valid_rater_id(const std::string& rater_id);

struct ScoreRecord {
    std::string rater_id;
    std::string case_id;
    std::string alias;
    std::array<int, 3> q{};
    std::string timestamp;

    nlohmann::json to_json() const;
    static ScoreRecord from_json(const nlohmann::json& j);
    /// SHA-256 over the key and scores (not the timestamp).
    std::string ack_token() const;
};

/// Append-only NDJSON log; each append is fsynced before it returns.
class ScoreLog {
public:
    explicit ScoreLog(std::filesystem::path path);
    ~ScoreLog();
    ScoreLog(const ScoreLog&) = delete;
    ScoreLog& operator=(const ScoreLog&) = delete;

    void append(const ScoreRecord& record);
    /// Latest record per (rater, case, alias) as of the last append.
    std::vector<ScoreRecord> latest() const;

    /// Every record in file order. A torn final line (no newline) is ignored.
    static std::vector<ScoreRecord> replay(const std::filesystem::path& path);
    static std::vector<ScoreRecord> latest_of(const std::vector<ScoreRecord>& records);

private:
    std::filesystem::path path_;
    int fd_ = -1;
    mutable std::mutex mutex_;
    std::map<std::array<std::string, 3>, ScoreRecord> latest_;
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/**
 * Request handling of the rating service, independent of the HTTP transport.
 * Serving never reads the private key.
 */
class SurveyService {
public:
    SurveyService(SurveyBundle bundle, std::filesystem::path log_path);

    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body = {});

    const SurveyBundle& bundle() const noexcept { return bundle_; }

private:
    HttpResponse session(const std::string& rater);
    HttpResponse case_view(const std::string& rater, const std::string& case_id);
    HttpResponse image(const std::string& alias);
    HttpResponse score(const std::string& body);
    HttpResponse progress(const std::string& rater);

    SurveyBundle bundle_;
    std::map<std::string, std::string> alias_case_;
    ScoreLog log_;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    /// 0 binds an ephemeral port.
    int port = 8080;
    /// Directory served at `/`; nothing is mounted when empty.
    std::filesystem::path static_dir;
    int threads = 0;
};

/// HTTP transport for a SurveyService. The socket is bound on construction.
class SurveyServer {
public:
    SurveyServer(SurveyService& service, const ServeOptions& options);
    ~SurveyServer();

    int port() const noexcept;
    /// Blocks until stop() is called from another thread.
    void run();
    /// Waits for run() to accept connections.
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct MosStat {
    std::string method;
    int question = 1;
    double mean = 0.0;
    double std = 0.0; ///< population
    std::size_t count = 0;
};

struct RaterCompleteness {
    std::string rater_id;
    std::size_t records = 0;
    std::size_t cases_complete = 0;
    std::size_t cases_total = 0;
};

struct MosAggregate {
    std::vector<MosStat> stats;
    std::vector<RaterCompleteness> raters;
};

/**
 * Unblinds the latest record per key through the private key and aggregates
 * per (method, question). Throws InvalidArgument for an alias missing from the key.
 */
MosAggregate export_mos(const std::vector<ScoreRecord>& log, const std::filesystem::path& key_path);

/// CSV `method,question,mean,std,count` and `rater_id,records,cases_complete,cases_total`.
void write_mos(const MosAggregate& mos, const std::filesystem::path& mos_csv, const std::filesystem::path& raters_csv);

} // namespace pcle

#endif // PCLE_SURVEY_HPP
