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

#include <chrono>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "pcle/error.hpp"
#include "pcle/parallel.hpp"
#include "pcle/survey.hpp"

namespace pcle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

HttpResponse json_response(int status, const json& j) { return {status, "application/json", j.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
    return json_response(status, {{"error", message}});
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t start = 1;
    const std::string p = path.substr(0, path.find('?'));
    while (start <= p.size()) {
        const auto slash = p.find('/', start);
        const auto end = slash == std::string::npos ? p.size() : slash;
        parts.push_back(p.substr(start, end - start));
        start = end + 1;
    }
    return parts;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, int(ms));
    return buf;
}

const char* kInstructions =
    "Each case shows the input frame and a high-resolution reference, followed by four processed "
    "candidates labelled A to D in random order. For every candidate, rate each statement from 1 "
    "(strongly disagree) to 5 (strongly agree). Judge the candidates against the input; the reference "
    "indicates the expected level of detail. Scores can be changed by submitting the case again.";

json questions_json() {
    json q = json::array();
    for (std::size_t k = 0; k < kSurveyQuestions.size(); ++k)
        q.push_back({{"id", "q" + std::to_string(k + 1)}, {"text", kSurveyQuestions[k]}});
    return q;
}

} // namespace

SurveyService::SurveyService(SurveyBundle bundle, fs::path log_path)
    : bundle_(std::move(bundle)), log_(std::move(log_path)) {
    for (const auto& c : bundle_.cases)
        for (const auto& a : c.candidates) alias_case_[a] = c.case_id;
}

HttpResponse SurveyService::handle(const std::string& method, const std::string& path, const std::string& body) {
    const auto parts = split_path(path);
    try {
        if (method == "GET" && parts.size() == 3 && parts[0] == "api" && parts[1] == "session") return session(parts[2]);
        if (method == "GET" && parts.size() == 4 && parts[0] == "api" && parts[1] == "case")
            return case_view(parts[2], parts[3]);
        if (method == "GET" && parts.size() == 3 && parts[0] == "api" && parts[1] == "progress")
            return progress(parts[2]);
        if (method == "GET" && parts.size() == 2 && parts[0] == "img") return image(parts[1]);
        if (method == "POST" && parts.size() == 2 && parts[0] == "api" && parts[1] == "score") return score(body);
    } catch (const InvalidArgument& e) {
        return error_response(400, e.what());
    } catch (const std::exception&) {
        return error_response(500, "internal error");
    }
    return error_response(404, "not found");
}

HttpResponse SurveyService::session(const std::string& rater) {
    if (!bundle_.rater_allowed(rater)) return error_response(404, "unknown rater");
    json cases = json::array();
    for (const auto& c : bundle_.cases) cases.push_back({{"case_id", c.case_id}, {"candidates", candidate_order(c, rater)}});
    return json_response(200, {{"rater_id", rater},
                               {"instructions", kInstructions},
                               {"questions", questions_json()},
                               {"scale", {{"min", 1}, {"max", 5}, {"min_label", "strongly disagree"},
                                          {"max_label", "strongly agree"}}},
                               {"cases", cases}});
}

HttpResponse SurveyService::case_view(const std::string& rater, const std::string& case_id) {
    if (!bundle_.rater_allowed(rater)) return error_response(404, "unknown rater");
    const SurveyCase* c = bundle_.find_case(case_id);
    if (!c) return error_response(404, "unknown case");
    json candidates = json::array();
    const auto order = candidate_order(*c, rater);
    for (std::size_t i = 0; i < order.size(); ++i)
        candidates.push_back({{"label", std::string(1, char('A' + i))}, {"alias", order[i]}, {"url", "/img/" + order[i]}});
    return json_response(200, {{"case_id", c->case_id},
                               {"candidates", candidates},
                               {"references", {{"input", {{"url", "/img/" + c->input_alias}}},
                                               {"hr", {{"url", "/img/" + c->hr_alias}}}}},
                               {"questions", questions_json()}});
}

HttpResponse SurveyService::image(const std::string& alias) {
    const auto it = bundle_.images.find(alias);
    if (it == bundle_.images.end()) return error_response(404, "unknown image");
    std::ifstream in(bundle_.dir / "images" / it->second, std::ios::binary);
    if (!in) return error_response(404, "unknown image");
    HttpResponse r;
    r.content_type = fs::path(it->second).extension() == ".png" ? "image/png" : "image/x-portable-graymap";
    r.body.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

HttpResponse SurveyService::score(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        return error_response(400, "body is not valid JSON");
    }
    if (!j.is_object()) return error_response(400, "body must be a JSON object");
    ScoreRecord r = ScoreRecord::from_json(j);
    if (!bundle_.rater_allowed(r.rater_id)) return error_response(404, "unknown rater");
    const SurveyCase* c = bundle_.find_case(r.case_id);
    if (!c) return error_response(400, "unknown case " + r.case_id);
    const auto it = alias_case_.find(r.alias);
    if (it == alias_case_.end() || it->second != r.case_id)
        return error_response(400, "alias " + r.alias + " is not a candidate of " + r.case_id);
    for (std::size_t k = 0; k < 3; ++k)
        if (r.q[k] < 1 || r.q[k] > 5)
            return error_response(400, "q" + std::to_string(k + 1) + " must be an integer from 1 to 5");
    r.timestamp = utc_now();
    log_.append(r);
    return json_response(200, {{"ack", r.ack_token()}});
}

HttpResponse SurveyService::progress(const std::string& rater) {
    if (!bundle_.rater_allowed(rater)) return error_response(404, "unknown rater");
    std::map<std::string, std::size_t> scored;
    std::size_t records = 0;
    for (const auto& r : log_.latest())
        if (r.rater_id == rater) {
            ++scored[r.case_id];
            ++records;
        }
    json completed = json::array();
    json next = nullptr;
    for (const auto& c : bundle_.cases) {
        if (scored[c.case_id] == c.candidates.size())
            completed.push_back(c.case_id);
        else if (next.is_null())
            next = c.case_id;
    }
    return json_response(200, {{"rater_id", rater},
                               {"total", bundle_.cases.size()},
                               {"completed", completed},
                               {"records", records},
                               {"next_case", next}});
}

struct SurveyServer::Impl {
    httplib::Server server;
    int port = 0;
};

SurveyServer::SurveyServer(SurveyService& service, const ServeOptions& options) : impl_(std::make_unique<Impl>()) {
    auto& srv = impl_->server;
    const int threads = options.threads > 0 ? options.threads : default_threads();
    srv.new_task_queue = [threads] { return new httplib::ThreadPool(std::size_t(std::max(threads, 2))); };
    auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
        const HttpResponse r = service.handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
        res.set_header("Cache-Control", "no-store");
    };
    srv.Get(R"(/(api|img)/.*)", forward);
    srv.Post(R"(/api/.*)", forward);
    if (!options.static_dir.empty()) {
        if (!fs::is_directory(options.static_dir))
            throw IoError("static directory " + options.static_dir.string() + " does not exist");
        srv.set_mount_point("/", options.static_dir.string());
    }
    if (options.port == 0) {
        impl_->port = srv.bind_to_any_port(options.host);
    } else if (srv.bind_to_port(options.host, options.port)) {
        impl_->port = options.port;
    } else {
        impl_->port = -1;
    }
    if (impl_->port <= 0) throw IoError("cannot bind " + options.host + ":" + std::to_string(options.port));
}

SurveyServer::~SurveyServer() = default;

int SurveyServer::port() const noexcept { return impl_->port; }

void SurveyServer::run() { impl_->server.listen_after_bind(); }

void SurveyServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void SurveyServer::stop() { impl_->server.stop(); }

} // namespace pcle
