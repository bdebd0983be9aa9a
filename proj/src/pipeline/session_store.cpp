#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>

#include "clarify/error.hpp"
#include "clarify/pipeline/pipeline.hpp"

namespace clarify::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json context_to_json(const kg::ContextPack& pack) {
    json facts = json::array();
    for (const auto& f : pack.facts)
        facts.push_back({{"subject", f.subject_label}, {"predicate", f.predicate}, {"object", f.object_label}, {"hop", f.hop}});
    return {{"anchor", {{"id", pack.anchor.id}, {"label", pack.anchor.label}, {"kind", kg::to_string(pack.anchor.kind)}}},
            {"hop_depth", pack.hop_depth},
            {"facts", facts},
            {"rendered_text", pack.rendered_text}};
}

kg::ContextPack context_from_json(const json& j) {
    kg::ContextPack pack;
    const auto& a = j.at("anchor");
    pack.anchor = {a.at("id").get<std::string>(), a.at("label").get<std::string>(),
                   kg::kind_from_string(a.at("kind").get<std::string>())};
    pack.hop_depth = j.at("hop_depth").get<int>();
    for (const auto& f : j.at("facts")) {
        pack.facts.push_back({f.at("subject").get<std::string>(), f.at("predicate").get<std::string>(),
                              f.at("object").get<std::string>(), f.at("hop").get<int>()});
    }
    pack.rendered_text = j.at("rendered_text").get<std::string>();
    return pack;
}

json PipelineResponse::to_json() const {
    return {{"session_id", session_id},
            {"answer", answer},
            {"diagnosis", diagnosis.to_json()},
            {"context_used", context_used ? context_to_json(*context_used) : json(nullptr)},
            {"prompt_version", prompt_version},
            {"timings", timings}};
}

PipelineResponse PipelineResponse::from_json(const json& j) {
    PipelineResponse r;
    r.session_id = j.at("session_id").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.diagnosis = DiagnosisResult::from_json(j.at("diagnosis"));
    if (!j.at("context_used").is_null()) r.context_used = context_from_json(j["context_used"]);
    r.prompt_version = j.at("prompt_version").get<std::string>();
    r.timings = j.at("timings").get<std::map<std::string, double>>();
    return r;
}

json Turn::to_json() const {
    return {{"query", query}, {"had_image", had_image}, {"timestamp", timestamp}, {"response", response.to_json()}};
}

Turn Turn::from_json(const json& j) {
    Turn t;
    t.query = j.at("query").get<std::string>();
    t.had_image = j.at("had_image").get<bool>();
    t.timestamp = j.at("timestamp").get<std::string>();
    t.response = PipelineResponse::from_json(j.at("response"));
    return t;
}

std::optional<DiagnosisResult> Session::sticky_diagnosis() const {
    for (auto it = turns.rbegin(); it != turns.rend(); ++it)
        if (it->had_image) return it->response.diagnosis;
    return std::nullopt;
}

json Session::to_json() const {
    json t = json::array();
    for (const auto& turn : turns) t.push_back(turn.to_json());
    const auto sticky = sticky_diagnosis();
    return {{"id", id}, {"turns", t}, {"sticky_diagnosis", sticky ? sticky->to_json() : json(nullptr)}};
}

namespace {

bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
        if (!ok) return false;
    }
    return true;
}

std::string random_id() {
    thread_local std::mt19937_64 rng{std::random_device{}() ^ static_cast<std::uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count())};
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                  static_cast<unsigned long long>(rng()));
    return buf;
}

}  // namespace

SessionStore::SessionStore(std::string data_dir) : data_dir_(std::move(data_dir)) {
    if (!data_dir_.empty()) {
        std::error_code ec;
        fs::create_directories(data_dir_, ec);
        require(!ec && fs::is_directory(data_dir_), ErrorCode::IoError,
                "cannot create session directory " + data_dir_);
    }
}

std::string SessionStore::path_for(const std::string& id) const {
    return (fs::path(data_dir_) / (id + ".jsonl")).string();
}

std::string SessionStore::create() {
    std::lock_guard<std::mutex> g(mu_);
    for (;;) {
        auto id = random_id();
        if (sessions_.count(id)) continue;
        if (!data_dir_.empty() && fs::exists(path_for(id))) continue;
        sessions_.emplace(id, std::vector<Turn>{});
        return id;
    }
}

bool SessionStore::exists(const std::string& id) const {
    if (!valid_id(id)) return false;
    std::lock_guard<std::mutex> g(mu_);
    return sessions_.count(id) || (!data_dir_.empty() && fs::exists(path_for(id)));
}

Session SessionStore::load(const std::string& id) const {
    require(valid_id(id), ErrorCode::NotFound, "unknown session '" + id + "'");
    std::lock_guard<std::mutex> g(mu_);
    if (const auto it = sessions_.find(id); it != sessions_.end()) return Session{id, it->second};
    require(!data_dir_.empty() && fs::exists(path_for(id)), ErrorCode::NotFound, "unknown session '" + id + "'");

    Session s{id, {}};
    std::ifstream in(path_for(id));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            s.turns.push_back(Turn::from_json(json::parse(line)));
        } catch (const std::exception&) {
            // A torn final line from an interrupted write is not a turn.
            break;
        }
    }
    sessions_[id] = s.turns;
    return s;
}

void SessionStore::append(const std::string& id, const Turn& turn) {
    require(valid_id(id), ErrorCode::NotFound, "unknown session '" + id + "'");
    bool cached = false;
    {
        std::lock_guard<std::mutex> g(mu_);
        cached = sessions_.count(id) > 0;
    }
    if (!cached) (void)load(id);
    if (!data_dir_.empty()) {
        std::ofstream out(path_for(id), std::ios::app);
        require(out.good(), ErrorCode::IoError, "cannot open session file for " + id);
        out << turn.to_json().dump() << '\n';
        out.flush();
        require(out.good(), ErrorCode::IoError, "failed to persist turn for session " + id);
    }
    std::lock_guard<std::mutex> g(mu_);
    sessions_[id].push_back(turn);
}

std::unique_lock<std::mutex> SessionStore::lock(const std::string& id) {
    std::shared_ptr<std::mutex> m;
    {
        std::lock_guard<std::mutex> g(mu_);
        auto& slot = locks_[id];
        if (!slot) slot = std::make_shared<std::mutex>();
        m = slot;
    }
    // locks_ never erases entries, so the mutex outlives this lock.
    return std::unique_lock<std::mutex>(*m);
}

}  // namespace clarify::pipeline
