#include "classbench/annotator.hpp"

#include "classbench/error.hpp"
#include "classbench/metrics.hpp"
#include "classbench/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace classbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::uint32_t> ids_of(const LabelSet& s) {
    std::vector<std::uint32_t> out;
    for (auto c : s) out.push_back(c.value);
    return out;
}

LabelSet set_of(const json& j) {
    LabelSet out;
    for (const auto& v : j) out.insert(ClassId(v.get<std::uint32_t>()));
    return out;
}

json request_json(const SessionRequest& r) {
    std::vector<std::string> cats;
    for (auto c : r.categories) cats.emplace_back(to_string(c));
    return json{{"categories", cats},       {"disagreement_only", r.disagreement_only},
                {"seed", r.seed},           {"annotator_id", r.annotator_id},
                {"assist", r.assist},       {"max_candidates", r.max_candidates}};
}

SessionRequest request_from(const json& j) {
    SessionRequest r;
    for (const auto& c : j.at("categories")) {
        const auto cat = parse_category(c.get<std::string>());
        if (!cat) throw Error(ErrorCode::ParseError, "unknown category " + c.get<std::string>());
        r.categories.insert(*cat);
    }
    r.disagreement_only = j.at("disagreement_only").get<bool>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.assist = j.at("assist").get<bool>();
    r.max_candidates = j.at("max_candidates").get<std::size_t>();
    return r;
}

json labels_json(const LabelSet& s, const ClassCatalog& catalog) {
    json out = json::array();
    for (auto c : s) out.push_back({{"id", c.value}, {"name", catalog.name(c)}});
    return out;
}

}  // namespace

struct AnnotationService::Session {
    std::string id;
    SessionRequest request;
    std::vector<ImageId> queue;
    std::vector<CaseDecision> decisions;  // cursor == decisions.size()
    fs::path dir;
    std::mutex mu;
};

std::map<ImageId, std::vector<ClassId>> assist_from_votes(const std::vector<PredictionMap>& votes, std::size_t k) {
    std::map<ImageId, std::map<ClassId, std::size_t>> counts;
    for (const auto& v : votes) {
        for (const auto& [img, p] : v) {
            if (p) ++counts[img][*p];
        }
    }
    std::map<ImageId, std::vector<ClassId>> out;
    for (const auto& [img, c] : counts) {
        std::vector<std::pair<std::size_t, ClassId>> ranked;
        for (const auto& [cls, n] : c) ranked.emplace_back(n, cls);
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        auto& list = out[img];
        for (std::size_t i = 0; i < ranked.size() && i < k; ++i) list.push_back(ranked[i].second);
    }
    return out;
}

std::vector<ImageId> select_queue(const AnnotationInputs& inputs, const CategoryPartition& partition,
                                  const SessionRequest& request) {
    std::vector<ImageId> out;
    for (const auto& [img, tag] : partition.membership()) {
        if (!request.categories.empty() &&
            std::none_of(request.categories.begin(), request.categories.end(),
                         [&](Category c) { return in_category(tag, c); })) {
            continue;
        }
        if (request.disagreement_only) {
            const auto it = inputs.primary.find(img);
            const Prediction pred = it == inputs.primary.end() ? std::nullopt : it->second;
            if (image_correct(pred, img, inputs.labels, inputs.catalog)) continue;
        }
        out.push_back(img);
    }
    if (out.empty()) throw Error(ErrorCode::EmptySelection, "no image matches the session filter");
    Rng rng(request.seed);
    rng.shuffle(out);
    return out;
}

AnnotationService::AnnotationService(AnnotationInputs inputs, fs::path state_dir)
    : inputs_(std::move(inputs)), partition_(partition_categories(inputs_.labels)), state_dir_(std::move(state_dir)) {
    const auto root = state_dir_ / "sessions";
    fs::create_directories(root);
    // Replay every persisted session from its write-ahead log.
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
        std::ifstream in(entry.path() / "session.json");
        const auto j = json::parse(in);
        auto s = std::make_unique<Session>();
        s->id = j.at("session_id").get<std::string>();
        s->request = request_from(j.at("request"));
        s->queue = j.at("queue").get<std::vector<ImageId>>();
        s->dir = entry.path();
        std::ifstream log(entry.path() / "decisions.jsonl");
        std::string line;
        while (std::getline(log, line)) {
            const auto d = json::parse(line, nullptr, false);
            if (!d.is_object()) break;  // torn tail
            CaseDecision cd;
            cd.image_id = d.at("image_id").get<std::string>();
            cd.chosen = set_of(d.at("chosen"));
            for (const auto& c : candidates_for(*s, cd.image_id)) {
                for (const auto& src : c.sources) cd.candidates.emplace_back(src, c.labels);
            }
            const auto pred = inputs_.primary.count(cd.image_id) ? inputs_.primary.at(cd.image_id) : std::nullopt;
            cd.outcome = classify_case_outcome(cd.chosen, pred, inputs_.labels.regt.at(cd.image_id), inputs_.catalog);
            s->decisions.push_back(std::move(cd));
        }
        sessions_[s->id] = std::move(s);
    }
}

AnnotationService::~AnnotationService() = default;

AnnotationService::Session& AnnotationService::session(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, id);
    return *it->second;
}

std::string AnnotationService::create_session(const SessionRequest& request) {
    auto s = std::make_unique<Session>();
    s->request = request;
    s->queue = select_queue(inputs_, partition_, request);
    std::lock_guard lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", sessions_.size() + 1);
    s->id = buf;
    s->dir = state_dir_ / "sessions" / s->id;
    fs::create_directories(s->dir);
    const auto tmp = s->dir / "session.json.tmp";
    {
        std::ofstream out(tmp);
        out << json{{"session_id", s->id}, {"request", request_json(request)}, {"queue", s->queue}}.dump(1);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    }
    fs::rename(tmp, s->dir / "session.json");
    const std::string id = s->id;
    sessions_[id] = std::move(s);
    return id;
}

std::vector<Candidate> AnnotationService::candidates_for(const Session& s, const ImageId& image_id) const {
    std::vector<std::pair<std::string, LabelSet>> raw;
    if (const auto it = inputs_.primary.find(image_id); it != inputs_.primary.end() && it->second) {
        raw.emplace_back(kSourcePrimary, LabelSet{*it->second});
    }
    raw.emplace_back(kSourceReGT, inputs_.labels.regt.at(image_id));
    raw.emplace_back(kSourceImGT, LabelSet{inputs_.labels.imgt.at(image_id)});
    if (const auto it = inputs_.secondary.find(image_id); it != inputs_.secondary.end() && it->second) {
        raw.emplace_back(kSourceSecondary, LabelSet{*it->second});
    }
    if (raw.size() > s.request.max_candidates) raw.resize(s.request.max_candidates);

    std::vector<Candidate> out;
    for (auto& [src, labels] : raw) {
        auto same = std::find_if(out.begin(), out.end(), [&](const Candidate& c) { return c.labels == labels; });
        if (same != out.end()) {
            same->sources.push_back(src);
        } else {
            out.push_back(Candidate{{src}, labels});
        }
    }
    Rng rng(derive_seed(derive_seed(s.request.seed, std::string_view(s.id)), std::string_view(image_id)));
    rng.shuffle(out);
    return out;
}

ReviewItem AnnotationService::next_item(const std::string& session_id) {
    Session& s = session(session_id);
    std::lock_guard lock(s.mu);
    if (s.decisions.size() >= s.queue.size()) throw Error(ErrorCode::SessionComplete, session_id);
    ReviewItem item;
    item.session_id = s.id;
    item.position = s.decisions.size();
    item.total = s.queue.size();
    item.image_id = s.queue[item.position];
    item.candidates = candidates_for(s, item.image_id);
    if (s.request.assist) {
        if (const auto it = inputs_.assist.find(item.image_id); it != inputs_.assist.end()) item.assist = it->second;
    }
    return item;
}

DecisionResult AnnotationService::submit_decision(const std::string& session_id, const ImageId& image_id,
                                                  const LabelSet& chosen, bool confirm_empty, const std::string& note) {
    Session& s = session(session_id);
    std::lock_guard lock(s.mu);
    if (s.decisions.size() >= s.queue.size()) throw Error(ErrorCode::SessionComplete, session_id);
    const auto& expected = s.queue[s.decisions.size()];
    if (image_id != expected) {
        throw Error(ErrorCode::OutOfOrderSubmission, "expected a decision for " + expected + ", got " + image_id);
    }
    for (auto c : chosen) {
        if (!inputs_.catalog.contains(c)) throw Error(ErrorCode::UnknownLabel, std::to_string(c.value));
    }
    if (chosen.empty() && !confirm_empty) {
        throw Error(ErrorCode::EmptySelection, "an empty choice needs explicit confirmation");
    }

    DecisionResult r;
    r.candidates = candidates_for(s, image_id);
    r.model_prediction = inputs_.primary.count(image_id) ? inputs_.primary.at(image_id) : std::nullopt;
    r.decision.image_id = image_id;
    r.decision.chosen = chosen;
    for (const auto& c : r.candidates) {
        for (const auto& src : c.sources) r.decision.candidates.emplace_back(src, c.labels);
    }
    r.decision.outcome =
        classify_case_outcome(chosen, r.model_prediction, inputs_.labels.regt.at(image_id), inputs_.catalog);

    // Write ahead, then advance.
    {
        std::ofstream log(s.dir / "decisions.jsonl", std::ios::app);
        log << json{{"image_id", image_id},
                    {"chosen", ids_of(chosen)},
                    {"outcome", std::string(to_string(r.decision.outcome))},
                    {"note", note}}
                   .dump()
            << '\n';
        log.flush();
        if (!log) throw Error(ErrorCode::IoError, "cannot append decision for " + session_id);
    }
    s.decisions.push_back(r.decision);
    r.remaining = s.queue.size() - s.decisions.size();
    return r;
}

SessionSummary AnnotationService::summary(const std::string& session_id) {
    Session& s = session(session_id);
    std::lock_guard lock(s.mu);
    SessionSummary out;
    out.session_id = s.id;
    out.annotator_id = s.request.annotator_id;
    out.total = s.queue.size();
    out.decided = s.decisions.size();
    out.decisions = s.decisions;
    out.tallies = tally_outcomes(s.decisions);
    return out;
}

std::optional<fs::path> AnnotationService::image_path(const ImageId& image_id) const {
    const auto it = inputs_.image_paths.find(image_id);
    if (it == inputs_.image_paths.end()) return std::nullopt;
    return it->second;
}

json review_item_json(const ReviewItem& item, const ClassCatalog& catalog,
                      const std::optional<std::string>& embedded_image_base64, const std::string& media_type) {
    json candidates = json::array();
    for (std::size_t i = 0; i < item.candidates.size(); ++i) {
        candidates.push_back({{"index", i}, {"labels", labels_json(item.candidates[i].labels, catalog)}});
    }
    json image{{"url", "/images/" + item.image_id}};
    if (embedded_image_base64) {
        image["base64"] = *embedded_image_base64;
        image["media_type"] = media_type;
    }
    json j{{"session_id", item.session_id},
           {"position", item.position},
           {"total", item.total},
           {"image_id", item.image_id},
           {"image", image},
           {"candidates", candidates}};
    if (!item.assist.empty()) {
        json assist = json::array();
        for (auto c : item.assist) assist.push_back({{"id", c.value}, {"name", catalog.name(c)}});
        j["assist"] = assist;
    }
    return j;
}

json decision_json(const DecisionResult& r, const ClassCatalog& catalog) {
    json candidates = json::array();
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
        candidates.push_back({{"index", i},
                              {"labels", labels_json(r.candidates[i].labels, catalog)},
                              {"sources", r.candidates[i].sources}});
    }
    return json{{"image_id", r.decision.image_id},
                {"chosen", labels_json(r.decision.chosen, catalog)},
                {"outcome", std::string(to_string(r.decision.outcome))},
                {"model_prediction", r.model_prediction ? json(r.model_prediction->value) : json(nullptr)},
                {"candidates", candidates},
                {"remaining", r.remaining}};
}

json summary_json(const SessionSummary& s) {
    json decisions = json::array();
    for (const auto& d : s.decisions) {
        decisions.push_back({{"image_id", d.image_id},
                             {"chosen", ids_of(d.chosen)},
                             {"outcome", std::string(to_string(d.outcome))}});
    }
    return json{{"session_id", s.session_id},
                {"annotator_id", s.annotator_id},
                {"total", s.total},
                {"decided", s.decided},
                {"complete", s.decided == s.total},
                {"tallies", report_json(s.tallies)},
                {"decisions", decisions}};
}

}  // namespace classbench
