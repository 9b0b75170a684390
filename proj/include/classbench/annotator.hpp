#pragma once

#include "classbench/analysis.hpp"
#include "classbench/labelspace.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace classbench {

inline constexpr const char* kSourcePrimary = "primary_model";
inline constexpr const char* kSourceReGT = "regt";
inline constexpr const char* kSourceImGT = "imgt";
inline constexpr const char* kSourceSecondary = "secondary_model";

struct AnnotationInputs {
    ClassCatalog catalog;
    LabelStore labels;
    std::map<ImageId, std::optional<ClassId>> primary;    // model under review
    std::map<ImageId, std::optional<ClassId>> secondary;  // optional second model
    std::map<ImageId, std::vector<ClassId>> assist;       // optional top-k list
    std::map<ImageId, std::filesystem::path> image_paths;
};

struct SessionRequest {
    std::set<Category> categories;  // empty = every category
    // Keep only images whose primary prediction is not admissible under ReGT.
    bool disagreement_only = false;
    std::uint64_t seed = 0;
    std::string annotator_id;
    bool assist = false;
    // Candidate sources in priority order; the first `max_candidates` are used.
    std::size_t max_candidates = 4;
};

struct Candidate {
    std::vector<std::string> sources;  // several sources may propose the same set
    LabelSet labels;
};

struct ReviewItem {
    std::string session_id;
    std::size_t position = 0;  // 0-based queue index
    std::size_t total = 0;
    ImageId image_id;
    std::vector<Candidate> candidates;  // presentation order
    std::vector<ClassId> assist;
};

struct DecisionResult {
    CaseDecision decision;
    std::vector<Candidate> candidates;  // with sources revealed
    std::optional<ClassId> model_prediction;
    std::size_t remaining = 0;
};

struct SessionSummary {
    std::string session_id;
    std::string annotator_id;
    std::size_t total = 0;
    std::size_t decided = 0;
    std::map<CaseOutcome, std::size_t> tallies;
    std::vector<CaseDecision> decisions;
};

// Per-image assist list: classes predicted across `votes` (one map per trial
// or model), most frequent first, ties to the lower id, at most `k` long.
std::map<ImageId, std::vector<ClassId>> assist_from_votes(const std::vector<PredictionMap>& votes, std::size_t k);

// Images selected by the request, in a seeded shuffled order.
std::vector<ImageId> select_queue(const AnnotationInputs& inputs, const CategoryPartition& partition,
                                  const SessionRequest& request);

/// Session logic behind the annotation API. Sessions and decisions are
/// written ahead to `state_dir` (session.json plus an append-only
/// decisions.jsonl per session) and replayed on construction.
class AnnotationService {
public:
    AnnotationService(AnnotationInputs inputs, std::filesystem::path state_dir);
    ~AnnotationService();

    std::string create_session(const SessionRequest& request);
    ReviewItem next_item(const std::string& session_id);
    // `confirm_empty` must be set to submit an empty choice ("no valid label").
    DecisionResult submit_decision(const std::string& session_id, const ImageId& image_id, const LabelSet& chosen,
                                   bool confirm_empty = false, const std::string& note = {});
    SessionSummary summary(const std::string& session_id);

    const AnnotationInputs& inputs() const { return inputs_; }
    std::optional<std::filesystem::path> image_path(const ImageId& image_id) const;

private:
    struct Session;
    Session& session(const std::string& id);
    std::vector<Candidate> candidates_for(const Session& s, const ImageId& image_id) const;

    AnnotationInputs inputs_;
    CategoryPartition partition_;
    std::filesystem::path state_dir_;
    std::mutex mu_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
};

// Client payloads. The review payload carries no source information.
nlohmann::json review_item_json(const ReviewItem& item, const ClassCatalog& catalog,
                                const std::optional<std::string>& embedded_image_base64 = std::nullopt,
                                const std::string& media_type = {});
nlohmann::json decision_json(const DecisionResult& result, const ClassCatalog& catalog);
nlohmann::json summary_json(const SessionSummary& summary);

struct ServerOptions {
    std::string token;  // shared bearer token; empty = open
    std::optional<std::filesystem::path> static_dir;
};

/// HTTP front end: POST /sessions, GET /sessions/{id}/next,
/// POST /sessions/{id}/decisions, GET /sessions/{id}/summary,
/// GET /images/{image_id}, GET /catalog.
class AnnotatorServer {
public:
    AnnotatorServer(AnnotationService& service, ServerOptions options);
    ~AnnotatorServer();

    // Binds and serves until stop(); returns false if binding failed.
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port (for tests); serve with listen_after_bind().
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace classbench
