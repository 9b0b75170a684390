#pragma once

#include "classbench/distractors.hpp"
#include "classbench/labelspace.hpp"
#include "classbench/mapper.hpp"
#include "classbench/metrics.hpp"
#include "classbench/modelgate.hpp"
#include "classbench/tasks.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace classbench {

struct McConfig {
    std::optional<DistractorStrategy> strategy;
    AnchorMode anchors = AnchorMode::ImGT;
    std::filesystem::path confusion;
    std::size_t per_anchor_slots = 1;
    std::size_t options = 4;
};

struct ExperimentConfig {
    std::string name;
    TaskKind task = TaskKind::ClosedWorld;
    // CW only: resolve out-of-prompt answers through the encoder as well,
    // producing CW+ scores next to plain CW.
    bool map_oop = false;
    ResponseFormat response_format = ResponseFormat::ClassName;
    BackendStyle backend_style = BackendStyle::Instructed;
    std::size_t batch_size = 1;
    std::size_t batch_limit = kDefaultBatchLimit;
    Ordering ordering = Ordering::RandomMixed;
    std::size_t trials = 1;
    std::uint64_t seed = 0;
    std::string backend;
    std::string encoder;
    bool no_cache = false;
    std::size_t concurrency = 4;
    double temperature = 0.0;
    int max_tokens = 4096;
    bool normalize_each_template = true;
    McConfig mc;

    std::filesystem::path catalog;
    std::filesystem::path imgt;
    std::filesystem::path regt;
    std::filesystem::path manifest;
    std::filesystem::path output_dir;
    std::filesystem::path backends;  // backend config TOML
    std::filesystem::path cache_dir;
    std::optional<std::filesystem::path> templates;
    std::optional<std::filesystem::path> abstain;
    std::optional<std::filesystem::path> prompts_dir;

    // Verbatim source, where it came from and its SHA-256.
    std::string source_text;
    std::filesystem::path source_path;
    std::string source_digest;

    std::string run_id() const;
    // Protocol names scored by this config: cw, cw+, ow or mc.
    std::vector<std::string> protocols() const;
    void validate() const;
};

ExperimentConfig parse_experiment_config(std::string_view toml_text, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// `image_id<TAB>file-path` lines, relative paths against the manifest's
// directory. Order is preserved.
std::vector<std::pair<ImageId, std::filesystem::path>> load_manifest(const std::filesystem::path& path);

struct RunInputs {
    ClassCatalog catalog;
    LabelStore labels;  // restricted to the manifest's images
    CategoryPartition partition;
    std::vector<ImageId> images;
    std::map<ImageId, std::filesystem::path> image_paths;
};

RunInputs load_inputs(const ExperimentConfig& config);

struct PredictionRecord {
    ImageId image_id;
    std::size_t trial = 0;
    std::size_t batch = 0;
    std::size_t position = 1;  // 1-based slot inside the batch
    std::optional<std::string> raw;  // absent: the response had no answer for this image
    std::optional<ClassId> exact;    // direct catalog match (or chosen MC option)
    bool oop = false;
    std::optional<OopKind> oop_kind;
    std::optional<ClassId> mapped;   // exact, else embedding nearest neighbour
    std::optional<double> similarity;
};

void to_json(nlohmann::json& j, const PredictionRecord& r);
void from_json(const nlohmann::json& j, PredictionRecord& r);

enum class BatchStatus { Pending, Done, Failed };
std::string_view to_string(BatchStatus s);

struct BatchRecord {
    std::size_t index = 0;
    std::vector<ImageId> images;
    BatchStatus status = BatchStatus::Pending;
    std::string cache_key;
    std::string response;  // verbatim model text
    std::vector<PredictionRecord> predictions;
};

struct TrialRecord {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    BatchPlan plan;
    std::vector<MCItem> items;  // MC runs only, in plan order
    std::vector<BatchRecord> batches;
};

enum class LabelsVariant { ImGT, ReGT };
std::string_view to_string(LabelsVariant v);
LabelsVariant parse_labels_variant(std::string_view s);

struct ProtocolScores {
    std::map<LabelsVariant, std::vector<ScoreReport>> per_trial;
    std::map<LabelsVariant, ScoreReport> aggregate;
};

struct RunRecord {
    std::string run_id;
    std::filesystem::path run_dir;
    ExperimentConfig config;
    std::vector<TrialRecord> trials;
    std::map<std::string, ProtocolScores> scores;  // empty until every batch is terminal
    bool partial = false;    // some batch failed
    bool complete = false;   // no batch pending
};

// Chat gateway and (optionally) the text encoder used for mapping and for
// embedding-neighbour distractors.
struct RunEnvironment {
    std::shared_ptr<ModelGateway> gateway;
    std::shared_ptr<Embedder> embedder;
};

// Registers the configured chat backend (with a disk cache under
// cache_dir) and wraps the configured encoder in a caching embedder.
RunEnvironment make_environment(const ExperimentConfig& config);

struct RunOptions {
    // Stop after executing this many batches, leaving the rest pending.
    // Simulates an interrupted process.
    std::optional<std::size_t> max_batches;
};

RunRecord run_experiment(const ExperimentConfig& config, RunEnvironment& env, const RunOptions& options = {});

// Reads the snapshot of a run, refusing with ConfigDrift if the original
// config file has been edited since.
ExperimentConfig load_run_config(const std::filesystem::path& run_dir);

RunRecord resume_run(const std::filesystem::path& run_dir, RunEnvironment& env, const RunOptions& options = {});

// Frozen record as persisted, with scores recomputed when complete.
RunRecord load_run(const std::filesystem::path& run_dir);

std::filesystem::path find_run(const std::filesystem::path& runs_dir, const std::string& run_id);

// Per-image predictions for one protocol in one trial; every manifest
// image has an entry, unanswered ones hold nullopt.
PredictionMap protocol_predictions(const TrialRecord& trial, const std::string& protocol,
                                   const std::vector<ImageId>& images);

std::map<std::string, ProtocolScores> score_run(const RunRecord& record, const RunInputs& inputs);

// Aggregate report for one protocol under one label source; the first
// protocol of the config when `protocol` is empty.
ScoreReport score(const RunRecord& record, const RunInputs& inputs, LabelsVariant labels,
                  const std::string& protocol = {});

// Aligned per-category text table.
std::string format_score_table(const ScoreReport& report);

// SHA-256 over the canonical JSON of the record, excluding timings and
// failure messages.
std::string run_digest(const RunRecord& record);
nlohmann::json record_json(const RunRecord& record);

}  // namespace classbench
