#pragma once

#include "classbench/labelspace.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace classbench {

enum class TaskKind { OpenWorld, MultipleChoice, ClosedWorld };
enum class ResponseFormat { ClassName, ClassIdFormat, Letter };

// How the backend receives the output structure: Enforced backends get a
// schema alongside the prompt (API-side structured output), Instructed
// backends rely on the prompt text alone.
enum class BackendStyle { Enforced, Instructed };

enum class Ordering { RandomMixed, SameClass };

std::string_view to_string(TaskKind v);
std::string_view to_string(ResponseFormat v);
std::string_view to_string(BackendStyle v);
std::string_view to_string(Ordering v);
TaskKind parse_task_kind(std::string_view s);
ResponseFormat parse_response_format(std::string_view s);
BackendStyle parse_backend_style(std::string_view s);
Ordering parse_ordering(std::string_view s);

inline constexpr std::size_t kDefaultBatchLimit = 50;
inline constexpr std::size_t kMaxOptions = 26;

struct PromptBundle {
    TaskKind task = TaskKind::ClosedWorld;
    std::string system_text;
    std::string per_request_text;
    std::vector<ImageId> image_refs;
    ResponseFormat response_format = ResponseFormat::ClassName;
    // MC only: letter of the correct option, keyed by image.
    std::map<ImageId, char> answer_key;
    // MC only: option strings in presentation order.
    std::vector<std::string> options;
    // JSON schema text for Enforced backends; empty otherwise.
    std::string structure_hint;
};

/// Prompt texts keyed by (task, backend style). The defaults are the
/// published prompt tables; a directory of overrides may replace any of
/// them (files named `<task>[_id]_<style>.txt`, e.g. `closed_world_instructed.txt`).
class PromptTemplates {
public:
    static PromptTemplates defaults();
    static PromptTemplates load(const std::filesystem::path& dir);

    const std::string& get(TaskKind task, BackendStyle style, bool id_format = false) const;
    void set(TaskKind task, BackendStyle style, std::string text, bool id_format = false);

private:
    std::map<std::string, std::string> texts_;
};

struct PromptOptions {
    BackendStyle style = BackendStyle::Instructed;
    std::size_t batch_limit = kDefaultBatchLimit;
    const PromptTemplates* templates = nullptr;  // null = defaults
};

// The `{class_list}` rendering: a JSON array of names, or one `id -- name`
// line per class for the ID response format.
std::string render_class_list(const ClassCatalog& catalog, ResponseFormat format);
std::string render_key_contract(std::size_t n_images);

PromptBundle build_cw_prompt(const ClassCatalog& catalog, const std::vector<ImageId>& batch, ResponseFormat format,
                             const PromptOptions& options = {});
PromptBundle build_ow_prompt(const std::vector<ImageId>& batch, const PromptOptions& options = {});
PromptBundle build_mc_prompt(const ImageId& image_id, const std::vector<std::string>& options,
                             std::size_t answer_index, const PromptOptions& prompt_options = {});

char option_letter(std::size_t index);

struct BatchPlan {
    std::vector<std::vector<ImageId>> batches;
    std::size_t batch_size = 1;
    Ordering ordering = Ordering::RandomMixed;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const BatchPlan& plan);
void from_json(const nlohmann::json& j, BatchPlan& plan);

BatchPlan compose_batches(const std::vector<ImageId>& images, const LabelStore& labels, std::size_t size,
                          Ordering ordering, std::uint64_t seed);

// Per-image raw answer text; images whose key is missing are absent.
std::map<ImageId, std::string> parse_response(std::string_view raw, const PromptBundle& bundle);

}  // namespace classbench
