#pragma once

#include "classbench/labelspace.hpp"
#include "classbench/mapper.hpp"
#include "classbench/metrics.hpp"
#include "classbench/runner.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace classbench {

// ---------------------------------------------------------------------------
// ImGT -> ReGT deltas

struct ScoredRun {
    std::string name;
    std::optional<ScoreReport> imgt;
    std::optional<ScoreReport> regt;
};

struct DeltaRow {
    std::string name;
    double imgt = 0.0;
    double regt = 0.0;
    double delta = 0.0;  // regt - imgt
    std::map<Category, double> imgt_by_category;
    std::map<Category, double> regt_by_category;
    // 1 = best. Keys: "imgt", "regt", "delta", "imgt:<cat>", "regt:<cat>".
    std::map<std::string, std::size_t> ranks;
};

struct DeltaTable {
    std::vector<DeltaRow> rows;  // sorted by ReGT accuracy, best first
};

// Ties in any column rank by name, so ranks do not depend on input order.
DeltaTable delta_table(const std::vector<ScoredRun>& runs);

// ---------------------------------------------------------------------------
// Out-of-prompt breakdown

struct OopRow {
    std::size_t images = 0;
    std::size_t oop = 0;
    double oop_rate = 0.0;
    // OOP answers whose mapped class is admissible. Not defined for N
    // (every answer on an unlabeled image is correct), so N contributes 0
    // and carries no rate.
    std::size_t mapped_correct = 0;
    std::optional<double> mapped_correct_rate;  // among this row's OOP answers
    std::map<OopKind, std::size_t> kinds;
};

std::map<Category, OopRow> oop_breakdown(const std::vector<PredictionRecord>& predictions, const LabelStore& labels,
                                         const ClassCatalog& catalog, const CategoryPartition& partition);

// ---------------------------------------------------------------------------
// Accuracy by in-batch position

struct PositionRow {
    std::size_t count = 0;
    double imgt = 0.0;
    double regt = 0.0;
    std::size_t oop = 0;
};

std::map<std::size_t, PositionRow> position_accuracy(const RunRecord& record, const std::string& protocol,
                                                     const LabelStore& labels, const ClassCatalog& catalog);

// ---------------------------------------------------------------------------
// Cross-run correlation

enum class CorrelationBasis { RecallSpearman, CorrectnessPhi };
std::string_view to_string(CorrelationBasis b);
CorrelationBasis parse_correlation_basis(std::string_view s);

struct CorrelationInput {
    std::string name;
    PredictionMap predictions;
};

struct CorrelationMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;
};

// Spearman over ReGT per-class recall (single-label images), or Phi over
// the correctness vectors of every image with at least one label.
CorrelationMatrix correlation_matrix(const std::vector<CorrelationInput>& runs, CorrelationBasis basis,
                                     const LabelStore& labels, const ClassCatalog& catalog);

// ---------------------------------------------------------------------------
// Second-pass case outcomes

enum class CaseOutcome { ReplacedByModel, PreservedReGT, Combined, Other };
std::string_view to_string(CaseOutcome o);
std::optional<CaseOutcome> parse_case_outcome(std::string_view s);

// Membership tests go through the equivalence expansion: a chosen label
// equivalent to the prediction counts as choosing the prediction.
CaseOutcome classify_case_outcome(const LabelSet& chosen, const std::optional<ClassId>& model_prediction,
                                  const LabelSet& regt, const ClassCatalog& catalog);

struct CaseDecision {
    ImageId image_id;
    std::vector<std::pair<std::string, LabelSet>> candidates;  // (source tag, labels)
    LabelSet chosen;
    CaseOutcome outcome = CaseOutcome::Other;
};

std::map<CaseOutcome, std::size_t> tally_outcomes(const std::vector<CaseDecision>& decisions);

// ---------------------------------------------------------------------------
// Report emission: aligned text plus key-sorted JSON.

nlohmann::json report_json(const DeltaTable& t);
nlohmann::json report_json(const std::map<Category, OopRow>& rows);
nlohmann::json report_json(const std::map<std::size_t, PositionRow>& rows);
nlohmann::json report_json(const CorrelationMatrix& m);
nlohmann::json report_json(const std::map<CaseOutcome, std::size_t>& tally);

std::string report_text(const DeltaTable& t);
std::string report_text(const std::map<Category, OopRow>& rows);
std::string report_text(const std::map<std::size_t, PositionRow>& rows);
std::string report_text(const CorrelationMatrix& m);
std::string report_text(const std::map<CaseOutcome, std::size_t>& tally);

}  // namespace classbench
