#pragma once

#include "classbench/labelspace.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace classbench {

// Missing value = the model gave no usable answer for the image.
using Prediction = std::optional<ClassId>;
using PredictionMap = std::map<ImageId, Prediction>;
using CorrectnessVector = std::map<ImageId, bool>;

bool image_correct(const Prediction& prediction, const ImageId& image_id, const LabelStore& labels,
                   const ClassCatalog& catalog);

struct CorrectCount {
    std::size_t correct = 0;
    std::size_t total = 0;
    double fraction() const { return static_cast<double>(correct) / static_cast<double>(total); }
};

// Counting form of accuracy(); the fraction is correct/total.
CorrectCount count_correct(const PredictionMap& predictions, const LabelStore& labels,
                           const ClassCatalog& catalog, const std::vector<ImageId>& subset);

double accuracy(const PredictionMap& predictions, const LabelStore& labels, const ClassCatalog& catalog,
                const std::vector<ImageId>& subset);

CorrectnessVector correctness(const PredictionMap& predictions, const LabelStore& labels,
                              const ClassCatalog& catalog, const std::vector<ImageId>& subset);

// Over single-label images only; images without a prediction entry count
// as unanswered.
std::map<ClassId, double> per_class_recall(const PredictionMap& predictions, const LabelStore& labels,
                                           const ClassCatalog& catalog);

struct Interval {
    double mean = 0.0;
    double halfwidth = 0.0;
};

// Student-t interval over trial values: mean +/- t_{(1+level)/2, k-1} s / sqrt(k).
Interval confidence_interval(const std::vector<double>& trial_values, double level = 0.95);

double spearman(const std::map<ClassId, double>& x, const std::map<ClassId, double>& y);
double phi(const CorrectnessVector& a, const CorrectnessVector& b);

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct CategoryScore {
    double accuracy = 0.0;
    std::size_t count = 0;
    std::size_t correct = 0;
    std::optional<double> ci_halfwidth;
};

struct TrialStats {
    double mean = 0.0;
    double ci_halfwidth = 0.0;
    std::size_t trial_count = 0;
};

struct ScoreReport {
    std::map<Category, CategoryScore> per_category;
    double oop_rate = 0.0;
    std::optional<TrialStats> trial_stats;
    // Fraction of A that is correct under both ImGT and ReGT (set when
    // both label sources were scored together).
    std::optional<double> both_correct;
    bool partial = false;
};

// Scores every category present in the partition; categories with no
// images are omitted.
ScoreReport score_predictions(const PredictionMap& predictions, const LabelStore& labels,
                              const ClassCatalog& catalog, const CategoryPartition& partition);

// Mean report over trials with per-category t intervals (k >= 2).
ScoreReport aggregate_trials(const std::vector<ScoreReport>& trials, double level = 0.95);

void to_json(nlohmann::json& j, const ScoreReport& report);
void from_json(const nlohmann::json& j, ScoreReport& report);

}  // namespace classbench
