#include "classbench/metrics.hpp"

#include "classbench/error.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace classbench {

bool image_correct(const Prediction& prediction, const ImageId& image_id, const LabelStore& labels,
                   const ClassCatalog& catalog) {
    const auto it = labels.regt.find(image_id);
    if (it == labels.regt.end()) throw Error(ErrorCode::UnknownImage, image_id);
    if (it->second.empty()) return true;
    if (!prediction) return false;
    if (it->second.count(*prediction)) return true;
    for (ClassId a : it->second) {
        const auto& eq = catalog.equivalents(a);
        if (std::binary_search(eq.begin(), eq.end(), *prediction)) return true;
    }
    return false;
}

CorrectCount count_correct(const PredictionMap& predictions, const LabelStore& labels,
                           const ClassCatalog& catalog, const std::vector<ImageId>& subset) {
    if (subset.empty()) throw Error(ErrorCode::EmptySubset, "accuracy over an empty image set");
    CorrectCount c;
    for (const auto& img : subset) {
        const auto it = predictions.find(img);
        if (it == predictions.end()) throw Error(ErrorCode::MissingPrediction, img);
        if (image_correct(it->second, img, labels, catalog)) ++c.correct;
        ++c.total;
    }
    return c;
}

double accuracy(const PredictionMap& predictions, const LabelStore& labels, const ClassCatalog& catalog,
                const std::vector<ImageId>& subset) {
    return count_correct(predictions, labels, catalog, subset).fraction();
}

CorrectnessVector correctness(const PredictionMap& predictions, const LabelStore& labels,
                              const ClassCatalog& catalog, const std::vector<ImageId>& subset) {
    CorrectnessVector out;
    for (const auto& img : subset) {
        const auto it = predictions.find(img);
        if (it == predictions.end()) throw Error(ErrorCode::MissingPrediction, img);
        out[img] = image_correct(it->second, img, labels, catalog);
    }
    return out;
}

std::map<ClassId, double> per_class_recall(const PredictionMap& predictions, const LabelStore& labels,
                                           const ClassCatalog& catalog) {
    std::map<ClassId, std::pair<std::size_t, std::size_t>> tally;  // correct, total
    for (const auto& [img, set] : labels.regt) {
        if (set.size() != 1) continue;
        const auto it = predictions.find(img);
        const Prediction p = it == predictions.end() ? Prediction{} : it->second;
        auto& t = tally[*set.begin()];
        t.first += image_correct(p, img, labels, catalog) ? 1 : 0;
        t.second += 1;
    }
    std::map<ClassId, double> out;
    for (const auto& [c, t] : tally) out[c] = static_cast<double>(t.first) / static_cast<double>(t.second);
    return out;
}

Interval confidence_interval(const std::vector<double>& trial_values, double level) {
    const std::size_t k = trial_values.size();
    if (k < 2) throw Error(ErrorCode::TooFewTrials, "need at least 2 trials, got " + std::to_string(k));
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidConfig, "confidence level must be in (0,1)");
    if (std::all_of(trial_values.begin(), trial_values.end(), [&](double v) { return v == trial_values[0]; })) {
        return {trial_values[0], 0.0};
    }
    const double n = static_cast<double>(k);
    const double mean = std::accumulate(trial_values.begin(), trial_values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : trial_values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const boost::math::students_t dist(n - 1.0);
    const double t = boost::math::quantile(dist, (1.0 + level) / 2.0);
    return {mean, t * sd / std::sqrt(n)};
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw Error(ErrorCode::KeyMismatch, "pearson: length mismatch");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateInput, "constant input vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(const std::map<ClassId, double>& x, const std::map<ClassId, double>& y) {
    if (x.size() != y.size()) throw Error(ErrorCode::KeyMismatch, "spearman: key sets differ in size");
    if (x.size() < 3) throw Error(ErrorCode::DegenerateInput, "spearman needs at least 3 keys");
    std::vector<double> xs, ys;
    xs.reserve(x.size());
    ys.reserve(y.size());
    for (auto ix = x.begin(), iy = y.begin(); ix != x.end(); ++ix, ++iy) {
        if (ix->first != iy->first) throw Error(ErrorCode::KeyMismatch, "spearman: key sets differ");
        xs.push_back(ix->second);
        ys.push_back(iy->second);
    }
    return pearson(average_ranks(xs), average_ranks(ys));
}

double phi(const CorrectnessVector& a, const CorrectnessVector& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::KeyMismatch, "phi: key sets differ in size");
    double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first) throw Error(ErrorCode::KeyMismatch, "phi: key sets differ");
        if (ia->second && ib->second) ++n11;
        else if (ia->second) ++n10;
        else if (ib->second) ++n01;
        else ++n00;
    }
    const double denom = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00);
    if (denom == 0.0) throw Error(ErrorCode::DegenerateInput, "phi: constant correctness vector");
    return std::clamp((n11 * n00 - n10 * n01) / std::sqrt(denom), -1.0, 1.0);
}

ScoreReport score_predictions(const PredictionMap& predictions, const LabelStore& labels,
                              const ClassCatalog& catalog, const CategoryPartition& partition) {
    ScoreReport report;
    for (Category c : kAllCategories) {
        const auto subset = partition.images(c);
        if (subset.empty()) continue;
        const auto cc = count_correct(predictions, labels, catalog, subset);
        report.per_category[c] = CategoryScore{cc.fraction(), cc.total, cc.correct, std::nullopt};
    }
    return report;
}

ScoreReport aggregate_trials(const std::vector<ScoreReport>& trials, double level) {
    if (trials.empty()) throw Error(ErrorCode::TooFewTrials, "no trials to aggregate");
    if (trials.size() == 1) return trials.front();
    ScoreReport out;
    for (const auto& [cat, first] : trials.front().per_category) {
        std::vector<double> values;
        std::size_t correct = 0;
        for (const auto& t : trials) {
            const auto it = t.per_category.find(cat);
            if (it == t.per_category.end()) throw Error(ErrorCode::KeyMismatch, "category missing in a trial");
            values.push_back(it->second.accuracy);
            correct += it->second.correct;
        }
        const auto ci = confidence_interval(values, level);
        out.per_category[cat] = CategoryScore{ci.mean, first.count, correct, ci.halfwidth};
        if (cat == Category::A) out.trial_stats = TrialStats{ci.mean, ci.halfwidth, trials.size()};
    }
    double oop = 0.0;
    std::optional<double> both;
    for (const auto& t : trials) {
        oop += t.oop_rate;
        out.partial = out.partial || t.partial;
        if (t.both_correct) both = both.value_or(0.0) + *t.both_correct;
    }
    out.oop_rate = oop / static_cast<double>(trials.size());
    if (both) out.both_correct = *both / static_cast<double>(trials.size());
    return out;
}

void to_json(nlohmann::json& j, const ScoreReport& report) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [c, s] : report.per_category) {
        nlohmann::json e{{"accuracy", s.accuracy}, {"count", s.count}, {"correct", s.correct}};
        if (s.ci_halfwidth) e["ci_halfwidth"] = *s.ci_halfwidth;
        cats[std::string(to_string(c))] = std::move(e);
    }
    j = nlohmann::json{{"per_category", std::move(cats)}, {"oop_rate", report.oop_rate}, {"partial", report.partial}};
    if (report.trial_stats) {
        j["trial_stats"] = {{"mean", report.trial_stats->mean},
                            {"ci_halfwidth", report.trial_stats->ci_halfwidth},
                            {"trial_count", report.trial_stats->trial_count}};
    }
    if (report.both_correct) j["both_correct"] = *report.both_correct;
}

void from_json(const nlohmann::json& j, ScoreReport& report) {
    report = ScoreReport{};
    for (const auto& [key, e] : j.at("per_category").items()) {
        const auto cat = parse_category(key);
        if (!cat) throw Error(ErrorCode::ParseError, "unknown category " + key);
        CategoryScore s;
        s.accuracy = e.at("accuracy").get<double>();
        s.count = e.at("count").get<std::size_t>();
        s.correct = e.at("correct").get<std::size_t>();
        if (e.contains("ci_halfwidth")) s.ci_halfwidth = e["ci_halfwidth"].get<double>();
        report.per_category[*cat] = s;
    }
    report.oop_rate = j.at("oop_rate").get<double>();
    report.partial = j.at("partial").get<bool>();
    if (j.contains("trial_stats")) {
        const auto& t = j["trial_stats"];
        report.trial_stats = TrialStats{t.at("mean").get<double>(), t.at("ci_halfwidth").get<double>(),
                                        t.at("trial_count").get<std::size_t>()};
    }
    if (j.contains("both_correct")) report.both_correct = j["both_correct"].get<double>();
}

}  // namespace classbench
