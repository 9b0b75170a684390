#include "classbench/analysis.hpp"

#include "classbench/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace classbench {

using nlohmann::json;

namespace {

// Rank 1 = largest value; equal values rank by name.
std::vector<std::size_t> rank_desc(const std::vector<double>& values, const std::vector<std::string>& names) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] > values[b];
        return names[a] < names[b];
    });
    std::vector<std::size_t> rank(values.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
    return rank;
}

std::string pct(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << 100.0 * v;
    return out.str();
}

std::optional<ClassId> value_for(const PredictionRecord& p, const std::string& protocol) {
    if (protocol == "cw" || protocol == "mc") return p.exact;
    if (protocol == "cw+" || protocol == "ow") return p.mapped;
    throw Error(ErrorCode::InvalidConfig, "unknown protocol '" + protocol + "'");
}

}  // namespace

DeltaTable delta_table(const std::vector<ScoredRun>& runs) {
    DeltaTable t;
    for (const auto& r : runs) {
        if (!r.imgt || !r.regt) throw Error(ErrorCode::UnscoredRun, r.name + " lacks an ImGT or ReGT score");
        DeltaRow row;
        row.name = r.name;
        row.imgt = r.imgt->per_category.at(Category::A).accuracy;
        row.regt = r.regt->per_category.at(Category::A).accuracy;
        row.delta = row.regt - row.imgt;
        for (const auto& [c, s] : r.imgt->per_category) row.imgt_by_category[c] = s.accuracy;
        for (const auto& [c, s] : r.regt->per_category) row.regt_by_category[c] = s.accuracy;
        t.rows.push_back(std::move(row));
    }

    std::vector<std::string> names;
    for (const auto& row : t.rows) names.push_back(row.name);
    auto assign = [&](const std::string& column, auto getter) {
        std::vector<double> values;
        for (const auto& row : t.rows) values.push_back(getter(row));
        const auto ranks = rank_desc(values, names);
        for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i].ranks[column] = ranks[i];
    };
    assign("imgt", [](const DeltaRow& r) { return r.imgt; });
    assign("regt", [](const DeltaRow& r) { return r.regt; });
    assign("delta", [](const DeltaRow& r) { return r.delta; });
    for (Category c : kAllCategories) {
        const bool everywhere = std::all_of(t.rows.begin(), t.rows.end(), [&](const DeltaRow& r) {
            return r.imgt_by_category.count(c) && r.regt_by_category.count(c);
        });
        if (!everywhere || c == Category::A) continue;
        const std::string cat(to_string(c));
        assign("imgt:" + cat, [c](const DeltaRow& r) { return r.imgt_by_category.at(c); });
        assign("regt:" + cat, [c](const DeltaRow& r) { return r.regt_by_category.at(c); });
    }
    std::sort(t.rows.begin(), t.rows.end(),
              [](const DeltaRow& a, const DeltaRow& b) { return a.ranks.at("regt") < b.ranks.at("regt"); });
    return t;
}

std::map<Category, OopRow> oop_breakdown(const std::vector<PredictionRecord>& predictions, const LabelStore& labels,
                                         const ClassCatalog& catalog, const CategoryPartition& partition) {
    std::map<Category, OopRow> rows;
    for (Category c : kAllCategories) rows[c].images = partition.count(c);
    for (const auto& p : predictions) {
        if (!partition.contains(p.image_id) || !p.oop) continue;
        const CategoryTag tag = partition.tag(p.image_id);
        const bool counts_correct = tag != CategoryTag::N && image_correct(p.mapped, p.image_id, labels, catalog);
        for (Category c : kAllCategories) {
            if (!in_category(tag, c)) continue;
            auto& row = rows[c];
            ++row.oop;
            if (counts_correct) ++row.mapped_correct;
            if (p.oop_kind) ++row.kinds[*p.oop_kind];
        }
    }
    for (auto& [c, row] : rows) {
        row.oop_rate = row.images ? static_cast<double>(row.oop) / static_cast<double>(row.images) : 0.0;
        if (c != Category::N && row.oop > 0) {
            row.mapped_correct_rate = static_cast<double>(row.mapped_correct) / static_cast<double>(row.oop);
        }
    }
    return rows;
}

std::map<std::size_t, PositionRow> position_accuracy(const RunRecord& record, const std::string& protocol,
                                                     const LabelStore& labels, const ClassCatalog& catalog) {
    const LabelStore imgt = labels.imgt_as_singletons();
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> correct;  // position -> (imgt, regt)
    std::map<std::size_t, PositionRow> rows;
    for (const auto& tr : record.trials) {
        for (const auto& b : tr.batches) {
            if (b.status != BatchStatus::Done) continue;
            for (const auto& p : b.predictions) {
                const auto v = value_for(p, protocol);
                auto& row = rows[p.position];
                ++row.count;
                if (p.oop) ++row.oop;
                auto& [im, re] = correct[p.position];
                if (image_correct(v, p.image_id, imgt, catalog)) ++im;
                if (image_correct(v, p.image_id, labels, catalog)) ++re;
            }
        }
    }
    for (auto& [pos, row] : rows) {
        const auto [im, re] = correct[pos];
        row.imgt = static_cast<double>(im) / static_cast<double>(row.count);
        row.regt = static_cast<double>(re) / static_cast<double>(row.count);
    }
    return rows;
}

std::string_view to_string(CorrelationBasis b) {
    return b == CorrelationBasis::RecallSpearman ? "recall-spearman" : "correctness-phi";
}

CorrelationBasis parse_correlation_basis(std::string_view s) {
    if (s == "recall-spearman" || s == "spearman") return CorrelationBasis::RecallSpearman;
    if (s == "correctness-phi" || s == "phi") return CorrelationBasis::CorrectnessPhi;
    throw Error(ErrorCode::InvalidConfig, "unknown correlation basis '" + std::string(s) + "'");
}

CorrelationMatrix correlation_matrix(const std::vector<CorrelationInput>& runs, CorrelationBasis basis,
                                     const LabelStore& labels, const ClassCatalog& catalog) {
    if (runs.size() < 2) throw Error(ErrorCode::DegenerateInput, "correlation needs at least two runs");
    CorrelationMatrix m;
    const std::size_t n = runs.size();
    m.values.assign(n, std::vector<double>(n, 0.0));
    for (const auto& r : runs) m.names.push_back(r.name);

    if (basis == CorrelationBasis::RecallSpearman) {
        std::vector<std::map<ClassId, double>> recall;
        for (const auto& r : runs) recall.push_back(per_class_recall(r.predictions, labels, catalog));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) m.values[i][j] = m.values[j][i] = spearman(recall[i], recall[j]);
        }
        return m;
    }

    // Images with at least one ReGT label, answered in every run's domain.
    std::vector<ImageId> domain;
    for (const auto& [img, set] : labels.regt) {
        if (!set.empty()) domain.push_back(img);
    }
    std::vector<CorrectnessVector> vecs;
    for (const auto& r : runs) vecs.push_back(correctness(r.predictions, labels, catalog, domain));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) m.values[i][j] = m.values[j][i] = phi(vecs[i], vecs[j]);
    }
    return m;
}

std::string_view to_string(CaseOutcome o) {
    switch (o) {
        case CaseOutcome::ReplacedByModel: return "ReplacedByModel";
        case CaseOutcome::PreservedReGT: return "PreservedReGT";
        case CaseOutcome::Combined: return "Combined";
        case CaseOutcome::Other: return "Other";
    }
    return "?";
}

std::optional<CaseOutcome> parse_case_outcome(std::string_view s) {
    for (auto o : {CaseOutcome::ReplacedByModel, CaseOutcome::PreservedReGT, CaseOutcome::Combined, CaseOutcome::Other}) {
        if (to_string(o) == s) return o;
    }
    return std::nullopt;
}

CaseOutcome classify_case_outcome(const LabelSet& chosen, const std::optional<ClassId>& model_prediction,
                                  const LabelSet& regt, const ClassCatalog& catalog) {
    const LabelSet expanded = admissible_labels(chosen, catalog);
    const bool has_pred = model_prediction && expanded.count(*model_prediction);
    const bool has_regt = std::any_of(regt.begin(), regt.end(), [&](ClassId c) { return expanded.count(c) != 0; });
    if (has_pred && has_regt) return CaseOutcome::Combined;
    if (has_pred) return CaseOutcome::ReplacedByModel;
    if (has_regt) return CaseOutcome::PreservedReGT;
    return CaseOutcome::Other;
}

std::map<CaseOutcome, std::size_t> tally_outcomes(const std::vector<CaseDecision>& decisions) {
    std::map<CaseOutcome, std::size_t> t{{CaseOutcome::ReplacedByModel, 0},
                                         {CaseOutcome::PreservedReGT, 0},
                                         {CaseOutcome::Combined, 0},
                                         {CaseOutcome::Other, 0}};
    for (const auto& d : decisions) ++t[d.outcome];
    return t;
}

// ---------------------------------------------------------------------------
// Emission

json report_json(const DeltaTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
        json im = json::object(), re = json::object();
        for (const auto& [c, v] : r.imgt_by_category) im[std::string(to_string(c))] = v;
        for (const auto& [c, v] : r.regt_by_category) re[std::string(to_string(c))] = v;
        rows.push_back({{"name", r.name},
                        {"imgt", r.imgt},
                        {"regt", r.regt},
                        {"delta", r.delta},
                        {"imgt_by_category", im},
                        {"regt_by_category", re},
                        {"ranks", r.ranks}});
    }
    return json{{"rows", rows}};
}

json report_json(const std::map<Category, OopRow>& rows) {
    json out = json::object();
    for (const auto& [c, r] : rows) {
        json kinds = json::object();
        for (const auto& [k, n] : r.kinds) kinds[std::string(to_string(k))] = n;
        out[std::string(to_string(c))] = {{"images", r.images},
                                          {"oop", r.oop},
                                          {"oop_rate", r.oop_rate},
                                          {"mapped_correct", r.mapped_correct},
                                          {"mapped_correct_rate", r.mapped_correct_rate ? json(*r.mapped_correct_rate)
                                                                                         : json(nullptr)},
                                          {"kinds", kinds}};
    }
    return out;
}

json report_json(const std::map<std::size_t, PositionRow>& rows) {
    json out = json::object();
    for (const auto& [pos, r] : rows) {
        out[std::to_string(pos)] = {{"count", r.count}, {"imgt", r.imgt}, {"regt", r.regt}, {"oop", r.oop}};
    }
    return out;
}

json report_json(const CorrelationMatrix& m) { return json{{"names", m.names}, {"values", m.values}}; }

json report_json(const std::map<CaseOutcome, std::size_t>& tally) {
    json out = json::object();
    for (const auto& [o, n] : tally) out[std::string(to_string(o))] = n;
    return out;
}

std::string report_text(const DeltaTable& t) {
    std::ostringstream out;
    out << std::left << std::setw(24) << "run" << std::right << std::setw(9) << "ImGT" << std::setw(9) << "ReGT"
        << std::setw(9) << "delta" << std::setw(6) << "#Im" << std::setw(6) << "#Re" << '\n';
    for (const auto& r : t.rows) {
        out << std::left << std::setw(24) << r.name << std::right << std::setw(9) << pct(r.imgt) << std::setw(9)
            << pct(r.regt) << std::setw(9) << (r.delta >= 0 ? "+" : "") + pct(r.delta) << std::setw(6)
            << r.ranks.at("imgt") << std::setw(6) << r.ranks.at("regt") << '\n';
    }
    return out.str();
}

std::string report_text(const std::map<Category, OopRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(5) << "cat" << std::right << std::setw(8) << "images" << std::setw(7) << "oop"
        << std::setw(9) << "rate%" << std::setw(9) << "mapped" << std::setw(9) << "ok%" << '\n';
    for (const auto& [c, r] : rows) {
        out << std::left << std::setw(5) << to_string(c) << std::right << std::setw(8) << r.images << std::setw(7)
            << r.oop << std::setw(9) << pct(r.oop_rate) << std::setw(9);
        if (c == Category::N) {
            out << "-" << std::setw(9) << "-";
        } else {
            out << r.mapped_correct << std::setw(9) << (r.mapped_correct_rate ? pct(*r.mapped_correct_rate) : "-");
        }
        out << '\n';
    }
    return out.str();
}

std::string report_text(const std::map<std::size_t, PositionRow>& rows) {
    std::ostringstream out;
    out << std::setw(5) << "pos" << std::setw(8) << "count" << std::setw(9) << "ImGT%" << std::setw(9) << "ReGT%"
        << std::setw(6) << "oop" << '\n';
    for (const auto& [pos, r] : rows) {
        out << std::setw(5) << pos << std::setw(8) << r.count << std::setw(9) << pct(r.imgt) << std::setw(9)
            << pct(r.regt) << std::setw(6) << r.oop << '\n';
    }
    return out.str();
}

std::string report_text(const CorrelationMatrix& m) {
    std::ostringstream out;
    out << std::setw(16) << "";
    for (const auto& n : m.names) out << std::setw(16) << n.substr(0, 15);
    out << '\n';
    for (std::size_t i = 0; i < m.names.size(); ++i) {
        out << std::left << std::setw(16) << m.names[i].substr(0, 15) << std::right;
        for (double v : m.values[i]) out << std::setw(16) << std::fixed << std::setprecision(4) << v;
        out << '\n';
    }
    return out.str();
}

std::string report_text(const std::map<CaseOutcome, std::size_t>& tally) {
    std::ostringstream out;
    std::size_t total = 0;
    for (const auto& [o, n] : tally) total += n;
    for (const auto& [o, n] : tally) {
        out << std::left << std::setw(18) << to_string(o) << std::right << std::setw(6) << n;
        if (total) out << std::setw(9) << pct(static_cast<double>(n) / static_cast<double>(total)) << '%';
        out << '\n';
    }
    return out.str();
}

}  // namespace classbench
