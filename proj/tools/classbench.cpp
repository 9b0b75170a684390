// classbench command-line front end.

#include "classbench/analysis.hpp"
#include "classbench/annotator.hpp"
#include "classbench/digest.hpp"
#include "classbench/distractors.hpp"
#include "classbench/error.hpp"
#include "classbench/runner.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace classbench;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    out << text;
}

// Writes `<run>/analysis/<stem>.txt` and `.json`, echoing the text.
void emit(const fs::path& run_dir, const std::string& stem, const std::string& text, const json& j) {
    write_text(run_dir / "analysis" / (stem + ".txt"), text);
    write_text(run_dir / "analysis" / (stem + ".json"), j.dump(2) + "\n");
    std::cout << text;
}

std::string protocol_or_default(const RunRecord& rec, const std::string& protocol) {
    return protocol.empty() ? rec.config.protocols().front() : protocol;
}

const TrialRecord& trial_of(const RunRecord& rec, std::size_t trial) {
    if (trial >= rec.trials.size()) throw Error(ErrorCode::InvalidConfig, "run has no trial " + std::to_string(trial));
    return rec.trials[trial];
}

std::vector<PredictionRecord> records_of(const TrialRecord& tr) {
    std::vector<PredictionRecord> out;
    for (const auto& b : tr.batches) {
        if (b.status != BatchStatus::Done) continue;
        out.insert(out.end(), b.predictions.begin(), b.predictions.end());
    }
    return out;
}

void print_run(const RunRecord& rec) {
    std::size_t done = 0, failed = 0, pending = 0;
    for (const auto& tr : rec.trials) {
        for (const auto& b : tr.batches) {
            if (b.status == BatchStatus::Done) ++done;
            if (b.status == BatchStatus::Failed) ++failed;
            if (b.status == BatchStatus::Pending) ++pending;
        }
    }
    std::cout << "run " << rec.run_id << " at " << rec.run_dir.string() << '\n'
              << "batches: " << done << " done, " << failed << " failed, " << pending << " pending\n";
    if (rec.complete) std::cout << "digest " << run_digest(rec) << '\n';
    for (const auto& [protocol, ps] : rec.scores) {
        for (const auto& [variant, agg] : ps.aggregate) {
            std::cout << "== " << protocol << " / " << to_string(variant) << " ==\n" << format_score_table(agg);
        }
    }
}

// --- distractors audit ------------------------------------------------------

int audit_distractors(const RunRecord& rec) {
    if (rec.config.task != TaskKind::MultipleChoice) {
        throw Error(ErrorCode::InvalidConfig, rec.run_id + " is not a multiple-choice run");
    }
    const RunInputs inputs = load_inputs(rec.config);
    json problems = json::array();
    std::size_t items = 0, backfilled = 0;
    std::map<std::string, std::size_t> tags;
    for (const auto& tr : rec.trials) {
        for (const auto& item : tr.items) {
            ++items;
            ++tags[item.strategy_tag];
            if (item.strategy_tag.find("backfill") != std::string::npos) ++backfilled;
            auto flag = [&](const std::string& what) {
                problems.push_back({{"trial", tr.trial}, {"image_id", item.image_id}, {"problem", what}});
            };
            const std::set<ClassId> distinct(item.options.begin(), item.options.end());
            if (distinct.size() != item.options.size()) flag("repeated option");
            for (auto a : item.anchors) {
                if (!distinct.count(a)) flag("anchor " + inputs.catalog.name(a) + " missing");
            }
            if (item.anchors.empty() || item.answer_position >= item.options.size() ||
                item.options[item.answer_position] != item.anchors.front()) {
                flag("answer position does not hold the first anchor");
            }
            const auto exclusion = distractor_exclusion(item.image_id, rec.config.mc.anchors, inputs.labels,
                                                        inputs.catalog);
            const std::set<ClassId> anchors(item.anchors.begin(), item.anchors.end());
            for (auto o : item.options) {
                if (!anchors.count(o) && exclusion.count(o)) flag("excluded class " + inputs.catalog.name(o));
            }
        }
    }
    std::ostringstream txt;
    txt << "items " << items << ", backfilled " << backfilled << ", problems " << problems.size() << '\n';
    for (const auto& [tag, n] : tags) txt << "  " << tag << ": " << n << '\n';
    for (const auto& p : problems) txt << "  trial " << p["trial"] << ' ' << p["image_id"].get<std::string>() << ": "
                                       << p["problem"].get<std::string>() << '\n';
    emit(rec.run_dir, "distractors_audit", txt.str(),
         json{{"items", items}, {"backfilled", backfilled}, {"strategy_tags", tags}, {"problems", problems}});
    return problems.empty() ? 0 : 1;
}

// --- map --------------------------------------------------------------------

void show_mapping(const RunRecord& rec, std::size_t trial) {
    const RunInputs inputs = load_inputs(rec.config);
    const auto preds = records_of(trial_of(rec, trial));
    std::ostringstream txt;
    json rows = json::array();
    std::map<std::string, std::size_t> kinds;
    for (const auto& p : preds) {
        if (!p.oop) continue;
        const std::string kind = p.oop_kind ? std::string(to_string(*p.oop_kind)) : "-";
        ++kinds[kind];
        json row{{"image_id", p.image_id}, {"raw", p.raw.value_or("")}, {"kind", kind}};
        txt << p.image_id << '\t' << p.raw.value_or("") << '\t' << kind;
        if (p.mapped) {
            row["mapped"] = inputs.catalog.name(*p.mapped);
            row["similarity"] = p.similarity.value_or(0.0);
            txt << "\t-> " << inputs.catalog.name(*p.mapped) << " (" << p.similarity.value_or(0.0) << ')';
        }
        txt << '\n';
        rows.push_back(std::move(row));
    }
    txt << "out-of-prompt answers: " << rows.size() << " of " << preds.size() << '\n';
    for (const auto& [k, n] : kinds) txt << "  " << k << ": " << n << '\n';
    emit(rec.run_dir, "mapping", txt.str(), json{{"trial", trial}, {"rows", rows}, {"kinds", kinds}});
}

// --- case outcomes ----------------------------------------------------------

void case_outcomes(const RunRecord& rec, const fs::path& session_dir, const std::string& protocol) {
    const RunInputs inputs = load_inputs(rec.config);
    const auto preds = protocol_predictions(trial_of(rec, 0), protocol_or_default(rec, protocol), inputs.images);
    std::ifstream log(session_dir / "decisions.jsonl");
    if (!log) throw Error(ErrorCode::IoError, "no decisions.jsonl in " + session_dir.string());
    std::vector<CaseDecision> decisions;
    std::string line;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        CaseDecision d;
        d.image_id = j.at("image_id").get<std::string>();
        for (const auto& v : j.at("chosen")) d.chosen.insert(ClassId(v.get<std::uint32_t>()));
        const auto it = preds.find(d.image_id);
        const Prediction pred = it == preds.end() ? std::nullopt : it->second;
        const auto re = inputs.labels.regt.find(d.image_id);
        d.outcome = classify_case_outcome(d.chosen, pred, re == inputs.labels.regt.end() ? LabelSet{} : re->second,
                                          inputs.catalog);
        decisions.push_back(std::move(d));
    }
    const auto tally = tally_outcomes(decisions);
    emit(rec.run_dir, "case_outcomes", report_text(tally), report_json(tally));
}

// --- annotate-serve ---------------------------------------------------------

AnnotatorServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

std::map<ImageId, std::optional<ClassId>> primary_of(const RunRecord& rec, const RunInputs& inputs,
                                                     const std::string& protocol) {
    std::map<ImageId, std::optional<ClassId>> out;
    for (const auto& [img, p] : protocol_predictions(trial_of(rec, 0), protocol_or_default(rec, protocol),
                                                     inputs.images)) {
        out[img] = p;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"classbench: multilabel-aware evaluation harness for multimodal LLM classifiers"};
    app.require_subcommand(1);
    std::string runs_dir = "runs";
    app.add_option("--runs-dir", runs_dir, "Directory holding run directories")->capture_default_str();

    // run
    auto* run = app.add_subcommand("run", "Start a run from a config file");
    std::string config_path;
    bool no_cache = false;
    std::optional<std::size_t> max_batches;
    run->add_option("-c,--config", config_path, "Experiment config (TOML)")->required()->check(CLI::ExistingFile);
    run->add_flag("--no-cache", no_cache, "Bypass the chat response cache");
    run->add_option("--max-batches", max_batches, "Stop after this many batches (resume later)");

    // resume
    auto* resume = app.add_subcommand("resume", "Execute the pending batches of a run");
    std::string run_id;
    resume->add_option("run_id", run_id)->required();
    resume->add_option("--max-batches", max_batches, "Stop after this many batches");

    // score
    auto* score_cmd = app.add_subcommand("score", "Print the scores of a finished run");
    std::string labels = "regt", protocol;
    bool as_json = false;
    score_cmd->add_option("run_id", run_id)->required();
    score_cmd->add_option("--labels", labels)->check(CLI::IsMember({"regt", "imgt"}))->capture_default_str();
    score_cmd->add_option("--protocol", protocol, "cw, cw+, ow or mc (default: first of the run)");
    score_cmd->add_flag("--json", as_json);

    // distractors audit
    auto* distractors = app.add_subcommand("distractors", "Multiple-choice distractor tools");
    distractors->require_subcommand(1);
    auto* audit = distractors->add_subcommand("audit", "Check every MC item of a run");
    audit->add_option("run_id", run_id)->required();

    // map
    auto* map_cmd = app.add_subcommand("map", "List out-of-prompt answers and their mapped classes");
    std::size_t trial = 0;
    map_cmd->add_option("run_id", run_id)->required();
    map_cmd->add_option("--trial", trial)->capture_default_str();

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Cross-run reports written under <run>/analysis/");
    analyze->require_subcommand(1);
    std::vector<std::string> run_ids;
    auto* delta = analyze->add_subcommand("delta", "ImGT to ReGT accuracy deltas and ranks");
    delta->add_option("run_ids", run_ids)->required();
    delta->add_option("--protocol", protocol);
    auto* oop = analyze->add_subcommand("oop", "Out-of-prompt breakdown per category");
    oop->add_option("run_id", run_id)->required();
    oop->add_option("--protocol", protocol);
    oop->add_option("--trial", trial)->capture_default_str();
    auto* positions = analyze->add_subcommand("positions", "Accuracy by in-batch position");
    positions->add_option("run_id", run_id)->required();
    positions->add_option("--protocol", protocol);
    auto* correlate = analyze->add_subcommand("correlate", "Correlation matrix across runs");
    std::string basis = "spearman";
    correlate->add_option("run_ids", run_ids)->required();
    correlate->add_option("--basis", basis)->check(CLI::IsMember({"spearman", "phi", "recall-spearman",
                                                                  "correctness-phi"}));
    correlate->add_option("--protocol", protocol);
    auto* cases = analyze->add_subcommand("case-outcomes", "Tally second-pass decisions of a session");
    std::string session_dir;
    cases->add_option("run_id", run_id)->required();
    cases->add_option("--session-dir", session_dir, "Directory holding decisions.jsonl")->required();
    cases->add_option("--protocol", protocol);

    // annotate-serve
    auto* serve = app.add_subcommand("annotate-serve", "Serve the second-pass annotation API");
    std::string secondary_id, state_dir = "annotation-state", host = "127.0.0.1", token, static_dir;
    int port = 8080;
    serve->add_option("run_id", run_id, "Run whose predictions are reviewed")->required();
    serve->add_option("--secondary", secondary_id, "Run supplying a second candidate");
    serve->add_option("--protocol", protocol);
    serve->add_option("--state-dir", state_dir)->capture_default_str();
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--token", token, "Shared bearer token");
    std::size_t assist_k = 5;
    serve->add_option("--assist-k", assist_k, "Length of the top-k assist list")->capture_default_str();
    serve->add_option("--static", static_dir, "Built UI bundle to mount at /");

    // digest
    auto* digest = app.add_subcommand("digest", "SHA-256 of files");
    std::vector<std::string> files;
    digest->add_option("files", files)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path runs{runs_dir};
        if (*run) {
            auto cfg = load_experiment_config(config_path);
            if (no_cache) cfg.no_cache = true;
            auto env = make_environment(cfg);
            const auto rec = run_experiment(cfg, env, RunOptions{max_batches});
            print_run(rec);
            return rec.complete ? 0 : 3;
        }
        if (*resume) {
            const auto dir = find_run(runs, run_id);
            auto env = make_environment(load_run_config(dir));
            const auto rec = resume_run(dir, env, RunOptions{max_batches});
            print_run(rec);
            return rec.complete ? 0 : 3;
        }
        if (*score_cmd) {
            const auto rec = load_run(find_run(runs, run_id));
            const auto report = score(rec, load_inputs(rec.config), parse_labels_variant(labels), protocol);
            if (as_json) {
                std::cout << json(report).dump(2) << '\n';
            } else {
                std::cout << format_score_table(report);
            }
            return 0;
        }
        if (*audit) return audit_distractors(load_run(find_run(runs, run_id)));
        if (*map_cmd) {
            show_mapping(load_run(find_run(runs, run_id)), trial);
            return 0;
        }
        if (*delta) {
            std::vector<ScoredRun> scored;
            fs::path out_dir;
            for (const auto& id : run_ids) {
                const auto rec = load_run(find_run(runs, id));
                if (out_dir.empty()) out_dir = rec.run_dir;
                ScoredRun s{id, std::nullopt, std::nullopt};
                if (rec.complete) {
                    const auto inputs = load_inputs(rec.config);
                    s.imgt = score(rec, inputs, LabelsVariant::ImGT, protocol);
                    s.regt = score(rec, inputs, LabelsVariant::ReGT, protocol);
                }
                scored.push_back(std::move(s));
            }
            const auto table = delta_table(scored);
            emit(out_dir, "delta", report_text(table), report_json(table));
            return 0;
        }
        if (*oop) {
            const auto rec = load_run(find_run(runs, run_id));
            const auto inputs = load_inputs(rec.config);
            const auto rows = oop_breakdown(records_of(trial_of(rec, trial)), inputs.labels, inputs.catalog,
                                            inputs.partition);
            emit(rec.run_dir, "oop", report_text(rows), report_json(rows));
            return 0;
        }
        if (*positions) {
            const auto rec = load_run(find_run(runs, run_id));
            const auto inputs = load_inputs(rec.config);
            const auto rows = position_accuracy(rec, protocol_or_default(rec, protocol), inputs.labels, inputs.catalog);
            emit(rec.run_dir, "positions", report_text(rows), report_json(rows));
            return 0;
        }
        if (*correlate) {
            std::vector<CorrelationInput> in;
            std::optional<RunInputs> inputs;
            fs::path out_dir;
            for (const auto& id : run_ids) {
                const auto rec = load_run(find_run(runs, id));
                if (!inputs) {
                    inputs = load_inputs(rec.config);
                    out_dir = rec.run_dir;
                }
                in.push_back({id, protocol_predictions(trial_of(rec, 0), protocol_or_default(rec, protocol),
                                                       inputs->images)});
            }
            const auto m = correlation_matrix(in, parse_correlation_basis(basis), inputs->labels, inputs->catalog);
            emit(out_dir, "correlation_" + std::string(to_string(parse_correlation_basis(basis))), report_text(m),
                 report_json(m));
            return 0;
        }
        if (*cases) {
            case_outcomes(load_run(find_run(runs, run_id)), session_dir, protocol);
            return 0;
        }
        if (*serve) {
            const auto rec = load_run(find_run(runs, run_id));
            RunInputs ri = load_inputs(rec.config);
            AnnotationInputs ai;
            ai.primary = primary_of(rec, ri, protocol);
            std::vector<PredictionMap> votes;
            for (const auto& tr : rec.trials) {
                votes.push_back(protocol_predictions(tr, protocol_or_default(rec, protocol), ri.images));
            }
            if (!secondary_id.empty()) {
                const auto sec = load_run(find_run(runs, secondary_id));
                ai.secondary = primary_of(sec, ri, protocol);
                for (const auto& tr : sec.trials) {
                    votes.push_back(protocol_predictions(tr, protocol_or_default(sec, protocol), ri.images));
                }
            }
            ai.assist = assist_from_votes(votes, assist_k);
            ai.catalog = std::move(ri.catalog);
            ai.labels = std::move(ri.labels);
            ai.image_paths = std::move(ri.image_paths);
            AnnotationService service(std::move(ai), state_dir);
            ServerOptions opts{token, std::nullopt};
            if (!static_dir.empty()) opts.static_dir = fs::path(static_dir);
            AnnotatorServer server(service, opts);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving on http://" << host << ':' << port << std::endl;
            if (!server.listen(host, port)) {
                std::cerr << "error: cannot bind " << host << ':' << port << '\n';
                return 1;
            }
            g_server = nullptr;
            return 0;
        }
        if (*digest) {
            for (const auto& f : files) std::cout << sha256_hex(read_text(f)) << "  " << f << '\n';
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
