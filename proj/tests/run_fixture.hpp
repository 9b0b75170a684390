#pragma once

// A self-contained experiment on disk: catalog, labels, manifest, image
// files and a config, answered by a scripted backend keyed on image bytes.

#include "classbench/modelgate.hpp"
#include "classbench/runner.hpp"
#include "support.hpp"

#include <map>
#include <memory>
#include <sstream>
#include <string>

namespace classbench::testing {

class RunFixture {
public:
    // `answers` maps image ids to the text the scripted model gives for them;
    // unlisted images get no answer.
    RunFixture(ClassCatalog catalog, LabelStore labels, std::map<ImageId, std::string> answers)
        : catalog_(std::move(catalog)), labels_(std::move(labels)), answers_(std::move(answers)) {
        std::ostringstream cat;
        write_catalog(cat, catalog_);
        write_file(dir_ / "catalog.tsv", cat.str());
        std::string imgt, regt, manifest;
        for (const auto& [img, gt] : labels_.imgt) {
            imgt += img + "\t" + std::to_string(gt.value) + "\n";
            regt += img + "\t";
            bool first = true;
            for (auto c : labels_.regt.at(img)) {
                regt += (first ? "" : ",") + std::to_string(c.value);
                first = false;
            }
            regt += "\n";
            manifest += img + "\timages/" + img + ".png\n";
            write_file(dir_ / ("images/" + img + ".png"), image_bytes(img));
        }
        write_file(dir_ / "imgt.tsv", imgt);
        write_file(dir_ / "regt.tsv", regt);
        write_file(dir_ / "manifest.tsv", manifest);
    }

    static std::string image_bytes(const ImageId& img) { return "image:" + img; }

    const std::filesystem::path& root() const { return dir_.path(); }
    const ClassCatalog& catalog() const { return catalog_; }
    const LabelStore& labels() const { return labels_; }

    // Writes `<file>.toml` holding `body` plus a [paths] table and loads it.
    ExperimentConfig config(const std::string& body, const std::string& file = "experiment",
                            const std::string& output_dir = "runs") const {
        const std::string text = body +
                                 "\n[paths]\ncatalog = \"catalog.tsv\"\nimgt = \"imgt.tsv\"\nregt = \"regt.tsv\"\n"
                                 "manifest = \"manifest.tsv\"\noutput_dir = \"" +
                                 output_dir + "\"\ncache_dir = \"cache-" + file + "\"\n";
        const auto path = dir_ / (file + ".toml");
        write_file(path, text);
        return load_experiment_config(path);
    }

    // Fresh gateway and encoder. The gateway caches under the config's cache_dir.
    RunEnvironment environment(const ExperimentConfig& cfg) const {
        std::map<std::string, std::string> script;
        for (const auto& [img, answer] : answers_) script[ImagePayload{image_bytes(img), "image/png"}.digest()] = answer;
        RunEnvironment env;
        env.gateway = std::make_shared<ModelGateway>(cfg.cache_dir / "chat");
        env.gateway->set_sleeper([](std::chrono::milliseconds) {});
        env.gateway->add_backend("scripted", std::make_shared<ScriptedChatBackend>(std::move(script)));
        env.embedder = std::make_shared<HashingEmbedder>("hash", 256);
        return env;
    }

    RunInputs inputs(const ExperimentConfig& cfg) const { return load_inputs(cfg); }

private:
    TempDir dir_;
    ClassCatalog catalog_;
    LabelStore labels_;
    std::map<ImageId, std::string> answers_;
};

}  // namespace classbench::testing
