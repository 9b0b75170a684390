#pragma once

// Fixture builders shared by the unit and acceptance tests.

#include "classbench/labelspace.hpp"
#include "classbench/metrics.hpp"
#include "classbench/rng.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace classbench::testing {

// Catalog with classes named "class 0", "class 1", ... and the given pairs.
inline ClassCatalog numbered_catalog(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs = {}) {
    std::vector<ClassEntry> entries;
    for (std::uint32_t i = 0; i < n; ++i) entries.push_back({ClassId(i), "class " + std::to_string(i), {}});
    std::vector<std::pair<ClassId, ClassId>> e;
    for (auto [a, b] : pairs) e.emplace_back(ClassId(a), ClassId(b));
    return ClassCatalog::build(std::move(entries), e);
}

inline ClassCatalog named_catalog(const std::vector<std::string>& names,
                                  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs = {}) {
    std::vector<ClassEntry> entries;
    for (std::uint32_t i = 0; i < names.size(); ++i) entries.push_back({ClassId(i), names[i], {}});
    std::vector<std::pair<ClassId, ClassId>> e;
    for (auto [a, b] : pairs) e.emplace_back(ClassId(a), ClassId(b));
    return ClassCatalog::build(std::move(entries), e);
}

inline std::vector<std::pair<std::uint32_t, std::uint32_t>> random_pairs(Rng& rng, std::size_t n_classes,
                                                                         std::size_t count) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto a = static_cast<std::uint32_t>(rng.below(n_classes));
        auto b = static_cast<std::uint32_t>(rng.below(n_classes - 1));
        if (b >= a) ++b;
        out.emplace_back(a, b);
    }
    return out;
}

// Image ids "i000", "i001", ...; ReGT sizes 0..max_regt, sometimes containing gt.
inline LabelStore random_store(Rng& rng, std::size_t n_images, std::size_t n_classes, std::size_t max_regt = 3) {
    LabelStore store;
    for (std::size_t i = 0; i < n_images; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "i%03zu", i);
        const ClassId gt(static_cast<std::uint32_t>(rng.below(n_classes)));
        store.imgt[id] = gt;
        LabelSet set;
        const auto k = rng.below(max_regt + 1);
        for (std::uint64_t j = 0; j < k; ++j) set.insert(ClassId(static_cast<std::uint32_t>(rng.below(n_classes))));
        if (!set.empty() && rng.below(2) == 0) set.insert(gt);
        store.regt[id] = std::move(set);
    }
    return store;
}

inline PredictionMap random_predictions(Rng& rng, const LabelStore& store, std::size_t n_classes) {
    PredictionMap out;
    for (const auto& [img, gt] : store.imgt) {
        switch (rng.below(4)) {
            case 0: out[img] = std::nullopt; break;
            case 1: out[img] = gt; break;
            default: out[img] = ClassId(static_cast<std::uint32_t>(rng.below(n_classes)));
        }
    }
    return out;
}

inline std::vector<ImageId> all_images(const LabelStore& store) {
    std::vector<ImageId> out;
    for (const auto& [img, _] : store.imgt) out.push_back(img);
    return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::to_string(::getpid()) + "-" + std::to_string(counter++);
        path_ = std::filesystem::temp_directory_path() / ("classbench-test-" + stamp);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace classbench::testing
