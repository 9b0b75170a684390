#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace classbench {

// 0-based index into a ClassCatalog.
struct ClassId {
    std::uint32_t value = 0;

    constexpr ClassId() = default;
    constexpr explicit ClassId(std::uint32_t v) : value(v) {}
    constexpr auto operator<=>(const ClassId&) const = default;
};

using ImageId = std::string;
using LabelSet = std::set<ClassId>;

struct ClassEntry {
    ClassId id;
    std::string canonical_name;
    std::vector<std::string> alt_names;
};

/// The closed label space: ordered class entries plus the equivalence
/// pairs E. Immutable once constructed; all lookups are by normalized name.
class ClassCatalog {
public:
    ClassCatalog() = default;

    /// Validates contiguity of ids, uniqueness of normalized canonical names
    /// and that every pair references an existing class. Pairs are stored
    /// unordered ({a,b} == {b,a}); self-pairs are rejected.
    static ClassCatalog build(std::vector<ClassEntry> entries,
                              const std::vector<std::pair<ClassId, ClassId>>& equivalence);

    std::size_t size() const { return entries_.size(); }
    bool contains(ClassId id) const { return id.value < entries_.size(); }
    const ClassEntry& entry(ClassId id) const;
    const std::string& name(ClassId id) const { return entry(id).canonical_name; }
    const std::vector<ClassEntry>& entries() const { return entries_; }

    std::optional<ClassId> find_by_name(std::string_view raw) const;

    // Every alternative name across the catalog, in catalog order.
    std::vector<std::string> all_alt_names() const;

    const std::set<std::pair<ClassId, ClassId>>& equivalence() const { return pairs_; }
    // Classes paired with `id` in E (one hop).
    const std::vector<ClassId>& equivalents(ClassId id) const;

    // Copy with an extra pair; used by the monotonicity properties.
    ClassCatalog with_pair(ClassId a, ClassId b) const;

private:
    std::vector<ClassEntry> entries_;
    std::unordered_map<std::string, ClassId> by_name_;
    std::set<std::pair<ClassId, ClassId>> pairs_;
    std::vector<std::vector<ClassId>> neighbors_;
};

ClassCatalog parse_catalog(std::istream& in);
ClassCatalog load_catalog(const std::filesystem::path& path);
void write_catalog(std::ostream& out, const ClassCatalog& catalog);

struct LabelStore {
    std::map<ImageId, ClassId> imgt;
    std::map<ImageId, LabelSet> regt;

    // Throws UnknownClass if any label is outside the catalog.
    void validate(const ClassCatalog& catalog) const;

    // ImGT re-expressed as singleton multilabel sets, so that the same
    // scoring path handles both label sources.
    LabelStore imgt_as_singletons() const;
};

std::map<ImageId, ClassId> parse_imgt(std::istream& in);
std::map<ImageId, LabelSet> parse_regt(std::istream& in);
LabelStore load_labels(const std::filesystem::path& imgt_path, const std::filesystem::path& regt_path);

LabelSet admissible_labels(const LabelSet& labels, const ClassCatalog& catalog);
LabelSet admissible_labels(const ImageId& image_id, const LabelStore& labels,
                           const ClassCatalog& catalog);

enum class CategoryTag { N, SPlus, SMinus, MPlus, MMinus };

// Tags plus the derived aggregates A, S and M.
enum class Category { A, N, S, SPlus, SMinus, M, MPlus, MMinus };

inline constexpr Category kAllCategories[] = {Category::A,     Category::N,      Category::S,
                                              Category::SPlus, Category::SMinus, Category::M,
                                              Category::MPlus, Category::MMinus};

std::string_view to_string(CategoryTag tag);
std::string_view to_string(Category category);
std::optional<Category> parse_category(std::string_view s);
bool in_category(CategoryTag tag, Category category);

class CategoryPartition {
public:
    CategoryPartition() = default;
    explicit CategoryPartition(std::map<ImageId, CategoryTag> membership)
        : membership_(std::move(membership)) {}

    const std::map<ImageId, CategoryTag>& membership() const { return membership_; }
    CategoryTag tag(const ImageId& image_id) const;
    bool contains(const ImageId& image_id) const { return membership_.count(image_id) != 0; }

    std::vector<ImageId> images(Category category) const;
    std::size_t count(Category category) const;

private:
    std::map<ImageId, CategoryTag> membership_;
};

CategoryTag classify_image(ClassId gt, const LabelSet& regt);
CategoryPartition partition_categories(const LabelStore& labels);

}  // namespace classbench
