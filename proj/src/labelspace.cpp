#include "classbench/labelspace.hpp"

#include "classbench/error.hpp"
#include "classbench/text.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace classbench {

namespace {

std::uint32_t parse_id(std::string_view s, std::size_t line_no) {
    s = text::trim(s);
    std::uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line_no) + ": bad class id '" + std::string(s) + "'");
    }
    return v;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return in;
}

// Strips a trailing '\r' so files edited on Windows still parse.
void chomp(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

ClassCatalog ClassCatalog::build(std::vector<ClassEntry> entries,
                                 const std::vector<std::pair<ClassId, ClassId>>& equivalence) {
    std::sort(entries.begin(), entries.end(),
              [](const ClassEntry& a, const ClassEntry& b) { return a.id < b.id; });
    ClassCatalog cat;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].id.value != i) {
            throw Error(ErrorCode::ParseError,
                        "class ids must be contiguous from 0; missing or repeated id near " +
                            std::to_string(entries[i].id.value));
        }
        const std::string key = text::normalize_name(entries[i].canonical_name);
        if (key.empty()) throw Error(ErrorCode::ParseError, "empty class name for id " + std::to_string(i));
        if (!cat.by_name_.emplace(key, entries[i].id).second) {
            throw Error(ErrorCode::DuplicateName, "'" + key + "' appears more than once");
        }
    }
    cat.entries_ = std::move(entries);
    cat.neighbors_.resize(cat.entries_.size());
    for (auto [a, b] : equivalence) {
        if (!cat.contains(a) || !cat.contains(b)) {
            throw Error(ErrorCode::DanglingEquivalencePair,
                        "{" + std::to_string(a.value) + "," + std::to_string(b.value) + "}");
        }
        if (a == b) {
            throw Error(ErrorCode::ParseError, "self equivalence for id " + std::to_string(a.value));
        }
        if (b < a) std::swap(a, b);
        if (cat.pairs_.emplace(a, b).second) {
            cat.neighbors_[a.value].push_back(b);
            cat.neighbors_[b.value].push_back(a);
        }
    }
    for (auto& n : cat.neighbors_) std::sort(n.begin(), n.end());
    return cat;
}

const ClassEntry& ClassCatalog::entry(ClassId id) const {
    if (!contains(id)) throw Error(ErrorCode::UnknownClass, std::to_string(id.value));
    return entries_[id.value];
}

std::optional<ClassId> ClassCatalog::find_by_name(std::string_view raw) const {
    const auto it = by_name_.find(text::normalize_name(raw));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> ClassCatalog::all_alt_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.insert(out.end(), e.alt_names.begin(), e.alt_names.end());
    return out;
}

const std::vector<ClassId>& ClassCatalog::equivalents(ClassId id) const {
    if (!contains(id)) throw Error(ErrorCode::UnknownClass, std::to_string(id.value));
    return neighbors_[id.value];
}

ClassCatalog ClassCatalog::with_pair(ClassId a, ClassId b) const {
    std::vector<std::pair<ClassId, ClassId>> pairs(pairs_.begin(), pairs_.end());
    pairs.emplace_back(a, b);
    return build(entries_, pairs);
}

ClassCatalog parse_catalog(std::istream& in) {
    std::vector<ClassEntry> entries;
    std::vector<std::pair<ClassId, ClassId>> pairs;
    bool in_equiv = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        chomp(line);
        if (text::trim(line).empty()) continue;
        if (text::trim(line) == "#EQUIV") {
            in_equiv = true;
            continue;
        }
        if (line[0] == '#') continue;
        const auto fields = text::split(line, '\t');
        if (in_equiv) {
            if (fields.size() != 2) {
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected idA<TAB>idB");
            }
            pairs.emplace_back(ClassId(parse_id(fields[0], line_no)), ClassId(parse_id(fields[1], line_no)));
            continue;
        }
        if (fields.size() < 2 || fields.size() > 3) {
            throw Error(ErrorCode::ParseError,
                        "line " + std::to_string(line_no) + ": expected id<TAB>name[<TAB>alts]");
        }
        ClassEntry e;
        e.id = ClassId(parse_id(fields[0], line_no));
        e.canonical_name = std::string(text::trim(fields[1]));
        if (fields.size() == 3 && !text::trim(fields[2]).empty()) {
            for (const auto& alt : text::split(fields[2], '|')) {
                const auto t = text::trim(alt);
                if (!t.empty()) e.alt_names.emplace_back(t);
            }
        }
        entries.push_back(std::move(e));
    }
    return ClassCatalog::build(std::move(entries), pairs);
}

ClassCatalog load_catalog(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse_catalog(in);
}

void write_catalog(std::ostream& out, const ClassCatalog& catalog) {
    for (const auto& e : catalog.entries()) {
        out << e.id.value << '\t' << e.canonical_name << '\t' << text::join(e.alt_names, "|") << '\n';
    }
    out << "#EQUIV\n";
    for (const auto& [a, b] : catalog.equivalence()) out << a.value << '\t' << b.value << '\n';
}

void LabelStore::validate(const ClassCatalog& catalog) const {
    for (const auto& [img, c] : imgt) {
        if (!catalog.contains(c)) throw Error(ErrorCode::UnknownClass, img + " -> " + std::to_string(c.value));
    }
    for (const auto& [img, set] : regt) {
        for (ClassId c : set) {
            if (!catalog.contains(c)) throw Error(ErrorCode::UnknownClass, img + " -> " + std::to_string(c.value));
        }
    }
}

LabelStore LabelStore::imgt_as_singletons() const {
    LabelStore out;
    out.imgt = imgt;
    for (const auto& [img, c] : imgt) out.regt[img] = LabelSet{c};
    return out;
}

std::map<ImageId, ClassId> parse_imgt(std::istream& in) {
    std::map<ImageId, ClassId> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        chomp(line);
        if (text::trim(line).empty()) continue;
        const auto fields = text::split(line, '\t');
        if (fields.size() != 2 || text::trim(fields[0]).empty()) {
            throw Error(ErrorCode::ParseError, "imgt line " + std::to_string(line_no));
        }
        const std::string img(text::trim(fields[0]));
        if (!out.emplace(img, ClassId(parse_id(fields[1], line_no))).second) {
            throw Error(ErrorCode::ParseError, "duplicate image " + img);
        }
    }
    return out;
}

std::map<ImageId, LabelSet> parse_regt(std::istream& in) {
    std::map<ImageId, LabelSet> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        chomp(line);
        if (text::trim(line).empty()) continue;
        const auto fields = text::split(line, '\t');
        if (fields.empty() || fields.size() > 2 || text::trim(fields[0]).empty()) {
            throw Error(ErrorCode::ParseError, "regt line " + std::to_string(line_no));
        }
        LabelSet set;
        if (fields.size() == 2 && !text::trim(fields[1]).empty()) {
            for (const auto& id : text::split(fields[1], ',')) set.insert(ClassId(parse_id(id, line_no)));
        }
        const std::string img(text::trim(fields[0]));
        if (!out.emplace(img, std::move(set)).second) throw Error(ErrorCode::ParseError, "duplicate image " + img);
    }
    return out;
}

LabelStore load_labels(const std::filesystem::path& imgt_path, const std::filesystem::path& regt_path) {
    LabelStore store;
    auto a = open_or_throw(imgt_path);
    store.imgt = parse_imgt(a);
    auto b = open_or_throw(regt_path);
    store.regt = parse_regt(b);
    return store;
}

LabelSet admissible_labels(const LabelSet& labels, const ClassCatalog& catalog) {
    LabelSet out = labels;
    for (ClassId a : labels) {
        for (ClassId b : catalog.equivalents(a)) out.insert(b);
    }
    return out;
}

LabelSet admissible_labels(const ImageId& image_id, const LabelStore& labels, const ClassCatalog& catalog) {
    const auto it = labels.regt.find(image_id);
    if (it == labels.regt.end()) throw Error(ErrorCode::UnknownImage, image_id);
    return admissible_labels(it->second, catalog);
}

std::string_view to_string(CategoryTag tag) {
    switch (tag) {
        case CategoryTag::N: return "N";
        case CategoryTag::SPlus: return "S+";
        case CategoryTag::SMinus: return "S-";
        case CategoryTag::MPlus: return "M+";
        case CategoryTag::MMinus: return "M-";
    }
    return "?";
}

std::string_view to_string(Category c) {
    switch (c) {
        case Category::A: return "A";
        case Category::N: return "N";
        case Category::S: return "S";
        case Category::SPlus: return "S+";
        case Category::SMinus: return "S-";
        case Category::M: return "M";
        case Category::MPlus: return "M+";
        case Category::MMinus: return "M-";
    }
    return "?";
}

std::optional<Category> parse_category(std::string_view s) {
    for (Category c : kAllCategories) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

bool in_category(CategoryTag tag, Category category) {
    switch (category) {
        case Category::A: return true;
        case Category::N: return tag == CategoryTag::N;
        case Category::S: return tag == CategoryTag::SPlus || tag == CategoryTag::SMinus;
        case Category::SPlus: return tag == CategoryTag::SPlus;
        case Category::SMinus: return tag == CategoryTag::SMinus;
        case Category::M: return tag == CategoryTag::MPlus || tag == CategoryTag::MMinus;
        case Category::MPlus: return tag == CategoryTag::MPlus;
        case Category::MMinus: return tag == CategoryTag::MMinus;
    }
    return false;
}

CategoryTag CategoryPartition::tag(const ImageId& image_id) const {
    const auto it = membership_.find(image_id);
    if (it == membership_.end()) throw Error(ErrorCode::UnknownImage, image_id);
    return it->second;
}

std::vector<ImageId> CategoryPartition::images(Category category) const {
    std::vector<ImageId> out;
    for (const auto& [img, tag] : membership_) {
        if (in_category(tag, category)) out.push_back(img);
    }
    return out;
}

std::size_t CategoryPartition::count(Category category) const {
    return static_cast<std::size_t>(std::count_if(membership_.begin(), membership_.end(), [&](const auto& kv) {
        return in_category(kv.second, category);
    }));
}

CategoryTag classify_image(ClassId gt, const LabelSet& regt) {
    if (regt.empty()) return CategoryTag::N;
    const bool has_gt = regt.count(gt) != 0;
    if (regt.size() == 1) return has_gt ? CategoryTag::SPlus : CategoryTag::SMinus;
    return has_gt ? CategoryTag::MPlus : CategoryTag::MMinus;
}

CategoryPartition partition_categories(const LabelStore& labels) {
    std::map<ImageId, CategoryTag> membership;
    for (const auto& [img, set] : labels.regt) {
        const auto it = labels.imgt.find(img);
        if (it == labels.imgt.end()) throw Error(ErrorCode::MissingImGT, img);
        membership.emplace(img, classify_image(it->second, set));
    }
    return CategoryPartition(std::move(membership));
}

}  // namespace classbench
