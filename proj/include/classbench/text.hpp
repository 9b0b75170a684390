#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace classbench::text {

// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
std::string normalize_name(std::string_view s);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

// Lowercased words with ASCII punctuation removed; apostrophes vanish
// ("don't" -> "dont"), other punctuation separates words.
std::vector<std::string> words(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace classbench::text
