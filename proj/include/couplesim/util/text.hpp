#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace couplesim::util {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

// Lowercase and collapse every whitespace run to one space; trims the ends.
std::string normalize_whitespace(std::string_view s);

// Lowercase, map every character other than [a-z0-9'] to a space, collapse
// runs and pad with one space on each side, so " word " lookups respect word
// boundaries. Curly apostrophes become straight ones.
std::string word_padded(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

}  // namespace couplesim::util
