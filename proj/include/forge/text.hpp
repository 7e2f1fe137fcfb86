#pragma once

#include <string>
#include <vector>

namespace forge {

std::string to_lower(std::string s);
std::string trim(const std::string& s);

// Collapses runs of whitespace (including tabs/newlines) to single spaces
// and trims the ends.
std::string collapse_whitespace(const std::string& s);

// Splits on runs of non-alphanumeric characters; pieces are lowercased.
std::vector<std::string> split_words(const std::string& s);

std::string join(const std::vector<std::string>& parts, const std::string& sep);

std::string replace_all(std::string s, const std::string& from, const std::string& to);

// Case-insensitive substring search with word-ish boundaries: the match may
// not be flanked by alphanumeric characters. "Node" does not match inside
// "NodeJS" but does match in "the Node graph".
bool contains_token(const std::string& haystack, const std::string& needle);

} // namespace forge
