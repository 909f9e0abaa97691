#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace hopforge::text {

/// Simple Unicode case fold over UTF-8 input. Covers ASCII, Latin-1,
/// Latin Extended-A, Greek and Cyrillic; other code points pass through.
std::string case_fold(std::string_view s);

/// Collapse runs of whitespace to one space and trim both ends.
std::string collapse_whitespace(std::string_view s);

/// Case fold + whitespace collapse + strip surrounding punctuation.
/// This is the lookup key for titles and aliases.
std::string canonicalize(std::string_view s);

/// Case-insensitive substring search; returns byte offset or npos.
std::size_t find_ci(std::string_view haystack, std::string_view needle, std::size_t from = 0);
bool contains_ci(std::string_view haystack, std::string_view needle);

/// Like contains_ci but the match must not sit inside a longer word.
bool contains_word_ci(std::string_view haystack, std::string_view needle);

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive

    friend bool operator==(const Span&, const Span&) = default;
};

/// Sentence boundaries inside a paragraph, in order. Handles common
/// abbreviations ("U.S.", "Mr.", "e.g.") and initials.
std::vector<Span> sentence_spans(std::string_view paragraph);
std::vector<std::string> split_sentences(std::string_view paragraph);

struct Token {
    std::string_view text;
    Span span;
};

/// Alphanumeric word tokens (UTF-8 bytes >= 0x80 count as word bytes).
std::vector<Token> word_tokens(std::string_view s);

std::size_t word_count(std::string_view s);

bool is_stopword(std::string_view lower_word);

/// Character-trigram Jaccard similarity of the canonical forms, in [0, 1].
double trigram_jaccard(std::string_view a, std::string_view b);

/// Filesystem-safe directory name for a title.
std::string slug(std::string_view title);

/// Code-point index -> byte offset in UTF-8 text; npos when out of range.
std::size_t byte_offset(std::string_view s, std::size_t code_points);
std::size_t code_point_index(std::string_view s, std::size_t byte);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Replace every case-insensitive occurrence of `from`.
std::string replace_all_ci(std::string_view s, std::string_view from, std::string_view to);

}  // namespace hopforge::text
