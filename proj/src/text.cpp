#include <hopforge/text.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <unordered_set>

namespace hopforge::text {

namespace {

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Length-preserving simple lowercase mapping for a code point. Every mapping
// here keeps the UTF-8 byte length unchanged so byte offsets survive folding.
char32_t fold_code_point(char32_t cp) {
    if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    if (cp >= 0x100 && cp <= 0x137 && cp != 0x130 && (cp % 2 == 0)) return cp + 1;
    if (cp >= 0x139 && cp <= 0x148 && (cp % 2 == 1)) return cp + 1;
    if (cp >= 0x14A && cp <= 0x177 && (cp % 2 == 0)) return cp + 1;
    if (cp == 0x178) return 0xFF;
    if (cp == 0x179 || cp == 0x17B || cp == 0x17D) return cp + 1;
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 0x20;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

bool is_upper_start(std::string_view s, std::size_t i) {
    if (i >= s.size()) return false;
    auto c = static_cast<unsigned char>(s[i]);
    return std::isupper(c) || std::isdigit(c) || c == '"' || c == '\'' || c == '(' || c >= 0x80;
}

const std::unordered_set<std::string>& abbreviations() {
    static const std::unordered_set<std::string> kAbbrev = {
        "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e",
        "inc", "ltd", "co", "corp", "no", "jan", "feb", "mar", "apr", "jun", "jul",
        "aug", "sep", "sept", "oct", "nov", "dec", "gen", "col", "lt", "mt", "ft"};
    return kAbbrev;
}

}  // namespace

std::string case_fold(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        if (c < 0x80) {
            out.push_back(static_cast<char>(std::tolower(c)));
            ++i;
            continue;
        }
        std::size_t len = (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
        if (i + len > s.size() || len == 1) {
            out.push_back(static_cast<char>(c));
            ++i;
            continue;
        }
        char32_t cp = len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
        bool valid = true;
        for (std::size_t k = 1; k < len; ++k) {
            auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) {
                valid = false;
                break;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (!valid) {
            out.push_back(static_cast<char>(c));
            ++i;
            continue;
        }
        append_utf8(out, fold_code_point(cp));
        i += len;
    }
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char ch : s) {
        if (is_ascii_space(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(ch);
    }
    return out;
}

std::string canonicalize(std::string_view s) {
    std::string out = collapse_whitespace(case_fold(s));
    auto strippable = [&](char ch, bool leading) {
        auto c = static_cast<unsigned char>(ch);
        if (c == ' ') return true;
        if (c >= 0x80 || std::ispunct(c) == 0) return false;
        // Keep parentheses that belong to a balanced qualifier, e.g. "Saiyuki (TV series)".
        if (!leading && c == ')') return out.find('(') == std::string::npos;
        if (leading && c == '(') return out.find(')') == std::string::npos;
        return true;
    };
    std::size_t b = 0;
    while (b < out.size() && strippable(out[b], true)) ++b;
    std::size_t e = out.size();
    while (e > b && strippable(out[e - 1], false)) --e;
    return out.substr(b, e - b);
}

std::size_t find_ci(std::string_view haystack, std::string_view needle, std::size_t from) {
    if (needle.empty()) return from <= haystack.size() ? from : std::string_view::npos;
    std::string h = case_fold(haystack);
    std::string n = case_fold(needle);
    return h.find(n, from);
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    return !needle.empty() && find_ci(haystack, needle) != std::string_view::npos;
}

bool contains_word_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return false;
    std::string h = case_fold(haystack);
    std::string n = case_fold(needle);
    std::size_t pos = h.find(n);
    while (pos != std::string::npos) {
        bool left_ok = pos == 0 || !is_word_byte(static_cast<unsigned char>(h[pos - 1]));
        std::size_t end = pos + n.size();
        bool right_ok = end >= h.size() || !is_word_byte(static_cast<unsigned char>(h[end]));
        if (left_ok && right_ok) return true;
        pos = h.find(n, pos + 1);
    }
    return false;
}

std::vector<Span> sentence_spans(std::string_view p) {
    std::vector<Span> spans;
    std::size_t start = 0;
    while (start < p.size() && is_ascii_space(static_cast<unsigned char>(p[start]))) ++start;
    for (std::size_t i = start; i < p.size(); ++i) {
        char c = p[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t j = i + 1;
        while (j < p.size() && (p[j] == '"' || p[j] == '\'' || p[j] == ')')) ++j;
        if (j >= p.size() || !is_ascii_space(static_cast<unsigned char>(p[j]))) continue;
        std::size_t k = j;
        while (k < p.size() && is_ascii_space(static_cast<unsigned char>(p[k]))) ++k;
        if (k >= p.size() || !is_upper_start(p, k)) continue;
        if (c == '.') {
            std::size_t w = i;
            while (w > start && !is_ascii_space(static_cast<unsigned char>(p[w - 1]))) --w;
            std::string word = case_fold(p.substr(w, i - w));
            while (!word.empty() && (word.front() == '(' || word.front() == '"')) word.erase(word.begin());
            bool initial = word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]));
            bool dotted = word.find('.') != std::string::npos;
            if (initial || dotted || abbreviations().count(word) != 0) continue;
        }
        spans.push_back({start, j});
        start = k;
        i = k - 1;
    }
    std::size_t end = p.size();
    while (end > start && is_ascii_space(static_cast<unsigned char>(p[end - 1]))) --end;
    if (end > start) spans.push_back({start, end});
    return spans;
}

std::vector<std::string> split_sentences(std::string_view paragraph) {
    std::vector<std::string> out;
    for (const auto& sp : sentence_spans(paragraph)) {
        out.emplace_back(paragraph.substr(sp.begin, sp.end - sp.begin));
    }
    return out;
}

std::vector<Token> word_tokens(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_word_byte(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < s.size() && (is_word_byte(static_cast<unsigned char>(s[i])) ||
                                ((s[i] == '\'' || s[i] == '-') && i + 1 < s.size() &&
                                 is_word_byte(static_cast<unsigned char>(s[i + 1]))))) {
            ++i;
        }
        out.push_back({s.substr(b, i - b), {b, i}});
    }
    return out;
}

std::size_t word_count(std::string_view s) { return word_tokens(s).size(); }

bool is_stopword(std::string_view w) {
    static const std::set<std::string, std::less<>> kStop = {
        "a", "an", "the", "and", "or", "but", "of", "in", "on", "at", "to", "for", "from", "by",
        "with", "as", "is", "was", "were", "are", "be", "been", "being", "which", "that", "this",
        "these", "those", "what", "who", "whom", "whose", "where", "when", "its", "it", "their",
        "his", "her", "one", "has", "had", "have", "into", "than", "then", "also", "did", "does",
        "do", "not", "no", "such", "whose", "some", "any", "there", "name", "identify", "entity"};
    return kStop.find(w) != kStop.end();
}

double trigram_jaccard(std::string_view a, std::string_view b) {
    auto grams = [](std::string_view s) {
        std::string padded = "  " + canonicalize(s) + " ";
        std::set<std::string> out;
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.insert(padded.substr(i, 3));
        return out;
    };
    auto ga = grams(a);
    auto gb = grams(b);
    if (ga.empty() && gb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g);
    std::size_t uni = ga.size() + gb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string slug(std::string_view title) {
    std::string out;
    for (unsigned char c : title) {
        if (std::isalnum(c) || c == '-' || c == '.' || c >= 0x80) {
            out.push_back(static_cast<char>(c));
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    if (out.empty() || out == "." || out == "..") out = "_";
    return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string replace_all_ci(std::string_view s, std::string_view from, std::string_view to) {
    if (from.empty()) return std::string(s);
    std::string folded = case_fold(s);
    std::string needle = case_fold(from);
    std::string out;
    std::size_t pos = 0;
    std::size_t hit = 0;
    while ((hit = folded.find(needle, pos)) != std::string::npos) {
        out.append(s.substr(pos, hit - pos));
        out.append(to);
        pos = hit + needle.size();
    }
    out.append(s.substr(pos));
    return out;
}

std::size_t byte_offset(std::string_view s, std::size_t code_points) {
    std::size_t cp = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
            if (cp == code_points) return i;
            ++cp;
        }
    }
    return std::string_view::npos;
}

std::size_t code_point_index(std::string_view s, std::size_t byte) {
    std::size_t cp = 0;
    for (std::size_t i = 0; i < byte && i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) ++cp;
    }
    return cp;
}

}  // namespace hopforge::text
