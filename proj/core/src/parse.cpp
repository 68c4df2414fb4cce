#include "kbf/parse.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include "kbf/errors.hpp"
#include "kbf/text.hpp"

namespace kbf {

namespace {

// Words and symbols that hedge a value without changing it. "±" instead
// truncates the fragment: everything after it is an uncertainty, not the
// answer.
const char* kApproxWords[] = {"approximately", "approx.", "approx", "about",
                              "roughly", "circa", "ca.", "around", "nearly"};
const char* kApproxSymbols[] = {"~", "\xE2\x89\x88" /* ≈ */};
const char* kUnicodeMinus = "\xE2\x88\x92";  // U+2212
const char* kPlusMinus = "\xC2\xB1";         // U+00B1
const char* kEnDash = "\xE2\x80\x93";        // U+2013
const char* kEmDash = "\xE2\x80\x94";        // U+2014

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Case-insensitive whole-word removal.
void strip_word(std::string& s, std::string_view word) {
    const std::string lower = lowercase(s);
    std::string lower_word(word);
    std::size_t pos = 0;
    while ((pos = lower.find(lower_word, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(lower[pos - 1]);
        const std::size_t end = pos + lower_word.size();
        const bool right_ok = end >= lower.size() || !is_word_char(lower[end]);
        if (left_ok && right_ok) {
            for (std::size_t i = pos; i < end; ++i) s[i] = ' ';
        }
        pos = end;
    }
}

// Shared normalization before tokenizing: Unicode minus -> ASCII, approx
// markers blanked, "±<uncertainty>" truncated.
std::string prepare_fragment(std::string_view text) {
    std::string s(text);
    replace_all(s, kUnicodeMinus, "-");
    if (auto pm = s.find(kPlusMinus); pm != std::string::npos) s.erase(pm);
    for (const char* sym : kApproxSymbols) replace_all(s, sym, " ");
    for (const char* word : kApproxWords) strip_word(s, word);
    return s;
}

struct NumberToken {
    double value = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Scan all numeric tokens: optional sign (only when not glued to a word,
// so "Threefish-1024" yields 1024, not -1024), digits with optional
// thousands groups, optional decimals, optional exponent.
std::vector<NumberToken> scan_tokens(const std::string& s) {
    std::vector<NumberToken> tokens;
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        if (!is_digit(s[i])) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        // attach a sign when the preceding non-space char is not a word char
        if (begin > 0 && (s[begin - 1] == '-' || s[begin - 1] == '+')) {
            std::size_t before_sign = begin - 1;
            bool glued_to_word = before_sign > 0 && is_word_char(s[before_sign - 1]);
            if (!glued_to_word) begin = before_sign;
        }
        std::size_t j = i;
        while (j < n && is_digit(s[j])) ++j;
        // thousands groups: ",ddd" repeated, not followed by a fourth digit
        while (j + 3 < n && s[j] == ',' && is_digit(s[j + 1]) && is_digit(s[j + 2]) &&
               is_digit(s[j + 3]) && (j + 4 >= n || !is_digit(s[j + 4]))) {
            j += 4;
        }
        if (j < n && s[j] == '.' && j + 1 < n && is_digit(s[j + 1])) {
            ++j;
            while (j < n && is_digit(s[j])) ++j;
        }
        if (j < n && (s[j] == 'e' || s[j] == 'E')) {
            std::size_t k = j + 1;
            if (k < n && (s[k] == '+' || s[k] == '-')) ++k;
            if (k < n && is_digit(s[k])) {
                ++k;
                while (k < n && is_digit(s[k])) ++k;
                j = k;
            }
        }
        std::string digits;
        digits.reserve(j - begin);
        for (std::size_t p = begin; p < j; ++p) {
            if (s[p] != ',') digits.push_back(s[p]);
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec == std::errc() && ptr == digits.data() + digits.size()) {
            tokens.push_back({value, begin, j});
        }
        i = j;
    }
    return tokens;
}

bool dash_only_between(const std::string& s, std::size_t begin, std::size_t end) {
    bool saw_dash = false;
    std::size_t i = begin;
    while (i < end) {
        if (std::isspace(static_cast<unsigned char>(s[i]))) {
            ++i;
        } else if (s[i] == '-') {
            saw_dash = true;
            ++i;
        } else if (s.compare(i, 3, kEnDash) == 0 || s.compare(i, 3, kEmDash) == 0) {
            saw_dash = true;
            i += 3;
        } else {
            return false;
        }
    }
    return saw_dash;
}

struct Extraction {
    std::vector<double> values;
    bool range_detected = false;
    bool had_digits = false;
};

Extraction extract_impl(const std::string& raw) {
    Extraction out;
    const std::string s = prepare_fragment(raw);
    for (char c : s) {
        if (is_digit(c)) {
            out.had_digits = true;
            break;
        }
    }
    auto tokens = scan_tokens(s);
    // A bare two-value range ("80-90", "80 – 90") is not a committed value.
    if (tokens.size() == 2 && dash_only_between(s, tokens[0].end, tokens[1].begin)) {
        out.range_detected = true;
        return out;
    }
    for (const auto& t : tokens) out.values.push_back(t.value);
    return out;
}

}  // namespace

std::optional<double> normalize_number(const std::string& token) {
    auto ex = extract_impl(token);
    if (ex.values.empty()) return std::nullopt;
    return ex.values.front();
}

std::vector<double> extract_numbers(const std::string& text) {
    return extract_impl(text).values;
}

namespace {

std::string strip_reasoning(const std::string& text,
                            const std::vector<std::pair<std::string, std::string>>& tags) {
    std::string s = text;
    for (const auto& [open, close] : tags) {
        std::size_t pos;
        while ((pos = s.find(open)) != std::string::npos) {
            const std::size_t closing = s.find(close, pos + open.size());
            if (closing == std::string::npos) {
                // unmatched opener: drop the tag token itself, keep the text
                s.erase(pos, open.size());
            } else {
                s.erase(pos, closing + close.size() - pos);
            }
        }
    }
    return s;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find('\n', start);
        if (end == std::string::npos) end = s.size();
        lines.push_back(s.substr(start, end - start));
        start = end + 1;
        if (end == s.size()) break;
    }
    return lines;
}

bool is_separator_line(const std::string& line) {
    int marks = 0;
    for (char c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c == '-' || c == '*' || c == '_' || c == '=') {
            ++marks;
            continue;
        }
        return false;
    }
    return marks >= 3;
}

// Table chrome: rows made only of pipes, dashes, colons and equals.
bool is_table_rule_line(const std::string& line) {
    bool saw_pipe = false;
    bool saw_mark = false;
    for (char c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c == '|') {
            saw_pipe = true;
            continue;
        }
        if (c == '-' || c == ':' || c == '=' || c == '+') {
            saw_mark = true;
            continue;
        }
        return false;
    }
    return saw_pipe && saw_mark;
}

std::string strip_outer_pipes(std::string line) {
    std::string t = trim(line);
    while (!t.empty() && t.front() == '|') t.erase(t.begin());
    while (!t.empty() && t.back() == '|') t.pop_back();
    return trim(t);
}

// "(N)" marker; the numbering style the batch prompt requests.
std::optional<std::pair<int, std::string>> paren_marker(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size() || line[i] != '(') return std::nullopt;
    std::size_t j = i + 1;
    std::size_t digits = 0;
    while (j < line.size() && is_digit(line[j])) {
        ++j;
        ++digits;
    }
    if (digits == 0 || digits > 6 || j >= line.size() || line[j] != ')') return std::nullopt;
    int slot = 0;
    std::from_chars(line.data() + i + 1, line.data() + j, slot);
    return std::make_pair(slot, line.substr(j + 1));
}

// Fallback ordinal markers: "N.", "N)", "N:", "N]" or a leading table cell
// "N |".
std::optional<std::pair<int, std::string>> ordinal_marker(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && is_digit(line[j])) ++j;
    if (j == i || j - i > 6 || j >= line.size()) return std::nullopt;
    std::size_t k = j;
    while (k < line.size() && line[k] == ' ') ++k;
    if (k >= line.size()) return std::nullopt;
    const char d = line[k];
    if (d != '.' && d != ')' && d != ':' && d != ']' && d != '|') return std::nullopt;
    int slot = 0;
    std::from_chars(line.data() + i, line.data() + j, slot);
    return std::make_pair(slot, line.substr(k + 1));
}

SlotResult score_answer(int slot_index, const std::string& answer, const DomainSpec& spec) {
    SlotResult r;
    r.slot_index = slot_index;
    auto ex = extract_impl(answer);
    if (ex.values.empty()) {
        // digits we refused to interpret (a range) are invalid; silence is missing
        r.status = (ex.range_detected || ex.had_digits) ? SlotStatus::Invalid : SlotStatus::Missing;
        return r;
    }
    const double v = ex.values.back();  // final numeric token
    if (validate_range(spec, v)) {
        r.status = SlotStatus::Valid;
        r.value = v;
    } else {
        r.status = SlotStatus::Invalid;
    }
    return r;
}

}  // namespace

std::vector<CandidateRecord> parse_candidate_records(const std::string& text,
                                                     const DomainSpec& spec) {
    ParseOptions options;
    const std::string cleaned = strip_reasoning(text, options.reasoning_tags);
    std::vector<CandidateRecord> records;
    std::set<std::string> seen;
    for (const auto& raw_line : split_lines(cleaned)) {
        std::string line = trim(raw_line);
        if (line.empty() || is_separator_line(line) || is_table_rule_line(line)) continue;
        line = strip_outer_pipes(line);
        // list markers: "1.", "2)", "(3)", "-", "*", "•"
        if (auto m = paren_marker(line)) {
            line = trim(m->second);
        } else if (auto o = ordinal_marker(line); o && o->second.find('|') != std::string::npos) {
            line = trim(o->second);
        } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
            line = trim(line.substr(1));
        } else if (starts_with(line, "\xE2\x80\xA2")) {  // bullet
            line = trim(line.substr(3));
        }
        const std::size_t bar = line.rfind('|');
        if (bar == std::string::npos) continue;
        const std::string name = normalize_name(line.substr(0, bar));
        if (name.empty()) continue;
        auto value = normalize_number(line.substr(bar + 1));
        if (!value || !std::isfinite(*value)) continue;
        if (!validate_range(spec, *value)) continue;
        if (!seen.insert(name).second) continue;  // keep first occurrence
        records.push_back({name, *value, trim(raw_line)});
    }
    return records;
}

std::vector<SlotResult> parse_batch(const std::string& text, int n_slots,
                                    const DomainSpec& spec) {
    return parse_batch(text, n_slots, spec, ParseOptions{});
}

std::vector<SlotResult> parse_batch(const std::string& text, int n_slots,
                                    const DomainSpec& spec, const ParseOptions& options) {
    if (n_slots < 1) throw std::invalid_argument("parse_batch: n_slots must be >= 1");

    std::vector<SlotResult> results(static_cast<std::size_t>(n_slots));
    for (int i = 0; i < n_slots; ++i) {
        results[static_cast<std::size_t>(i)].slot_index = i + 1;
        results[static_cast<std::size_t>(i)].status = SlotStatus::Missing;
    }

    const std::string cleaned = strip_reasoning(text, options.reasoning_tags);
    std::vector<std::string> lines;
    for (const auto& raw : split_lines(cleaned)) {
        const std::string t = trim(raw);
        if (t.empty() || is_separator_line(t) || is_table_rule_line(t)) continue;
        lines.push_back(strip_outer_pipes(t));
    }

    // Preferred path: the "(N)" numbering the prompt asked for.
    std::map<int, std::string> numbered;
    bool any_paren = false;
    for (const auto& line : lines) {
        if (auto m = paren_marker(line)) {
            any_paren = true;
            if (m->first < 1 || m->first > n_slots) {
                throw AmbiguousAlignment("slot number " + std::to_string(m->first) +
                                         " outside 1.." + std::to_string(n_slots));
            }
            if (!numbered.emplace(m->first, m->second).second) {
                throw AmbiguousAlignment("duplicate slot number " + std::to_string(m->first));
            }
        }
    }
    if (any_paren) {
        for (const auto& [slot, answer] : numbered) {
            results[static_cast<std::size_t>(slot - 1)] = score_answer(slot, answer, spec);
        }
        return results;
    }

    // Secondary path: every content line carries an ordinal marker.
    std::vector<std::string> content;
    std::vector<std::optional<std::pair<int, std::string>>> markers;
    for (const auto& line : lines) {
        if (extract_impl(line).had_digits) {
            content.push_back(line);
            markers.push_back(ordinal_marker(line));
        }
    }
    const bool all_marked =
        !content.empty() &&
        std::all_of(markers.begin(), markers.end(), [](const auto& m) { return m.has_value(); });
    if (all_marked) {
        std::map<int, std::string> by_slot;
        bool consistent = true;
        for (const auto& m : markers) {
            if (m->first < 1 || m->first > n_slots || !by_slot.emplace(m->first, m->second).second) {
                consistent = false;
                break;
            }
        }
        if (consistent) {
            for (const auto& [slot, answer] : by_slot) {
                results[static_cast<std::size_t>(slot - 1)] = score_answer(slot, answer, spec);
            }
            return results;
        }
        // ordinal markers present but irreconcilable: sequential only when
        // the line count already matches the slots
        if (static_cast<int>(content.size()) != n_slots) {
            throw AmbiguousAlignment("numbering inconsistent with slot count");
        }
    }

    // Sequential fallback: content lines in order.
    if (static_cast<int>(content.size()) > n_slots) {
        throw AmbiguousAlignment("more answer lines than slots (" +
                                 std::to_string(content.size()) + " > " +
                                 std::to_string(n_slots) + ")");
    }
    for (std::size_t i = 0; i < content.size(); ++i) {
        const int slot = static_cast<int>(i) + 1;
        results[i] = score_answer(slot, content[i], spec);
    }
    return results;
}

}  // namespace kbf
