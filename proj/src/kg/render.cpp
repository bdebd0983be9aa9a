#include "clarify/error.hpp"
#include "clarify/kg/graph.hpp"

namespace clarify::kg {

namespace {

constexpr std::string_view kDash = "\xE2\x80\x94";   // —
constexpr std::string_view kArrow = "\xE2\x86\x92";  // →

// Position of the first unescaped occurrence of `glyph` at or after `from`.
std::size_t find_unescaped(std::string_view s, std::string_view glyph, std::size_t from) {
    for (std::size_t i = from; i < s.size(); ++i) {
        if (s[i] == '\\') {
            ++i;
            if (s.substr(i, kDash.size()) == kDash || s.substr(i, kArrow.size()) == kArrow)
                i += kDash.size() - 1;
            continue;
        }
        if (s.substr(i, glyph.size()) == glyph) return i;
    }
    return std::string_view::npos;
}

}  // namespace

std::string escape_field(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\\') {
            out += "\\\\";
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\r') {
            out += "\\r";
        } else if (text.substr(i, kDash.size()) == kDash) {
            out += '\\';
            out += kDash;
            i += kDash.size() - 1;
        } else if (text.substr(i, kArrow.size()) == kArrow) {
            out += '\\';
            out += kArrow;
            i += kArrow.size() - 1;
        } else {
            out += c;
        }
    }
    return out;
}

std::string unescape_field(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\\' || i + 1 == text.size()) {
            out += text[i];
            continue;
        }
        const char next = text[++i];
        if (next == 'n') {
            out += '\n';
        } else if (next == 'r') {
            out += '\r';
        } else {
            out += next;  // '\\' and the first byte of an escaped glyph
        }
    }
    return out;
}

std::string render_fact_line(const Fact& fact) {
    std::string line = escape_field(fact.subject_label);
    line += " ";
    line += kDash;
    line += escape_field(fact.predicate);
    line += kArrow;
    line += " ";
    line += escape_field(fact.object_label);
    return line;
}

std::optional<Fact> parse_fact_line(std::string_view line) {
    const std::string sep1 = " " + std::string(kDash);
    const std::string sep2 = std::string(kArrow) + " ";
    const auto a = find_unescaped(line, sep1, 0);
    if (a == std::string_view::npos) return std::nullopt;
    // The separator starts with a space, so an escaped glyph can never match it
    // directly; still make sure the glyph itself is the unescaped one.
    if (find_unescaped(line, kDash, 0) != a + 1) return std::nullopt;
    const auto b = find_unescaped(line, sep2, a + sep1.size());
    if (b == std::string_view::npos) return std::nullopt;
    if (find_unescaped(line, kArrow, a + sep1.size()) != b) return std::nullopt;

    Fact f;
    f.subject_label = unescape_field(line.substr(0, a));
    f.predicate = unescape_field(line.substr(a + sep1.size(), b - a - sep1.size()));
    f.object_label = unescape_field(line.substr(b + sep2.size()));
    return f;
}

ParsedContext parse_context_text(std::string_view rendered) {
    ParsedContext out;
    std::size_t start = 0;
    bool first = true;
    while (start <= rendered.size()) {
        auto end = rendered.find('\n', start);
        if (end == std::string_view::npos) end = rendered.size();
        const auto line = rendered.substr(start, end - start);
        if (first) {
            out.anchor_label = unescape_field(line);
            first = false;
        } else {
            auto fact = parse_fact_line(line);
            require(fact.has_value(), ErrorCode::ParseError, "malformed fact line in context");
            out.facts.push_back(std::move(*fact));
        }
        start = end + 1;
    }
    return out;
}

}  // namespace clarify::kg
