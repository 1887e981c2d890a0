#include "rtlppa/frontend.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace rtlppa {

namespace {

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

bool is_base_char(char c) {
    switch (c) {
        case 'b': case 'B': case 'o': case 'O':
        case 'd': case 'D': case 'h': case 'H':
        case 's': case 'S':
            return true;
        default:
            return false;
    }
}

bool is_based_value_char(char c) {
    return std::isxdigit(static_cast<unsigned char>(c)) || c == '_' || c == '?' ||
           c == 'x' || c == 'X' || c == 'z' || c == 'Z';
}

const std::unordered_set<std::string>& keyword_set() {
    static const std::unordered_set<std::string> kw = {
        "always", "and", "assign", "begin", "buf", "case", "casex", "casez",
        "deassign", "default", "defparam", "disable", "edge", "else", "end",
        "endcase", "endfunction", "endgenerate", "endmodule", "endprimitive",
        "endspecify", "endtable", "endtask", "event", "for", "force", "forever",
        "fork", "function", "generate", "genvar", "if", "initial", "inout",
        "input", "integer", "join", "localparam", "module", "nand", "negedge",
        "nor", "not", "or", "output", "parameter", "posedge", "primitive",
        "real", "realtime", "reg", "release", "repeat", "signed", "specify",
        "supply0", "supply1", "table", "task", "time", "tri", "tri0", "tri1",
        "unsigned", "vectored", "wait", "wand", "while", "wire", "wor",
        "xnor", "xor",
    };
    return kw;
}

// Multi-character operators, longest first for maximal munch.
const std::array<const char*, 24>& multi_ops() {
    static const std::array<const char*, 24> ops = {
        "===", "!==", "<<<", ">>>", "&&&",
        "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "**",
        "~&", "~|", "~^", "^~", "->", "=>", "+:", "-:", "::", "##",
    };
    return ops;
}

bool is_single_op(char c) {
    switch (c) {
        case '+': case '-': case '*': case '/': case '%':
        case '&': case '|': case '^': case '~': case '!':
        case '<': case '>': case '=': case '?':
            return true;
        default:
            return false;
    }
}

bool is_punct(char c) {
    switch (c) {
        case ';': case ',': case '.': case '(': case ')':
        case '[': case ']': case '{': case '}':
        case '@': case '#': case ':': case '`': case '\'':
            return true;
        default:
            return false;
    }
}

}  // namespace

const char* token_kind_name(TokenKind kind) {
    switch (kind) {
        case TokenKind::identifier: return "identifier";
        case TokenKind::keyword: return "keyword";
        case TokenKind::number: return "number";
        case TokenKind::op: return "operator";
        case TokenKind::punctuation: return "punctuation";
        case TokenKind::string_literal: return "string_literal";
        case TokenKind::comment: return "comment";
        case TokenKind::whitespace: return "whitespace";
    }
    return "unknown";
}

std::size_t SourceUnit::counted_tokens() const {
    std::size_t n = 0;
    for (const Token& t : tokens)
        if (!t.is_separator()) ++n;
    return n;
}

bool is_verilog_keyword(const std::string& word) {
    return keyword_set().count(word) != 0;
}

SourceUnit tokenize(const std::string& text) {
    SourceUnit unit;
    unit.text = text;
    const std::size_t n = text.size();
    std::size_t i = 0;

    auto push = [&](std::size_t begin, std::size_t end, TokenKind kind) {
        unit.tokens.push_back(Token{text.substr(begin, end - begin), kind, begin, end});
    };

    while (i < n) {
        const std::size_t start = i;
        const char c = text[i];

        if (is_space(c)) {
            while (i < n && is_space(text[i])) ++i;
            push(start, i, TokenKind::whitespace);
            continue;
        }

        if (c == '/' && i + 1 < n && text[i + 1] == '/') {
            i += 2;
            while (i < n && text[i] != '\n') ++i;
            push(start, i, TokenKind::comment);
            continue;
        }

        if (c == '/' && i + 1 < n && text[i + 1] == '*') {
            i += 2;
            while (i + 1 < n && !(text[i] == '*' && text[i + 1] == '/')) ++i;
            if (i + 1 >= n) throw LexError("unterminated block comment", start);
            i += 2;
            push(start, i, TokenKind::comment);
            continue;
        }

        if (c == '"') {
            ++i;
            while (i < n && text[i] != '"') {
                if (text[i] == '\\' && i + 1 < n) ++i;  // skip escaped char
                ++i;
            }
            if (i >= n) throw LexError("unterminated string literal", start);
            ++i;  // closing quote
            push(start, i, TokenKind::string_literal);
            continue;
        }

        if (is_digit(c)) {
            while (i < n && (is_digit(text[i]) || text[i] == '_')) ++i;
            if (i + 1 < n && text[i] == '\'' && is_base_char(text[i + 1])) {
                // sized based literal, e.g. 8'hFF or 4'sb1010
                ++i;
                if (i < n && (text[i] == 's' || text[i] == 'S')) ++i;
                if (i < n) ++i;  // base character
                while (i < n && is_based_value_char(text[i])) ++i;
            } else {
                if (i < n && text[i] == '.' && i + 1 < n && is_digit(text[i + 1])) {
                    ++i;
                    while (i < n && (is_digit(text[i]) || text[i] == '_')) ++i;
                }
                if (i < n && (text[i] == 'e' || text[i] == 'E')) {
                    std::size_t j = i + 1;
                    if (j < n && (text[j] == '+' || text[j] == '-')) ++j;
                    if (j < n && is_digit(text[j])) {
                        i = j;
                        while (i < n && (is_digit(text[i]) || text[i] == '_')) ++i;
                    }
                }
            }
            push(start, i, TokenKind::number);
            continue;
        }

        if (c == '\'' && i + 1 < n && is_base_char(text[i + 1])) {
            // unsized based literal, e.g. 'b0
            ++i;
            if (i < n && (text[i] == 's' || text[i] == 'S')) ++i;
            if (i < n) ++i;
            while (i < n && is_based_value_char(text[i])) ++i;
            push(start, i, TokenKind::number);
            continue;
        }

        if (is_ident_start(c) || c == '$') {
            ++i;
            while (i < n && is_ident_char(text[i])) ++i;
            const std::string word = text.substr(start, i - start);
            push(start, i, is_verilog_keyword(word) ? TokenKind::keyword : TokenKind::identifier);
            continue;
        }

        if (c == '\\') {
            // escaped identifier: backslash up to the next whitespace
            ++i;
            while (i < n && !is_space(text[i])) ++i;
            push(start, i, i - start > 1 ? TokenKind::identifier : TokenKind::punctuation);
            continue;
        }

        bool matched = false;
        for (const char* op : multi_ops()) {
            const std::size_t len = std::char_traits<char>::length(op);
            if (text.compare(i, len, op) == 0) {
                i += len;
                push(start, i, TokenKind::op);
                matched = true;
                break;
            }
        }
        if (matched) continue;

        if (is_single_op(c)) {
            ++i;
            push(start, i, TokenKind::op);
            continue;
        }

        // punctuation, or any byte we have no rule for
        ++i;
        push(start, i, TokenKind::punctuation);
        (void)is_punct(c);
    }

    unit.token_count = unit.tokens.size();
    return unit;
}

std::string detokenize(const SourceUnit& unit) {
    std::string out;
    out.reserve(unit.text.size());
    for (const Token& t : unit.tokens) out += t.lexeme;
    return out;
}

FragmentSet fragment(const SourceUnit& unit, std::size_t fragment_size, bool include_separators) {
    if (fragment_size < 1) throw ConfigError("fragment_size must be >= 1");
    FragmentSet set;
    set.fragment_size = fragment_size;
    for (std::size_t i = 0; i < unit.tokens.size(); ++i) {
        if (include_separators || !unit.tokens[i].is_separator()) set.counted.push_back(i);
    }
    const std::size_t n = set.counted.size();
    if (n == 0) throw EmptyInput("cannot fragment a unit with no counted tokens");
    for (std::size_t begin = 0; begin < n; begin += fragment_size) {
        set.fragments.emplace_back(begin, std::min(begin + fragment_size, n));
    }
    return set;
}

std::string Diagnostic::to_json() const {
    auto escape = [](const std::string& s) {
        std::string out;
        for (char c : s) {
            switch (c) {
                case '"': out += "\\\""; break;
                case '\\': out += "\\\\"; break;
                case '\n': out += "\\n"; break;
                case '\t': out += "\\t"; break;
                default: out += c;
            }
        }
        return out;
    };
    return "{\"severity\":\"" + escape(severity) + "\",\"message\":\"" + escape(message) +
           "\",\"byte_offset\":" + std::to_string(byte_offset) + "}";
}

std::vector<Diagnostic> syntax_check(const SourceUnit& unit) {
    std::vector<Diagnostic> diags;
    auto error = [&](std::string msg, std::size_t offset) {
        diags.push_back(Diagnostic{"error", std::move(msg), offset});
    };

    struct Open {
        char bracket;
        std::size_t offset;
    };
    std::vector<Open> brackets;
    std::vector<std::size_t> begins;
    std::vector<std::size_t> modules;
    std::size_t module_count = 0;

    auto closer_for = [](char open) {
        return open == '(' ? ')' : open == '[' ? ']' : '}';
    };

    for (const Token& t : unit.tokens) {
        if (t.is_separator() || t.kind == TokenKind::string_literal) continue;
        if (t.kind == TokenKind::punctuation && t.lexeme.size() == 1) {
            const char c = t.lexeme[0];
            if (c == '(' || c == '[' || c == '{') {
                brackets.push_back(Open{c, t.begin});
            } else if (c == ')' || c == ']' || c == '}') {
                if (brackets.empty()) {
                    error(std::string("unmatched '") + c + "'", t.begin);
                } else if (closer_for(brackets.back().bracket) != c) {
                    error(std::string("mismatched '") + c + "', expected '" +
                              closer_for(brackets.back().bracket) + "'",
                          t.begin);
                    brackets.pop_back();
                } else {
                    brackets.pop_back();
                }
            }
        } else if (t.kind == TokenKind::keyword) {
            if (t.lexeme == "begin") {
                begins.push_back(t.begin);
            } else if (t.lexeme == "end") {
                if (begins.empty())
                    error("unmatched 'end'", t.begin);
                else
                    begins.pop_back();
            } else if (t.lexeme == "module") {
                modules.push_back(t.begin);
                ++module_count;
            } else if (t.lexeme == "endmodule") {
                if (modules.empty())
                    error("unmatched 'endmodule'", t.begin);
                else
                    modules.pop_back();
            }
        }
    }

    for (const Open& o : brackets) error(std::string("unmatched '") + o.bracket + "'", o.offset);
    for (std::size_t off : begins) error("unmatched 'begin'", off);
    for (std::size_t off : modules) error("unmatched 'module'", off);
    if (module_count == 0) error("no module declaration", 0);

    std::sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
        return a.byte_offset < b.byte_offset;
    });
    return diags;
}

}  // namespace rtlppa
