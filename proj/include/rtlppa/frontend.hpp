#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rtlppa/errors.hpp"

namespace rtlppa {

enum class TokenKind {
    identifier,
    keyword,
    number,
    op,
    punctuation,
    string_literal,
    comment,
    whitespace,
};

const char* token_kind_name(TokenKind kind);

struct Token {
    std::string lexeme;
    TokenKind kind;
    std::size_t begin = 0;  // byte offsets, half-open [begin, end)
    std::size_t end = 0;

    bool is_separator() const { return kind == TokenKind::whitespace || kind == TokenKind::comment; }
};

// Lossless token stream: concatenating lexemes reproduces the source text.
struct SourceUnit {
    std::string text;
    std::vector<Token> tokens;
    std::size_t token_count = 0;  // == tokens.size()

    // Tokens that carry signal for the encoder (everything except
    // whitespace and comments).
    std::size_t counted_tokens() const;
};

struct Diagnostic {
    std::string severity;  // "error" for all structural checks
    std::string message;
    std::size_t byte_offset = 0;

    std::string to_json() const;
};

// Contiguous, non-overlapping fragments covering the counted tokens.
struct FragmentSet {
    std::vector<std::pair<std::size_t, std::size_t>> fragments;  // ranges over `counted`
    std::vector<std::size_t> counted;                            // indices into SourceUnit::tokens
    std::size_t fragment_size = 0;

    std::size_t fragment_length(std::size_t f) const {
        return fragments[f].second - fragments[f].first;
    }
};

// Lex Verilog source. Comments and whitespace are retained as flagged tokens
// so the stream stays lossless; unterminated block comments and string
// literals raise LexError with the byte offset of the opening delimiter.
SourceUnit tokenize(const std::string& text);

std::string detokenize(const SourceUnit& unit);

bool is_verilog_keyword(const std::string& word);

// Split into fragments of exactly `fragment_size` counted tokens (final
// fragment may be shorter). With include_separators the whitespace/comment
// tokens are counted too; off by default.
FragmentSet fragment(const SourceUnit& unit, std::size_t fragment_size,
                     bool include_separators = false);

// Shallow structural checks: balanced begin/end, module/endmodule, brackets,
// and at least one module declaration. Not a grammar parser.
std::vector<Diagnostic> syntax_check(const SourceUnit& unit);

}  // namespace rtlppa
