#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ts3 {

enum class TokenKind { kCode, kNaturalLanguage };

// Ordered, whitespace-free, non-empty tokens.
struct TokenSeq {
  std::vector<std::string> tokens;
  TokenKind kind = TokenKind::kNaturalLanguage;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  // Tokens joined with single spaces.
  std::string joined() const;
};

/// Splits source code at the delimiter set  . , " ' : * ( ) ! - _  and at
/// whitespace. Punctuation delimiters survive as single-character tokens;
/// whitespace, underscores and quote characters are dropped. Output is
/// lowercased.
TokenSeq tokenize_code(std::string_view text);

/// Splits a comment or query on whitespace runs, lowercases, and strips
/// trailing sentence punctuation (. , ! ?) from each token.
TokenSeq tokenize_nl(std::string_view text);

// True for the characters tokenize_code splits on (whitespace excluded).
bool is_code_delimiter(char c);

}  // namespace ts3
