#include "ts3/tokenizer.hpp"

#include <cctype>

namespace ts3 {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool is_dropped_delimiter(char c) { return c == '_' || c == '"' || c == '\''; }

}  // namespace

std::string TokenSeq::joined() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

bool is_code_delimiter(char c) {
  switch (c) {
    case '.': case ',': case '"': case '\'': case ':': case '*':
    case '(': case ')': case '!': case '-': case '_':
      return true;
    default:
      return false;
  }
}

TokenSeq tokenize_code(std::string_view text) {
  TokenSeq out{{}, TokenKind::kCode};
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.tokens.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_code_delimiter(c)) {
      flush();
      if (!is_dropped_delimiter(c)) out.tokens.emplace_back(1, c);
    } else {
      current.push_back(lower(c));
    }
  }
  flush();
  return out;
}

TokenSeq tokenize_nl(std::string_view text) {
  TokenSeq out{{}, TokenKind::kNaturalLanguage};
  std::string current;
  auto flush = [&] {
    while (!current.empty()) {
      char back = current.back();
      if (back == '.' || back == ',' || back == '!' || back == '?') {
        current.pop_back();
      } else {
        break;
      }
    }
    if (!current.empty()) out.tokens.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else {
      current.push_back(lower(c));
    }
  }
  flush();
  return out;
}

}  // namespace ts3
