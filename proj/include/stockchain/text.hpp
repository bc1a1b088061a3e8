#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace stockchain::text {

// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD one byte at
// a time so counting never throws.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

// Length in Unicode code points ("characters").
std::size_t char_count(std::string_view s);

// First `n` code points of `s`.
std::string utf8_prefix(std::string_view s, std::size_t n);

bool is_cjk(char32_t c) noexcept;
bool is_latin_alnum(char32_t c) noexcept;

enum class TokenizerKind { unicode, whitespace };

// unicode: runs of Latin alphanumerics form one token (ASCII lowercased),
// every CJK ideograph/kana is its own token, everything else separates.
// whitespace: split on ASCII whitespace, no normalization.
std::vector<std::string> tokenize(std::string_view s, TokenizerKind kind = TokenizerKind::unicode);

std::string to_lower_ascii(std::string_view s);

// Case-insensitive (ASCII) search starting at `from`. Returns npos if absent.
std::size_t ifind(std::string_view haystack, std::string_view needle, std::size_t from = 0);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace stockchain::text
