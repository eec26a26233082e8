#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace forge::utf8 {

// Decodes UTF-8 into Unicode scalar values. Throws ParseError on malformed
// input (overlong forms, surrogates, truncated sequences).
std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);
void append(std::string& out, char32_t cp);

bool valid(std::string_view s);

// Number of scalar values.
std::size_t length(std::string_view s);

// Byte offset of every scalar boundary; size() == length(s) + 1.
std::vector<std::size_t> boundaries(std::string_view s);

// Substring by scalar-value offsets [begin, end).
std::string slice(std::string_view s, std::size_t begin, std::size_t end);

}  // namespace forge::utf8
