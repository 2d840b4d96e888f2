#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fedmem::utf8 {

/// Decodes one code point starting at `pos`; advances `pos`. Invalid bytes
/// decode as themselves (Latin-1 fallback) so decoding never fails.
char32_t decode(std::string_view s, std::size_t& pos) noexcept;

/// Unicode White_Space property.
bool is_space(char32_t c) noexcept;

/// ASCII punctuation.
bool is_punct(char32_t c) noexcept;

/// Number of code points.
std::size_t length(std::string_view s) noexcept;

std::string trim(std::string_view s);

/// Case-folded (ASCII), whitespace-collapsed code points of `s`, with the
/// byte offset of each retained code point in the original string.
struct Normalized {
    std::u32string chars;
    std::vector<std::size_t> byte_begin;
    std::vector<std::size_t> byte_end;
};

Normalized normalize(std::string_view s);

}  // namespace fedmem::utf8
