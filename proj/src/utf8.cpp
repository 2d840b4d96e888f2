#include "fedmem/utf8.hpp"

namespace fedmem::utf8 {

char32_t decode(std::string_view s, std::size_t& pos) noexcept
{
    const auto b0 = static_cast<unsigned char>(s[pos]);
    auto cont = [&](std::size_t i) {
        return i < s.size() && (static_cast<unsigned char>(s[i]) & 0xC0) == 0x80;
    };
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return b0;
    }
    for (int i = 1; i <= extra; ++i) {
        if (!cont(pos + i)) {
            ++pos;
            return b0;
        }
        cp = (cp << 6) | (static_cast<unsigned char>(s[pos + i]) & 0x3F);
    }
    pos += extra + 1;
    return cp;
}

bool is_space(char32_t c) noexcept
{
    switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
        return true;
    default:
        return c >= 0x2000 && c <= 0x200A;
    }
}

bool is_punct(char32_t c) noexcept
{
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
}

std::size_t length(std::string_view s) noexcept
{
    std::size_t n = 0;
    for (std::size_t pos = 0; pos < s.size();) {
        decode(s, pos);
        ++n;
    }
    return n;
}

std::string trim(std::string_view s)
{
    std::size_t begin = s.size();
    std::size_t end = 0;
    for (std::size_t pos = 0; pos < s.size();) {
        const std::size_t start = pos;
        if (!is_space(decode(s, pos))) {
            if (begin == s.size()) {
                begin = start;
            }
            end = pos;
        }
    }
    return begin < end ? std::string(s.substr(begin, end - begin)) : std::string();
}

Normalized normalize(std::string_view s)
{
    Normalized out;
    bool pending_space = false;
    for (std::size_t pos = 0; pos < s.size();) {
        const std::size_t start = pos;
        char32_t c = decode(s, pos);
        if (is_space(c)) {
            pending_space = !out.chars.empty();
            continue;
        }
        if (pending_space) {
            out.chars.push_back(U' ');
            out.byte_begin.push_back(out.byte_end.back());
            out.byte_end.push_back(start);
            pending_space = false;
        }
        if (c >= U'A' && c <= U'Z') {
            c += 32;
        }
        out.chars.push_back(c);
        out.byte_begin.push_back(start);
        out.byte_end.push_back(pos);
    }
    return out;
}

}  // namespace fedmem::utf8
