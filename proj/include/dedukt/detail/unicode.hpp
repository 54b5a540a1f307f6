#pragma once
// Minimal UTF-8 walking and character classification for the tokenizer.
// Classification tables cover the scripts this toolkit actually meets
// (Latin plus CJK text with their punctuation); they are range tables, not
// a full Unicode property database, and are documented in the README.

#include <cstdint>
#include <string>
#include <string_view>

namespace dedukt::detail {

inline constexpr char32_t kReplacement = 0xFFFD;

// Decodes the code point starting at byte offset i and advances i past it.
// Malformed sequences decode to U+FFFD and advance one byte, so tokenization
// stays deterministic on arbitrary input.
inline char32_t decode_utf8(std::string_view s, std::size_t& i) {
    unsigned char c0 = static_cast<unsigned char>(s[i]);
    if (c0 < 0x80) {
        ++i;
        return c0;
    }
    auto cont = [&](std::size_t k) {
        return i + k < s.size() &&
               (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    if ((c0 & 0xE0) == 0xC0 && cont(1)) {
        char32_t cp = (char32_t(c0 & 0x1F) << 6) |
                      (static_cast<unsigned char>(s[i + 1]) & 0x3F);
        i += 2;
        return cp < 0x80 ? kReplacement : cp;
    }
    if ((c0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        char32_t cp = (char32_t(c0 & 0x0F) << 12) |
                      (char32_t(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 6) |
                      (static_cast<unsigned char>(s[i + 2]) & 0x3F);
        i += 3;
        return cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF) ? kReplacement : cp;
    }
    if ((c0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        char32_t cp = (char32_t(c0 & 0x07) << 18) |
                      (char32_t(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 12) |
                      (char32_t(static_cast<unsigned char>(s[i + 2]) & 0x3F) << 6) |
                      (static_cast<unsigned char>(s[i + 3]) & 0x3F);
        i += 4;
        return cp < 0x10000 || cp > 0x10FFFF ? kReplacement : cp;
    }
    ++i;
    return kReplacement;
}

inline void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Han, kana, bopomofo, hangul and the CJK extension planes: the scripts the
// character n-gram tokenizer treats as unsegmented.
inline bool is_cjk(char32_t c) {
    return (c >= 0x2E80 && c <= 0x2EFF) ||   // CJK radicals supplement
           (c >= 0x3040 && c <= 0x30FF) ||   // hiragana, katakana
           (c >= 0x3100 && c <= 0x312F) ||   // bopomofo
           (c >= 0x3130 && c <= 0x318F) ||   // hangul compatibility jamo
           (c >= 0x31A0 && c <= 0x31BF) ||   // bopomofo extended
           (c >= 0x31F0 && c <= 0x31FF) ||   // katakana phonetic extensions
           (c >= 0x3400 && c <= 0x4DBF) ||   // CJK extension A
           (c >= 0x4E00 && c <= 0x9FFF) ||   // CJK unified ideographs
           (c >= 0xAC00 && c <= 0xD7AF) ||   // hangul syllables
           (c >= 0xF900 && c <= 0xFAFF) ||   // CJK compatibility ideographs
           (c >= 0xFF66 && c <= 0xFF9D) ||   // halfwidth katakana
           (c >= 0x20000 && c <= 0x2A6DF) || // CJK extension B
           (c >= 0x2A700 && c <= 0x2EBEF) || // CJK extensions C-F
           (c >= 0x2F800 && c <= 0x2FA1F);   // compatibility supplement
}

inline bool is_space(char32_t c) {
    return c == 0x20 || c == 0x09 || c == 0x0A || c == 0x0B || c == 0x0C || c == 0x0D ||
           c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) ||
           c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

// Punctuation and symbol ranges treated as token separators when
// strip_punctuation is set. ASCII symbols are included alongside
// punctuation proper since BoW features never want them attached.
inline bool is_punct(char32_t c) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
           (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E) ||
           (c >= 0xA1 && c <= 0xBF) || c == 0xD7 || c == 0xF7 ||
           (c >= 0x2010 && c <= 0x2027) ||   // dashes, quotes, daggers, ellipsis
           (c >= 0x2030 && c <= 0x205E) ||   // per-mille .. general punctuation tail
           (c >= 0x2E00 && c <= 0x2E7F) ||   // supplemental punctuation
           (c >= 0x3001 && c <= 0x303F) ||   // CJK symbols and punctuation (minus U+3000 space)
           c == 0x30FB ||                    // katakana middle dot
           (c >= 0xFE10 && c <= 0xFE19) ||   // vertical forms
           (c >= 0xFE30 && c <= 0xFE4F) ||   // CJK compatibility forms
           (c >= 0xFE50 && c <= 0xFE6F) ||   // small form variants
           (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
           (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65);
}

// Case folding for the cased scripts we handle without a Unicode database:
// ASCII and the Latin-1 supplement. Everything else passes through.
inline char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 0x20;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
    return c;
}

// Sentence enders used by the reference-material segmenter.
inline bool is_sentence_end(char32_t c) {
    return c == '.' || c == '!' || c == '?' ||
           c == 0x3002 || c == 0xFF01 || c == 0xFF1F || // 。 ！ ？
           c == 0x2026 ||                                // …
           c == 0xFF1B || c == ';';                      // ； ;
}

} // namespace dedukt::detail
