#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace kbf {

// FNV-1a 64-bit. Used for probe ids, cassette keys, and fingerprint digests;
// a stable, dependency-free checksum (not collision-resistant in the
// cryptographic sense, which these uses do not need).
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(uint64_t v);

// Shortest round-trip decimal rendering of a double ("106", "43.12", "1e+15").
std::string format_double(double v);

std::string lowercase(std::string s);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);

// Lowercase, collapse whitespace, strip punctuation. The key used for
// candidate-name de-duplication and exclusion lists.
std::string normalize_name(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace kbf
