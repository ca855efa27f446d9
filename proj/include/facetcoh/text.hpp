#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace facetcoh {

// Casefolded tokens split on every maximal run of non-alphanumeric bytes.
// ASCII letters are lowercased; bytes >= 0x80 are kept as token characters so
// UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

// Canonical comparison form: trimmed, whitespace runs collapsed to one space,
// ASCII-casefolded.
std::string normalize_facet(std::string_view text);

// Porter (1980) suffix stripper, following the reference C implementation.
// Tokens that are not purely lowercase ASCII letters are returned unchanged.
std::string porter_stem(std::string_view word);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace facetcoh
