#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cspeech {

std::string_view trim(std::string_view s);

/// Trims and collapses every internal whitespace run to a single space.
std::string normalize_whitespace(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

/// ASCII lowercase; bytes outside ASCII are passed through.
std::string to_lower_ascii(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace cspeech
