#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kgconv {

// Minimal reader for the "pythonic list" literals models are asked to emit:
//   ['P412', 'P27']   [('P412', 'voice type'), ...]   [1, 0, 1]   [Ed Helms, Roy Conli]
// Elements are quoted strings, bare tokens, or flat tuples of those.
struct PyListItem {
    std::vector<std::string> parts;  // one part unless the element was a tuple
    bool tuple = false;
    bool quoted = false;             // first part came from a quoted literal
};

struct PyList {
    std::vector<PyListItem> items;
    std::size_t begin = 0;  // offset of '['
    std::size_t end = 0;    // one past ']'
};

/// Parses a list starting exactly at text[pos] == '['.
std::optional<PyList> parse_python_list_at(std::string_view text, std::size_t pos);

/// First parseable list at or after `from`.
std::optional<PyList> find_python_list(std::string_view text, std::size_t from = 0);

/// repr()-style quoting of a string.
std::string python_quote(std::string_view s);

}  // namespace kgconv
