#pragma once

#include <string_view>

#include "refcheck/errors.hpp"

namespace refcheck {

// Ground-truth classes: grounded (G) vs hallucinated (H).
enum class Label : char { G = 'G', H = 'H' };

inline char to_char(Label l) { return static_cast<char>(l); }

inline Label label_from_string(std::string_view s) {
    if (s == "G") return Label::G;
    if (s == "H") return Label::H;
    throw Error("invalid label: " + std::string(s));
}

}  // namespace refcheck
