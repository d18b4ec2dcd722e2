#pragma once

#include <string>
#include <vector>

#include "pkm/mechanism.hpp"

namespace pkm {

// Loads a mechanism description from a JSON file and finalizes it.
// Schema errors raise Error(ParseError) with the offending field named.
Mechanism load_mechanism(const std::string& path);
Mechanism mechanism_from_json_text(const std::string& text, const std::string& origin);

// Deterministic float formatting shared by every CSV writer ("%.12g").
std::string fmt(double v);
std::string fmt_row(const std::vector<double>& vals);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace pkm
