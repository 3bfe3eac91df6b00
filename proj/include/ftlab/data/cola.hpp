// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <istream>
#include <vector>

#include "ftlab/data/example.hpp"

namespace ftlab::data {

/// Parses CoLA-format TSV: source, label, original annotation, sentence; no
/// header. The annotation field is ignored and the source code becomes
/// Example::source. Blank lines are skipped and a trailing CR is dropped.
/// Malformed lines raise ParseError with the 1-based line number.
std::vector<Example> parse_cola_tsv(std::istream& in);

/// Opens `path` and parses it; an unreadable file is an Error naming the path.
std::vector<Example> read_cola_tsv(const std::filesystem::path& path);

}  // namespace ftlab::data
