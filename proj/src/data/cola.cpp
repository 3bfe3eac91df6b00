// SPDX-License-Identifier: Apache-2.0
#include "ftlab/data/cola.hpp"

#include <fstream>
#include <string>

#include "ftlab/error.hpp"

namespace ftlab::data {

std::vector<Example> parse_cola_tsv(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (fields.size() != 4) {
      throw ParseError(lineno, where + "expected 4 tab-separated fields, got " +
                                   std::to_string(fields.size()));
    }
    if (fields[1] != "0" && fields[1] != "1") {
      throw ParseError(lineno, where + "label must be 0 or 1, got \"" + fields[1] + "\"");
    }
    if (fields[3].empty()) throw ParseError(lineno, where + "empty sentence");
    out.push_back(Example{fields[3], fields[1] == "1" ? 1 : 0, fields[0]});
  }
  return out;
}

std::vector<Example> read_cola_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return parse_cola_tsv(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

}  // namespace ftlab::data
