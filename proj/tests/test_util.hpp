#pragma once

#include <map>
#include <string>
#include <vector>

#include "imdauth/bytes.hpp"

namespace imdauth::test {

using Vector = std::map<std::string, std::string>;

/// Reads a testdata/*.vec file (see testdata/README.md).
std::vector<Vector> load_vectors(const std::string& file);

inline Bytes hex_field(const Vector& v, const std::string& key) { return from_hex(v.at(key)); }

std::string source_path(const std::string& relative);

}  // namespace imdauth::test
