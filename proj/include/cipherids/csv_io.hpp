#pragma once

#include <string>
#include <vector>

#include "cipherids/schema.hpp"

namespace cipherids {

// CSV interchange: UTF-8, RFC-4180 quoting, mandatory header row of schema
// column names followed by the label column, comma delimiter, LF endings.
void write_csv(const std::vector<FeatureRecord>& records, const FeatureSchema& schema,
               const std::string& path);

// Header must match schema names and order exactly; throws HeaderMismatch
// otherwise and RaggedRow (with line number) on cell-count drift.
std::vector<FeatureRecord> read_csv(const std::string& path, const FeatureSchema& schema);

// Low-level row parser shared with the label sidecar reader.
std::vector<std::vector<std::string>> parse_csv_file(const std::string& path);

} // namespace cipherids
