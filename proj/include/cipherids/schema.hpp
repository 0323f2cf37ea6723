#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cipherids {

// Canonical marker for absent / not-applicable values. Never a zero-length
// string so downstream cipher words are never empty.
inline constexpr const char* kEmptyMarker = "__empty__";

// Label name used by raw capture extraction, which has no ground truth.
inline constexpr const char* kUnlabeledName = "__unlabeled__";

enum class ColumnKind { integer, real, string, flag };

ColumnKind column_kind_from_string(const std::string& s);
const char* column_kind_name(ColumnKind kind);

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::string;
    bool prune = false;
};

// Ordered feature column layout plus the label column. The base manifest has
// exactly 61 feature columns; pruned derivations keep fewer.
struct FeatureSchema {
    std::vector<Column> columns;
    std::string label_column = "attack_type";
    int schema_version = 1;
    bool pruned = false;

    std::size_t column_count() const { return columns.size(); }
    std::optional<std::size_t> index_of(const std::string& name) const;
    bool has_column(const std::string& name) const { return index_of(name).has_value(); }
};

struct AttackLabel {
    int id = -1; // -1 = sentinel (unlabeled)
    std::string name = kUnlabeledName;

    bool is_sentinel() const { return id < 0; }
};

// One observation: canonical string per schema column plus its label.
struct FeatureRecord {
    std::vector<std::string> values;
    AttackLabel label;
};

// Loads the versioned schema manifest (JSON). Enforces: exactly 61 feature
// columns, unique names, and presence of arp.hw_size / ip.src_host /
// ip.dst_host.
FeatureSchema load_schema_manifest(const std::string& path);

// Drops every column whose prune flag is set in the manifest; surviving
// column order is preserved. Idempotent. Records keep their labels.
std::pair<std::vector<FeatureRecord>, FeatureSchema>
prune_features(const std::vector<FeatureRecord>& records, const FeatureSchema& schema);

// Canonical string forms: integers in shortest decimal, reals in shortest
// round-trip decimal, flags "0"/"1", absent values as kEmptyMarker.
std::string canonical_integer(std::int64_t v);
std::string canonical_real(double v);

// Re-canonicalizes a raw cell for the given kind. Empty cells become the
// empty marker; unparseable numerics pass through as strings (lenient ingest
// for pre-extracted dataset CSVs).
std::string canonicalize_value(const std::string& raw, ColumnKind kind);

void canonicalize_record(FeatureRecord& record, const FeatureSchema& schema);

} // namespace cipherids
