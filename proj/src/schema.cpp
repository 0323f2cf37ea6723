#include "cipherids/schema.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "cipherids/error.hpp"

namespace cipherids {

namespace {
constexpr std::size_t kExpectedFeatureColumns = 61;
}

ColumnKind column_kind_from_string(const std::string& s) {
    if (s == "integer") return ColumnKind::integer;
    if (s == "real") return ColumnKind::real;
    if (s == "string") return ColumnKind::string;
    if (s == "flag") return ColumnKind::flag;
    throw Error(Errc::type_error, "unknown column kind '" + s + "'");
}

const char* column_kind_name(ColumnKind kind) {
    switch (kind) {
    case ColumnKind::integer: return "integer";
    case ColumnKind::real: return "real";
    case ColumnKind::string: return "string";
    case ColumnKind::flag: return "flag";
    }
    return "string";
}

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) return i;
    }
    return std::nullopt;
}

FeatureSchema load_schema_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open schema manifest " + path);

    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::io_error, "schema manifest " + path + " is not valid JSON: " + e.what());
    }

    FeatureSchema schema;
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        throw Error(Errc::missing_required, "schema manifest needs integer schema_version");
    schema.schema_version = j["schema_version"].get<int>();
    if (!j.contains("label_column") || !j["label_column"].is_string())
        throw Error(Errc::missing_required, "schema manifest needs label_column");
    schema.label_column = j["label_column"].get<std::string>();
    if (!j.contains("columns") || !j["columns"].is_array())
        throw Error(Errc::missing_required, "schema manifest needs columns array");

    std::unordered_set<std::string> seen;
    for (const auto& jc : j["columns"]) {
        Column c;
        c.name = jc.at("name").get<std::string>();
        c.kind = column_kind_from_string(jc.at("kind").get<std::string>());
        c.prune = jc.value("prune", false);
        if (!seen.insert(c.name).second)
            throw Error(Errc::duplicate_label, "duplicate column name " + c.name);
        schema.columns.push_back(std::move(c));
    }

    if (schema.columns.size() != kExpectedFeatureColumns)
        throw Error(Errc::shape_mismatch,
                    "schema manifest must list exactly 61 feature columns, got " +
                        std::to_string(schema.columns.size()));
    for (const char* required : {"arp.hw_size", "ip.src_host", "ip.dst_host"}) {
        if (!schema.has_column(required))
            throw Error(Errc::missing_required, std::string("schema missing column ") + required);
    }
    return schema;
}

std::pair<std::vector<FeatureRecord>, FeatureSchema>
prune_features(const std::vector<FeatureRecord>& records, const FeatureSchema& schema) {
    FeatureSchema out_schema;
    out_schema.label_column = schema.label_column;
    out_schema.schema_version = schema.schema_version;
    out_schema.pruned = true;

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < schema.columns.size(); ++i) {
        if (!schema.columns[i].prune) {
            keep.push_back(i);
            Column c = schema.columns[i];
            out_schema.columns.push_back(std::move(c));
        }
    }

    std::vector<FeatureRecord> out_records;
    out_records.reserve(records.size());
    for (const auto& r : records) {
        if (r.values.size() != schema.columns.size())
            throw Error(Errc::shape_mismatch, "record width does not match schema");
        FeatureRecord nr;
        nr.label = r.label;
        nr.values.reserve(keep.size());
        for (std::size_t i : keep) nr.values.push_back(r.values[i]);
        out_records.push_back(std::move(nr));
    }
    return {std::move(out_records), std::move(out_schema)};
}

std::string canonical_integer(std::int64_t v) { return std::to_string(v); }

std::string canonical_real(double v) {
    if (std::isnan(v) || std::isinf(v)) return kEmptyMarker;
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v); // shortest round-trip form
    return std::string(buf, res.ptr);
}

std::string canonicalize_value(const std::string& raw, ColumnKind kind) {
    if (raw.empty() || raw == kEmptyMarker) return kEmptyMarker;
    switch (kind) {
    case ColumnKind::string:
        return raw;
    case ColumnKind::flag: {
        if (raw == "0" || raw == "0.0" || raw == "false") return "0";
        if (raw == "1" || raw == "1.0" || raw == "true") return "1";
        double d;
        auto r = std::from_chars(raw.data(), raw.data() + raw.size(), d);
        if (r.ec == std::errc() && r.ptr == raw.data() + raw.size())
            return d != 0.0 ? "1" : "0";
        return raw;
    }
    case ColumnKind::integer: {
        std::int64_t v;
        auto r = std::from_chars(raw.data(), raw.data() + raw.size(), v);
        if (r.ec == std::errc() && r.ptr == raw.data() + raw.size())
            return canonical_integer(v);
        double d;
        auto rd = std::from_chars(raw.data(), raw.data() + raw.size(), d);
        if (rd.ec == std::errc() && rd.ptr == raw.data() + raw.size() &&
            std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.2e18)
            return canonical_integer(static_cast<std::int64_t>(d));
        return raw;
    }
    case ColumnKind::real: {
        double d;
        auto r = std::from_chars(raw.data(), raw.data() + raw.size(), d);
        if (r.ec == std::errc() && r.ptr == raw.data() + raw.size())
            return canonical_real(d);
        return raw;
    }
    }
    return raw;
}

void canonicalize_record(FeatureRecord& record, const FeatureSchema& schema) {
    if (record.values.size() != schema.columns.size())
        throw Error(Errc::shape_mismatch, "record width does not match schema");
    for (std::size_t i = 0; i < record.values.size(); ++i)
        record.values[i] = canonicalize_value(record.values[i], schema.columns[i].kind);
}

} // namespace cipherids
