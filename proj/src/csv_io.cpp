#include "cipherids/csv_io.hpp"

#include <fstream>
#include <sstream>

#include "cipherids/error.hpp"

namespace cipherids {

namespace {

bool needs_quoting(const std::string& cell) {
    return cell.find_first_of(",\"\r\n") != std::string::npos;
}

void write_cell(std::ostream& out, const std::string& cell) {
    if (!needs_quoting(cell)) {
        out << cell;
        return;
    }
    out << '"';
    for (char c : cell) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

// RFC-4180 field splitter; handles quoted cells with embedded commas,
// escaped quotes, and newlines. Tracks line numbers for error reporting.
struct CsvParser {
    const std::string& text;
    std::size_t pos = 0;
    std::size_t line = 1;

    explicit CsvParser(const std::string& t) : text(t) {}

    bool at_end() const { return pos >= text.size(); }

    // Parses one row; returns false when input is exhausted.
    bool next_row(std::vector<std::string>& row, std::size_t& row_line) {
        row.clear();
        if (at_end()) return false;
        row_line = line;
        std::string cell;
        bool in_quotes = false;
        bool row_done = false;
        while (!row_done) {
            if (at_end()) {
                if (in_quotes)
                    throw Error(Errc::ragged_row,
                                "unterminated quoted cell starting near line " +
                                    std::to_string(row_line));
                row.push_back(cell);
                return true;
            }
            char c = text[pos++];
            if (in_quotes) {
                if (c == '"') {
                    if (pos < text.size() && text[pos] == '"') {
                        cell.push_back('"');
                        ++pos;
                    } else {
                        in_quotes = false;
                    }
                } else {
                    if (c == '\n') ++line;
                    cell.push_back(c);
                }
            } else if (c == '"' && cell.empty()) {
                in_quotes = true;
            } else if (c == ',') {
                row.push_back(cell);
                cell.clear();
            } else if (c == '\r') {
                if (pos < text.size() && text[pos] == '\n') ++pos;
                ++line;
                row.push_back(cell);
                row_done = true;
            } else if (c == '\n') {
                ++line;
                row.push_back(cell);
                row_done = true;
            } else {
                cell.push_back(c);
            }
        }
        return true;
    }
};

} // namespace

std::vector<std::vector<std::string>> parse_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::vector<std::vector<std::string>> rows;
    CsvParser parser(text);
    std::vector<std::string> row;
    std::size_t row_line = 0;
    while (parser.next_row(row, row_line)) {
        if (row.size() == 1 && row[0].empty()) continue; // trailing blank line
        rows.push_back(row);
    }
    return rows;
}

void write_csv(const std::vector<FeatureRecord>& records, const FeatureSchema& schema,
               const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot open " + path + " for writing");

    for (std::size_t i = 0; i < schema.columns.size(); ++i) {
        if (i) out << ',';
        write_cell(out, schema.columns[i].name);
    }
    out << ',';
    write_cell(out, schema.label_column);
    out << '\n';

    for (const auto& r : records) {
        if (r.values.size() != schema.columns.size())
            throw Error(Errc::shape_mismatch, "record width does not match schema");
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            if (i) out << ',';
            write_cell(out, r.values[i]);
        }
        out << ',';
        write_cell(out, r.label.name);
        out << '\n';
    }
    if (!out) throw Error(Errc::io_error, "write failed for " + path);
}

std::vector<FeatureRecord> read_csv(const std::string& path, const FeatureSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    CsvParser parser(text);
    std::vector<std::string> row;
    std::size_t row_line = 0;
    if (!parser.next_row(row, row_line))
        throw Error(Errc::header_mismatch, "empty file, header row required");

    const std::size_t expected = schema.columns.size() + 1;
    if (row.size() != expected)
        throw Error(Errc::header_mismatch,
                    "header has " + std::to_string(row.size()) + " columns, schema expects " +
                        std::to_string(expected));
    for (std::size_t i = 0; i < schema.columns.size(); ++i) {
        if (row[i] != schema.columns[i].name)
            throw Error(Errc::header_mismatch, "header column " + std::to_string(i) + " is '" +
                                                   row[i] + "', expected '" +
                                                   schema.columns[i].name + "'");
    }
    if (row.back() != schema.label_column)
        throw Error(Errc::header_mismatch,
                    "label column is '" + row.back() + "', expected '" + schema.label_column + "'");

    std::vector<FeatureRecord> records;
    while (parser.next_row(row, row_line)) {
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != expected)
            throw Error(Errc::ragged_row, "line " + std::to_string(row_line) + " has " +
                                              std::to_string(row.size()) + " cells, expected " +
                                              std::to_string(expected));
        FeatureRecord r;
        r.values.assign(row.begin(), row.end() - 1);
        r.label.name = row.back();
        r.label.id = -1; // resolved against a label map downstream
        records.push_back(std::move(r));
    }
    return records;
}

} // namespace cipherids
