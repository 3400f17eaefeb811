#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace mmdesign {

// Empty cell, number, count or label.
using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

// Long/tidy table: one row per grid point, one column per axis or output.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add_row(std::vector<Cell> row);
};

// Doubles are written in shortest round-trip form so files reproduce bit-exactly.
std::string format_cell(const Cell& cell);
void write_csv(std::ostream& out, const Table& table);
std::string to_csv(const Table& table);

}  // namespace mmdesign
