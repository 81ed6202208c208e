#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace khronos {

/// FNV-1a hash of a canonical config string; embedded in every output file
/// so results can be traced back to the exact configuration.
std::uint64_t config_hash(const std::string& canonical);
std::string hash_hex(std::uint64_t hash);

/// CSV table with a `# config_hash=...` comment line above the header.
/// Numeric cells are written with round-trip precision (%.17g).
class CsvWriter {
public:
    CsvWriter(std::vector<std::string> columns, std::uint64_t hash);

    void add_row(const std::vector<double>& values);
    void add_row_mixed(const std::vector<std::string>& cells);
    void write(const std::string& path) const;
    std::string str() const;

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
    std::uint64_t hash_ = 0;
};

std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace khronos
