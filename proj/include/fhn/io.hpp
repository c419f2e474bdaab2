#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fhn {

/// Shortest round-trip-safe decimal form with 17 significant digits.
std::string fmt17(double x);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    /// Column index by name, or throws GridMismatch.
    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Truncates `path` and writes `contents`.
void write_text(const std::filesystem::path& path, const std::string& contents);

}  // namespace fhn
