#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gebm::io {

/// Shortest text that parses back to the same double (at most 17 significant
/// digits).
std::string format_double(double v);

/// Comma-separated rows, no header.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
std::string matrix_csv(const Eigen::MatrixXd& m);

/// Reads equal-width numeric rows. Blank lines are skipped. A row that does
/// not parse, or whose width differs from the first row, raises ParseError
/// naming its 1-based line number.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
Eigen::MatrixXd parse_matrix_csv(const std::string& text);

/// Header row followed by numeric rows.
void write_series_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows);

/// Writes text, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace gebm::io
