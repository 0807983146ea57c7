#pragma once

#include "fgam/design.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fgam {

/// Comma-separated numbers, '.' decimal point. With `header` the first line is
/// skipped. Empty lines are ignored. Throws DataError naming the file, line and
/// row for unparsable fields and ragged rows.
Eigen::MatrixXd read_csv_matrix(const std::string& path, bool header = false);
Eigen::MatrixXd parse_csv_matrix(const std::string& text, bool header = false, const std::string& source = "<input>");

/// y (N x 1, may be empty path), X (N x J, one curve per row), t (J x 1 or 1 x J).
FunctionalDataset load_dataset(const std::string& y_path, const std::string& x_path, const std::string& t_path,
                               bool header = false);

/// Shortest round-trip formatting (17 significant digits).
std::string format_number(double v);

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});
void write_text_file(const std::string& path, const std::string& text);

}  // namespace fgam
