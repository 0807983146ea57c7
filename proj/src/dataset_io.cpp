#include "fgam/dataset_io.hpp"

#include "fgam/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fgam {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Eigen::MatrixXd parse_csv_matrix(const std::string& text, bool header, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool skipped_header = !header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view l = trim(line);
    if (l.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    std::vector<double> row;
    std::size_t start = 0;
    int field = 0;
    for (;;) {
      const std::size_t comma = l.find(',', start);
      const std::string_view f = trim(l.substr(start, comma == std::string_view::npos ? l.npos : comma - start));
      ++field;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
        std::ostringstream os;
        os << source << ": line " << line_no << " (row " << rows.size() + 1 << "), field " << field
           << ": cannot parse '" << f << "' as a number";
        throw DataError(os.str());
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      std::ostringstream os;
      os << source << ": line " << line_no << " (row " << rows.size() + 1 << ") has " << row.size()
         << " fields, expected " << rows.front().size() << " (ragged row)";
      throw DataError(os.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(source + ": no data rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

Eigen::MatrixXd read_csv_matrix(const std::string& path, bool header) {
  return parse_csv_matrix(read_file(path), header, path);
}

FunctionalDataset load_dataset(const std::string& y_path, const std::string& x_path, const std::string& t_path,
                               bool header) {
  FunctionalDataset d;
  d.x = read_csv_matrix(x_path, header);
  const Eigen::MatrixXd t = read_csv_matrix(t_path, header);
  if (t.cols() != 1 && t.rows() != 1) throw DataError(t_path + ": grid must be a single row or column");
  d.t = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
  if (d.t.size() != d.x.cols()) {
    std::ostringstream os;
    os << "dimension mismatch: " << x_path << " has J = " << d.x.cols() << " columns but " << t_path << " has "
       << d.t.size() << " grid points";
    throw DataError(os.str());
  }
  if (!y_path.empty()) {
    const Eigen::MatrixXd y = read_csv_matrix(y_path, header);
    if (y.cols() != 1 && y.rows() != 1) throw DataError(y_path + ": response must be a single column");
    d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
    if (d.y.size() != d.x.rows()) {
      std::ostringstream os;
      os << "dimension mismatch: " << y_path << " has N = " << d.y.size() << " values but " << x_path << " has "
         << d.x.rows() << " curves";
      throw DataError(os.str());
    }
  }
  try {
    d.validate(!y_path.empty());
  } catch (const Error& e) {
    throw DataError(e.what());
  }
  return d;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("error writing '" + path + "'");
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  std::string s;
  for (std::size_t k = 0; k < header.size(); ++k) s += (k ? "," : "") + header[k];
  if (!header.empty()) s += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) s += ',';
      s += format_number(m(i, j));
    }
    s += '\n';
  }
  write_text_file(path, s);
}

}  // namespace fgam
