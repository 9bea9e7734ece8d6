#include "sicwfi/table_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sicwfi/error.hpp"

namespace sicwfi {

namespace {

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream row(line);
  std::string f;
  while (std::getline(row, f, ',')) out.push_back(trimmed(f));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end;
}

std::string where(const std::filesystem::path& path, int line) {
  return path.string() + ":" + std::to_string(line);
}

}  // namespace

const std::vector<double>& NumericTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return columns[k];
  }
  fail(ErrorCode::io_error, "missing column '" + name + "'");
}

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  NumericTable t;
  std::string line;
  int n = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++n;
    const std::string s = trimmed(line);
    if (s.empty() || s.front() == '#') continue;
    const auto f = fields(s);
    double v = 0.0;
    if (first) {
      first = false;
      t.columns.resize(f.size());
      if (!parse_double(f.front(), v)) {
        t.header = f;
        continue;
      }
    }
    if (f.size() != t.columns.size()) {
      fail(ErrorCode::io_error, where(path, n) + ": expected " + std::to_string(t.columns.size()) +
                                    " fields, found " + std::to_string(f.size()));
    }
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (!parse_double(f[k], v)) {
        fail(ErrorCode::io_error, where(path, n) + ": '" + f[k] + "' is not a number");
      }
      t.columns[k].push_back(v);
    }
  }
  if (t.rows() == 0) fail(ErrorCode::io_error, path.string() + " holds no data rows");
  return t;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) {
    fail(ErrorCode::invalid_argument, "CSV header and column count differ");
  }
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != rows) fail(ErrorCode::invalid_argument, "CSV columns differ in length");
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.12g", columns[k][r]);
      out << (k ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

RamanSpectrum read_spectrum_csv(const std::filesystem::path& path) {
  const NumericTable t = read_numeric_csv(path);
  RamanSpectrum s;
  if (t.header.empty()) {
    if (t.columns.size() < 2) fail(ErrorCode::io_error, path.string() + ": need two columns");
    s.wavenumber = t.columns[0];
    s.counts = t.columns[1];
  } else {
    s.wavenumber = t.column("wavenumber_cm1");
    s.counts = t.column("counts");
  }
  s.validate();
  return s;
}

std::vector<RamanSpectrum> read_positioned_spectra(const std::filesystem::path& path) {
  const NumericTable t = read_numeric_csv(path);
  if (t.header.empty()) fail(ErrorCode::io_error, path.string() + ": a header row is required");
  const auto& x = t.column("x_um");
  const auto& y = t.column("y_um");
  const auto& nu = t.column("wavenumber_cm1");
  const auto& c = t.column("counts");
  std::vector<RamanSpectrum> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const Eigen::Vector2d p(x[r], y[r]);
    if (out.empty() || *out.back().position != p) {
      for (const auto& s : out) {
        if (*s.position == p) {
          fail(ErrorCode::io_error, path.string() + ": rows of position (" + std::to_string(p.x()) +
                                        ", " + std::to_string(p.y()) + ") are not contiguous");
        }
      }
      out.emplace_back();
      out.back().position = p;
    }
    out.back().wavenumber.push_back(nu[r]);
    out.back().counts.push_back(c[r]);
  }
  for (const auto& s : out) s.validate();
  return out;
}

std::vector<StrainRow> read_strain_table(const std::filesystem::path& path) {
  const NumericTable t = read_numeric_csv(path);
  if (t.header.empty()) fail(ErrorCode::io_error, path.string() + ": a header row is required");
  const auto& x = t.column("position_um");
  const auto& para = t.column("eps_para");
  const auto& perp = t.column("eps_perp");
  std::vector<StrainRow> rows;
  for (std::size_t r = 0; r < t.rows(); ++r) rows.push_back({x[r] * 1e-6, para[r], perp[r]});
  return rows;
}

}  // namespace sicwfi
