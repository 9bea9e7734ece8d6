#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sicwfi/raman.hpp"
#include "sicwfi/spin.hpp"

namespace sicwfi {

/// Numeric CSV: an optional header row (detected when its first field is not
/// a number) followed by rows of equal length. Blank and '#' lines are
/// skipped.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  /// Column by header name, or throws io_error.
  const std::vector<double>& column(const std::string& name) const;
};

NumericTable read_numeric_csv(const std::filesystem::path& path);

/// Writes a header row and the columns with 12 significant digits.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

/// Spectrum with columns wavenumber_cm1, counts (first two columns when the
/// file has no header).
RamanSpectrum read_spectrum_csv(const std::filesystem::path& path);

/// Long-format scan: x_um, y_um, wavenumber_cm1, counts; rows with the same
/// position form one spectrum, in file order.
std::vector<RamanSpectrum> read_positioned_spectra(const std::filesystem::path& path);

/// Strain profile with columns position_um, eps_para, eps_perp.
std::vector<StrainRow> read_strain_table(const std::filesystem::path& path);

}  // namespace sicwfi
