#pragma once

// Dataset ingestion: GR/IFD response formulas, CSV parsing, concentration
// coverage and per-concentration masked response matrices.

#include <Eigen/Dense>
#include <fmt/core.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "elmal/error.hpp"
#include "elmal/random.hpp"

namespace elmal {

enum class Target { GR, IFD };

inline std::string_view to_string(Target t) { return t == Target::GR ? "GR" : "IFD"; }

/// Concentration in uM, keyed by a canonical decimal string so that "0.01",
/// "0.0100" and "1e-2" group together.
struct Concentration {
  double value = 0.0;
  std::string key;

  static Concentration from_value(double v) { return {v, fmt::format("{:.9g}", v)}; }

  friend bool operator==(const Concentration& a, const Concentration& b) { return a.key == b.key; }
  friend bool operator<(const Concentration& a, const Concentration& b) {
    if (a.key == b.key) return false;
    return std::tie(a.value, a.key) < std::tie(b.value, b.key);
  }
};

struct Observation {
  std::string cell_id;
  std::string molecule_id;
  Concentration concentration;
  double gr = 0.0;
  double ifd = 0.0;
};

/// One cell of a response matrix.
struct Position {
  std::size_t row = 0;
  std::size_t col = 0;

  friend auto operator<=>(const Position&, const Position&) = default;
};

/// m x n response matrix with a 0-1 observation mask. Values at mask-0
/// positions are never read by any model.
struct MaskedMatrix {
  Eigen::MatrixXd values;
  Eigen::MatrixXd mask;
  std::vector<std::string> cell_index;
  std::vector<std::string> molecule_index;
  Target target = Target::GR;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  bool observed(std::size_t i, std::size_t j) const { return mask(i, j) != 0.0; }

  /// Observed positions in row-major order.
  std::vector<Position> observed_positions() const {
    std::vector<Position> out;
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t j = 0; j < cols(); ++j)
        if (observed(i, j)) out.push_back({i, j});
    return out;
  }

  std::size_t observed_count() const { return static_cast<std::size_t>((mask.array() != 0.0).count()); }

  /// Copy whose mask keeps only `keep`.
  MaskedMatrix restricted_to(const std::vector<Position>& keep) const {
    MaskedMatrix out = *this;
    out.mask.setZero();
    for (const auto& p : keep) {
      if (p.row >= rows() || p.col >= cols()) throw DimensionError("position outside matrix");
      if (!observed(p.row, p.col)) throw ConfigError("position is not observed in the source matrix");
      out.mask(p.row, p.col) = 1.0;
    }
    return out;
  }

  void validate() const {
    if (values.rows() != mask.rows() || values.cols() != mask.cols())
      throw DimensionError("values and mask shapes differ");
    if (cell_index.size() != rows() || molecule_index.size() != cols())
      throw DimensionError("index lengths do not match matrix shape");
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        const double r = mask(i, j);
        if (r != 0.0 && r != 1.0) throw DomainError("mask entries must be 0 or 1");
        if (r == 1.0 && !std::isfinite(values(i, j))) throw DomainError("non-finite observed value");
      }
  }
};

struct DatasetSummary {
  std::size_t n_cells = 0;
  std::size_t n_molecules = 0;
  std::set<Concentration> concentrations_kept;
  std::size_t n_instances_total = 0;
  std::size_t n_instances_kept = 0;
};

/// Header names of the logical columns.
struct ColumnMap {
  std::string cell = "Cell HMS LINCS ID";
  std::string molecule = "Small Molecule HMS LINCS ID";
  std::string concentration = "Small Mol Concentration (uM)";
  std::string gr = "Mean Normalized Growth Rate Inhibition Value";
  std::string ifd = "Increased Fraction Dead";
};

// ---------------------------------------------------------------------------
// Response formulas

/// Growth-rate inhibition value 2^(log2(x_c/x_0) / log2(x_ctrl/x_0)).
inline double compute_gr(double x_c, double x_0, double x_ctrl) {
  if (!(x_c > 0.0) || !(x_0 > 0.0) || !(x_ctrl > 0.0))
    throw DomainError("GR: cell counts must be positive");
  if (x_ctrl == x_0) throw DomainError("GR: control count equals day-0 count");
  return std::exp2(std::log2(x_c / x_0) / std::log2(x_ctrl / x_0));
}

/// Increased fraction dead.
inline double compute_ifd(double fd_c, double fd_ctrl) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(fd_c) || !in_unit(fd_ctrl)) throw DomainError("IFD: fractions must lie in [0, 1]");
  return fd_c - fd_ctrl;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

/// RFC 4180 style reader: comma separated, double-quote quoting with ""
/// escapes, quoted newlines, CRLF or LF line ends.
inline std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          record.push_back(std::move(field));
          records.push_back(std::move(record));
        }
        field.clear();
        record.clear();
        any = false;
        break;
      default:
        field += c;
        any = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses the drug-sensitivity CSV into observations. Rejects the whole file,
/// listing offending row numbers, if any row has a malformed or out-of-domain
/// numeric field.
inline std::vector<Observation> parse_dataset(std::istream& in, const ColumnMap& columns = {}) {
  const auto records = detail::read_csv_records(in);
  if (records.empty()) throw ParseError("empty file: no header row");

  const auto& header = records.front();
  auto find = [&](const std::string& name) {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (detail::trim(header[k]) == name) return k;
    throw ParseError(fmt::format("missing required column '{}'", name));
  };
  const std::size_t c_cell = find(columns.cell);
  const std::size_t c_mol = find(columns.molecule);
  const std::size_t c_conc = find(columns.concentration);
  const std::size_t c_gr = find(columns.gr);
  const std::size_t c_ifd = find(columns.ifd);
  const std::size_t width = std::max({c_cell, c_mol, c_conc, c_gr, c_ifd}) + 1;

  std::vector<Observation> out;
  out.reserve(records.size() - 1);
  std::vector<std::size_t> bad;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    Observation o;
    double conc = 0.0;
    const bool ok = rec.size() >= width && detail::parse_double(rec[c_conc], conc) && conc > 0.0 &&
                    std::isfinite(conc) && detail::parse_double(rec[c_gr], o.gr) && std::isfinite(o.gr) &&
                    detail::parse_double(rec[c_ifd], o.ifd) && std::isfinite(o.ifd);
    if (!ok) {
      bad.push_back(r);
      continue;
    }
    o.cell_id = std::string(detail::trim(rec[c_cell]));
    o.molecule_id = std::string(detail::trim(rec[c_mol]));
    o.concentration = Concentration::from_value(conc);
    out.push_back(std::move(o));
  }
  if (!bad.empty()) {
    std::string list;
    for (std::size_t k = 0; k < bad.size() && k < 10; ++k) list += (k ? ", " : "") + std::to_string(bad[k]);
    if (bad.size() > 10) list += ", ...";
    throw ParseError(fmt::format("{} row(s) with malformed numeric fields: {}", bad.size(), list), bad);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coverage and matrices

/// Concentrations at which every (cell, molecule) pair seen anywhere in the
/// data has a measurement.
inline std::set<Concentration> select_common_concentrations(const std::vector<Observation>& obs) {
  std::set<std::pair<std::string, std::string>> all_pairs;
  std::map<Concentration, std::set<std::pair<std::string, std::string>>> by_conc;
  for (const auto& o : obs) {
    all_pairs.emplace(o.cell_id, o.molecule_id);
    by_conc[o.concentration].emplace(o.cell_id, o.molecule_id);
  }
  std::set<Concentration> out;
  for (const auto& [c, pairs] : by_conc)
    if (pairs.size() == all_pairs.size()) out.insert(c);
  return out;
}

/// Response matrix at one fully covered concentration. Rows are cells and
/// columns molecules, both sorted by id. GR is stored shifted by -1 so both
/// targets share a decision boundary of 0.
inline MaskedMatrix build_response_matrix(const std::vector<Observation>& obs, Target target,
                                          const Concentration& concentration) {
  const auto common = select_common_concentrations(obs);
  if (!common.contains(concentration))
    throw ConfigError(fmt::format("concentration {} is not fully covered", concentration.key));

  std::set<std::string> cells, molecules;
  for (const auto& o : obs) {
    cells.insert(o.cell_id);
    molecules.insert(o.molecule_id);
  }
  MaskedMatrix out;
  out.target = target;
  out.cell_index.assign(cells.begin(), cells.end());
  out.molecule_index.assign(molecules.begin(), molecules.end());
  const auto m = static_cast<Eigen::Index>(cells.size());
  const auto n = static_cast<Eigen::Index>(molecules.size());
  out.values = Eigen::MatrixXd::Zero(m, n);
  out.mask = Eigen::MatrixXd::Zero(m, n);

  auto index_of = [](const std::vector<std::string>& ids, const std::string& id) {
    return static_cast<Eigen::Index>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };
  // Duplicates must agree on both responses, not just the selected target.
  std::map<std::pair<Eigen::Index, Eigen::Index>, std::pair<double, double>> seen;
  for (const auto& o : obs) {
    if (!(o.concentration == concentration)) continue;
    const auto i = index_of(out.cell_index, o.cell_id);
    const auto j = index_of(out.molecule_index, o.molecule_id);
    const auto [it, fresh] = seen.try_emplace({i, j}, o.gr, o.ifd);
    if (!fresh) {
      if (it->second != std::pair{o.gr, o.ifd})
        throw ConfigError(fmt::format("conflicting duplicate rows for ({}, {}, {})", o.cell_id,
                                      o.molecule_id, concentration.key));
      continue;
    }
    out.values(i, j) = target == Target::GR ? o.gr - 1.0 : o.ifd;
    out.mask(i, j) = 1.0;
  }
  return out;
}

inline DatasetSummary summarize(const std::vector<Observation>& obs) {
  DatasetSummary s;
  std::set<std::string> cells, molecules;
  for (const auto& o : obs) {
    cells.insert(o.cell_id);
    molecules.insert(o.molecule_id);
  }
  s.n_cells = cells.size();
  s.n_molecules = molecules.size();
  s.n_instances_total = obs.size();
  s.concentrations_kept = select_common_concentrations(obs);
  std::set<std::tuple<std::string, std::string, std::string>> kept;
  for (const auto& o : obs)
    if (s.concentrations_kept.contains(o.concentration))
      kept.emplace(o.cell_id, o.molecule_id, o.concentration.key);
  s.n_instances_kept = kept.size();
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic ground truth

/// Cell factors (m x rank) and molecule factors (rank x n).
struct EmbeddingPair {
  Eigen::MatrixXd x;
  Eigen::MatrixXd w;

  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
};

struct SyntheticTruth {
  MaskedMatrix matrix;
  EmbeddingPair factors;
};

/// Low-rank matrix x*w plus Gaussian noise, factors uniform in [-1, 1], mask
/// all ones. Deterministic in seed.
inline SyntheticTruth generate_synthetic(std::size_t m, std::size_t n, std::size_t rank, double noise_sd,
                                         std::uint64_t seed, Target target = Target::GR) {
  if (m == 0 || n == 0 || rank == 0) throw ConfigError("synthetic: dimensions must be positive");
  if (rank > std::min(m, n)) throw ConfigError("synthetic: rank exceeds min(m, n)");
  if (!(noise_sd >= 0.0)) throw ConfigError("synthetic: noise_sd must be non-negative");
  Rng rng(seed);
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             R = static_cast<Eigen::Index>(rank);
  SyntheticTruth out;
  out.factors.x.resize(M, R);
  out.factors.w.resize(R, N);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index l = 0; l < R; ++l) out.factors.x(i, l) = uniform(rng, -1.0, 1.0);
  for (Eigen::Index l = 0; l < R; ++l)
    for (Eigen::Index j = 0; j < N; ++j) out.factors.w(l, j) = uniform(rng, -1.0, 1.0);

  auto& mat = out.matrix;
  mat.target = target;
  mat.values = out.factors.x * out.factors.w;
  if (noise_sd > 0.0)
    for (Eigen::Index i = 0; i < M; ++i)
      for (Eigen::Index j = 0; j < N; ++j) mat.values(i, j) += noise_sd * standard_normal(rng);
  mat.mask = Eigen::MatrixXd::Ones(M, N);
  for (std::size_t i = 0; i < m; ++i) mat.cell_index.push_back(fmt::format("cell{:04d}", i));
  for (std::size_t j = 0; j < n; ++j) mat.molecule_index.push_back(fmt::format("mol{:04d}", j));
  return out;
}

/// Flattens a synthetic matrix into observations at a single concentration.
/// GR responses are stored unshifted (value + 1).
inline std::vector<Observation> synthetic_observations(const MaskedMatrix& gr_shifted, const MaskedMatrix& ifd,
                                                       const Concentration& concentration) {
  if (gr_shifted.rows() != ifd.rows() || gr_shifted.cols() != ifd.cols())
    throw DimensionError("synthetic GR and IFD matrices differ in shape");
  std::vector<Observation> out;
  for (const auto& p : gr_shifted.observed_positions()) {
    if (!ifd.observed(p.row, p.col)) continue;
    const auto i = static_cast<Eigen::Index>(p.row), j = static_cast<Eigen::Index>(p.col);
    out.push_back({gr_shifted.cell_index[p.row], gr_shifted.molecule_index[p.col], concentration,
                   gr_shifted.values(i, j) + 1.0, ifd.values(i, j)});
  }
  return out;
}

}  // namespace elmal
