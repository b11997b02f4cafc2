#include <nanotomo/io.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <system_error>

#include <nanotomo/errors.hpp>

namespace nanotomo::io {

namespace fs = std::filesystem;

std::string format_double(double x) {
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string &source, std::size_t line) {
  if (text == "nan")
    return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf")
    return std::numeric_limits<double>::infinity();
  if (text == "-inf")
    return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParseError(source, line, "expected a number, got '" + std::string(text) + "'");
  return value;
}

long long parse_integer(std::string_view text, const std::string &source, std::size_t line) {
  long long value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParseError(source, line, "expected an integer, got '" + std::string(text) + "'");
  return value;
}

namespace {

std::string quote_field(const std::string &field) {
  if (field.find_first_of(",\"\n") == std::string::npos)
    return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"')
      out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_row(std::string_view line, const std::string &source, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (quoted)
    throw ParseError(source, line_no, "unterminated quoted field");
  fields.push_back(std::move(current));
  return fields;
}

std::string join_row(const std::vector<std::string> &fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i)
      out += ',';
    out += quote_field(fields[i]);
  }
  return out;
}

bool parse_bool(std::string_view text, const std::string &source, std::size_t line) {
  if (text == "1" || text == "true")
    return true;
  if (text == "0" || text == "false")
    return false;
  throw ParseError(source, line, "expected a boolean, got '" + std::string(text) + "'");
}

/// Typed access to one row of a parsed table.
class RowReader {
public:
  RowReader(const Table &t, std::size_t row, const std::string &source)
      : table_(t), row_(row), source_(source) {}

  std::size_t line() const { return table_.line_numbers[row_]; }
  const std::string &text(std::string_view col) const { return table_.rows[row_][table_.column(col, source_)]; }
  double number(std::string_view col) const { return parse_double(text(col), source_, line()); }
  long long integer(std::string_view col) const { return parse_integer(text(col), source_, line()); }
  bool flag(std::string_view col) const { return parse_bool(text(col), source_, line()); }

private:
  const Table &table_;
  std::size_t row_;
  const std::string &source_;
};

std::string cell_suffix(double wavelength_nm, double bias_current_uA) {
  return format_double(wavelength_nm) + "nm_" + format_double(bias_current_uA) + "uA.csv";
}

} // namespace

std::size_t Table::column(std::string_view name, const std::string &source) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name)
      return i;
  throw ParseError(source, 1, "missing column '" + std::string(name) + "'");
}

std::string Table::to_csv() const {
  std::string out = join_row(header) + "\n";
  for (const auto &row : rows)
    out += join_row(row) + "\n";
  return out;
}

Table parse_csv(std::string_view text, const std::string &source) {
  Table t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty())
      continue;
    auto fields = split_row(line, source, line_no);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError(source, line_no,
                       "expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header)
    throw ParseError(source, std::max<std::size_t>(line_no, 1), "empty file: no header row");
  return t;
}

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad())
    throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const fs::path &path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec)
      throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out)
      throw IoError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' into place");
  }
}

// Sweep files -------------------------------------------------------------

std::string sweep_file_name(double wavelength_nm, double bias_current_uA) {
  return "sweep_" + cell_suffix(wavelength_nm, bias_current_uA);
}

std::string sweep_to_csv(const SweepData &data) {
  std::string out(kSweepHeader);
  out += '\n';
  for (const auto &r : data.records) {
    out += format_double(r.wavelength_nm) + ',' + format_double(r.bias_current_uA) + ',' +
           format_double(r.mean_photon_number) + ',' + std::to_string(r.pulses) + ',' + std::to_string(r.clicks) +
           ',' + std::to_string(r.repeat_index) + '\n';
  }
  return out;
}

SweepData sweep_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  if (join_row(t.header) != kSweepHeader)
    throw ParseError(source, 1, "unexpected sweep header; want " + std::string(kSweepHeader));
  SweepData data;
  data.source = source;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    SweepRecord rec;
    rec.wavelength_nm = row.number("wavelength_nm");
    rec.bias_current_uA = row.number("bias_current_uA");
    rec.mean_photon_number = row.number("mean_photon_number");
    const long long pulses = row.integer("pulses");
    const long long clicks = row.integer("clicks");
    if (pulses < 0 || clicks < 0)
      throw ParseError(source, row.line(), "counts must be non-negative");
    if (clicks > pulses)
      throw ParseError(source, row.line(), "clicks exceed pulses");
    if (!(rec.mean_photon_number >= 0.0))
      throw ParseError(source, row.line(), "mean photon number must be >= 0");
    rec.pulses = static_cast<std::uint64_t>(pulses);
    rec.clicks = static_cast<std::uint64_t>(clicks);
    rec.repeat_index = static_cast<int>(row.integer("repeat_index"));
    if (!data.records.empty() && (rec.wavelength_nm != data.records.front().wavelength_nm ||
                                  rec.bias_current_uA != data.records.front().bias_current_uA))
      throw ParseError(source, row.line(), "all rows of a sweep must share wavelength and bias current");
    data.records.push_back(rec);
  }
  if (data.records.empty())
    throw ParseError(source, 1, "sweep file has no data rows");
  return data;
}

SweepData read_sweep(const fs::path &path) { return sweep_from_csv(read_file(path), path.string()); }

// Response table ----------------------------------------------------------

std::string responses_to_csv(std::span<const tomography::ResponseRow> rows) {
  std::size_t orders = 1;
  for (const auto &r : rows)
    orders = std::max(orders, r.nmax);
  Table t;
  t.header = {"wavelength_nm", "bias_current_uA", "nmax", "no_signal", "eta", "eta_err"};
  for (std::size_t k = 1; k <= orders; ++k) {
    t.header.push_back("p" + std::to_string(k));
    t.header.push_back("p" + std::to_string(k) + "_err");
  }
  for (const char *name : {"p_tail", "p_tail_err", "deviance", "deviance_per_dof"})
    t.header.emplace_back(name);

  for (const auto &r : rows) {
    std::vector<std::string> f = {format_double(r.wavelength_nm), format_double(r.bias_current_uA),
                                  std::to_string(r.nmax), r.no_signal ? "1" : "0", format_double(r.eta),
                                  format_double(r.eta_err)};
    for (std::size_t k = 0; k < orders; ++k) {
      const bool present = k < r.nmax;
      f.push_back(present ? format_double(r.p[k]) : "");
      f.push_back(present ? format_double(r.p_err[k]) : "");
    }
    for (double v : {r.p_tail, r.p_tail_err, r.deviance, r.deviance_per_dof})
      f.push_back(format_double(v));
    t.rows.push_back(std::move(f));
  }
  return t.to_csv();
}

std::vector<tomography::ResponseRow> responses_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  std::vector<tomography::ResponseRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    tomography::ResponseRow r;
    r.wavelength_nm = row.number("wavelength_nm");
    r.bias_current_uA = row.number("bias_current_uA");
    const long long nmax = row.integer("nmax");
    if (nmax < 1)
      throw ParseError(source, row.line(), "nmax must be >= 1");
    r.nmax = static_cast<std::size_t>(nmax);
    r.no_signal = row.flag("no_signal");
    r.eta = row.number("eta");
    r.eta_err = row.number("eta_err");
    for (std::size_t k = 1; k <= r.nmax; ++k) {
      r.p.push_back(row.number("p" + std::to_string(k)));
      r.p_err.push_back(row.number("p" + std::to_string(k) + "_err"));
    }
    r.p_tail = row.number("p_tail");
    r.p_tail_err = row.number("p_tail_err");
    r.deviance = row.number("deviance");
    r.deviance_per_dof = row.number("deviance_per_dof");
    out.push_back(std::move(r));
  }
  if (out.empty())
    throw ParseError(source, 1, "response table has no data rows");
  return out;
}

std::vector<DecompositionRow> decompose(const photonics::DetectorResponse &response,
                                        std::span<const double> mean_photon_numbers) {
  std::vector<DecompositionRow> out;
  for (double n : mean_photon_numbers) {
    const auto d = photonics::contribution_decomposition(response, n);
    out.push_back({n, photonics::click_probability(response, n), d.orders, d.tail});
  }
  return out;
}

std::string decomposition_file_name(double wavelength_nm, double bias_current_uA) {
  return "decomposition_" + cell_suffix(wavelength_nm, bias_current_uA);
}

std::string decomposition_to_csv(std::span<const DecompositionRow> rows) {
  const std::size_t orders = rows.empty() ? 0 : rows.front().orders.size();
  Table t;
  t.header = {"N", "R_fit"};
  for (std::size_t k = 1; k <= orders; ++k)
    t.header.push_back("C_" + std::to_string(k));
  t.header.emplace_back("C_tail");
  for (const auto &r : rows) {
    std::vector<std::string> f = {format_double(r.mean_photon_number), format_double(r.r_fit)};
    for (double c : r.orders)
      f.push_back(format_double(c));
    f.push_back(format_double(r.tail));
    t.rows.push_back(std::move(f));
  }
  return t.to_csv();
}

std::vector<DecompositionRow> decomposition_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  if (t.header.size() < 3)
    throw ParseError(source, 1, "decomposition needs N, R_fit, C_n and C_tail columns");
  const std::size_t orders = t.header.size() - 3;
  std::vector<DecompositionRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    DecompositionRow r;
    r.mean_photon_number = row.number("N");
    r.r_fit = row.number("R_fit");
    for (std::size_t k = 1; k <= orders; ++k)
      r.orders.push_back(row.number("C_" + std::to_string(k)));
    r.tail = row.number("C_tail");
    out.push_back(std::move(r));
  }
  return out;
}

// Analysis outputs --------------------------------------------------------

std::string curves_to_csv(std::span<const analysis::ResponseCurve> curves) {
  Table t;
  t.header = {"wavelength_nm", "photon_number", "energy_eV", "bias_current_uA", "p", "sigma_p"};
  for (const auto &c : curves)
    for (const auto &pt : c.points)
      t.rows.push_back({format_double(c.wavelength_nm), std::to_string(c.photon_number), format_double(c.energy_eV()),
                        format_double(pt.bias_current_uA), format_double(pt.p), format_double(pt.sigma_p)});
  return t.to_csv();
}

std::vector<analysis::ResponseCurve> curves_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  std::vector<analysis::ResponseCurve> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    const double lambda = row.number("wavelength_nm");
    const int n = static_cast<int>(row.integer("photon_number"));
    if (out.empty() || out.back().wavelength_nm != lambda || out.back().photon_number != n)
      out.push_back({lambda, n, {}});
    out.back().points.push_back({row.number("bias_current_uA"), row.number("p"), row.number("sigma_p")});
  }
  return out;
}

std::string thresholds_to_csv(std::span<const analysis::ThresholdPoint> points) {
  Table t;
  t.header = {"wavelength_nm", "photon_number", "energy_eV", "current_uA", "sigma_current_uA"};
  for (const auto &p : points)
    t.rows.push_back({format_double(p.wavelength_nm), std::to_string(p.photon_number), format_double(p.energy_eV),
                      format_double(p.current_uA), format_double(p.sigma_current_uA)});
  return t.to_csv();
}

std::vector<analysis::ThresholdPoint> thresholds_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  std::vector<analysis::ThresholdPoint> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    analysis::ThresholdPoint p;
    p.wavelength_nm = row.number("wavelength_nm");
    p.photon_number = static_cast<int>(row.integer("photon_number"));
    p.energy_eV = row.number("energy_eV");
    p.current_uA = row.number("current_uA");
    p.sigma_current_uA = row.number("sigma_current_uA");
    out.push_back(p);
  }
  return out;
}

std::string scaling_to_csv(const analysis::ScalingFit &fit) {
  Table t;
  t.header = {"gamma_uA_per_eV", "intercept_uA", "cov_gamma_gamma", "cov_gamma_intercept", "cov_intercept_intercept",
              "sigma_gamma", "sigma_intercept", "chi2", "dof"};
  t.rows.push_back({format_double(fit.gamma_uA_per_eV), format_double(fit.intercept_uA),
                    format_double(fit.covariance(0, 0)), format_double(fit.covariance(0, 1)),
                    format_double(fit.covariance(1, 1)), format_double(fit.sigma_gamma()),
                    format_double(fit.sigma_intercept()), format_double(fit.chi2), std::to_string(fit.dof)});
  return t.to_csv();
}

analysis::ScalingFit scaling_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  if (t.rows.size() != 1)
    throw ParseError(source, 1, "scaling file must hold exactly one row");
  RowReader row(t, 0, source);
  analysis::ScalingFit fit;
  fit.gamma_uA_per_eV = row.number("gamma_uA_per_eV");
  fit.intercept_uA = row.number("intercept_uA");
  fit.covariance(0, 0) = row.number("cov_gamma_gamma");
  fit.covariance(0, 1) = fit.covariance(1, 0) = row.number("cov_gamma_intercept");
  fit.covariance(1, 1) = row.number("cov_intercept_intercept");
  fit.chi2 = row.number("chi2");
  fit.dof = static_cast<std::size_t>(row.integer("dof"));
  return fit;
}

std::string collapse_to_csv(std::span<const analysis::CollapsedPoint> points) {
  Table t;
  t.header = {"wavelength_nm", "photon_number", "u_uA", "p", "sigma_p"};
  for (const auto &p : points)
    t.rows.push_back({format_double(p.wavelength_nm), std::to_string(p.photon_number), format_double(p.u_uA),
                      format_double(p.p), format_double(p.sigma_p)});
  return t.to_csv();
}

std::vector<analysis::CollapsedPoint> collapse_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  std::vector<analysis::CollapsedPoint> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    out.push_back({row.number("u_uA"), row.number("p"), row.number("sigma_p"), row.number("wavelength_nm"),
                   static_cast<int>(row.integer("photon_number"))});
  }
  return out;
}

std::string gamma_scan_to_csv(const analysis::GammaScan &scan) {
  Table t;
  t.header = {"gamma_uA_per_eV", "score_dex"};
  for (std::size_t i = 0; i < scan.gammas.size(); ++i)
    t.rows.push_back({format_double(scan.gammas[i]), format_double(scan.scores[i])});
  return t.to_csv();
}

analysis::GammaScan gamma_scan_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  analysis::GammaScan scan;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    const double g = row.number("gamma_uA_per_eV");
    const double s = row.number("score_dex");
    scan.gammas.push_back(g);
    scan.scores.push_back(s);
    if (std::isfinite(s) && !(s >= scan.best_score)) {
      scan.best_score = s;
      scan.best_gamma = g;
    }
  }
  return scan;
}

std::string model_fits_to_csv(std::span<const analysis::ModelFit> fits) {
  Table t;
  t.header = {"model",        "param1_name", "param1", "param1_err",   "param2_name", "param2",
              "param2_err", "chi2",        "dof",    "chi2_per_dof", "flagged",     "note"};
  for (const auto &f : fits) {
    std::vector<std::string> row = {analysis::to_string(f.kind)};
    for (std::size_t j = 0; j < 2; ++j) {
      const bool have = j < f.params.size();
      row.push_back(have ? f.params[j].name : "");
      row.push_back(format_double(have ? f.params[j].value : std::numeric_limits<double>::quiet_NaN()));
      row.push_back(format_double(have ? f.params[j].error : std::numeric_limits<double>::quiet_NaN()));
    }
    row.push_back(format_double(f.chi2));
    row.push_back(std::to_string(f.dof));
    row.push_back(format_double(f.chi2_per_dof));
    row.push_back(f.flagged ? "1" : "0");
    row.push_back(f.note);
    t.rows.push_back(std::move(row));
  }
  return t.to_csv();
}

std::vector<analysis::ModelFit> model_fits_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  std::vector<analysis::ModelFit> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    analysis::ModelFit f;
    try {
      f.kind = analysis::model_kind_from_string(row.text("model"));
    } catch (const std::invalid_argument &e) {
      throw ParseError(source, row.line(), e.what());
    }
    for (const char *prefix : {"param1", "param2"}) {
      const std::string p(prefix);
      f.params.push_back({row.text(p + "_name"), row.number(p), row.number(p + "_err")});
    }
    f.chi2 = row.number("chi2");
    f.dof = static_cast<std::size_t>(row.integer("dof"));
    f.chi2_per_dof = row.number("chi2_per_dof");
    f.flagged = row.flag("flagged");
    f.note = row.text("note");
    out.push_back(std::move(f));
  }
  return out;
}

std::string dark_to_csv(const analysis::DarkExtrapolation &dark) {
  Table t;
  t.header = {"current_uA", "sigma_uA", "critical_current_uA", "ratio_to_critical", "note"};
  t.rows.push_back({format_double(dark.current_uA), format_double(dark.sigma_uA),
                    format_double(dark.critical_current_uA), format_double(dark.ratio_to_critical), dark.note});
  return t.to_csv();
}

analysis::DarkExtrapolation dark_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  if (t.rows.size() != 1)
    throw ParseError(source, 1, "dark extrapolation file must hold exactly one row");
  RowReader row(t, 0, source);
  return {row.number("current_uA"), row.number("sigma_uA"), row.number("critical_current_uA"),
          row.number("ratio_to_critical"), row.text("note")};
}

std::string exclusions_to_csv(std::span<const Exclusion> rows) {
  Table t;
  t.header = {"wavelength_nm", "photon_number", "reason"};
  for (const auto &e : rows)
    t.rows.push_back({format_double(e.wavelength_nm), std::to_string(e.photon_number), e.reason});
  return t.to_csv();
}

std::vector<Exclusion> exclusions_from_csv(std::string_view text, const std::string &source) {
  const Table t = parse_csv(text, source);
  std::vector<Exclusion> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RowReader row(t, i, source);
    out.push_back({row.number("wavelength_nm"), static_cast<int>(row.integer("photon_number")), row.text("reason")});
  }
  return out;
}

} // namespace nanotomo::io
