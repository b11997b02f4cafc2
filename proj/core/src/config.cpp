#include <nanotomo/config.hpp>

#include <charconv>
#include <cmath>
#include <stdexcept>

#include <nanotomo/errors.hpp>
#include <nanotomo/io.hpp>

namespace nanotomo {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double number(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(out))
    throw ConfigError(std::string(key) + ": expected a finite number, got '" + std::string(value) + "'");
  return out;
}

long long integer(std::string_view key, std::string_view value) {
  long long out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(value) + "'");
  return out;
}

std::size_t count(std::string_view key, std::string_view value) {
  const long long v = integer(key, value);
  if (v < 0)
    throw ConfigError(std::string(key) + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

bool boolean(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes")
    return true;
  if (value == "false" || value == "0" || value == "no")
    return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(value) + "'");
}

std::vector<double> number_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    const auto item = trim(value.substr(0, comma));
    if (!item.empty())
      out.push_back(number(key, item));
    if (comma == std::string_view::npos)
      break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

/// Either a comma list or `lo:hi:step`.
std::vector<double> grid(std::string_view key, std::string_view value) {
  if (value.find(':') == std::string_view::npos)
    return number_list(key, value);
  std::vector<double> parts;
  while (true) {
    const auto colon = value.find(':');
    parts.push_back(number(key, trim(value.substr(0, colon))));
    if (colon == std::string_view::npos)
      break;
    value.remove_prefix(colon + 1);
  }
  if (parts.size() != 3)
    throw ConfigError(std::string(key) + ": range must be lo:hi:step");
  try {
    return sim::CampaignPlan::current_grid(parts[0], parts[1], parts[2]);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

std::string join(const std::vector<double> &values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i)
      out += ", ";
    out += io::format_double(values[i]);
  }
  return out;
}

/// `analysis.sigma_override.<lambda>nm.n<k>`
std::pair<double, int> override_key(std::string_view key) {
  constexpr std::string_view prefix = "analysis.sigma_override.";
  auto rest = key.substr(prefix.size());
  const auto nm = rest.find("nm.n");
  if (nm == std::string_view::npos)
    throw ConfigError(std::string(key) + ": expected analysis.sigma_override.<wavelength>nm.n<order>");
  const double lambda = number(key, rest.substr(0, nm));
  const long long order = integer(key, rest.substr(nm + 4));
  if (!(lambda > 0.0) || order < 1)
    throw ConfigError(std::string(key) + ": wavelength and order must be positive");
  return {lambda, static_cast<int>(order)};
}

void rebuild_ladder(RunConfig &c) {
  try {
    c.campaign.mean_photon_numbers = sim::CampaignPlan::log_ladder(c.photon_min, c.photon_max, c.photon_count);
  } catch (const std::invalid_argument &) {
    // Left for validate() to report once every key is read.
    c.campaign.mean_photon_numbers.clear();
  }
}

} // namespace

void RunConfig::set(std::string_view key, std::string_view raw) {
  const auto value = trim(raw);
  auto &d = detector;
  auto &a = analysis;
  const auto k = std::string(key);

  if (k == "detector.gamma_uA_per_eV")
    d.gamma_uA_per_eV = number(key, value);
  else if (k == "detector.u0_uA")
    d.u0_uA = number(key, value);
  else if (k == "detector.width_uA")
    d.width_uA = number(key, value);
  else if (k == "detector.p_sat")
    d.p_sat = number(key, value);
  else if (k == "detector.eta")
    d.eta = number(key, value);
  else if (k == "detector.critical_current_uA")
    d.critical_current_uA = number(key, value);
  else if (k == "detector.dark_rate_hz")
    d.dark_rate_hz = number(key, value);
  else if (k == "campaign.wavelengths_nm")
    campaign.wavelengths_nm = number_list(key, value);
  else if (k == "campaign.currents_uA")
    campaign.bias_currents_uA = grid(key, value);
  else if (k == "campaign.photon_min") {
    photon_min = number(key, value);
    rebuild_ladder(*this);
  } else if (k == "campaign.photon_max") {
    photon_max = number(key, value);
    rebuild_ladder(*this);
  } else if (k == "campaign.photon_count") {
    photon_count = count(key, value);
    rebuild_ladder(*this);
  } else if (k == "campaign.pulses_per_window")
    campaign.pulses_per_window = count(key, value);
  else if (k == "campaign.window_s")
    campaign.window_s = number(key, value);
  else if (k == "campaign.repeats")
    campaign.repeats = static_cast<int>(integer(key, value));
  else if (k == "campaign.seed")
    campaign.seed = count(key, value);
  else if (k == "fit.max_order")
    fit.max_order = count(key, value);
  else if (k == "fit.bootstrap_resamples")
    fit.bootstrap_resamples = static_cast<int>(integer(key, value));
  else if (k == "fit.shared_eta")
    fit.shared_eta = boolean(key, value);
  else if (k == "fit.eta_calibration_sweeps")
    fit.eta_calibration_sweeps = count(key, value);
  else if (k == "fit.monotone")
    fit.monotone = boolean(key, value);
  else if (k == "analysis.threshold_level")
    a.threshold_level = number(key, value);
  else if (k == "analysis.min_sigma_uA")
    a.min_sigma_uA = number(key, value);
  else if (k == "analysis.max_relative_sigma")
    a.max_relative_sigma = number(key, value);
  else if (k == "analysis.gamma_lo")
    a.gamma_lo = number(key, value);
  else if (k == "analysis.gamma_hi")
    a.gamma_hi = number(key, value);
  else if (k == "analysis.gamma_step")
    a.gamma_step = number(key, value);
  else if (k == "analysis.collapse_bin_uA")
    a.collapse.bin_width_uA = number(key, value);
  else if (k == "analysis.collapse_p_min")
    a.collapse.p_min = number(key, value);
  else if (k == "analysis.collapse_p_max")
    a.collapse.p_max = number(key, value);
  else if (k == "analysis.model.wire_width_nm")
    a.model.wire_width_nm = number(key, value);
  else if (k == "analysis.model.critical_current_uA")
    a.model.critical_current_uA = number(key, value);
  else if (k == "analysis.model.gap_eV")
    a.model.gap_eV = number(key, value);
  else if (k == "analysis.model.i0_uA")
    a.model.i0_uA = number(key, value);
  else if (k == "analysis.model.beta")
    a.model.beta = number(key, value);
  else if (k.starts_with("analysis.sigma_override.")) {
    const double sigma = number(key, value);
    if (!(sigma > 0.0))
      throw ConfigError(k + ": sigma must be positive");
    a.sigma_overrides[override_key(key)] = sigma;
  } else if (k == "output.dir") {
    if (value.empty())
      throw ConfigError("output.dir must not be empty");
    output_dir = std::string(value);
  } else
    throw ConfigError("unknown configuration key '" + k + "'");
}

void RunConfig::validate() const {
  if (campaign.wavelengths_nm.empty())
    throw ConfigError("campaign.wavelengths_nm is empty");
  if (campaign.bias_currents_uA.empty())
    throw ConfigError("campaign.currents_uA is empty");
  if (campaign.mean_photon_numbers.empty())
    throw ConfigError("photon-number ladder is empty: need 0 < photon_min <= photon_max and photon_count >= 2");
  try {
    detector.validate();
    campaign.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  for (double i : campaign.bias_currents_uA)
    if (i > detector.critical_current_uA)
      throw ConfigError("bias current " + io::format_double(i) + " uA exceeds the critical current");
  if (fit.max_order < 1)
    throw ConfigError("fit.max_order must be >= 1");
  if (fit.eta_calibration_sweeps < 1)
    throw ConfigError("fit.eta_calibration_sweeps must be >= 1");
  if (fit.bootstrap_resamples < 0)
    throw ConfigError("fit.bootstrap_resamples must be >= 0");
  if (!(analysis.threshold_level > 0.0 && analysis.threshold_level < 1.0))
    throw ConfigError("analysis.threshold_level must lie in (0,1)");
  if (!(analysis.min_sigma_uA >= 0.0))
    throw ConfigError("analysis.min_sigma_uA must be >= 0");
  if (!(analysis.max_relative_sigma > 0.0))
    throw ConfigError("analysis.max_relative_sigma must be positive");
  if (!(analysis.gamma_step > 0.0) || analysis.gamma_hi < analysis.gamma_lo)
    throw ConfigError("gamma grid is empty: need gamma_lo <= gamma_hi and gamma_step > 0");
  if (!(analysis.collapse.bin_width_uA > 0.0))
    throw ConfigError("analysis.collapse_bin_uA must be positive");
  if (!(analysis.collapse.p_min <= analysis.collapse.p_max))
    throw ConfigError("analysis.collapse_p_min exceeds collapse_p_max");
  if (!(analysis.model.wire_width_nm > 0.0) || !(analysis.model.critical_current_uA > 0.0))
    throw ConfigError("model wire width and critical current must be positive");
  if (analysis.model.beta && *analysis.model.beta == 0.0)
    throw ConfigError("analysis.model.beta must be non-zero");
}

std::string RunConfig::echo() const {
  std::string out;
  const auto line = [&](const std::string &key, const std::string &value) { out += key + " = " + value + "\n"; };
  const auto num = [](double v) { return io::format_double(v); };
  const auto optional = [&](const std::string &key, const std::optional<double> &v) {
    if (v)
      line(key, num(*v));
    else
      out += "# " + key + " is not set\n";
  };

  line("detector.gamma_uA_per_eV", num(detector.gamma_uA_per_eV));
  line("detector.u0_uA", num(detector.u0_uA));
  line("detector.width_uA", num(detector.width_uA));
  line("detector.p_sat", num(detector.p_sat));
  line("detector.eta", num(detector.eta));
  line("detector.critical_current_uA", num(detector.critical_current_uA));
  line("detector.dark_rate_hz", num(detector.dark_rate_hz));

  line("campaign.wavelengths_nm", join(campaign.wavelengths_nm));
  line("campaign.currents_uA", join(campaign.bias_currents_uA));
  line("campaign.photon_min", num(photon_min));
  line("campaign.photon_max", num(photon_max));
  line("campaign.photon_count", std::to_string(photon_count));
  line("campaign.pulses_per_window", std::to_string(campaign.pulses_per_window));
  line("campaign.window_s", num(campaign.window_s));
  line("campaign.repeats", std::to_string(campaign.repeats));
  line("campaign.seed", std::to_string(campaign.seed));

  line("fit.max_order", std::to_string(fit.max_order));
  line("fit.bootstrap_resamples", std::to_string(fit.bootstrap_resamples));
  line("fit.shared_eta", fit.shared_eta ? "true" : "false");
  line("fit.eta_calibration_sweeps", std::to_string(fit.eta_calibration_sweeps));
  line("fit.monotone", fit.monotone ? "true" : "false");

  line("analysis.threshold_level", num(analysis.threshold_level));
  line("analysis.min_sigma_uA", num(analysis.min_sigma_uA));
  line("analysis.max_relative_sigma", num(analysis.max_relative_sigma));
  line("analysis.gamma_lo", num(analysis.gamma_lo));
  line("analysis.gamma_hi", num(analysis.gamma_hi));
  line("analysis.gamma_step", num(analysis.gamma_step));
  line("analysis.collapse_bin_uA", num(analysis.collapse.bin_width_uA));
  line("analysis.collapse_p_min", num(analysis.collapse.p_min));
  line("analysis.collapse_p_max", num(analysis.collapse.p_max));
  line("analysis.model.wire_width_nm", num(analysis.model.wire_width_nm));
  line("analysis.model.critical_current_uA", num(analysis.model.critical_current_uA));
  optional("analysis.model.gap_eV", analysis.model.gap_eV);
  optional("analysis.model.i0_uA", analysis.model.i0_uA);
  optional("analysis.model.beta", analysis.model.beta);
  for (const auto &[key, sigma] : analysis.sigma_overrides)
    line("analysis.sigma_override." + num(key.first) + "nm.n" + std::to_string(key.second), num(sigma));

  line("output.dir", output_dir.string());
  return out;
}

RunConfig parse_config(std::string_view text, const std::string &source) {
  RunConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto end = text.find('\n');
    auto line = text.substr(0, end);
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError &e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path &path) {
  return parse_config(io::read_file(path), path.string());
}

} // namespace nanotomo
