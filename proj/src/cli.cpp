#include "tiltcrm/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tiltcrm/errors.hpp"
#include "tiltcrm/functionals.hpp"
#include "tiltcrm/log.hpp"

namespace tiltcrm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  return kExitNumerical;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  if (v == 0.0) v = 0.0;  // drops the sign of -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  if (buf[0] == '-' && std::strtod(buf, nullptr) == 0.0) return std::string(buf + 1);
  return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const char* b = item.data();
    const char* e = b + item.size();
    while (b < e && *b == ' ') ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ConfigError(what + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------- config

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ConfigError("config " + (where.empty() ? std::string("/") : where) + ": " + what);
}

void check_object(const json& j, const std::string& where,
                  std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      bad(where + "/" + key, "unknown key");
  }
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  return j.get<double>();
}

long long as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where, "expected an integer");
  return j.get<long long>();
}

long long as_positive_int(const json& j, const std::string& where) {
  const long long v = as_int(j, where);
  if (v < 1) bad(where, "must be >= 1");
  return v;
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) bad(where, "expected a string");
  return j.get<std::string>();
}

bool as_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) bad(where, "expected true or false");
  return j.get<bool>();
}

std::uint64_t as_seed(const json& j, const std::string& where) {
  if (!j.is_number_unsigned()) bad(where, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

std::vector<double> as_numbers(const json& j, const std::string& where) {
  if (!j.is_array()) bad(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k)
    out.push_back(as_number(j[k], where + "/" + std::to_string(k)));
  return out;
}

void parse_mcmc(const json& j, mcmc::McmcConfig& c) {
  const std::string w = "/mcmc";
  check_object(j, w,
               {"n_iter", "burn_in", "thin", "H", "delta", "adapt_delta",
                "kernel_halfwidth_factor", "kernel_halfwidth", "seed", "scheme"});
  if (j.contains("n_iter")) c.n_iter = int(as_positive_int(j["n_iter"], w + "/n_iter"));
  if (j.contains("burn_in")) {
    const long long b = as_int(j["burn_in"], w + "/burn_in");
    if (b < 0) bad(w + "/burn_in", "must be >= 0");
    c.burn_in = int(b);
  }
  if (j.contains("thin")) c.thin = int(as_positive_int(j["thin"], w + "/thin"));
  if (j.contains("H")) c.H = std::size_t(as_positive_int(j["H"], w + "/H"));
  if (j.contains("delta")) {
    c.delta = as_number(j["delta"], w + "/delta");
    if (!(c.delta >= 1.0)) bad(w + "/delta", "must be >= 1");
  }
  if (j.contains("adapt_delta")) c.adapt_delta = as_bool(j["adapt_delta"], w + "/adapt_delta");
  if (j.contains("kernel_halfwidth_factor")) {
    c.kernel_halfwidth_factor =
        as_number(j["kernel_halfwidth_factor"], w + "/kernel_halfwidth_factor");
    if (!(c.kernel_halfwidth_factor > 0.0)) bad(w + "/kernel_halfwidth_factor", "must be > 0");
  }
  if (j.contains("kernel_halfwidth")) {
    c.kernel_halfwidth = as_number(j["kernel_halfwidth"], w + "/kernel_halfwidth");
    if (!(c.kernel_halfwidth >= 0.0)) bad(w + "/kernel_halfwidth", "must be >= 0");
  }
  if (j.contains("seed")) c.seed = as_seed(j["seed"], w + "/seed");
  if (j.contains("scheme")) {
    const std::string s = as_string(j["scheme"], w + "/scheme");
    if (s == "augmented") c.scheme = mcmc::McmcConfig::Scheme::augmented;
    else if (s == "marginal") c.scheme = mcmc::McmcConfig::Scheme::marginal;
    else bad(w + "/scheme", "expected augmented or marginal");
  }
  if (c.burn_in >= c.n_iter) bad(w + "/burn_in", "must be smaller than n_iter");
}

void parse_prior(const json& j, mcmc::Prior& p) {
  const std::string w = "/prior";
  check_object(j, w, {"alpha", "beta_mean", "beta_cov", "prior_variance"});
  if (j.contains("alpha")) {
    p.alpha = as_number(j["alpha"], w + "/alpha");
    if (!(p.alpha > 0.0)) bad(w + "/alpha", "must be > 0");
  }
  if (j.contains("prior_variance")) {
    p.prior_variance = as_number(j["prior_variance"], w + "/prior_variance");
    if (!(p.prior_variance > 0.0)) bad(w + "/prior_variance", "must be > 0");
  }
  if (j.contains("beta_mean")) {
    const auto v = as_numbers(j["beta_mean"], w + "/beta_mean");
    p.beta_mean = Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
  }
  if (j.contains("beta_cov")) {
    const json& m = j["beta_cov"];
    if (!m.is_array()) bad(w + "/beta_cov", "expected an array of rows");
    const auto k = Eigen::Index(m.size());
    p.beta_cov.resize(k, k);
    for (Eigen::Index r = 0; r < k; ++r) {
      const std::string rw = w + "/beta_cov/" + std::to_string(r);
      const auto row = as_numbers(m[std::size_t(r)], rw);
      if (Eigen::Index(row.size()) != k) bad(rw, "covariance must be square");
      for (Eigen::Index c = 0; c < k; ++c) p.beta_cov(r, c) = row[std::size_t(c)];
    }
  }
}

void parse_m0(const json& j, mcmc::M0Policy& m) {
  const std::string w = "/m0";
  check_object(j, w, {"policy", "value"});
  if (j.contains("policy")) {
    const std::string s = as_string(j["policy"], w + "/policy");
    if (s == "sample_mean") m.kind = mcmc::M0Policy::Kind::sample_mean;
    else if (s == "sample_median") m.kind = mcmc::M0Policy::Kind::sample_median;
    else if (s == "fixed") m.kind = mcmc::M0Policy::Kind::fixed;
    else if (s == "none") m.kind = mcmc::M0Policy::Kind::none;
    else bad(w + "/policy", "expected sample_mean, sample_median, fixed or none");
  }
  if (j.contains("value")) m.value = as_number(j["value"], w + "/value");
  if (m.kind == mcmc::M0Policy::Kind::fixed && std::isnan(m.value))
    bad(w + "/value", "required when policy is fixed");
}

void parse_output(const json& j, OutputOptions& o) {
  const std::string w = "/output";
  check_object(j, w, {"grid_points", "x_points", "quantiles", "exceed"});
  if (j.contains("grid_points")) {
    o.grid_points = std::size_t(as_positive_int(j["grid_points"], w + "/grid_points"));
    if (o.grid_points < 2) bad(w + "/grid_points", "must be >= 2");
  }
  if (j.contains("x_points")) o.x_points = std::size_t(as_positive_int(j["x_points"], w + "/x_points"));
  if (j.contains("quantiles")) {
    o.quantiles = as_numbers(j["quantiles"], w + "/quantiles");
    for (double a : o.quantiles)
      if (!(a > 0.0 && a < 1.0)) bad(w + "/quantiles", "levels must lie in (0, 1)");
  }
  if (j.contains("exceed")) o.exceed = as_numbers(j["exceed"], w + "/exceed");
}

sim::ScenarioKind parse_scenario(const json& j, const std::string& where) {
  const std::string s = as_string(j, where);
  if (s == "null") return sim::ScenarioKind::null_case;
  if (s == "regression") return sim::ScenarioKind::regression;
  bad(where, "expected \"null\" or \"regression\"");
}

void parse_simulate(const json& j, SimulateOptions& s) {
  const std::string w = "/simulate";
  check_object(j, w, {"scenarios", "n", "replicates"});
  if (j.contains("scenarios")) {
    const json& a = j["scenarios"];
    s.scenarios.clear();
    if (a.is_string()) {
      s.scenarios.push_back(parse_scenario(a, w + "/scenarios"));
    } else if (a.is_array() && !a.empty()) {
      for (std::size_t k = 0; k < a.size(); ++k)
        s.scenarios.push_back(parse_scenario(a[k], w + "/scenarios/" + std::to_string(k)));
    } else {
      bad(w + "/scenarios", "expected a scenario name or a non-empty list");
    }
  }
  if (j.contains("n")) {
    const json& a = j["n"];
    s.n.clear();
    if (a.is_array() && !a.empty()) {
      for (std::size_t k = 0; k < a.size(); ++k)
        s.n.push_back(std::size_t(as_positive_int(a[k], w + "/n/" + std::to_string(k))));
    } else {
      s.n.push_back(std::size_t(as_positive_int(a, w + "/n")));
    }
  }
  if (j.contains("replicates"))
    s.replicates = int(as_positive_int(j["replicates"], w + "/replicates"));
}

}  // namespace

RunConfig parse_config(const json& doc) {
  check_object(doc, "", {"response", "covariates", "spline_df", "link", "support", "mcmc",
                         "prior", "m0", "output", "simulate"});
  RunConfig c;
  if (doc.contains("response")) c.response = as_string(doc["response"], "/response");
  if (doc.contains("covariates")) {
    const json& a = doc["covariates"];
    if (!a.is_array()) bad("/covariates", "expected an array of column names");
    for (std::size_t k = 0; k < a.size(); ++k)
      c.covariates.push_back(as_string(a[k], "/covariates/" + std::to_string(k)));
  }
  if (doc.contains("spline_df")) {
    const long long df = as_int(doc["spline_df"], "/spline_df");
    if (df < 0) bad("/spline_df", "must be >= 0");
    c.spline_df = int(df);
  }
  if (c.spline_df > 0 && c.covariates.size() != 1)
    bad("/spline_df", "a spline needs exactly one covariate");
  if (doc.contains("link") && as_string(doc["link"], "/link") != "logit")
    bad("/link", "only \"logit\" is supported");
  if (doc.contains("support")) {
    const auto s = as_numbers(doc["support"], "/support");
    if (s.size() != 2 || !(s[0] < s[1])) bad("/support", "expected [lo, hi] with lo < hi");
    c.mcmc.prior.support = Support{s[0], s[1]};
  }
  if (doc.contains("mcmc")) parse_mcmc(doc["mcmc"], c.mcmc);
  if (doc.contains("prior")) parse_prior(doc["prior"], c.mcmc.prior);
  if (doc.contains("m0")) parse_m0(doc["m0"], c.mcmc.m0);
  if (doc.contains("output")) parse_output(doc["output"], c.output);
  if (doc.contains("simulate")) parse_simulate(doc["simulate"], c.simulate);
  c.mcmc.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": malformed JSON at byte " + std::to_string(e.byte));
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------- csv

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return {};
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(trim(cell));
  return out;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path);
  CsvTable t;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      std::ostringstream os;
      os << path << " line " << lineno << ": expected " << t.header.size() << " fields, found "
         << cells.size();
      throw DataError(os.str());
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw DataError(path + ": empty file");
  if (t.rows.empty()) throw DataError(path + ": header present but no data rows");
  return t;
}

std::size_t column_index(const CsvTable& t, const std::string& name, const std::string& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw DataError(path + ": column '" + name + "' not found in header");
  return std::size_t(it - t.header.begin());
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column,
                  const std::string& path) {
  std::ostringstream os;
  os << path << " row " << row << " column '" << column << "': ";
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
    os << "missing value";
    throw DataError(os.str());
  }
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (*b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v)) {
    os << "non-numeric value '" << cell << "'";
    throw DataError(os.str());
  }
  return v;
}

Eigen::MatrixXd numeric_columns(const CsvTable& t, const std::vector<std::string>& names,
                                const std::string& path) {
  Eigen::MatrixXd m(Eigen::Index(t.rows.size()), Eigen::Index(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::size_t idx = column_index(t, names[c], path);
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      m(Eigen::Index(r), Eigen::Index(c)) = parse_cell(t.rows[r][idx], r + 1, names[c], path);
  }
  return m;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw ConfigError("cannot write " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << cells[k];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace

Dataset ingest_csv(const std::string& path, const std::string& response,
                   const std::vector<std::string>& covariates, Support support) {
  const CsvTable t = read_csv(path);
  Dataset d;
  d.response_name = response;
  d.covariate_names = covariates;
  d.x = numeric_columns(t, covariates, path);
  const Eigen::MatrixXd y = numeric_columns(t, {response}, path);
  d.y.resize(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    d.y[r] = y(Eigen::Index(r), 0);
    if (!support.contains_open(d.y[r])) {
      std::ostringstream os;
      os << path << " row " << r + 1 << ": response " << d.y[r] << " outside the open support ("
         << support.lo << ", " << support.hi << ")";
      throw DataError(os.str());
    }
  }
  return d;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& name : data.covariate_names) out << name << ',';
  out << data.response_name << '\n';
  char buf[40];
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (Eigen::Index c = 0; c < data.x.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.x(Eigen::Index(i), c));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.y[i]);
    out << buf << '\n';
  }
}

// ---------------------------------------------------------------- design

DesignMap DesignMap::fit(const Eigen::MatrixXd& raw, std::vector<std::string> covariates,
                         int spline_df) {
  DesignMap m;
  m.covariates = std::move(covariates);
  m.spline_df = spline_df;
  if (spline_df > 0) {
    if (raw.cols() != 1) throw ConfigError("a spline design needs exactly one covariate");
    std::vector<double> x(raw.col(0).data(), raw.col(0).data() + raw.rows());
    m.basis = tilt::spline_design(x, spline_df).basis;
  }
  return m;
}

Eigen::MatrixXd DesignMap::build(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != Eigen::Index(covariates.size()))
    throw DataError("covariate matrix has the wrong number of columns");
  const Eigen::Index n = raw.rows();
  if (spline_df > 0) {
    std::vector<double> x(raw.col(0).data(), raw.col(0).data() + n);
    const Eigen::MatrixXd b = basis.evaluate(x);
    Eigen::MatrixXd d(n, 1 + b.cols());
    d.col(0).setOnes();
    d.rightCols(b.cols()) = b;
    return d;
  }
  Eigen::MatrixXd d(n, 1 + raw.cols());
  d.col(0).setOnes();
  d.rightCols(raw.cols()) = raw;
  return d;
}

std::vector<std::string> DesignMap::column_names() const {
  std::vector<std::string> names{"intercept"};
  if (spline_df > 0) {
    for (int k = 1; k <= spline_df; ++k) names.push_back(covariates[0] + "_ns" + std::to_string(k));
  } else {
    names.insert(names.end(), covariates.begin(), covariates.end());
  }
  return names;
}

json DesignMap::to_json() const {
  json j;
  j["covariates"] = covariates;
  j["spline_df"] = spline_df;
  if (spline_df > 0) {
    j["knots"] = basis.knots();
    j["center"] = basis.center();
    j["scale"] = basis.scale();
  }
  return j;
}

DesignMap DesignMap::from_json(const json& j) {
  try {
    DesignMap m;
    m.covariates = j.at("covariates").get<std::vector<std::string>>();
    m.spline_df = j.at("spline_df").get<int>();
    if (m.spline_df > 0)
      m.basis = tilt::SplineBasis(j.at("knots").get<std::vector<double>>(),
                                  j.at("center").get<std::vector<double>>(),
                                  j.at("scale").get<std::vector<double>>());
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model.json: malformed design section: ") + e.what());
  }
}

// ---------------------------------------------------------------- commands

namespace {

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir);
  return fs::path(dir);
}

std::vector<double> linspace(double lo, double hi, std::size_t k) {
  std::vector<double> v(k);
  for (std::size_t i = 0; i < k; ++i)
    v[i] = k == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * double(i) / double(k - 1);
  return v;
}

std::vector<double> default_thresholds(Support s) {
  std::vector<double> v;
  for (int k = 1; k <= 19; ++k) v.push_back(s.lo + s.width() * k / 20.0);
  return v;
}

// Raw covariate rows along the first covariate, the others held at their means.
Eigen::MatrixXd covariate_path(const Eigen::MatrixXd& raw, std::size_t points) {
  const Eigen::Index k = raw.cols();
  if (k == 0) return Eigen::MatrixXd(1, 0);
  const auto xs = linspace(raw.col(0).minCoeff(), raw.col(0).maxCoeff(), points);
  Eigen::MatrixXd out(Eigen::Index(points), k);
  const Eigen::RowVectorXd means = raw.colwise().mean();
  for (std::size_t i = 0; i < points; ++i) {
    out.row(Eigen::Index(i)) = means;
    out(Eigen::Index(i), 0) = xs[i];
  }
  return out;
}

double first_or_zero(const Eigen::MatrixXd& raw, Eigen::Index r) {
  return raw.cols() > 0 ? raw(r, 0) : 0.0;
}

void fatal_if_skipped(bool warn, const std::string& what) {
  if (warn) throw NumericalError(what + ": more than 10% of draws have an unattainable mean");
}

void write_diagnostics(const fs::path& path, const mcmc::PosteriorDraws& draws) {
  const auto& d = draws.diagnostics;
  CsvWriter w(path, {"quantity", "value"});
  auto step = [&](const char* name, const mcmc::StepStats& s) {
    w.row({std::string(name) + "_proposed", fmt(double(s.proposed))});
    w.row({std::string(name) + "_accepted", fmt(double(s.accepted))});
    w.row({std::string(name) + "_rate", fmt(s.rate())});
  };
  step("u", d.u);
  step("mu", d.mu);
  step("z", d.z);
  step("beta", d.beta);
  w.row({"beta_forced_rejections", fmt(double(d.beta_forced_rejections))});
  w.row({"beta_outside_a", fmt(double(d.beta_outside_a))});
  w.row({"mu_out_of_range", fmt(double(d.mu_out_of_range))});
  w.row({"mu_truncations", fmt(double(d.mu_truncations))});
  w.row({"z_fallbacks", fmt(double(d.z_fallbacks))});
  w.row({"retilt_failures", fmt(double(d.retilt_failures))});
  w.row({"final_delta", fmt(d.final_delta)});
  w.row({"kernel_halfwidth", fmt(draws.halfwidth)});
  w.row({"m0", fmt(draws.m0)});
  w.row({"draws", fmt(double(draws.size()))});
}

mcmc::PosteriorDraws load_draws(const fs::path& dir, DesignMap& design) {
  std::ifstream in(dir / "model.json");
  if (!in) throw ConfigError("cannot open " + (dir / "model.json").string());
  json model;
  try {
    model = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("model.json: malformed JSON at byte " + std::to_string(e.byte));
  }
  design = DesignMap::from_json(model.at("design"));
  mcmc::PosteriorDraws draws;
  try {
    const auto s = model.at("support").get<std::vector<double>>();
    draws.support = Support{s.at(0), s.at(1)};
    draws.halfwidth = model.at("kernel_halfwidth").get<double>();
    draws.m0 = model.at("m0").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                        : model.at("m0").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model.json: ") + e.what());
  }
  draws.link = tilt::LinkSpec(draws.support);

  const std::string draws_path = (dir / "draws.csv").string();
  const CsvTable bt = read_csv(draws_path);
  const auto names = design.column_names();
  draws.beta = numeric_columns(bt, names, draws_path);

  const std::string atoms_path = (dir / "atoms.csv").string();
  const CsvTable at = read_csv(atoms_path);
  const Eigen::MatrixXd atoms = numeric_columns(at, {"draw", "location", "weight"}, atoms_path);
  const auto R = std::size_t(draws.beta.rows());
  std::vector<std::vector<double>> loc(R), wt(R);
  for (Eigen::Index r = 0; r < atoms.rows(); ++r) {
    const double idx = atoms(r, 0);
    if (!(idx >= 1.0 && idx <= double(R)) || idx != std::floor(idx))
      throw DataError(atoms_path + ": draw index out of range");
    loc[std::size_t(idx) - 1].push_back(atoms(r, 1));
    wt[std::size_t(idx) - 1].push_back(atoms(r, 2));
  }
  for (std::size_t r = 0; r < R; ++r) {
    if (loc[r].empty()) throw DataError(atoms_path + ": draw without atoms");
    draws.baseline.emplace_back(std::move(loc[r]), std::move(wt[r]), draws.support);
  }
  return draws;
}

}  // namespace

void cmd_fit(const FitArgs& args) {
  RunConfig cfg = load_config(args.config);
  if (args.seed) cfg.mcmc.seed = *args.seed;
  const Support support = cfg.mcmc.prior.support;
  const Dataset raw = ingest_csv(args.data, cfg.response, cfg.covariates, support);
  const DesignMap design = DesignMap::fit(raw.x, cfg.covariates, cfg.spline_df);

  Dataset data;
  data.x = design.build(raw.x);
  data.y = raw.y;
  data.covariate_names = design.column_names();
  data.response_name = raw.response_name;

  log::info("fit: running chain");
  const mcmc::PosteriorDraws draws = mcmc::run_chain(data, cfg.mcmc);
  if (draws.size() == 0) throw NumericalError("fit: no posterior draws were retained");
  const fs::path out = prepare_dir(args.out);
  const auto names = design.column_names();
  const auto R = Eigen::Index(draws.size());

  {
    json model;
    model["response"] = cfg.response;
    model["design"] = design.to_json();
    model["support"] = {support.lo, support.hi};
    model["kernel_halfwidth"] = draws.halfwidth;
    model["m0"] = std::isnan(draws.m0) ? json(nullptr) : json(draws.m0);
    model["link"] = "logit";
    model["draws"] = draws.size();
    model["seed"] = cfg.mcmc.seed;
    std::ofstream f(out / "model.json");
    if (!f) throw ConfigError("cannot write model.json");
    f << model.dump(2) << '\n';
  }
  {
    std::vector<std::string> header{"draw"};
    header.insert(header.end(), names.begin(), names.end());
    CsvWriter w(out / "draws.csv", header);
    for (Eigen::Index r = 0; r < R; ++r) {
      std::vector<std::string> row{std::to_string(r + 1)};
      for (Eigen::Index j = 0; j < draws.beta.cols(); ++j) row.push_back(fmt(draws.beta(r, j)));
      w.row(row);
    }
  }
  {
    CsvWriter w(out / "atoms.csv", {"draw", "location", "weight"});
    for (std::size_t r = 0; r < draws.size(); ++r) {
      const auto& mu = draws.baseline[r];
      for (std::size_t l = 0; l < mu.size(); ++l)
        w.row({std::to_string(r + 1), fmt(mu.location(l)), fmt(mu.weight(l))});
    }
  }
  {
    CsvWriter w(out / "summary.csv", {"parameter", "mean", "sd", "lower", "upper"});
    for (Eigen::Index j = 0; j < draws.beta.cols(); ++j) {
      std::vector<double> col(draws.beta.col(j).data(), draws.beta.col(j).data() + R);
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / double(R);
      double ss = 0.0;
      for (double v : col) ss += (v - mean) * (v - mean);
      const double sd = R > 1 ? std::sqrt(ss / double(R - 1)) : 0.0;
      w.row({names[std::size_t(j)], fmt(mean), fmt(sd),
             fmt(functionals::sample_quantile(col, 0.025)),
             fmt(functionals::sample_quantile(col, 0.975))});
    }
  }
  write_diagnostics(out / "diagnostics.csv", draws);

  const auto y_grid = functionals::default_grid(draws, cfg.output.grid_points);
  {
    const auto dens = functionals::baseline_density(draws, y_grid);
    const auto cdf = functionals::baseline_cdf(draws, y_grid);
    CsvWriter g(out / "baseline_grid.csv", {"draw", "y", "density", "cdf"});
    for (Eigen::Index r = 0; r < dens.values.rows(); ++r)
      for (std::size_t k = 0; k < y_grid.size(); ++k)
        g.row({std::to_string(r + 1), fmt(y_grid[k]), fmt(dens.values(r, Eigen::Index(k))),
               fmt(cdf.values(r, Eigen::Index(k)))});
    CsvWriter s(out / "baseline_summary.csv",
                {"y", "density_mean", "density_lower", "density_upper", "cdf_mean", "cdf_lower",
                 "cdf_upper"});
    for (std::size_t k = 0; k < y_grid.size(); ++k)
      s.row({fmt(y_grid[k]), fmt(dens.summary.mean[k]), fmt(dens.summary.lower[k]),
             fmt(dens.summary.upper[k]), fmt(cdf.summary.mean[k]), fmt(cdf.summary.lower[k]),
             fmt(cdf.summary.upper[k])});
  }

  const Eigen::MatrixXd x_raw = covariate_path(raw.x, cfg.output.x_points);
  const Eigen::MatrixXd x_rows = design.build(x_raw);
  {
    CsvWriter w(out / "density_grid.csv", {"x", "y", "mean", "lower", "upper"});
    for (Eigen::Index i = 0; i < x_rows.rows(); ++i) {
      const auto dens = functionals::conditional_density(draws, x_rows.row(i), y_grid);
      fatal_if_skipped(dens.skip_warning, "density grid");
      for (std::size_t k = 0; k < y_grid.size(); ++k)
        w.row({fmt(first_or_zero(x_raw, i)), fmt(y_grid[k]), fmt(dens.summary.mean[k]),
               fmt(dens.summary.lower[k]), fmt(dens.summary.upper[k])});
    }
  }
  {
    CsvWriter w(out / "quantile_curves.csv", {"alpha", "x", "mean", "lower", "upper"});
    for (double alpha : cfg.output.quantiles) {
      const auto q = functionals::quantile_curve(draws, alpha, x_rows);
      fatal_if_skipped(q.skip_warning, "quantile curves");
      for (Eigen::Index i = 0; i < x_rows.rows(); ++i)
        w.row({fmt(alpha), fmt(first_or_zero(x_raw, i)), fmt(q.summary.mean[std::size_t(i)]),
               fmt(q.summary.lower[std::size_t(i)]), fmt(q.summary.upper[std::size_t(i)])});
    }
  }
  {
    const auto thresholds =
        cfg.output.exceed.empty() ? default_thresholds(support) : cfg.output.exceed;
    CsvWriter w(out / "exceedance.csv", {"x", "y0", "mean", "lower", "upper"});
    for (Eigen::Index i = 0; i < x_rows.rows(); ++i) {
      for (double y0 : thresholds) {
        const auto e = functionals::exceedance(draws, x_rows.row(i), y0);
        fatal_if_skipped(e.skip_warning, "exceedance surface");
        w.row({fmt(first_or_zero(x_raw, i)), fmt(y0), fmt(e.mean), fmt(e.lower), fmt(e.upper)});
      }
    }
  }
}

void cmd_simulate(const SimulateArgs& args) {
  const RunConfig cfg = load_config(args.config);
  const std::uint64_t seed = args.seed ? *args.seed : cfg.mcmc.seed;
  const fs::path out = prepare_dir(args.out);

  CsvWriter t1(out / "table1.csv", {"Scenario", "n", "Bias", "RMSE", "Coverage", "CI Length"});
  CsvWriter te(out / "table_exceedance.csv", {"Scenario", "n", "x", "quantile", "y0", "truth",
                                              "Bias", "RMSE", "Coverage", "CI Length"});
  CsvWriter tb(out / "table_beta.csv",
               {"Scenario", "n", "Pars", "Bias", "RMSE", "Coverage", "CI Length"});
  CsvWriter st(out / "study.csv", {"Scenario", "n", "replicates", "failures", "failed",
                                   "median_ks", "median_tv", "median_w1", "coverage_se"});
  CsvWriter rp(out / "replicates.csv",
               {"Scenario", "n", "replicate", "ok", "ks", "tv", "w1", "weighted_bias",
                "weighted_coverage", "weighted_ci_length", "u_accept", "mu_accept",
                "beta_accept"});
  CsvWriter pw(out / "fmu_pointwise.csv",
               {"Scenario", "n", "y", "bias", "rmse", "coverage", "ci_length"});

  std::vector<std::string> failed;
  std::uint64_t study = 0;
  for (const auto kind : cfg.simulate.scenarios) {
    for (const std::size_t n : cfg.simulate.n) {
      const sim::Scenario sc = kind == sim::ScenarioKind::null_case
                                   ? sim::Scenario::null_case(n, cfg.simulate.replicates)
                                   : sim::Scenario::regression(n, cfg.simulate.replicates);
      const std::string label = kind == sim::ScenarioKind::null_case ? "Null Case" : "Regression";
      std::ostringstream msg;
      msg << "simulate: " << label << " n=" << n << " replicates=" << sc.replicates;
      log::info(msg.str());
      const auto rep = sim::run_study(sc, cfg.mcmc, mix_seed(seed, study++));
      const std::string ns = std::to_string(n);
      const auto& b = rep.baseline;
      t1.row({label, ns, fmt(b.bias), fmt(b.rmse), fmt(b.coverage), fmt(b.ci_length)});
      for (const auto& e : rep.exceedance)
        te.row({label, ns, fmt(e.x), fmt(e.level), fmt(e.y0), fmt(e.truth), fmt(e.stats.bias),
                fmt(e.stats.rmse), fmt(e.stats.coverage), fmt(e.stats.ci_length)});
      for (const auto& row : rep.beta)
        tb.row({label, ns, row.label, fmt(row.bias), fmt(row.rmse), fmt(row.coverage),
                fmt(row.ci_length)});
      st.row({label, ns, std::to_string(sc.replicates), std::to_string(rep.failures),
              rep.failed ? "1" : "0", fmt(rep.median_ks), fmt(rep.median_tv),
              fmt(rep.median_w1), fmt(b.coverage_se)});
      for (const auto& m : rep.replicates)
        rp.row({label, ns, std::to_string(m.index + 1), m.ok ? "1" : "0", fmt(m.ks), fmt(m.tv),
                fmt(m.w1), fmt(m.weighted_bias), fmt(m.weighted_coverage),
                fmt(m.weighted_ci_length), fmt(m.u_accept), fmt(m.mu_accept),
                fmt(m.beta_accept)});
      for (std::size_t k = 0; k < rep.grid.size(); ++k)
        pw.row({label, ns, fmt(rep.grid[k]), fmt(rep.bias[k]), fmt(rep.rmse[k]),
                fmt(rep.coverage[k]), fmt(rep.ci_length[k])});
      if (rep.failed) failed.push_back(label + " n=" + ns);
    }
  }
  if (!failed.empty()) {
    std::string s = "simulate: more than 5% of replicates failed in";
    for (const auto& f : failed) s += " [" + f + "]";
    throw NumericalError(s);
  }
}

void cmd_predict(const PredictArgs& args) {
  DesignMap design;
  const fs::path dir(args.draws);
  const mcmc::PosteriorDraws draws = load_draws(dir, design);
  const CsvTable xt = read_csv(args.x);
  const Eigen::MatrixXd raw = numeric_columns(xt, design.covariates, args.x);
  const Eigen::MatrixXd rows = design.build(raw);
  const fs::path out = prepare_dir(args.out.empty() ? args.draws : args.out);

  std::vector<std::string> lead{"row"};
  lead.insert(lead.end(), design.covariates.begin(), design.covariates.end());
  auto prefix = [&](Eigen::Index i) {
    std::vector<std::string> r{std::to_string(i + 1)};
    for (Eigen::Index c = 0; c < raw.cols(); ++c) r.push_back(fmt(raw(i, c)));
    return r;
  };

  auto qh = lead;
  qh.insert(qh.end(), {"alpha", "mean", "lower", "upper", "skipped"});
  CsvWriter qw(out / "predict_quantiles.csv", qh);
  for (double alpha : args.quantiles) {
    const auto q = functionals::quantile_curve(draws, alpha, rows);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      auto r = prefix(i);
      const auto k = std::size_t(i);
      r.insert(r.end(), {fmt(alpha), fmt(q.summary.mean[k]), fmt(q.summary.lower[k]),
                         fmt(q.summary.upper[k]), std::to_string(q.skipped[k])});
      qw.row(r);
    }
  }

  auto eh = lead;
  eh.insert(eh.end(), {"y0", "mean", "lower", "upper", "skipped"});
  CsvWriter ew(out / "predict_exceedance.csv", eh);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (double y0 : args.exceed) {
      const auto e = functionals::exceedance(draws, rows.row(i), y0);
      auto r = prefix(i);
      r.insert(r.end(),
               {fmt(y0), fmt(e.mean), fmt(e.lower), fmt(e.upper), std::to_string(e.skipped)});
      ew.row(r);
    }
  }
}

}  // namespace tiltcrm::cli
