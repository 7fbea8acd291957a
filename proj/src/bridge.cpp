#include "ncbridge/bridge.hpp"

#include "ncbridge/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ncbridge {

namespace {

std::string strip(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits on `sep` outside square brackets.
std::vector<std::string> split_outside_brackets(std::string_view s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  std::string current;
  for (char c : s) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == sep && depth == 0) {
      out.push_back(strip(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  out.push_back(strip(current));
  return out;
}

constexpr Index kAllColumns = -1;

Factor parse_factor(const std::string& atom) {
  if (atom == "x") return {Factor::Var::x, 0};
  if (atom == "w") return {Factor::Var::w, 0};
  if (atom == "z") return {Factor::Var::z, 0};
  if (atom.size() >= 4 && atom[0] == 'v' && atom[1] == '[' && atom.back() == ']') {
    const std::string inner = strip(std::string_view(atom).substr(2, atom.size() - 3));
    if (inner == "*") return {Factor::Var::v, kAllColumns};
    if (inner.empty() || !std::all_of(inner.begin(), inner.end(), [](unsigned char c) { return std::isdigit(c); })) {
      throw InvalidArgument("bad covariate index in '" + atom + "'");
    }
    return {Factor::Var::v, static_cast<Index>(std::stol(inner))};
  }
  throw InvalidArgument("unknown feature atom '" + atom + "'");
}

// Expands v[*] factors into one term per covariate column (cartesian for repeats).
void expand_term(const std::vector<Factor>& factors, std::size_t pos, std::vector<Factor>& current,
                 Index covariates, std::vector<Term>& out) {
  if (pos == factors.size()) {
    out.push_back(Term{current});
    return;
  }
  const Factor& f = factors[pos];
  if (f.var == Factor::Var::v && f.index == kAllColumns) {
    for (Index j = 0; j < covariates; ++j) {
      current.push_back({Factor::Var::v, j});
      expand_term(factors, pos + 1, current, covariates, out);
      current.pop_back();
    }
    return;
  }
  current.push_back(f);
  expand_term(factors, pos + 1, current, covariates, out);
  current.pop_back();
}

std::string factor_label(const Factor& f) {
  switch (f.var) {
    case Factor::Var::x: return "x";
    case Factor::Var::w: return "w";
    case Factor::Var::z: return "z";
    case Factor::Var::v: return "v[" + std::to_string(f.index) + "]";
  }
  return "?";
}

void check_covariates(const FeatureMap& map, const NCDataset& data, const char* what) {
  if (map.covariates_needed() > data.p()) {
    throw InvalidArgument(std::string(what) + " references covariate v[" + std::to_string(map.covariates_needed() - 1) +
                          "] but the dataset has " + std::to_string(data.p()) + " covariate columns");
  }
}

}  // namespace

std::string Term::label() const {
  if (factors.empty()) return "1";
  std::string s;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i) s += '*';
    s += factor_label(factors[i]);
  }
  return s;
}

double Term::evaluate(const Observation& obs, double x) const {
  double value = 1.0;
  for (const auto& f : factors) {
    switch (f.var) {
      case Factor::Var::x: value *= x; break;
      case Factor::Var::w: value *= obs.w; break;
      case Factor::Var::z: value *= obs.z; break;
      case Factor::Var::v: value *= obs.v[static_cast<std::size_t>(f.index)]; break;
    }
  }
  return value;
}

bool Term::uses(Factor::Var var) const {
  return std::any_of(factors.begin(), factors.end(), [var](const Factor& f) { return f.var == var; });
}

FeatureMap::FeatureMap(std::vector<Term> terms) : terms_(std::move(terms)) {
  for (const auto& t : terms_)
    for (const auto& f : t.factors)
      if (f.var == Factor::Var::v && f.index < 0) throw InvalidArgument("negative covariate index");
}

FeatureMap FeatureMap::parse(std::string_view text, Index covariates) {
  std::vector<Term> terms;
  for (const auto& item : split_outside_brackets(text, ',')) {
    if (item.empty()) throw InvalidArgument("empty feature term in '" + std::string(text) + "'");
    if (item == "1") {
      terms.push_back(Term{});
      continue;
    }
    std::vector<Factor> factors;
    for (const auto& atom : split_outside_brackets(item, '*')) factors.push_back(parse_factor(atom));
    std::vector<Factor> current;
    expand_term(factors, 0, current, covariates, terms);
  }
  if (terms.empty()) throw InvalidArgument("feature map has no terms");
  return FeatureMap(std::move(terms));
}

std::vector<std::string> FeatureMap::labels() const {
  std::vector<std::string> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) out.push_back(t.label());
  return out;
}

std::string FeatureMap::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i) s += ", ";
    s += terms_[i].label();
  }
  return s;
}

void FeatureMap::evaluate(const Observation& obs, double x, double* out) const {
  for (std::size_t k = 0; k < terms_.size(); ++k) out[k] = terms_[k].evaluate(obs, x);
}

bool FeatureMap::uses(Factor::Var var) const {
  return std::any_of(terms_.begin(), terms_.end(), [var](const Term& t) { return t.uses(var); });
}

Index FeatureMap::covariates_needed() const {
  Index needed = 0;
  for (const auto& t : terms_)
    for (const auto& f : t.factors)
      if (f.var == Factor::Var::v) needed = std::max(needed, f.index + 1);
  return needed;
}

BridgeModel::BridgeModel(BridgeKind kind, FeatureMap features)
    : kind_(kind), features_(std::move(features)), dim_(features_.dim()) {
  if (kind_ == BridgeKind::custom) throw InvalidArgument("custom bridges are built from a function");
  if (dim_ == 0) throw InvalidArgument("bridge has no features");
  if (features_.uses(Factor::Var::z)) throw InvalidArgument("bridge features may not use the negative control exposure z");
}

BridgeModel::BridgeModel(BridgeFunction fn, Index dim, std::vector<std::string> labels)
    : kind_(BridgeKind::custom), fn_(std::move(fn)), dim_(dim), custom_labels_(std::move(labels)) {
  if (!fn_) throw InvalidArgument("custom bridge function is empty");
  if (dim_ <= 0) throw InvalidArgument("custom bridge needs a positive parameter dimension");
  if (!custom_labels_.empty() && static_cast<Index>(custom_labels_.size()) != dim_) {
    throw InvalidArgument("custom bridge label count differs from its dimension");
  }
}

std::vector<std::string> BridgeModel::labels() const {
  if (kind_ != BridgeKind::custom) return features_.labels();
  if (!custom_labels_.empty()) return custom_labels_;
  std::vector<std::string> out;
  for (Index j = 0; j < dim_; ++j) out.push_back("gamma[" + std::to_string(j) + "]");
  return out;
}

double BridgeModel::evaluate(const Observation& obs, double x, std::span<const double> gamma) const {
  if (kind_ == BridgeKind::custom) return fn_(obs, x, gamma);
  double lin = 0.0;
  const auto& terms = features_.terms();
  for (std::size_t k = 0; k < terms.size(); ++k) lin += terms[k].evaluate(obs, x) * gamma[k];
  return kind_ == BridgeKind::linear ? lin : std::exp(lin);
}

InstrumentMap::InstrumentMap(FeatureMap features) : features_(std::move(features)) {
  if (features_.dim() == 0) throw InvalidArgument("instrument map has no terms");
  if (features_.uses(Factor::Var::w)) {
    throw InvalidArgument("instruments may not use the negative control outcome w");
  }
}

MomentSpec::MomentSpec(BridgeModel bridge, InstrumentMap instruments, std::optional<Contrast> contrast)
    : bridge_(std::move(bridge)), instruments_(std::move(instruments)), contrast_(contrast) {
  if (instruments_.dim() < bridge_.dim()) {
    throw InvalidArgument("under-identified: " + std::to_string(instruments_.dim()) + " instruments for " +
                          std::to_string(bridge_.dim()) + " bridge parameters");
  }
  if (contrast_ && (!std::isfinite(contrast_->x1) || !std::isfinite(contrast_->x0))) {
    throw InvalidArgument("contrast levels must be finite");
  }
}

std::vector<std::string> MomentSpec::parameter_labels() const {
  auto labels = bridge_.labels();
  if (contrast_) labels.emplace_back("ace");
  return labels;
}

std::string MomentSpec::to_config() const {
  if (bridge_.kind() == BridgeKind::custom) throw InvalidArgument("custom bridges have no text form");
  std::ostringstream os;
  os.precision(17);
  os << "kind = " << (bridge_.kind() == BridgeKind::linear ? "linear" : "multiplicative") << '\n';
  os << "bridge = " << bridge_.features().to_string() << '\n';
  os << "instruments = " << instruments_.features().to_string() << '\n';
  if (contrast_) os << "contrast = " << contrast_->x1 << ", " << contrast_->x0 << '\n';
  return os.str();
}

Matrix moment_function(const MomentSpec& spec, const NCDataset& data, const Vector& theta) {
  if (theta.size() != spec.theta_dim()) {
    throw InvalidArgument("theta has length " + std::to_string(theta.size()) + ", spec expects " +
                          std::to_string(spec.theta_dim()));
  }
  const auto& bridge = spec.bridge();
  const auto& q_map = spec.instruments().features();
  if (bridge.kind() != BridgeKind::custom) check_covariates(bridge.features(), data, "bridge");
  check_covariates(q_map, data, "instruments");

  const Index n = data.n();
  const Index dq = q_map.dim();
  const Index dg = spec.gamma_dim();
  const std::span<const double> gamma(theta.data(), static_cast<std::size_t>(dg));

  Matrix h(n, spec.moment_dim());
  std::vector<double> q(static_cast<std::size_t>(dq));
  for (Index i = 0; i < n; ++i) {
    const Observation obs = data.row(i);
    const double residual = obs.y - bridge.evaluate(obs, obs.x, gamma);
    q_map.evaluate(obs, obs.x, q.data());
    for (Index k = 0; k < dq; ++k) h(i, k) = residual * q[static_cast<std::size_t>(k)];
    if (const auto& c = spec.contrast()) {
      h(i, dq) = theta[dg] - (bridge.evaluate(obs, c->x1, gamma) - bridge.evaluate(obs, c->x0, gamma));
    }
  }
  return h;
}

Vector mean_moments(const MomentSpec& spec, const NCDataset& data, const Vector& theta) {
  return moment_function(spec, data, theta).colwise().mean().transpose();
}

DesignMatrices design_matrices(const MomentSpec& spec, const NCDataset& data) {
  const auto& bridge = spec.bridge();
  if (bridge.kind() == BridgeKind::custom) throw InvalidArgument("design matrices need a feature-map bridge");
  const auto& phi_map = bridge.features();
  const auto& q_map = spec.instruments().features();
  check_covariates(phi_map, data, "bridge");
  check_covariates(q_map, data, "instruments");

  const Index n = data.n();
  DesignMatrices d;
  RowMatrix phi(n, phi_map.dim()), q(n, q_map.dim()), dphi;
  if (spec.contrast()) dphi.resize(n, phi_map.dim());
  std::vector<double> a(static_cast<std::size_t>(phi_map.dim())), b(a.size());
  for (Index i = 0; i < n; ++i) {
    const Observation obs = data.row(i);
    phi_map.evaluate(obs, obs.x, phi.row(i).data());
    q_map.evaluate(obs, obs.x, q.row(i).data());
    if (const auto& c = spec.contrast()) {
      phi_map.evaluate(obs, c->x1, a.data());
      phi_map.evaluate(obs, c->x0, b.data());
      for (Index k = 0; k < phi_map.dim(); ++k) dphi(i, k) = a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)];
    }
  }
  d.phi = phi;
  d.q = q;
  d.contrast_phi = dphi;
  return d;
}

BuiltinBridge parse_builtin_bridge(std::string_view name) {
  if (name == "binary_interaction") return BuiltinBridge::binary_interaction;
  if (name == "linear_additive") return BuiltinBridge::linear_additive;
  if (name == "timeseries_lag") return BuiltinBridge::timeseries_lag;
  if (name == "structural") return BuiltinBridge::structural;
  throw InvalidArgument("unknown builtin bridge '" + std::string(name) + "'");
}

std::string_view to_string(BuiltinBridge b) {
  switch (b) {
    case BuiltinBridge::binary_interaction: return "binary_interaction";
    case BuiltinBridge::linear_additive: return "linear_additive";
    case BuiltinBridge::timeseries_lag: return "timeseries_lag";
    case BuiltinBridge::structural: return "structural";
  }
  return "";
}

BridgePair builtin_bridges(BuiltinBridge which, std::optional<Index> covariate_count) {
  const Index covariates = covariate_count.value_or(which == BuiltinBridge::structural ? 0 : 1);
  if (covariates < 0) throw InvalidArgument("negative covariate count");
  std::string b, q;
  switch (which) {
    case BuiltinBridge::binary_interaction:
      b = "1, x, v[*], w, x*v[*], x*w";
      q = "1, x, v[*], z, x*v[*], x*z";
      break;
    case BuiltinBridge::linear_additive:
    case BuiltinBridge::timeseries_lag:
    case BuiltinBridge::structural:
      b = "1, x, v[*], w";
      q = "1, x, v[*], z";
      break;
  }
  return {BridgeModel(BridgeKind::linear, FeatureMap::parse(b, covariates)),
          InstrumentMap(FeatureMap::parse(q, covariates))};
}

BridgePair builtin_bridges(std::string_view name, std::optional<Index> covariates) {
  return builtin_bridges(parse_builtin_bridge(name), covariates);
}

MomentSpec parse_moment_spec(std::string_view config, Index covariates) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(config)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (strip(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("bridge config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(std::string_view(line).substr(0, eq));
    if (!kv.emplace(key, strip(std::string_view(line).substr(eq + 1))).second) {
      throw InvalidArgument("bridge config: duplicate key '" + key + "'");
    }
  }
  for (const auto& [key, value] : kv) {
    if (key != "kind" && key != "bridge" && key != "instruments" && key != "contrast" && key != "builtin") {
      throw InvalidArgument("bridge config: unknown key '" + key + "'");
    }
  }

  std::optional<Contrast> contrast;
  if (const auto it = kv.find("contrast"); it != kv.end()) {
    const auto parts = split_outside_brackets(it->second, ',');
    if (parts.size() != 2) throw InvalidArgument("contrast needs two levels: x1, x0");
    try {
      contrast = Contrast{std::stod(parts[0]), std::stod(parts[1])};
    } catch (const std::exception&) {
      throw InvalidArgument("contrast levels must be numbers");
    }
  }

  if (const auto it = kv.find("builtin"); it != kv.end()) {
    if (kv.count("bridge") || kv.count("instruments") || kv.count("kind")) {
      throw InvalidArgument("bridge config: 'builtin' excludes kind/bridge/instruments");
    }
    auto pair = builtin_bridges(it->second, covariates);
    return MomentSpec(std::move(pair.bridge), std::move(pair.instruments), contrast);
  }

  BridgeKind kind = BridgeKind::linear;
  if (const auto it = kv.find("kind"); it != kv.end()) {
    if (it->second == "linear") kind = BridgeKind::linear;
    else if (it->second == "multiplicative") kind = BridgeKind::multiplicative;
    else throw InvalidArgument("bridge kind must be linear or multiplicative");
  }
  if (!kv.count("bridge") || !kv.count("instruments")) {
    throw InvalidArgument("bridge config needs 'bridge' and 'instruments' (or 'builtin')");
  }
  return MomentSpec(BridgeModel(kind, FeatureMap::parse(kv["bridge"], covariates)),
                    InstrumentMap(FeatureMap::parse(kv["instruments"], covariates)), contrast);
}

MomentSpec load_moment_spec(const std::filesystem::path& path, Index covariates) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open bridge config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_moment_spec(buf.str(), covariates);
}

}  // namespace ncbridge
