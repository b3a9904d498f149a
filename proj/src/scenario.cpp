#include "inspectsim/scenario.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace inspectsim {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

double parse_number(const std::string& text, const std::string& key, int line) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0') {
    throw SchemaError(key, "expected a number, got '" + t + "' (line " + std::to_string(line) + ")");
  }
  return v;
}

ConfigValue parse_value(const std::string& raw, const std::string& key, int line) {
  ConfigValue v;
  v.line = line;
  const std::string t = trim(raw);
  if (t.empty()) throw SchemaError(key, "empty value (line " + std::to_string(line) + ")");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') {
      throw SchemaError(key, "unterminated string (line " + std::to_string(line) + ")");
    }
    v.kind = ConfigValue::Kind::String;
    v.str = t.substr(1, t.size() - 2);
    return v;
  }
  if (t == "true" || t == "false") {
    v.kind = ConfigValue::Kind::Bool;
    v.b = (t == "true");
    return v;
  }
  if (t.front() == '[') {
    if (t.back() != ']') {
      throw SchemaError(key, "unterminated array (line " + std::to_string(line) + ")");
    }
    v.kind = ConfigValue::Kind::Array;
    const std::string inner = t.substr(1, t.size() - 2);
    std::string item;
    std::stringstream ss(inner);
    while (std::getline(ss, item, ',')) {
      if (trim(item).empty()) continue;
      v.arr.push_back(parse_number(item, key, line));
    }
    return v;
  }
  v.kind = ConfigValue::Kind::Number;
  v.num = parse_number(t, key, line);
  return v;
}

}  // namespace

ConfigMap ConfigMap::parse(const std::string& content) {
  ConfigMap map;
  std::stringstream ss(content);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string stripped = trim(strip_comment(line));
    if (stripped.empty()) continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        throw SchemaError("(file)", "malformed section header at line " + std::to_string(lineno));
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section.empty()) {
        throw SchemaError("(file)", "empty section name at line " + std::to_string(lineno));
      }
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw SchemaError("(file)", "expected key = value at line " + std::to_string(lineno));
    }
    const std::string key_part = trim(stripped.substr(0, eq));
    if (key_part.empty()) {
      throw SchemaError("(file)", "empty key at line " + std::to_string(lineno));
    }
    const std::string key = section.empty() ? key_part : section + "." + key_part;
    if (map.values_.count(key)) {
      throw SchemaError(key, "duplicate key (line " + std::to_string(lineno) + ")");
    }
    map.values_[key] = parse_value(stripped.substr(eq + 1), key, lineno);
  }
  return map;
}

const ConfigValue& ConfigMap::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw SchemaError(key, "required field is missing");
  consumed_.insert(key);
  return it->second;
}

double ConfigMap::number(const std::string& key) const {
  const ConfigValue& v = get(key);
  if (v.kind != ConfigValue::Kind::Number) throw SchemaError(key, "expected a number");
  return v.num;
}

double ConfigMap::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

int ConfigMap::integer(const std::string& key) const {
  const double v = number(key);
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-9) throw SchemaError(key, "expected an integer");
  return static_cast<int>(r);
}

int ConfigMap::integer_or(const std::string& key, int fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool ConfigMap::boolean_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const ConfigValue& v = get(key);
  if (v.kind != ConfigValue::Kind::Bool) throw SchemaError(key, "expected true or false");
  return v.b;
}

std::string ConfigMap::string_value(const std::string& key) const {
  const ConfigValue& v = get(key);
  if (v.kind != ConfigValue::Kind::String) throw SchemaError(key, "expected a string");
  return v.str;
}

std::string ConfigMap::string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? string_value(key) : fallback;
}

std::vector<double> ConfigMap::array(const std::string& key, int expected_size) const {
  const ConfigValue& v = get(key);
  if (v.kind != ConfigValue::Kind::Array) throw SchemaError(key, "expected an array");
  if (expected_size >= 0 && static_cast<int>(v.arr.size()) != expected_size) {
    throw SchemaError(key, "expected " + std::to_string(expected_size) + " elements, got " +
                               std::to_string(v.arr.size()));
  }
  return v.arr;
}

Vec3 ConfigMap::vec3(const std::string& key) const {
  const auto a = array(key, 3);
  return Vec3(a[0], a[1], a[2]);
}

Vec2 ConfigMap::vec2(const std::string& key) const {
  const auto a = array(key, 2);
  return Vec2(a[0], a[1]);
}

Vec3 ConfigMap::vec3_or(const std::string& key, const Vec3& fallback) const {
  return has(key) ? vec3(key) : fallback;
}

Vec2 ConfigMap::vec2_or(const std::string& key, const Vec2& fallback) const {
  return has(key) ? vec2(key) : fallback;
}

std::vector<std::string> ConfigMap::subsections(const std::string& prefix) const {
  std::set<std::string> names;
  const std::string p = prefix + ".";
  for (const auto& [key, value] : values_) {
    (void)value;
    if (key.rfind(p, 0) == 0) {
      const std::size_t dot = key.find('.', p.size());
      if (dot != std::string::npos) names.insert(key.substr(p.size(), dot - p.size()));
    }
  }
  return {names.begin(), names.end()};
}

void ConfigMap::reject_unknown() const {
  for (const auto& [key, value] : values_) {
    (void)value;
    if (!consumed_.count(key)) throw SchemaError(key, "unknown field");
  }
}

namespace {

Vec3 unit_or_throw(const Vec3& v, const std::string& field) {
  const double n = v.norm();
  if (!(n > 1e-12)) throw SchemaError(field, "vector must be nonzero");
  return v / n;
}

double require_positive(double v, const std::string& field) {
  if (!(v > 0.0)) throw SchemaError(field, "must be > 0");
  return v;
}

}  // namespace

Scenario load_scenario(const std::string& content, const std::string& name) {
  const ConfigMap cfg = ConfigMap::parse(content);
  Scenario sc;
  sc.name = name;

  if (cfg.integer("schema") != 1) throw SchemaError("schema", "unsupported schema version");

  const std::string mode = cfg.string_value("run.mode");
  if (mode == "observer_only") sc.mode = RunMode::ObserverOnly;
  else if (mode == "closed_loop") sc.mode = RunMode::ClosedLoop;
  else throw SchemaError("run.mode", "expected \"observer_only\" or \"closed_loop\"");

  sc.duration = cfg.number("run.duration");
  if (sc.duration < 0.0) throw SchemaError("run.duration", "must be >= 0");
  sc.seed = static_cast<std::uint64_t>(cfg.integer_or("run.seed", 0));

  const std::string est = cfg.string_or("run.estimator", "adaptive");
  if (est == "adaptive") sc.estimator = EstimatorKind::Adaptive;
  else if (est == "ekf") sc.estimator = EstimatorKind::Ekf;
  else throw SchemaError("run.estimator", "expected \"adaptive\" or \"ekf\"");

  // Camera.
  const double hfov = cfg.number("camera.hfov_deg") * M_PI / 180.0;
  const double vfov = cfg.number("camera.vfov_deg") * M_PI / 180.0;
  if (!(hfov > 0.0 && hfov < M_PI)) throw SchemaError("camera.hfov_deg", "must be in (0, 180)");
  if (!(vfov > 0.0 && vfov < M_PI)) throw SchemaError("camera.vfov_deg", "must be in (0, 180)");
  sc.camera.model.hfov = hfov;
  sc.camera.model.vfov = vfov;
  sc.camera.model.z_min = cfg.number_or("camera.z_min", 1e-6);
  sc.camera.rate_hz = require_positive(cfg.number_or("camera.rate_hz", 10.0), "camera.rate_hz");
  const double control_rate = cfg.number_or("camera.control_rate_hz", sc.camera.rate_hz);
  require_positive(control_rate, "camera.control_rate_hz");
  const double every = sc.camera.rate_hz / control_rate;
  if (std::abs(every - std::round(every)) > 1e-9 || every < 1.0 - 1e-9) {
    throw SchemaError("camera.control_rate_hz", "must divide camera.rate_hz");
  }
  sc.camera.control_every = static_cast<int>(std::round(every));
  sc.camera.mounting_offset = cfg.vec3_or("camera.mounting.offset", Vec3::Zero());
  sc.camera.yaw0 = cfg.number("camera.mounting.initial_yaw_deg") * M_PI / 180.0;
  const std::string policy = cfg.string_or("camera.mounting.yaw_policy", "fixed");
  if (policy == "fixed") sc.camera.policy = YawPolicy::Fixed;
  else if (policy == "align_to_estimate") sc.camera.policy = YawPolicy::AlignToEstimate;
  else throw SchemaError("camera.mounting.yaw_policy", "expected \"fixed\" or \"align_to_estimate\"");
  sc.camera.yaw_rate_limit =
      require_positive(cfg.number_or("camera.mounting.yaw_rate_limit", 0.6),
                       "camera.mounting.yaw_rate_limit");

  // Platform.
  sc.x0.p = cfg.vec3("platform.position");
  Vec3 v0 = cfg.vec3_or("platform.velocity", Vec3::Zero());
  const std::string vframe = cfg.string_or("platform.velocity_frame", "global");
  if (vframe == "camera") {
    // interpreted in the initial camera frame; rotated to global below
    const double psi = sc.camera.yaw0;
    Mat3 r;
    r.col(0) = Vec3(std::sin(psi), -std::cos(psi), 0);
    r.col(1) = Vec3(0, 0, -1);
    r.col(2) = Vec3(std::cos(psi), std::sin(psi), 0);
    v0 = r * v0;
  } else if (vframe != "global") {
    throw SchemaError("platform.velocity_frame", "expected \"global\" or \"camera\"");
  }
  sc.x0.v = v0;

  // Observer.
  sc.chi0 = cfg.vec3("observer.chi0");
  sc.gains.h = require_positive(cfg.number_or("observer.h_gain", 12.0), "observer.h_gain");
  sc.gains.lambda =
      require_positive(cfg.number_or("observer.lambda_gain", 0.95), "observer.lambda_gain");
  sc.chi_min = require_positive(cfg.number_or("observer.chi_min", 1e-4), "observer.chi_min");
  if (sc.chi0.norm() < sc.chi_min) throw SchemaError("observer.chi0", "norm below chi_min");
  sc.pe_window = require_positive(cfg.number_or("observer.pe_window_s", 1.0), "observer.pe_window_s");
  sc.pe_beta = require_positive(cfg.number_or("observer.pe_beta", 1e-3), "observer.pe_beta");

  sc.ekf.sigma0 = require_positive(cfg.number_or("ekf.sigma0", 0.05), "ekf.sigma0");
  sc.ekf.process_noise = cfg.number_or("ekf.process_noise", 1e-8);
  if (sc.ekf.process_noise < 0.0) throw SchemaError("ekf.process_noise", "must be >= 0");

  sc.sigma_s = cfg.vec2_or("noise.sigma_s", Vec2::Zero());
  if (sc.sigma_s.minCoeff() < 0.0) throw SchemaError("noise.sigma_s", "covariance must be >= 0");

  // Planes.
  const auto plane_ids = cfg.subsections("plane");
  if (plane_ids.empty()) throw SchemaError("plane", "at least one [plane.N] section is required");
  for (const std::string& id : plane_ids) {
    const std::string p = "plane." + id + ".";
    PlaneSpec ps;
    Plane raw;
    raw.n = cfg.vec3(p + "normal");
    raw.d = cfg.number(p + "d");
    try {
      ps.plane = canonicalize(raw);
    } catch (const GeometryError& e) {
      throw SchemaError(p + "normal", e.what());
    }
    const auto eu = cfg.array(p + "extent_u", 2);
    const auto ev = cfg.array(p + "extent_v", 2);
    ps.extent = PlaneExtent{eu[0], eu[1], ev[0], ev[1]};
    if (ps.extent.degenerate()) throw SchemaError(p + "extent_u", "degenerate extent");
    ps.feature_count = cfg.integer(p + "features");
    if (ps.feature_count < 0) throw SchemaError(p + "features", "must be >= 0");
    const std::string fmode = cfg.string_or(p + "feature_mode", "static");
    if (fmode == "static") ps.replenish = false;
    else if (fmode == "replenish") ps.replenish = true;
    else throw SchemaError(p + "feature_mode", "expected \"static\" or \"replenish\"");
    sc.planes.push_back(ps);
  }

  // Inspection + controller (closed loop).
  if (sc.mode == RunMode::ClosedLoop) {
    InspectionSpec& is = sc.inspection;
    is.d_s = require_positive(cfg.number("inspection.d_s"), "inspection.d_s");
    is.d_0 = cfg.number("inspection.d_0");
    is.d_c = require_positive(cfg.number("inspection.d_c"), "inspection.d_c");
    is.v_r = require_positive(cfg.number("inspection.v_r"), "inspection.v_r");
    is.n_c = unit_or_throw(cfg.vec3_or("inspection.n_c", Vec3::UnitZ()), "inspection.n_c");
    is.n_a = cfg.integer_or("inspection.n_a", 0);
    if (is.n_a < 0) throw SchemaError("inspection.n_a", "must be >= 0");
    const std::string norm = cfg.string_or("inspection.norm", "inf");
    if (norm == "inf") is.bounds.b = NormType::Inf;
    else if (norm == "two") is.bounds.b = NormType::Two;
    else throw SchemaError("inspection.norm", "expected \"inf\" or \"two\"");
    is.bounds.v_max = require_positive(cfg.number("inspection.v_max"), "inspection.v_max");
    is.bounds.u_max = require_positive(cfg.number("inspection.u_max"), "inspection.u_max");
    if (cfg.has("inspection.boundary_direction")) {
      is.boundary.enabled = true;
      is.boundary.direction =
          unit_or_throw(cfg.vec3("inspection.boundary_direction"), "inspection.boundary_direction");
      const auto iv = cfg.array("inspection.boundary_interval", 2);
      if (!(iv[1] > iv[0])) throw SchemaError("inspection.boundary_interval", "requires lo < hi");
      is.boundary.lo = iv[0];
      is.boundary.hi = iv[1];
      is.boundary.hysteresis =
          require_positive(cfg.number_or("inspection.boundary_hysteresis", 0.5),
                           "inspection.boundary_hysteresis");
    }

    ControllerConfig& cc = sc.controller;
    cc.horizon = cfg.integer_or("controller.horizon", 20);
    if (cc.horizon < 1) throw SchemaError("controller.horizon", "must be >= 1");
    cc.ts = 1.0 / control_rate;
    cc.q_weights = cfg.vec3_or("controller.q", Vec3(10, 10, 5));
    cc.r_weights = cfg.vec3_or("controller.r", Vec3(1, 1, 1));
    if (cc.q_weights.minCoeff() < 0.0) throw SchemaError("controller.q", "weights must be >= 0");
    if (cc.r_weights.minCoeff() <= 0.0) throw SchemaError("controller.r", "weights must be > 0");
    cc.terminal_eps = cfg.number_or("controller.terminal_eps", 0.05);
    if (cc.terminal_eps < 0.0) throw SchemaError("controller.terminal_eps", "must be >= 0");
    cc.terminal_weight =
        require_positive(cfg.number_or("controller.terminal_weight", 1e4), "controller.terminal_weight");
    const std::string sign = cfg.string_or("controller.comp_sign", "negated");
    if (sign == "negated") cc.comp_negated = true;
    else if (sign == "as_printed") cc.comp_negated = false;
    else throw SchemaError("controller.comp_sign", "expected \"negated\" or \"as_printed\"");
    const std::string budget = cfg.string_or("controller.comp_budget", "horizon");
    if (budget == "horizon") cc.comp_over_horizon = true;
    else if (budget == "single_step") cc.comp_over_horizon = false;
    else throw SchemaError("controller.comp_budget", "expected \"horizon\" or \"single_step\"");
    cc.comp_budget_frac =
        require_positive(cfg.number_or("controller.comp_budget_frac", 0.3), "controller.comp_budget_frac");
    cc.gamma_floor =
        require_positive(cfg.number_or("controller.gamma_floor", 1e-4), "controller.gamma_floor");
    if (cfg.has("controller.d_ref")) cc.d_ref_override = cfg.number("controller.d_ref");
    sc.sample_interval_s = cfg.number_or("controller.sample_interval_s", cc.ts);
    require_positive(sc.sample_interval_s, "controller.sample_interval_s");
  }

  sc.metrics.theta_n = require_positive(cfg.number_or("metrics.theta_n", 0.05), "metrics.theta_n");
  sc.metrics.theta_d = require_positive(cfg.number_or("metrics.theta_d", 0.1), "metrics.theta_d");
  const std::string dframe = cfg.string_or("metrics.d_error_frame", "camera");
  if (dframe == "camera") sc.metrics.d_error_in_camera_frame = true;
  else if (dframe == "global") sc.metrics.d_error_in_camera_frame = false;
  else throw SchemaError("metrics.d_error_frame", "expected \"camera\" or \"global\"");
  sc.metrics.settle_time =
      require_positive(cfg.number_or("metrics.settle_time", 6.0), "metrics.settle_time");
  sc.metrics.steady_end_margin = cfg.number_or("metrics.steady_end_margin", 4.0);
  if (sc.metrics.steady_end_margin < 0.0) {
    throw SchemaError("metrics.steady_end_margin", "must be >= 0");
  }
  sc.metrics.steady_window_min =
      require_positive(cfg.number_or("metrics.steady_window_min", 2.0), "metrics.steady_window_min");

  cfg.reject_unknown();
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("file", "cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string name = path;
  const std::size_t slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  const std::size_t dot = name.find_last_of('.');
  if (dot != std::string::npos) name = name.substr(0, dot);
  return load_scenario(ss.str(), name);
}

}  // namespace inspectsim
