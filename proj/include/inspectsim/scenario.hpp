#pragma once

#include "inspectsim/controller.hpp"
#include "inspectsim/ekf.hpp"
#include "inspectsim/geometry.hpp"
#include "inspectsim/observer.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace inspectsim {

/// Scenario-file violation; `field` is the dotted path of the offending key.
class SchemaError : public std::runtime_error {
public:
  SchemaError(const std::string& field_path, const std::string& message)
      : std::runtime_error(field_path + ": " + message), field(field_path) {}
  std::string field;
};

/// Value of one `key = ...` entry in the scenario format.
struct ConfigValue {
  enum class Kind { Number, Bool, String, Array };
  Kind kind = Kind::Number;
  double num = 0.0;
  bool b = false;
  std::string str;
  std::vector<double> arr;
  int line = 0;
};

/// Flat view of a parsed scenario file: `[section]` headers prefix the
/// keys that follow, so `[camera] hfov_deg = 46` becomes
/// "camera.hfov_deg". Typed getters record which keys were consumed so
/// unknown fields can be rejected.
class ConfigMap {
public:
  static ConfigMap parse(const std::string& content);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  int integer(const std::string& key) const;
  int integer_or(const std::string& key, int fallback) const;
  bool boolean_or(const std::string& key, bool fallback) const;
  std::string string_or(const std::string& key, const std::string& fallback) const;
  std::string string_value(const std::string& key) const;
  std::vector<double> array(const std::string& key, int expected_size = -1) const;
  Vec3 vec3(const std::string& key) const;
  Vec2 vec2(const std::string& key) const;
  Vec3 vec3_or(const std::string& key, const Vec3& fallback) const;
  Vec2 vec2_or(const std::string& key, const Vec2& fallback) const;

  /// Keys under `prefix.` with distinct next components, e.g. sections
  /// "plane.1", "plane.2" for prefix "plane".
  std::vector<std::string> subsections(const std::string& prefix) const;

  /// Throws SchemaError on the first never-consumed key.
  void reject_unknown() const;

private:
  const ConfigValue& get(const std::string& key) const;
  std::map<std::string, ConfigValue> values_;
  mutable std::set<std::string> consumed_;
};

enum class RunMode { ObserverOnly, ClosedLoop };
enum class EstimatorKind { Adaptive, Ekf };
enum class YawPolicy { Fixed, AlignToEstimate };

struct PlaneSpec {
  Plane plane;
  PlaneExtent extent;
  int feature_count = 0;
  bool replenish = false;
};

struct CameraSetup {
  CameraModel model{46.0 * M_PI / 180.0, 38.0 * M_PI / 180.0};
  Vec3 mounting_offset = Vec3::Zero();
  double yaw0 = 0.0;
  YawPolicy policy = YawPolicy::Fixed;
  double yaw_rate_limit = 0.6;
  double rate_hz = 10.0;
  int control_every = 1;
};

struct MetricsConfig {
  double theta_n = 0.05;
  double theta_d = 0.1;
  bool d_error_in_camera_frame = true;
  double settle_time = 6.0;
  double steady_end_margin = 4.0;
  double steady_window_min = 2.0;
};

struct Scenario {
  std::string name = "scenario";
  RunMode mode = RunMode::ObserverOnly;
  EstimatorKind estimator = EstimatorKind::Adaptive;
  std::uint64_t seed = 0;
  double duration = 0.0;

  CameraSetup camera;
  PlatformState x0;
  Vec3 chi0 = Vec3(0, 0, 0.1);

  ObserverGains gains;
  double chi_min = 1e-4;
  double pe_window = 1.0;
  double pe_beta = 1e-3;
  EkfConfig ekf;

  Vec2 sigma_s = Vec2::Zero();  ///< diagonal of the feature-noise covariance

  std::vector<PlaneSpec> planes;

  InspectionSpec inspection;  ///< meaningful in closed-loop mode only
  ControllerConfig controller;
  double sample_interval_s = 0.1;

  MetricsConfig metrics;

  double dt() const { return 1.0 / camera.rate_hz; }
  int tick_count() const { return static_cast<int>(std::llround(duration * camera.rate_hz)); }
};

/// Parses and validates scenario text (schema = 1). Throws SchemaError.
Scenario load_scenario(const std::string& content, const std::string& name = "scenario");

/// Reads the file; missing/unreadable file throws SchemaError on field "file".
Scenario load_scenario_file(const std::string& path);

/// Bundled scenarios by figure tag: fig3, fig4, fig5, fig6-9, compare.
const std::map<std::string, std::string>& bundled_scenarios();

}  // namespace inspectsim
