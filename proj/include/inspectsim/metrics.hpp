#pragma once

#include "inspectsim/scenario.hpp"
#include "inspectsim/trace.hpp"

#include <string>
#include <vector>

namespace inspectsim {

/// Per plane-segment convergence record. A segment is a maximal run of
/// ticks with the same active plane and round counter; the steady window
/// starts settle_time after the segment begins.
struct SegmentSummary {
  int plane_idx = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double estimate_settle_t = std::numeric_limits<double>::quiet_NaN();
  double gamma_one_t = std::numeric_limits<double>::quiet_NaN();
  Vec3 steady_max_abs_e = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  bool qualifies = false;  ///< steady window long enough to judge
};

struct RunSummary {
  double duration = 0.0;
  /// First time after which e_n < theta_n and |e_d| < theta_d hold to the
  /// end of the run; NaN when never reached.
  double time_to_threshold = std::numeric_limits<double>::quiet_NaN();
  double final_e_n = 0.0;
  double final_e_d_global = 0.0;
  double final_e_d_cam = 0.0;
  double max_u_inf = 0.0;
  double max_v_inf = 0.0;
  double max_qp_violation = 0.0;
  double min_pe_lambda = 0.0;
  int event_count = 0;
  std::vector<SegmentSummary> segments;
};

RunSummary summarize(const Trace& trace, const MetricsConfig& cfg);

std::string summary_to_json(const RunSummary& summary, const std::string& scenario_name,
                            std::uint64_t seed);

}  // namespace inspectsim
