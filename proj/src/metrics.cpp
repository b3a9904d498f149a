#include "inspectsim/metrics.hpp"

#include <json.hpp>

#include <cmath>

namespace inspectsim {

namespace {

double row_e_d(const TraceRow& row, const MetricsConfig& cfg) {
  return cfg.d_error_in_camera_frame ? row.e_d_cam : row.e_d_global;
}

bool below_threshold(const TraceRow& row, const MetricsConfig& cfg) {
  return row.e_n < cfg.theta_n && std::abs(row_e_d(row, cfg)) < cfg.theta_d;
}

/// First time from which `pred` holds through [begin, end); NaN if never.
template <typename Pred>
double persistent_from(const std::vector<TraceRow>& rows, std::size_t begin, std::size_t end,
                       Pred pred) {
  std::ptrdiff_t last_fail = -1;
  for (std::size_t i = begin; i < end; ++i) {
    if (!pred(rows[i])) last_fail = static_cast<std::ptrdiff_t>(i);
  }
  const std::size_t first_ok = static_cast<std::size_t>(last_fail + 1);
  if (last_fail < 0) return rows[begin].t;
  if (first_ok >= end) return std::numeric_limits<double>::quiet_NaN();
  return rows[first_ok].t;
}

}  // namespace

RunSummary summarize(const Trace& trace, const MetricsConfig& cfg) {
  RunSummary s;
  const auto& rows = trace.rows;
  if (rows.empty()) return s;
  s.duration = rows.back().t;
  s.event_count = static_cast<int>(trace.events.size());

  s.time_to_threshold =
      persistent_from(rows, 0, rows.size(), [&](const TraceRow& r) { return below_threshold(r, cfg); });

  const TraceRow& last = rows.back();
  s.final_e_n = last.e_n;
  s.final_e_d_global = last.e_d_global;
  s.final_e_d_cam = last.e_d_cam;

  s.min_pe_lambda = kInf;
  for (const TraceRow& r : rows) {
    s.max_u_inf = std::max(s.max_u_inf, r.u.cwiseAbs().maxCoeff());
    s.max_v_inf = std::max(s.max_v_inf, r.v.cwiseAbs().maxCoeff());
    s.max_qp_violation = std::max(s.max_qp_violation, r.qp_violation);
    s.min_pe_lambda = std::min(s.min_pe_lambda, r.pe_lambda_min);
  }

  // Segment split on active-plane or round changes.
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= rows.size(); ++i) {
    const bool cut = i == rows.size() || rows[i].plane_idx != rows[begin].plane_idx ||
                     rows[i].n_a != rows[begin].n_a;
    if (!cut) continue;
    SegmentSummary seg;
    seg.plane_idx = rows[begin].plane_idx;
    seg.t_start = rows[begin].t;
    seg.t_end = rows[i - 1].t;
    seg.estimate_settle_t = persistent_from(rows, begin, i,
                                            [&](const TraceRow& r) { return below_threshold(r, cfg); });
    seg.gamma_one_t = persistent_from(rows, begin, i, [&](const TraceRow& r) {
      return r.gamma == 1.0 && (r.chi_s - r.chi_hat).cwiseAbs().maxCoeff() <= 1e-9;
    });
    // The steady window trims the transient at the segment start and the
    // blend zone at its end (the estimate drifts toward the next wall
    // before the crossing).
    const double window_start = seg.t_start + cfg.settle_time;
    const double window_end = seg.t_end - cfg.steady_end_margin;
    if (window_end - window_start >= cfg.steady_window_min) {
      seg.qualifies = true;
      Vec3 peak = Vec3::Zero();
      for (std::size_t j = begin; j < i; ++j) {
        if (rows[j].t < window_start || rows[j].t > window_end) continue;
        peak = peak.cwiseMax(rows[j].e.cwiseAbs());
      }
      seg.steady_max_abs_e = peak;
    }
    s.segments.push_back(seg);
    begin = i;
  }
  return s;
}

std::string summary_to_json(const RunSummary& s, const std::string& scenario_name,
                            std::uint64_t seed) {
  nlohmann::json j;
  j["scenario"] = scenario_name;
  j["seed"] = seed;
  j["duration_s"] = s.duration;
  auto num_or_null = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  j["time_to_threshold_s"] = num_or_null(s.time_to_threshold);
  j["final"]["e_n_rad"] = s.final_e_n;
  j["final"]["e_d_global_m"] = s.final_e_d_global;
  j["final"]["e_d_cam_m"] = s.final_e_d_cam;
  j["max_u_inf"] = s.max_u_inf;
  j["max_v_inf"] = s.max_v_inf;
  j["max_qp_violation"] = s.max_qp_violation;
  j["min_pe_lambda"] = s.min_pe_lambda;
  j["event_count"] = s.event_count;
  j["segments"] = nlohmann::json::array();
  for (const SegmentSummary& seg : s.segments) {
    nlohmann::json js;
    js["plane"] = seg.plane_idx;
    js["t_start"] = seg.t_start;
    js["t_end"] = seg.t_end;
    js["estimate_settle_t"] = num_or_null(seg.estimate_settle_t);
    js["gamma_one_t"] = num_or_null(seg.gamma_one_t);
    js["qualifies"] = seg.qualifies;
    if (seg.qualifies) {
      js["steady_max_abs_e"] = {seg.steady_max_abs_e.x(), seg.steady_max_abs_e.y(),
                                seg.steady_max_abs_e.z()};
    }
    j["segments"].push_back(js);
  }
  return j.dump(2) + "\n";
}

}  // namespace inspectsim
