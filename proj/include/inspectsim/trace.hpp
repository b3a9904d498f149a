#pragma once

#include "inspectsim/geometry.hpp"

#include <string>
#include <vector>

namespace inspectsim {

/// One control tick of a simulation run. Quantities with a frame suffix
/// are explicit; e is the Eq-style tracking error measured against the
/// true active plane.
struct TraceRow {
  double t = 0.0;
  int plane_idx = 0;
  Vec3 true_n = Vec3::Zero();
  double true_d = 0.0;
  Vec3 chi_hat = Vec3::Zero();
  Vec3 chi_s = Vec3::Zero();
  Vec3 n_hat = Vec3::Zero();   ///< global-frame normal estimate
  double d_hat = 0.0;          ///< global-frame depth estimate
  double e_n = 0.0;            ///< normal angle error (rad)
  double e_d_global = 0.0;     ///< depth error, global frame (m)
  double e_d_cam = 0.0;        ///< depth error, camera frame (m)
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  double yaw = 0.0;  ///< camera yaw (rad)
  Vec3 e = Vec3::Zero();       ///< tracking error vs true plane (closed loop)
  double pe_lambda_min = 0.0;  ///< windowed excitation integral
  int pe_rank = 0;
  bool pe_ok = false;
  double gamma = 1.0;
  int n_a = 0;
  int qp_status = 0;
  int qp_iterations = 0;
  double qp_objective = 0.0;
  double qp_violation = 0.0;
  double qp_slack = 0.0;
  int visible_count = 0;
};

struct TraceEvent {
  int tick = 0;
  std::string what;
};

struct Trace {
  std::vector<TraceRow> rows;
  std::vector<TraceEvent> events;
};

/// Column order is part of the file contract; see README.
std::string trace_csv_header();
std::string trace_row_csv(const TraceRow& row);
void write_trace_csv(const std::string& path, const Trace& trace);
std::string trace_to_csv(const Trace& trace);

/// Atomic write helper (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace inspectsim
