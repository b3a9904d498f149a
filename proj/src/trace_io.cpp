#include "inspectsim/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace inspectsim {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string trace_csv_header() {
  return "t,plane_idx,true_nx,true_ny,true_nz,true_d,"
         "chi_x,chi_y,chi_z,chi_s_x,chi_s_y,chi_s_z,"
         "n_hat_x,n_hat_y,n_hat_z,d_hat,e_n,e_d_global,e_d_cam,"
         "px,py,pz,vx,vy,vz,ux,uy,uz,yaw,"
         "e_sep,e_sweep,e_vel,"
         "pe_lambda_min,pe_rank,pe_ok,gamma,n_a,"
         "qp_status,qp_iterations,qp_objective,qp_violation,qp_slack,visible_count";
}

std::string trace_row_csv(const TraceRow& r) {
  std::ostringstream out;
  out << fmt(r.t) << ',' << r.plane_idx;
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.true_n[i]);
  out << ',' << fmt(r.true_d);
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.chi_hat[i]);
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.chi_s[i]);
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.n_hat[i]);
  out << ',' << fmt(r.d_hat) << ',' << fmt(r.e_n) << ',' << fmt(r.e_d_global) << ','
      << fmt(r.e_d_cam);
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.p[i]);
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.v[i]);
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.u[i]);
  out << ',' << fmt(r.yaw);
  for (int i = 0; i < 3; ++i) out << ',' << fmt(r.e[i]);
  out << ',' << fmt(r.pe_lambda_min) << ',' << r.pe_rank << ',' << (r.pe_ok ? 1 : 0) << ','
      << fmt(r.gamma) << ',' << r.n_a << ',' << r.qp_status << ',' << r.qp_iterations << ','
      << fmt(r.qp_objective) << ',' << fmt(r.qp_violation) << ',' << fmt(r.qp_slack) << ','
      << r.visible_count;
  return out.str();
}

std::string trace_to_csv(const Trace& trace) {
  std::ostringstream out;
  out << trace_csv_header() << '\n';
  for (const TraceRow& row : trace.rows) out << trace_row_csv(row) << '\n';
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("rename failed: " + path);
  }
}

void write_trace_csv(const std::string& path, const Trace& trace) {
  write_file_atomic(path, trace_to_csv(trace));
}

}  // namespace inspectsim
