#include "inspectsim/replay.hpp"

#include "inspectsim/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace inspectsim {

void write_replay_csv(const std::string& path, const std::vector<ReplayFrame>& frames) {
  std::ostringstream out;
  out << "t,vx,vy,vz,wx,wy,wz,id,x,y\n";
  char buf[256];
  for (const ReplayFrame& f : frames) {
    auto prefix = [&](int id, double x, double y) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g\n",
                    f.t, f.twist.v.x(), f.twist.v.y(), f.twist.v.z(), f.twist.omega.x(),
                    f.twist.omega.y(), f.twist.omega.z(), id, x, y);
      out << buf;
    };
    if (f.features.empty()) {
      prefix(-1, 0.0, 0.0);
    } else {
      for (const Feature& ft : f.features) prefix(ft.id, ft.s.x(), ft.s.y());
    }
  }
  write_file_atomic(path, out.str());
}

std::vector<ReplayFrame> read_replay_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty replay file: " + path);
  std::vector<ReplayFrame> frames;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double vals[9];
    int id = 0;
    for (int col = 0; col < 10; ++col) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("short replay row: " + line);
      if (col == 7) {
        id = std::stoi(cell);
      } else {
        const int slot = col < 7 ? col : col - 1;
        vals[slot] = std::stod(cell);
      }
    }
    const double t = vals[0];
    if (frames.empty() || frames.back().t != t) {
      if (!frames.empty() && t <= frames.back().t) {
        throw std::runtime_error("replay timestamps must be strictly increasing");
      }
      ReplayFrame f;
      f.t = t;
      f.twist.v = Vec3(vals[1], vals[2], vals[3]);
      f.twist.omega = Vec3(vals[4], vals[5], vals[6]);
      frames.push_back(f);
    }
    if (id >= 0) frames.back().features.push_back(Feature{id, Vec2(vals[7], vals[8])});
  }
  return frames;
}

ObserverState replay_observer(const ObserverState& initial, const std::vector<ReplayFrame>& frames) {
  ObserverState st = initial;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double dt = i + 1 < frames.size() ? frames[i + 1].t - frames[i].t
                                            : (i > 0 ? frames[i].t - frames[i - 1].t : 0.1);
    st = ingest_frame(st, frames[i].features);
    st = observer_step(st, frames[i].twist, dt);
  }
  return st;
}

}  // namespace inspectsim
