#pragma once

#include "inspectsim/observer.hpp"

#include <string>
#include <vector>

namespace inspectsim {

/// One camera frame of a recorded track stream: timestamp, camera twist
/// and the detected features.
struct ReplayFrame {
  double t = 0.0;
  CameraTwist twist;
  std::vector<Feature> features;
};

/// CSV columns: t,vx,vy,vz,wx,wy,wz,id,x,y -- one row per feature, rows of
/// a frame share the timestamp. A frame without features is a single row
/// with id = -1.
void write_replay_csv(const std::string& path, const std::vector<ReplayFrame>& frames);

std::vector<ReplayFrame> read_replay_csv(const std::string& path);

/// Feeds recorded frames through the observer (ingest + step per frame
/// using the timestamp deltas) and returns the final state.
ObserverState replay_observer(const ObserverState& initial, const std::vector<ReplayFrame>& frames);

}  // namespace inspectsim
