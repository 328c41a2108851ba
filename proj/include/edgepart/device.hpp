#pragma once

#include <stdexcept>
#include <string>

namespace edgepart {

struct DeviceProfile {
  std::string name = "edge-gateway";
  double cc_edge = 1e13;    // FLOPs/s, peak
  double cc_cloud = 2.5e15; // FLOPs/s, peak
  double mem_edge = 8e9;    // bytes
  double p_comp = 25.0;     // W, edge compute
  double p_comm = 2.0;      // W, edge radio
  double eta_edge = 0.2;    // utilization efficiency
  double eta_cloud = 0.35;

  void check() const {
    if (cc_edge <= 0 || cc_cloud <= 0 || mem_edge <= 0 || p_comp <= 0 || p_comm <= 0)
      throw std::invalid_argument("device profile: all quantities must be positive");
    if (eta_edge <= 0 || eta_edge > 1 || eta_cloud <= 0 || eta_cloud > 1)
      throw std::invalid_argument("device profile: efficiency must be in (0, 1]");
  }
};

}  // namespace edgepart
