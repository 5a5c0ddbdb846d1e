#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vsd::synth {

enum class VehicleCategory { car, truck, motorbike, bicycle };

std::string to_string(VehicleCategory c);
VehicleCategory category_from_string(const std::string& s);

struct VehicleSpec {
  std::string type_id;  // simulator blueprint id, e.g. "vehicle.carlamotors.carlacola"
  VehicleCategory category = VehicleCategory::car;
  double length_m = 4.5;
  double width_m = 1.8;
  double height_m = 1.5;
  std::array<std::uint8_t, 3> color{200, 30, 30};
  int wheels = 4;
};

// Blueprint dimensions follow the common CARLA vehicle set; two-wheelers
// include the rider in their height.
const std::vector<VehicleSpec>& default_catalog();

// Maps a blueprint id to its category; falls back to name heuristics for ids
// outside the catalog.
VehicleCategory category_from_type_id(const std::string& type_id);

}  // namespace vsd::synth
