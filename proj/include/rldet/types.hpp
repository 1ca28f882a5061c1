#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "rldet/geom.hpp"

namespace rldet {

enum class ObjClass : int { Car = 0, Pedestrian = 1, Cyclist = 2 };

inline constexpr int kNumClasses = 3;

inline const char* class_name(ObjClass c) {
  switch (c) {
    case ObjClass::Car: return "Car";
    case ObjClass::Pedestrian: return "Pedestrian";
    case ObjClass::Cyclist: return "Cyclist";
  }
  throw std::invalid_argument("class_name: bad class id");
}

inline ObjClass class_from_name(const std::string& s) {
  if (s == "Car") return ObjClass::Car;
  if (s == "Pedestrian") return ObjClass::Pedestrian;
  if (s == "Cyclist") return ObjClass::Cyclist;
  throw std::invalid_argument("unknown class '" + s + "'");
}

// Conventional size priors (l, w, h) per class, overridable in config.
inline constexpr std::array<std::array<double, 3>, kNumClasses> kAnchorSizes{{
    {4.0, 1.8, 1.6},  // car
    {0.6, 0.6, 1.7},  // pedestrian
    {1.8, 0.6, 1.7},  // cyclist
}};

// Annotated object: class, oriented box, motion flag and velocity.
// moving <=> |velocity| > 0.
struct ObjectSpec {
  ObjClass cls = ObjClass::Car;
  Box7 box;
  bool moving = false;
  std::array<double, 3> velocity{0.0, 0.0, 0.0};
};

}  // namespace rldet
