#pragma once

#include <array>
#include <string>

namespace earseg {

// Per-image annotation categories. Values are open-vocabulary string labels;
// "unknown" marks an unannotated field.
struct Covariates {
  std::string pitch = "unknown";
  std::string roll = "unknown";
  std::string yaw = "unknown";
  std::string occlusion = "unknown";
  std::string gender = "unknown";
  std::string ethnicity = "unknown";

  static constexpr std::array<const char*, 6> kFieldNames = {
      "pitch", "roll", "yaw", "occlusion", "gender", "ethnicity"};

  const std::string& field(std::size_t i) const {
    switch (i) {
      case 0: return pitch;
      case 1: return roll;
      case 2: return yaw;
      case 3: return occlusion;
      case 4: return gender;
      default: return ethnicity;
    }
  }

  std::string& field(std::size_t i) {
    return const_cast<std::string&>(static_cast<const Covariates*>(this)->field(i));
  }
};

}  // namespace earseg
