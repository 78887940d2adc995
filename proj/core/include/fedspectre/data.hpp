#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "fedspectre/errors.hpp"

namespace fedspectre::data {

// Monitored device behaviors. normal and normal_v2 are the two benign ones
// (v2 is a newer firmware of the same sensing service); everything else is
// an attack on the spectrum data.
enum class Behavior {
  normal,
  normal_v2,
  delay,
  disorder,
  freeze,
  hop,
  mimic,
  noise,
  repeat,
  spoof,
};

inline constexpr std::array<Behavior, 10> kAllBehaviors = {
    Behavior::normal, Behavior::normal_v2, Behavior::delay, Behavior::disorder,
    Behavior::freeze, Behavior::hop,       Behavior::mimic, Behavior::noise,
    Behavior::repeat, Behavior::spoof,
};

bool is_attack(Behavior behavior);

std::string_view to_string(Behavior behavior);
// Accepts the canonical names plus "confusion" as an alias for disorder.
Behavior behavior_from_string(std::string_view text);

// Physical sensing devices.
enum class DeviceId { rpi3, rpi4_1, rpi4_2, rpi4_3 };

inline constexpr std::array<DeviceId, 4> kAllDevices = {
    DeviceId::rpi3, DeviceId::rpi4_1, DeviceId::rpi4_2, DeviceId::rpi4_3};

// Hardware families; rpi4_1 and rpi4_2 share the 2GB family.
enum class DeviceType { rpi3_1gb, rpi4_2gb, rpi4_4gb };

inline constexpr std::array<DeviceType, 3> kAllDeviceTypes = {
    DeviceType::rpi3_1gb, DeviceType::rpi4_2gb, DeviceType::rpi4_4gb};

DeviceType family_of(DeviceId device);

std::string_view to_string(DeviceId device);
DeviceId device_from_string(std::string_view text);
std::string_view to_string(DeviceType type);
DeviceType device_type_from_string(std::string_view text);

// One kernel-event fingerprint window.
struct FingerprintRecord {
  DeviceId device = DeviceId::rpi3;
  Behavior behavior = Behavior::normal;
  double timestamp = 0.0;
  std::vector<double> features;
};

using RecordList = std::vector<FingerprintRecord>;

inline constexpr int kRawFeatureCount = 75;

}  // namespace fedspectre::data
