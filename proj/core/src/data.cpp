#include "fedspectre/data.hpp"

namespace fedspectre::data {

bool is_attack(Behavior behavior) {
  return behavior != Behavior::normal && behavior != Behavior::normal_v2;
}

std::string_view to_string(Behavior behavior) {
  switch (behavior) {
    case Behavior::normal: return "normal";
    case Behavior::normal_v2: return "normal_v2";
    case Behavior::delay: return "delay";
    case Behavior::disorder: return "disorder";
    case Behavior::freeze: return "freeze";
    case Behavior::hop: return "hop";
    case Behavior::mimic: return "mimic";
    case Behavior::noise: return "noise";
    case Behavior::repeat: return "repeat";
    case Behavior::spoof: return "spoof";
  }
  return "unknown";
}

Behavior behavior_from_string(std::string_view text) {
  for (const Behavior b : kAllBehaviors) {
    if (text == to_string(b)) return b;
  }
  if (text == "confusion") return Behavior::disorder;
  throw ParseError("unknown behavior '" + std::string(text) + "'");
}

DeviceType family_of(DeviceId device) {
  switch (device) {
    case DeviceId::rpi3: return DeviceType::rpi3_1gb;
    case DeviceId::rpi4_1:
    case DeviceId::rpi4_2: return DeviceType::rpi4_2gb;
    case DeviceId::rpi4_3: return DeviceType::rpi4_4gb;
  }
  return DeviceType::rpi3_1gb;
}

std::string_view to_string(DeviceId device) {
  switch (device) {
    case DeviceId::rpi3: return "RPi3";
    case DeviceId::rpi4_1: return "RPi4_1";
    case DeviceId::rpi4_2: return "RPi4_2";
    case DeviceId::rpi4_3: return "RPi4_3";
  }
  return "unknown";
}

DeviceId device_from_string(std::string_view text) {
  for (const DeviceId d : kAllDevices) {
    if (text == to_string(d)) return d;
  }
  throw ParseError("unknown device '" + std::string(text) + "'");
}

std::string_view to_string(DeviceType type) {
  switch (type) {
    case DeviceType::rpi3_1gb: return "RPi3_1GB";
    case DeviceType::rpi4_2gb: return "RPi4_2GB";
    case DeviceType::rpi4_4gb: return "RPi4_4GB";
  }
  return "unknown";
}

DeviceType device_type_from_string(std::string_view text) {
  for (const DeviceType t : kAllDeviceTypes) {
    if (text == to_string(t)) return t;
  }
  throw ParseError("unknown device type '" + std::string(text) + "'");
}

}  // namespace fedspectre::data
