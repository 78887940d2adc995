#include "fedspectre/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fedspectre::data {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Low-discrepancy spread of (0, 1): the golden-ratio sequence never lands
// on the same fraction twice for the feature counts used here.
double golden_fraction(int index) {
  const double t = 0.5 + index * 0.61803398874989485;
  return t - std::floor(t);
}

const DeviceProfile& profile_of(const SyntheticSpec& spec, DeviceId device) {
  const auto it = spec.devices.find(device);
  if (it == spec.devices.end()) {
    throw SpecError("device " + std::string(to_string(device)) +
                    " has no profile");
  }
  return it->second;
}

}  // namespace

double base_location(const SyntheticSpec& spec, DeviceId device, int feature) {
  const DeviceProfile& profile = profile_of(spec, device);
  const double base =
      spec.loc_low + golden_fraction(feature) * (spec.loc_high - spec.loc_low);
  return profile.loc_multiplier * base + profile.loc_offset;
}

double base_scale(const SyntheticSpec& spec, DeviceId device, int feature) {
  const DeviceProfile& profile = profile_of(spec, device);
  return profile.scale_frac * (std::abs(base_location(spec, device, feature)) + 1.0);
}

void SyntheticSpec::validate() const {
  if (n_features <= 0) throw SpecError("n_features must be positive");
  if (!(loc_low < loc_high)) throw SpecError("loc_low must be below loc_high");
  if (devices.empty()) throw SpecError("devices must not be empty");
  for (const auto& [device, profile] : devices) {
    if (!(profile.scale_frac > 0.0)) {
      throw SpecError("device " + std::string(to_string(device)) +
                      ": scale_frac must be positive");
    }
  }

  std::set<int> overwritten;
  for (const auto& constant : constants) {
    if (constant.index < 0 || constant.index >= n_features) {
      throw SpecError("constant index " + std::to_string(constant.index) +
                      " out of range");
    }
    if (!overwritten.insert(constant.index).second) {
      throw SpecError("feature " + std::to_string(constant.index) +
                      " defined twice");
    }
  }
  for (const auto& derived : derived) {
    if (derived.index < 0 || derived.index >= n_features) {
      throw SpecError("derived index " + std::to_string(derived.index) +
                      " out of range");
    }
    if (derived.source < 0 || derived.source >= n_features) {
      throw SpecError("derived feature " + std::to_string(derived.index) +
                      ": source " + std::to_string(derived.source) +
                      " out of range");
    }
    if (!overwritten.insert(derived.index).second) {
      throw SpecError("feature " + std::to_string(derived.index) +
                      " defined twice");
    }
  }
  for (const auto& derived : derived) {
    if (overwritten.count(derived.source)) {
      throw SpecError("derived feature " + std::to_string(derived.index) +
                      ": source " + std::to_string(derived.source) +
                      " must be a base feature");
    }
  }
  for (const auto& [behavior, model] : behaviors) {
    for (const auto& shift : model.shifts) {
      for (const int feature : shift.features) {
        if (feature < 0 || feature >= n_features) {
          throw SpecError("behavior " + std::string(to_string(behavior)) +
                          ": feature " + std::to_string(feature) +
                          " out of range");
        }
        if (overwritten.count(feature)) {
          throw SpecError("behavior " + std::string(to_string(behavior)) +
                          ": feature " + std::to_string(feature) +
                          " is derived or constant");
        }
      }
    }
  }
  for (const auto& [behavior, count] : counts) {
    if (count < 0) {
      throw SpecError("count for " + std::string(to_string(behavior)) +
                      " must not be negative");
    }
  }
}

SyntheticSpec SyntheticSpec::desk_default() {
  SyntheticSpec spec;
  spec.devices[DeviceId::rpi3] = {1.06, 3.0, 0.08};
  spec.devices[DeviceId::rpi4_1] = {1.0, 0.0, 0.08};
  spec.devices[DeviceId::rpi4_2] = {1.0, 0.0, 0.08};
  spec.devices[DeviceId::rpi4_3] = {1.015, 0.5, 0.08};

  // Every separable attack touches the shared group {50,51,52} on top of
  // its own features; spoof additionally covers mimic's features, so a
  // model trained on spoof also recognises mimic.
  const std::vector<int> shared = {50, 51, 52};
  spec.behaviors[Behavior::hop] = {{{{10, 11, 12, 13}, 14.0}, {shared, 9.0}}};
  spec.behaviors[Behavior::noise] = {
      {{{10, 11, 12, 13, 14, 15}, 12.0}, {shared, 8.5}}};
  spec.behaviors[Behavior::mimic] = {{{{20, 21, 22, 23}, 13.5}, {shared, 9.0}}};
  spec.behaviors[Behavior::spoof] = {
      {{{20, 21, 22, 23}, 13.5}, {{10, 11, 12}, 12.0}, {shared, 9.0}}};
  spec.behaviors[Behavior::disorder] = {
      {{{24, 25, 26, 27}, 13.5}, {shared, 9.0}}};
  spec.behaviors[Behavior::delay] = {{{{30, 31, 32, 33}, 13.0}, {shared, 8.5}}};
  // Stealthy pair: barely outside the benign noise floor.
  spec.behaviors[Behavior::freeze] = {{{{40, 41}, 0.25}}};
  spec.behaviors[Behavior::repeat] = {{{{42, 43}, 0.3}}};
  spec.behaviors[Behavior::normal_v2] = {{{{60, 61, 62}, 0.5}}};

  spec.constants = {{68, 42.0}};
  spec.derived = {{69, 1, 2.0, 3.0},   {70, 5, 1.5, 40.0}, {71, 9, 0.5, -2.0},
                  {72, 14, 1.0, 0.0},  {73, 22, 3.0, -7.5}, {74, 33, 1.25, 12.0}};

  for (const Behavior behavior : kAllBehaviors) {
    spec.counts[behavior] = is_attack(behavior) ? 150 : 75;
  }
  spec.counts[Behavior::normal] = 425;
  return spec;
}

RecordList synthesize(const SyntheticSpec& spec, std::uint64_t seed) {
  std::map<std::pair<DeviceId, Behavior>, int> counts;
  for (const auto& [device, profile] : spec.devices) {
    (void)profile;
    for (const auto& [behavior, count] : spec.counts) {
      if (count > 0) counts[{device, behavior}] = count;
    }
  }
  return synthesize_counts(spec, counts, seed);
}

RecordList synthesize_counts(
    const SyntheticSpec& spec,
    const std::map<std::pair<DeviceId, Behavior>, int>& counts,
    std::uint64_t seed) {
  spec.validate();

  std::vector<char> fixed(spec.n_features, 0);
  for (const auto& constant : spec.constants) fixed[constant.index] = 1;
  for (const auto& derived : spec.derived) fixed[derived.index] = 1;

  const Rng root(seed);
  RecordList records;
  for (const auto& [pair, count] : counts) {
    const auto [device, behavior] = pair;
    if (count <= 0) continue;

    std::vector<double> loc(spec.n_features, 0.0);
    std::vector<double> scale(spec.n_features, 0.0);
    std::vector<double> shift(spec.n_features, 0.0);
    for (int j = 0; j < spec.n_features; ++j) {
      if (fixed[j]) continue;
      loc[j] = base_location(spec, device, j);
      scale[j] = base_scale(spec, device, j);
    }
    if (const auto it = spec.behaviors.find(behavior); it != spec.behaviors.end()) {
      for (const auto& group : it->second.shifts) {
        for (const int feature : group.features) {
          shift[feature] += group.shift_sigma;
        }
      }
    }

    const std::string tag = "synth:" + std::string(to_string(device)) + ":" +
                            std::string(to_string(behavior));
    Rng stream = root.split(tag);
    for (int i = 0; i < count; ++i) {
      FingerprintRecord record;
      record.device = device;
      record.behavior = behavior;
      record.timestamp = static_cast<double>(i);
      record.features.resize(spec.n_features, 0.0);
      for (int j = 0; j < spec.n_features; ++j) {
        if (fixed[j]) continue;
        record.features[j] = loc[j] + scale[j] * (shift[j] + stream.normal());
      }
      for (const auto& derived : spec.derived) {
        record.features[derived.index] =
            derived.a * record.features[derived.source] + derived.b;
      }
      for (const auto& constant : spec.constants) {
        record.features[constant.index] = constant.value;
      }
      records.push_back(std::move(record));
    }
  }
  return records;
}

namespace {

nlohmann::json profile_to_json(const DeviceProfile& profile) {
  return {{"loc_multiplier", profile.loc_multiplier},
          {"loc_offset", profile.loc_offset},
          {"scale_frac", profile.scale_frac}};
}

}  // namespace

std::string SyntheticSpec::to_json_text() const {
  nlohmann::json doc;
  doc["n_features"] = n_features;
  doc["loc_low"] = loc_low;
  doc["loc_high"] = loc_high;
  for (const auto& [device, profile] : devices) {
    doc["devices"][std::string(to_string(device))] = profile_to_json(profile);
  }
  for (const auto& [behavior, model] : behaviors) {
    nlohmann::json shifts = nlohmann::json::array();
    for (const auto& shift : model.shifts) {
      shifts.push_back(
          {{"features", shift.features}, {"shift_sigma", shift.shift_sigma}});
    }
    doc["behaviors"][std::string(to_string(behavior))] = {{"shifts", shifts}};
  }
  doc["derived"] = nlohmann::json::array();
  for (const auto& d : derived) {
    doc["derived"].push_back(
        {{"index", d.index}, {"source", d.source}, {"a", d.a}, {"b", d.b}});
  }
  doc["constants"] = nlohmann::json::array();
  for (const auto& c : constants) {
    doc["constants"].push_back({{"index", c.index}, {"value", c.value}});
  }
  for (const auto& [behavior, count] : counts) {
    doc["counts"][std::string(to_string(behavior))] = count;
  }
  return doc.dump(2);
}

SyntheticSpec SyntheticSpec::from_json_text(const std::string& text) {
  SyntheticSpec spec;
  spec.devices.clear();
  try {
    const nlohmann::json doc = nlohmann::json::parse(text);
    spec.n_features = doc.value("n_features", spec.n_features);
    spec.loc_low = doc.value("loc_low", spec.loc_low);
    spec.loc_high = doc.value("loc_high", spec.loc_high);
    if (doc.contains("devices")) {
      for (const auto& [name, entry] : doc.at("devices").items()) {
        DeviceProfile profile;
        profile.loc_multiplier = entry.value("loc_multiplier", 1.0);
        profile.loc_offset = entry.value("loc_offset", 0.0);
        profile.scale_frac = entry.value("scale_frac", 0.08);
        spec.devices[device_from_string(name)] = profile;
      }
    }
    if (doc.contains("behaviors")) {
      for (const auto& [name, entry] : doc.at("behaviors").items()) {
        BehaviorModel model;
        for (const auto& shift : entry.at("shifts")) {
          FeatureShift group;
          group.features = shift.at("features").get<std::vector<int>>();
          group.shift_sigma = shift.at("shift_sigma").get<double>();
          model.shifts.push_back(std::move(group));
        }
        spec.behaviors[behavior_from_string(name)] = std::move(model);
      }
    }
    if (doc.contains("derived")) {
      for (const auto& entry : doc.at("derived")) {
        spec.derived.push_back({entry.at("index").get<int>(),
                                entry.at("source").get<int>(),
                                entry.value("a", 1.0), entry.value("b", 0.0)});
      }
    }
    if (doc.contains("constants")) {
      for (const auto& entry : doc.at("constants")) {
        spec.constants.push_back(
            {entry.at("index").get<int>(), entry.at("value").get<double>()});
      }
    }
    if (doc.contains("counts")) {
      for (const auto& [name, count] : doc.at("counts").items()) {
        spec.counts[behavior_from_string(name)] = count.get<int>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

SyntheticSpec SyntheticSpec::from_json_file(const std::filesystem::path& path) {
  return from_json_text(read_file(path));
}

}  // namespace fedspectre::data
