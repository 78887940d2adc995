#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fedspectre/data.hpp"
#include "fedspectre/rng.hpp"

namespace fedspectre::data {

// Additive shift on a feature group, expressed in units of the feature's
// per-device standard deviation.
struct FeatureShift {
  std::vector<int> features;
  double shift_sigma = 0.0;
};

struct BehaviorModel {
  std::vector<FeatureShift> shifts;
};

// Affine distortion of the shared base profile; rpi3 sits far from the
// rpi4 family, the two 2GB boards are identical, the 4GB board is close.
struct DeviceProfile {
  double loc_multiplier = 1.0;
  double loc_offset = 0.0;
  double scale_frac = 0.08;  // sigma = scale_frac * (|loc| + 1)
};

// x[index] = a * x[source] + b, evaluated after the base features.
struct DerivedFeature {
  int index = 0;
  int source = 0;
  double a = 1.0;
  double b = 0.0;
};

struct ConstantFeature {
  int index = 0;
  double value = 0.0;
};

/**
 * Full description of the generator. Base feature locations are a fixed
 * quasi-random spread of [loc_low, loc_high] distorted per device, so the
 * same spec always describes the same distributions; the sampling seed is
 * the only source of randomness.
 */
struct SyntheticSpec {
  int n_features = kRawFeatureCount;
  double loc_low = 20.0;
  double loc_high = 120.0;
  std::map<DeviceId, DeviceProfile> devices;
  std::map<Behavior, BehaviorModel> behaviors;
  std::vector<DerivedFeature> derived;
  std::vector<ConstantFeature> constants;
  // Records per (device, behavior) when synthesizing a whole dataset.
  std::map<Behavior, int> counts;

  void validate() const;  // SpecError naming the offending key

  // Bench-scale default: 75 raw features of which 7 are redundant (six
  // affine copies and one constant), separable attacks with a shared
  // footprint, freeze/repeat overlapping normal.
  static SyntheticSpec desk_default();

  static SyntheticSpec from_json_text(const std::string& text);
  static SyntheticSpec from_json_file(const std::filesystem::path& path);
  std::string to_json_text() const;
};

double base_location(const SyntheticSpec& spec, DeviceId device, int feature);
double base_scale(const SyntheticSpec& spec, DeviceId device, int feature);

// Draws spec.counts records per (device, behavior). Each (device, behavior)
// pair has its own derived stream, so enlarging one pair's count never
// changes another pair's records.
RecordList synthesize(const SyntheticSpec& spec, std::uint64_t seed);

// Same generator with explicit per-pair counts (scenario runs size the
// dataset from the participant plan).
RecordList synthesize_counts(
    const SyntheticSpec& spec,
    const std::map<std::pair<DeviceId, Behavior>, int>& counts,
    std::uint64_t seed);

}  // namespace fedspectre::data
