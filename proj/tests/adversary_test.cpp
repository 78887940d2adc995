#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "fedspectre/adversary.hpp"
#include "fedspectre/aggregation.hpp"

using namespace fedspectre;
using namespace fedspectre::adv;
using data::Behavior;
using data::DeviceId;

namespace {

data::RecordList behavior_pool() {
  data::RecordList pool;
  int stamp = 0;
  for (const Behavior behavior : {Behavior::normal, Behavior::spoof,
                                  Behavior::delay, Behavior::freeze,
                                  Behavior::noise}) {
    for (int i = 0; i < 10; ++i) {
      data::FingerprintRecord record;
      record.device = DeviceId::rpi4_1;
      record.behavior = behavior;
      record.timestamp = stamp;
      record.features = {double(stamp)};
      pool.push_back(record);
      ++stamp;
    }
  }
  return pool;
}

nn::ParameterVector global_vector() {
  nn::ParameterVector global;
  global.layout = {nn::ModelKind::mlp, 4, 8};
  global.values = Eigen::VectorXd::LinSpaced(40, -2.0, 2.0);
  return global;
}

}  // namespace

TEST_CASE("attack names round trip and classify") {
  for (const AttackKind kind : kAllAttackKinds) {
    CHECK(attack_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(attack_from_string("teleport"), ParseError);

  CHECK(is_data_poisoning(AttackKind::behavior_injection));
  CHECK(is_data_poisoning(AttackKind::label_flipping));
  CHECK_FALSE(is_data_poisoning(AttackKind::model_canceling));
  CHECK(is_model_poisoning(AttackKind::model_canceling));
  CHECK(is_model_poisoning(AttackKind::random_weights));
  CHECK_FALSE(is_model_poisoning(AttackKind::none));
  CHECK_FALSE(is_data_poisoning(AttackKind::none));
}

TEST_CASE("adversary assignments follow the fixed cycle") {
  CHECK(injected_behavior(0) == Behavior::spoof);
  CHECK(injected_behavior(1) == Behavior::mimic);
  CHECK(injected_behavior(2) == Behavior::delay);
  CHECK(injected_behavior(3) == Behavior::disorder);
  CHECK(injected_behavior(4) == Behavior::spoof);

  CHECK(flip_targets(0) == std::vector<Behavior>{Behavior::normal});
  CHECK(flip_targets(1) ==
        std::vector<Behavior>{Behavior::normal, Behavior::delay});
  CHECK(flip_targets(2) ==
        std::vector<Behavior>{Behavior::normal, Behavior::freeze});
  CHECK(flip_targets(3) ==
        std::vector<Behavior>{Behavior::normal, Behavior::noise});
  CHECK(flip_targets(4) == flip_targets(0));
}

TEST_CASE("behavior sampling draws distinct matching records") {
  const data::RecordList pool = behavior_pool();
  Rng rng(3);
  const data::RecordList sampled =
      sample_behavior(pool, Behavior::spoof, 6, rng);
  REQUIRE(sampled.size() == 6);
  std::set<double> stamps;
  for (const auto& record : sampled) {
    CHECK(record.behavior == Behavior::spoof);
    CHECK(stamps.insert(record.timestamp).second);
    CHECK(record.timestamp >= 10.0);
    CHECK(record.timestamp < 20.0);
  }

  Rng rng_again(3);
  const data::RecordList repeat =
      sample_behavior(pool, Behavior::spoof, 6, rng_again);
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    CHECK(repeat[i].timestamp == sampled[i].timestamp);
  }

  Rng rng_fail(3);
  CHECK_THROWS_AS(sample_behavior(pool, Behavior::spoof, 11, rng_fail),
                  QuotaError);
}

TEST_CASE("behavior injection relabels attack traffic as normal") {
  const data::RecordList pool = behavior_pool();
  Rng rng(8);
  const data::RecordList injected =
      inject_behavior(pool, Behavior::delay, 5, rng);
  REQUIRE(injected.size() == 5);
  for (const auto& record : injected) {
    CHECK(record.behavior == Behavior::normal);
    // Features still carry the delay fingerprint from the pool.
    CHECK(record.features[0] >= 20.0);
    CHECK(record.features[0] < 30.0);
  }
}

TEST_CASE("label flipping inverts exactly the listed behaviors") {
  const data::RecordList pool = behavior_pool();
  const std::vector<double> honest = poisoned_labels(pool, {});
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(honest[i] == (data::is_attack(pool[i].behavior) ? 1.0 : 0.0));
  }

  const std::vector<Behavior> targets = {Behavior::normal, Behavior::delay};
  const std::vector<double> flipped = poisoned_labels(pool, targets);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const bool in_targets = pool[i].behavior == Behavior::normal ||
                            pool[i].behavior == Behavior::delay;
    if (in_targets) {
      CHECK(flipped[i] == 1.0 - honest[i]);
    } else {
      CHECK(flipped[i] == honest[i]);
    }
  }
}

TEST_CASE("canceling updates null out equally weighted averaging") {
  const nn::ParameterVector global = global_vector();

  SUBCASE("alpha worked example") {
    const auto update = cancel_update(global, 18, 6);
    for (Eigen::Index i = 0; i < global.values.size(); ++i) {
      CHECK(update.values[i] == -2.0 * global.values[i]);
    }
  }

  SUBCASE("aggregate collapses to zero for every adversary share") {
    for (int total = 2; total <= 18; ++total) {
      for (int f = 1; f < total; ++f) {
        std::vector<nn::ParameterVector> updates;
        for (int i = 0; i < total - f; ++i) updates.push_back(global);
        const auto crafted = cancel_update(global, total, f);
        for (int i = 0; i < f; ++i) updates.push_back(crafted);
        const std::vector<double> weights(total, 1.0);
        const auto merged = agg::fed_avg(updates, weights);
        CHECK(merged.values.cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }

  SUBCASE("invalid shares are rejected") {
    CHECK_THROWS_AS(cancel_update(global, 12, 0), ProtocolError);
    CHECK_THROWS_AS(cancel_update(global, 12, 13), ProtocolError);
  }
}

TEST_CASE("random updates match the advertised distribution") {
  nn::ParameterVector global = global_vector();
  global.values = Eigen::VectorXd::Zero(20000);
  Rng rng(99);
  const auto update = random_update(global, rng);
  REQUIRE(update.values.size() == 20000);
  CHECK(update.layout == global.layout);

  const double mean = update.values.mean();
  const double var =
      (update.values.array() - mean).square().sum() / update.values.size();
  CHECK(std::abs(mean) < 0.1);
  CHECK(std::sqrt(var) == doctest::Approx(3.0).epsilon(0.05));

  Rng rng_again(99);
  const auto repeat = random_update(global, rng_again);
  CHECK(repeat.values == update.values);
}

TEST_CASE("overstated thresholds land in the advertised range") {
  Rng rng(123);
  std::set<double> seen;
  for (int i = 0; i < 200; ++i) {
    const double value = overstate_threshold(rng);
    CHECK(value >= 1e6);
    CHECK(value <= 1e9);
    seen.insert(value);
  }
  CHECK(seen.size() == 200);
}
