#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "fedspectre/adversary.hpp"
#include "fedspectre/federation.hpp"

using namespace fedspectre;
using namespace fedspectre::fed;

namespace {

Eigen::MatrixXd gaussian_rows(int rows, int cols, Rng& rng,
                              double center = 0.5, double spread = 0.05) {
  Eigen::MatrixXd x(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      x(i, j) = center + 0.1 * j + spread * rng.normal();
    }
  }
  return x;
}

ParticipantData autoencoder_data(Rng& rng, int train_rows = 48,
                                 int val_rows = 16) {
  ParticipantData data;
  data.train_x = gaussian_rows(train_rows, 4, rng);
  data.val_x = gaussian_rows(val_rows, 4, rng);
  return data;
}

FederationConfig small_autoencoder_config() {
  FederationConfig config;
  config.model = nn::ModelKind::autoencoder;
  config.input_dim = 4;
  config.hidden_dim = 4;
  config.rounds = 3;
  config.local_epochs = 2;
  config.batch_size = 16;
  config.seed = 1234;
  return config;
}

Eigen::VectorXd run_values(const FederationConfig& config,
                           const std::vector<Participant>& participants) {
  return nn::flatten(run(config, participants).model).values;
}

}  // namespace

TEST_CASE("client update leaves the model alone when it cannot train") {
  Rng rng(1);
  const FederationConfig config = small_autoencoder_config();
  Rng build_rng(2);
  const nn::ModelParams start = nn::build_model(
      nn::ModelKind::autoencoder, 4, 4, build_rng);

  SUBCASE("zero local epochs") {
    FederationConfig frozen = config;
    frozen.local_epochs = 0;
    const ClientUpdateResult result =
        client_update(start, autoencoder_data(rng), frozen, Rng(3));
    CHECK(result.epochs_run == 0);
    CHECK(result.params.values == nn::flatten(start).values);
    CHECK(std::isfinite(result.val_loss));
  }

  SUBCASE("no training rows") {
    ParticipantData data = autoencoder_data(rng);
    data.train_x.resize(0, 4);
    const ClientUpdateResult result = client_update(start, data, config, Rng(3));
    CHECK(result.epochs_run == 0);
    CHECK(result.weight == 0.0);
    CHECK(result.params.values == nn::flatten(start).values);
  }

  SUBCASE("a single row cannot form a batch") {
    ParticipantData data = autoencoder_data(rng);
    data.train_x = data.train_x.topRows(1);
    const ClientUpdateResult result = client_update(start, data, config, Rng(3));
    CHECK(result.params.values == nn::flatten(start).values);
  }
}

TEST_CASE("client update trains, reports rows and stops early") {
  Rng rng(10);
  const ParticipantData data = autoencoder_data(rng);
  Rng build_rng(11);
  const nn::ModelParams start =
      nn::build_model(nn::ModelKind::autoencoder, 4, 4, build_rng);
  FederationConfig config = small_autoencoder_config();
  config.local_epochs = 5;

  const ClientUpdateResult result = client_update(start, data, config, Rng(12));
  CHECK(result.weight == 48.0);
  CHECK(result.epochs_run >= 1);
  CHECK(result.epochs_run <= 5);
  CHECK(result.params.values != nn::flatten(start).values);

  SUBCASE("a huge improvement demand stops after the second epoch") {
    FederationConfig impatient = config;
    impatient.early_stop_delta = 1e9;
    const ClientUpdateResult stopped =
        client_update(start, data, impatient, Rng(12));
    CHECK(stopped.epochs_run == 2);
  }

  SUBCASE("the same stream reproduces the same update") {
    const ClientUpdateResult again = client_update(start, data, config, Rng(12));
    CHECK(again.params.values == result.params.values);
    const ClientUpdateResult other = client_update(start, data, config, Rng(13));
    CHECK(other.params.values != result.params.values);
  }

  SUBCASE("without validation rows every epoch runs") {
    ParticipantData no_val = data;
    no_val.val_x.resize(0, 4);
    FederationConfig impatient = config;
    impatient.early_stop_delta = 1e9;
    const ClientUpdateResult all =
        client_update(start, no_val, impatient, Rng(12));
    CHECK(all.epochs_run == 5);
    CHECK(std::isnan(all.val_loss));
  }
}

TEST_CASE("client update validates its configuration") {
  Rng rng(20);
  const ParticipantData data = autoencoder_data(rng);
  Rng build_rng(21);
  const nn::ModelParams ae =
      nn::build_model(nn::ModelKind::autoencoder, 4, 4, build_rng);
  FederationConfig config = small_autoencoder_config();

  config.batch_size = 1;
  CHECK_THROWS_AS(client_update(ae, data, config, Rng(1)), ConfigError);
  config.batch_size = 16;
  config.local_epochs = -1;
  CHECK_THROWS_AS(client_update(ae, data, config, Rng(1)), ConfigError);

  const nn::ModelParams mlp = nn::build_model(nn::ModelKind::mlp, 4, 4, build_rng);
  FederationConfig mlp_config = small_autoencoder_config();
  mlp_config.model = nn::ModelKind::mlp;
  CHECK_THROWS_AS(client_update(mlp, data, mlp_config, Rng(1)),
                  ParticipantError);
}

TEST_CASE("reconstruction errors and the local threshold match hand values") {
  // The all-zero shell reconstructs everything as zero, so the per-row
  // error is just the mean square of the row.
  const nn::ModelParams shell =
      nn::make_model_shell({nn::ModelKind::autoencoder, 2, 4});
  Eigen::MatrixXd val(3, 2);
  const double r2 = std::sqrt(2.0);
  const double r3 = std::sqrt(3.0);
  val << 1.0, 1.0, r2, r2, r3, r3;

  const std::vector<double> errors = reconstruction_errors(shell, val);
  REQUIRE(errors.size() == 3);
  CHECK(errors[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(errors[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(errors[2] == doctest::Approx(3.0).epsilon(1e-12));

  // Mean 2, population sigma sqrt(2/3).
  CHECK(local_threshold(shell, val) ==
        doctest::Approx(2.0 + std::sqrt(6.0)).epsilon(1e-12));
  CHECK_THROWS_AS(local_threshold(shell, Eigen::MatrixXd(0, 2)),
                  ThresholdError);
}

TEST_CASE("the federated threshold ignores overstated reports") {
  const std::vector<double> with_liar = {0.01, 0.01, 0.01, 1e8};
  CHECK(federated_threshold(with_liar, 1.5) == 0.01);

  const std::vector<double> all_equal = {0.4, 0.4, 0.4};
  CHECK(federated_threshold(all_equal, 1.5) == 0.4);

  const std::vector<double> single = {0.7};
  CHECK(federated_threshold(single, 1.5) == 0.7);

  // Population z of the largest of {1,2,3} is about 1.22, inside the gate.
  const std::vector<double> spread = {1.0, 2.0, 3.0};
  CHECK(federated_threshold(spread, 1.5) == 3.0);

  CHECK_THROWS_AS(federated_threshold({}, 1.5), ThresholdError);
}

TEST_CASE("a single client federation equals one local update") {
  Rng rng(30);
  std::vector<Participant> participants(1);
  participants[0].data = autoencoder_data(rng);

  FederationConfig config = small_autoencoder_config();
  config.rounds = 1;
  config.seed = 555;

  const GlobalModelState state = run(config, participants);

  const Rng root(config.seed);
  Rng init_rng = root.split("init");
  const nn::ModelParams initial =
      nn::build_model(nn::ModelKind::autoencoder, 4, 4, init_rng);
  const ClientUpdateResult manual =
      client_update(initial, participants[0].data, config,
                    root.split("client", (1ULL << 32) | 0));

  CHECK(nn::flatten(state.model).values == manual.params.values);
  CHECK(state.federated_threshold ==
        local_threshold(state.model, participants[0].data.val_x));
  REQUIRE(state.rounds.size() == 1);
  CHECK(state.rounds[0].selected == std::vector<int>{0});
}

TEST_CASE("federated training reduces the validation loss") {
  Rng rng(40);
  std::vector<Participant> participants(3);
  for (auto& p : participants) p.data = autoencoder_data(rng);

  FederationConfig config = small_autoencoder_config();
  config.rounds = 5;
  const GlobalModelState state = run(config, participants);

  REQUIRE(state.rounds.size() == 5);
  CHECK(state.rounds.back().mean_val_loss < state.rounds.front().mean_val_loss);
  CHECK(state.federated_threshold > 0.0);
  CHECK(state.reported_thresholds.size() == 3);
}

TEST_CASE("client selection honors the configured fraction") {
  Rng rng(50);
  std::vector<Participant> participants(4);
  for (auto& p : participants) p.data = autoencoder_data(rng, 16, 8);

  FederationConfig config = small_autoencoder_config();
  config.rounds = 4;
  config.client_fraction = 0.5;
  const GlobalModelState state = run(config, participants);

  for (const auto& trace : state.rounds) {
    CHECK(trace.selected.size() == 2);
    for (const int id : trace.selected) {
      CHECK(id >= 0);
      CHECK(id < 4);
    }
  }
}

TEST_CASE("the result does not depend on the worker thread count") {
  Rng rng(60);
  std::vector<Participant> participants(4);
  for (auto& p : participants) p.data = autoencoder_data(rng, 24, 8);

  FederationConfig config = small_autoencoder_config();
  config.rounds = 2;

  setenv("FEDSPECTRE_THREADS", "1", 1);
  const Eigen::VectorXd serial = run_values(config, participants);
  setenv("FEDSPECTRE_THREADS", "4", 1);
  const Eigen::VectorXd threaded = run_values(config, participants);
  unsetenv("FEDSPECTRE_THREADS");

  CHECK(serial == threaded);
}

TEST_CASE("canceling adversaries null out a round under fed_avg") {
  // Honest participants without training rows return the global model
  // unchanged, so the crafted updates canceling it leave exact zeros.
  std::vector<Participant> participants(6);
  Rng rng(70);
  for (std::size_t i = 0; i < participants.size(); ++i) {
    participants[i].data.train_x.resize(0, 4);
    participants[i].data.val_x = gaussian_rows(8, 4, rng);
    participants[i].weight = 1.0;
  }
  participants[4].role = Role::canceling;
  participants[5].role = Role::canceling;

  FederationConfig config = small_autoencoder_config();
  config.rounds = 1;
  const GlobalModelState state = run(config, participants);
  CHECK(nn::flatten(state.model).values.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("random weight adversaries disturb but do not break the run") {
  Rng rng(80);
  std::vector<Participant> participants(4);
  for (auto& p : participants) p.data = autoencoder_data(rng, 16, 8);
  participants[3].role = Role::random_weights;
  participants[3].data.train_x.resize(0, 4);
  participants[3].weight = 16.0;

  FederationConfig config = small_autoencoder_config();
  config.rounds = 2;
  const GlobalModelState state = run(config, participants);
  CHECK(nn::flatten(state.model).values.allFinite());
  CHECK(state.reported_thresholds.size() == 4);
}

TEST_CASE("overstated thresholds are filtered out of the federated gate") {
  Rng rng(90);
  std::vector<Participant> participants(4);
  for (auto& p : participants) p.data = autoencoder_data(rng, 24, 12);
  participants[3].overstate = true;

  FederationConfig config = small_autoencoder_config();
  const GlobalModelState state = run(config, participants);

  REQUIRE(state.reported_thresholds.size() == 4);
  CHECK(state.reported_thresholds[3] >= 1e6);
  CHECK(state.reported_thresholds[3] <= 1e9);
  double honest_max = 0.0;
  for (int i = 0; i < 3; ++i) {
    honest_max = std::max(honest_max, state.reported_thresholds[i]);
  }
  CHECK(state.federated_threshold == honest_max);
}

TEST_CASE("the binary classifier federation trains without thresholds") {
  Rng rng(100);
  std::vector<Participant> participants(2);
  for (auto& p : participants) {
    const Eigen::MatrixXd benign = gaussian_rows(24, 4, rng, 0.2);
    const Eigen::MatrixXd attack = gaussian_rows(24, 4, rng, 0.8);
    p.data.train_x.resize(48, 4);
    p.data.train_x << benign, attack;
    p.data.train_y.resize(48, 1);
    p.data.train_y << Eigen::MatrixXd::Zero(24, 1), Eigen::MatrixXd::Ones(24, 1);
    p.data.val_x = p.data.train_x;
    p.data.val_y = p.data.train_y;
  }

  FederationConfig config;
  config.model = nn::ModelKind::mlp;
  config.input_dim = 4;
  config.hidden_dim = 8;
  config.rounds = 4;
  config.local_epochs = 3;
  config.batch_size = 16;
  config.seed = 777;

  const GlobalModelState state = run(config, participants);
  CHECK(std::isnan(state.federated_threshold));
  CHECK(state.reported_thresholds.empty());
  CHECK(state.rounds.back().mean_val_loss < state.rounds.front().mean_val_loss);
}

TEST_CASE("the federation rejects impossible setups") {
  Rng rng(110);
  std::vector<Participant> participants(4);
  for (auto& p : participants) p.data = autoencoder_data(rng, 8, 4);

  FederationConfig config = small_autoencoder_config();
  CHECK_THROWS_AS(run(config, {}), ProtocolError);

  config.rule = agg::Rule::trimmed_mean_2;
  CHECK_THROWS_AS(run(config, participants), ProtocolError);

  config.rule = agg::Rule::fed_avg;
  config.input_dim = 0;
  CHECK_THROWS_AS(run(config, participants), ConfigError);

  config.input_dim = 4;
  config.client_fraction = 0.0;
  CHECK_THROWS_AS(run(config, participants), ConfigError);
}
