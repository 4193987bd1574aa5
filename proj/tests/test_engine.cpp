#include <doctest.h>

#include <cmath>
#include <numeric>

#include "desk_task.hpp"
#include "gossipgrid/config.hpp"
#include "gossipgrid/engine.hpp"
#include "gossipgrid/error.hpp"
#include "gossipgrid/rng.hpp"
#include "oracles.hpp"

using namespace gossipgrid;

namespace {

MixingMatrix four_cycle() {
  return metropolis_weights(Topology(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}));
}

PreparedRun energy_only(AlgorithmKind algo, std::size_t n, std::uint64_t rounds,
                        std::uint64_t gt, std::uint64_t gs,
                        const std::string& trace = "builtin:cifar10") {
  RunConfig c;
  c.algorithm = algo;
  c.n = n;
  c.rounds = rounds;
  c.gamma_train = gt;
  c.gamma_sync = gs;
  c.trace = trace;
  c.trace_dataset = trace == "builtin:femnist" ? TraceColumn::kFemnist : TraceColumn::kCifar10;
  c.energy_only = true;
  return prepare_run(c, 1);
}

RunConfig small_task(AlgorithmKind algo, std::uint64_t rounds) {
  RunConfig c = desk::config(algo, 3);
  c.n = 12;
  c.degree = 4;
  c.rounds = rounds;
  c.samples_per_node = 20;
  c.eval_samples = 200;
  c.local_steps = 4;
  c.batch_size = 8;
  return c;
}

// Records compared field by field, ignoring the algorithm name.
void check_same_records(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto x = a[i];
    auto y = b[i];
    x.algorithm.clear();
    y.algorithm.clear();
    CHECK(x == y);
  }
}

}  // namespace

TEST_CASE("RoundSchedule::kind") {
  const RoundSchedule s{4, 4, 20};
  for (std::uint64_t t = 0; t < 4; ++t) CHECK(s.kind(t) == RoundKind::kTrain);
  for (std::uint64_t t = 4; t < 8; ++t) CHECK(s.kind(t) == RoundKind::kSync);
  CHECK(s.kind(8) == RoundKind::kTrain);
  CHECK(s.kind(15) == RoundKind::kSync);
  CHECK_THROWS_AS(s.kind(20), InvalidArgument);

  const RoundSchedule all_train{1, 0, 5};
  for (std::uint64_t t = 0; t < 5; ++t) CHECK(all_train.kind(t) == RoundKind::kTrain);

  const RoundSchedule odd{3, 2, 11};
  const RoundKind expected[] = {RoundKind::kTrain, RoundKind::kTrain, RoundKind::kTrain,
                                RoundKind::kSync,  RoundKind::kSync};
  for (std::uint64_t t = 0; t < 11; ++t) CHECK(odd.kind(t) == expected[t % 5]);
  CHECK_THROWS_AS((RoundSchedule{0, 3, 10}).validate(), InvalidArgument);
}

TEST_CASE("algorithm names round trip") {
  for (auto k : {AlgorithmKind::kDpsgd, AlgorithmKind::kSkipTrain,
                 AlgorithmKind::kSkipTrainConstrained, AlgorithmKind::kGreedy}) {
    CHECK(algorithm_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(algorithm_from_string("fedavg"), InvalidArgument);
}

TEST_CASE("should_train") {
  const RoundSchedule s{4, 4, 1000};
  NodeState node;
  node.stream_seed = 9;
  SUBCASE("D-PSGD trains on every round") {
    for (std::uint64_t t = 0; t < 16; ++t) CHECK(should_train(node, t, s, AlgorithmKind::kDpsgd));
  }
  SUBCASE("SkipTrain follows the schedule") {
    for (std::uint64_t t = 0; t < 16; ++t) {
      CHECK(should_train(node, t, s, AlgorithmKind::kSkipTrain) == (t % 8 < 4));
    }
  }
  SUBCASE("p = 1 trains on every train round while budget remains") {
    node.remaining_budget = 3;
    for (std::uint64_t t = 0; t < 16; ++t) {
      CHECK(should_train(node, t, s, AlgorithmKind::kSkipTrainConstrained) == (t % 8 < 4));
    }
    node.remaining_budget = 0;
    CHECK_FALSE(should_train(node, 0, s, AlgorithmKind::kSkipTrainConstrained));
  }
  SUBCASE("Greedy with tau = 272 trains at rounds 0..271 then never") {
    node.remaining_budget = 272;
    std::vector<std::uint64_t> trained;
    for (std::uint64_t t = 0; t < 1000; ++t) {
      if (should_train(node, t, s, AlgorithmKind::kGreedy)) {
        trained.push_back(t);
        --node.remaining_budget;
      }
    }
    REQUIRE(trained.size() == 272);
    for (std::uint64_t t = 0; t < 272; ++t) CHECK(trained[t] == t);
  }
}

TEST_CASE("should_train: p = 0.544 over 500 train rounds stays binomial") {
  const RoundSchedule s{4, 4, 1000};
  const auto [lo, hi] = oracle::binomial_interval(500, 0.544, 0.999);
  std::uint64_t total = 0;
  for (std::size_t id = 0; id < 64; ++id) {
    NodeState node;
    node.id = id;
    node.stream_seed = 1;
    node.train_probability = training_probability(272, 500);
    std::uint64_t count = 0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
      const bool train = should_train(node, t, s, AlgorithmKind::kSkipTrainConstrained);
      if (train) CHECK(s.kind(t) == RoundKind::kTrain);
      count += train ? 1 : 0;
    }
    CHECK(count >= lo);
    CHECK(count <= hi);
    total += count;
  }
  const auto [tlo, thi] = oracle::binomial_interval(64 * 500, 0.544, 0.999);
  CHECK(total >= tlo);
  CHECK(total <= thi);
}

TEST_CASE("gossip_aggregate") {
  const auto w = four_cycle();
  std::vector<ModelVector> models;
  for (double v : {0.0, 3.0, 6.0, 9.0}) models.emplace_back(std::vector<double>{v, -v});
  const double expected[] = {4.0, 3.0, 6.0, 5.0};
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto out = gossip_aggregate(models, w, i);
    CHECK(std::abs(out[0] - expected[i]) < 1e-14);
    CHECK(std::abs(out[1] + expected[i]) < 1e-14);
    sum += out[0];
  }
  CHECK(std::abs(sum / 4.0 - 4.5) < 1e-14);

  std::vector<ModelVector> same(4, ModelVector(std::vector<double>{1.25, 7.0}));
  for (std::size_t i = 0; i < 4; ++i) {
    const auto out = gossip_aggregate(same, w, i);
    CHECK(std::abs(out[0] - 1.25) < 1e-15);
    CHECK(std::abs(out[1] - 7.0) < 1e-15);
  }

  std::vector<ModelVector> three(3, ModelVector(2));
  CHECK_THROWS_AS(gossip_aggregate(three, w, 0), DimensionError);
  auto ragged = models;
  ragged[2] = ModelVector(3);
  CHECK_THROWS_AS(gossip_aggregate(ragged, w, 0), DimensionError);
}

TEST_CASE("all_reduce and repeated gossip reach it") {
  const std::vector<ModelVector> two{ModelVector(std::vector<double>{1.0, 2.0}),
                                     ModelVector(std::vector<double>{3.0, 4.0})};
  CHECK(all_reduce(two) == ModelVector(std::vector<double>{2.0, 3.0}));

  const auto topology = generate_regular(64, 6, 5);
  const auto w = metropolis_weights(topology);
  const double lambda = second_eigenvalue_modulus(w);
  Rng rng(11);
  std::vector<ModelVector> models;
  for (std::size_t i = 0; i < 64; ++i) models.push_back(oracle::random_model(3, 1.0, rng));
  const auto target = all_reduce(models);

  auto spread = [&](const std::vector<ModelVector>& m) {
    double s = 0.0;
    for (const auto& x : m) {
      for (std::size_t k = 0; k < 3; ++k) s += (x[k] - target[k]) * (x[k] - target[k]);
    }
    return std::sqrt(s);
  };
  const double eps = 1e-6;
  const double start = spread(models);
  const auto rounds = static_cast<int>(std::ceil(std::log(1.0 / eps) / std::log(1.0 / lambda)));
  for (int r = 0; r < rounds; ++r) {
    std::vector<ModelVector> next;
    for (std::size_t i = 0; i < 64; ++i) next.push_back(gossip_aggregate(models, w, i));
    models = std::move(next);
  }
  CHECK(spread(models) <= eps * start * (1 + 1e-9));
  const auto mean = all_reduce(models);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(mean[k] - target[k]) < 1e-12);
}

TEST_CASE("one sync step contracts spread by lambda_2") {
  const auto w = metropolis_weights(generate_regular(64, 6, 2));
  const double lambda = second_eigenvalue_modulus(w);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ModelVector> models;
    for (std::size_t i = 0; i < 64; ++i) models.push_back(oracle::random_model(5, 2.0, rng));
    auto frob = [](const std::vector<ModelVector>& m) {
      const auto avg = all_reduce(m);
      double s = 0.0;
      for (const auto& x : m) {
        for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - avg[k]) * (x[k] - avg[k]);
      }
      return std::sqrt(s);
    };
    std::vector<ModelVector> next;
    for (std::size_t i = 0; i < 64; ++i) next.push_back(gossip_aggregate(models, w, i));
    CHECK(frob(next) <= lambda * frob(models) + 1e-9);
    CHECK(consensus_distance(next) <= lambda * consensus_distance(models) + 1e-9);
  }
}

TEST_CASE("run_simulation: zero rounds") {
  auto run = prepare_run(small_task(AlgorithmKind::kDpsgd, 0), 1);
  const auto r = run_simulation(run.sim, run.inputs);
  CHECK(r.records.empty());
  CHECK(total_energy_wh(r.ledger) == 0.0);
  REQUIRE(r.models.size() == 12);
  for (const auto& m : r.models) CHECK(m == r.models.front());
  CHECK(consensus_distance(r.models) < 1e-15);
}

TEST_CASE("run_simulation: ledger totals on the reference traces") {
  auto total = [](AlgorithmKind algo, std::uint64_t rounds, std::uint64_t gt, std::uint64_t gs,
                  const std::string& trace) {
    auto run = energy_only(algo, 256, rounds, gt, gs, trace);
    return total_energy_wh(run_simulation(run.sim, run.inputs).ledger);
  };
  CHECK(std::abs(total(AlgorithmKind::kDpsgd, 1000, 4, 4, "builtin:cifar10") - 1510.04) <= 0.01);
  CHECK(std::abs(total(AlgorithmKind::kSkipTrain, 1000, 4, 4, "builtin:cifar10") - 755.02) <=
        0.01);
  CHECK(std::abs(total(AlgorithmKind::kSkipTrain, 1000, 4, 2, "builtin:cifar10") - 1008.71) <=
        0.01);
  CHECK(std::abs(total(AlgorithmKind::kSkipTrain, 3000, 4, 2, "builtin:femnist") - 9942.92) <=
        0.01);
}

TEST_CASE("run_simulation: energy-only records") {
  auto run = energy_only(AlgorithmKind::kSkipTrain, 8, 20, 3, 2);
  run.sim.eval_every = 1;
  const auto r = run_simulation(run.sim, run.inputs);
  REQUIRE(r.records.size() == 20);
  double sum_mwh = 0.0;
  for (std::size_t i = 0; i < 8; ++i) sum_mwh += run.inputs.per_round_mwh[i];
  std::uint64_t trained = 0;
  for (std::size_t t = 0; t < 20; ++t) {
    const auto& rec = r.records[t];
    CHECK(rec.round == t);
    CHECK_FALSE(rec.mean_accuracy.has_value());
    CHECK_FALSE(rec.mean_loss.has_value());
    trained += t % 5 < 3 ? 1 : 0;
    CHECK(std::abs(rec.cumulative_energy_wh - static_cast<double>(trained) * sum_mwh / 1000.0) <
          1e-12);
  }
  CHECK(r.records[2].phase == Phase::kAfterTrainBlock);
  CHECK(r.records[4].phase == Phase::kAfterSyncBlock);
  CHECK(r.records[0].phase == Phase::kPerRound);
}

TEST_CASE("run_simulation: default cadence evaluates at block ends and the last round") {
  auto run = prepare_run(small_task(AlgorithmKind::kSkipTrain, 21), 1);
  const auto r = run_simulation(run.sim, run.inputs);
  std::vector<std::size_t> rounds;
  for (const auto& rec : r.records) rounds.push_back(rec.round);
  CHECK(rounds == std::vector<std::size_t>{7, 15, 20});
  CHECK(r.records[0].phase == Phase::kAfterSyncBlock);
  for (const auto& rec : r.records) {
    REQUIRE(rec.mean_accuracy.has_value());
    CHECK(*rec.mean_accuracy >= 0.0);
    CHECK(*rec.mean_accuracy <= 1.0);
    CHECK(rec.mean_validation_accuracy.has_value());
    CHECK(rec.algorithm == "skiptrain");
  }
}

TEST_CASE("run_simulation: gossip preserves the network mean on sync rounds") {
  auto run = prepare_run(small_task(AlgorithmKind::kSkipTrain, 8), 1);
  const auto after_train = [&] {
    auto c = run.sim;
    c.schedule.total_rounds = 4;
    return run_simulation(c, run.inputs).models;
  }();
  const auto full = run_simulation(run.sim, run.inputs).models;
  const auto a = all_reduce(after_train);
  const auto b = all_reduce(full);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
  CHECK(consensus_distance(full) < consensus_distance(after_train));
}

TEST_CASE("run_simulation: budgets are never exceeded") {
  for (auto algo : {AlgorithmKind::kSkipTrainConstrained, AlgorithmKind::kGreedy}) {
    auto run = energy_only(algo, 64, 1000, 4, 4);
    for (std::size_t i = 0; i < 64; ++i) run.inputs.budgets[i] = 50 + 7 * i;
    const auto r = run_simulation(run.sim, run.inputs);
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(r.ledger.train_rounds(i) <= run.inputs.budgets[i]);
      if (algo == AlgorithmKind::kGreedy) {
        CHECK(r.ledger.train_rounds(i) == std::min<std::uint64_t>(run.inputs.budgets[i], 1000));
      }
    }
  }
}

TEST_CASE("run_simulation: D-PSGD ignores budgets") {
  auto run = energy_only(AlgorithmKind::kDpsgd, 8, 30, 4, 4);
  for (auto& b : run.inputs.budgets) b = 2;
  const auto r = run_simulation(run.sim, run.inputs);
  for (std::size_t i = 0; i < 8; ++i) CHECK(r.ledger.train_rounds(i) == 30);
}

TEST_CASE("run_simulation: SkipTrain with no sync rounds equals D-PSGD") {
  auto cfg = small_task(AlgorithmKind::kDpsgd, 24);
  cfg.gamma_train = 3;
  cfg.gamma_sync = 0;
  cfg.eval_every = 5;
  auto d = prepare_run(cfg, 1);
  cfg.algorithm = AlgorithmKind::kSkipTrain;
  auto s = prepare_run(cfg, 1);
  const auto rd = run_simulation(d.sim, d.inputs);
  const auto rs = run_simulation(s.sim, s.inputs);
  CHECK(rd.models == rs.models);
  CHECK(rd.ledger.train_rounds() == rs.ledger.train_rounds());
  check_same_records(rd.records, rs.records);
}

TEST_CASE("run_simulation: constrained with unlimited budget equals SkipTrain") {
  auto cfg = small_task(AlgorithmKind::kSkipTrain, 24);
  cfg.eval_every = 3;
  cfg.budget_mode = BudgetMode::kUnconstrained;
  auto s = prepare_run(cfg, 1);
  cfg.algorithm = AlgorithmKind::kSkipTrainConstrained;
  auto c = prepare_run(cfg, 1);
  const auto rs = run_simulation(s.sim, s.inputs);
  const auto rc = run_simulation(c.sim, c.inputs);
  for (double p : rc.train_probabilities) CHECK(p == 1.0);
  CHECK(rs.models == rc.models);
  check_same_records(rs.records, rc.records);
}

TEST_CASE("run_simulation: identical results for any thread count") {
  auto cfg = small_task(AlgorithmKind::kSkipTrainConstrained, 24);
  cfg.eval_every = 2;
  cfg.all_reduce = true;
  auto one = prepare_run(cfg, 1);
  auto four = prepare_run(cfg, 4);
  const auto a = run_simulation(one.sim, one.inputs);
  const auto b = run_simulation(four.sim, four.inputs);
  CHECK(a.models == b.models);
  CHECK(a.records == b.records);
  CHECK(a.ledger.train_rounds() == b.ledger.train_rounds());
}

TEST_CASE("run_simulation: divergence is reported with its round") {
  RunConfig cfg = small_task(AlgorithmKind::kDpsgd, 50);
  cfg.task = TaskKind::kLeastSquares;
  cfg.noise = 0.1;
  cfg.learning_rate = 50.0;
  auto run = prepare_run(cfg, 1);
  try {
    run_simulation(run.sim, run.inputs);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.round() < 50);
  }
}

TEST_CASE("run_simulation: input checks") {
  auto run = prepare_run(small_task(AlgorithmKind::kDpsgd, 4), 1);
  auto bad = run.inputs;
  bad.budgets.pop_back();
  CHECK_THROWS_AS(run_simulation(run.sim, bad), DimensionError);
  bad = run.inputs;
  bad.partitions[3] = LabeledDataset{bad.partitions[3].feature_dim, {}, {}, {}};
  CHECK_THROWS_AS(run_simulation(run.sim, bad), InvalidArgument);
  auto cfg = run.sim;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(run_simulation(cfg, run.inputs), InvalidArgument);
}

TEST_CASE("assign_profiles and energy_matched_rounds") {
  CHECK(assign_profiles(6, 4) == std::vector<std::size_t>{0, 1, 2, 3, 0, 1});
  CHECK_THROWS_AS(assign_profiles(3, 0), InvalidArgument);
  const std::vector<double> e{1.0, 3.0};
  const std::vector<std::uint64_t> tau{10, 2};
  // (10 * 1 + 2 * 3) / 4 = 4.
  CHECK(energy_matched_rounds(e, tau) == 4);
  const std::vector<std::uint64_t> unlimited{10, kUnlimitedBudget};
  CHECK_THROWS_AS(energy_matched_rounds(e, unlimited), InvalidArgument);
}
