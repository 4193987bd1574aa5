#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "gossipgrid/error.hpp"
#include "gossipgrid/learning.hpp"
#include "oracles.hpp"

using namespace gossipgrid;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> diff(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) diff[k] = a[k] - b[k];
  return norm(diff) / std::max(norm(b), 1e-6);
}

LabeledDataset balanced(std::size_t per_class, std::size_t classes, std::size_t f, Rng& rng) {
  LabeledDataset d;
  d.feature_dim = f;
  for (std::size_t i = 0; i < per_class * classes; ++i) {
    for (std::size_t k = 0; k < f; ++k) d.features.push_back(standard_normal(rng));
    d.labels.push_back(static_cast<int>(i % classes));
  }
  return d;
}

using Sample = std::pair<std::vector<double>, int>;

std::multiset<Sample> as_multiset(const LabeledDataset& d) {
  std::multiset<Sample> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = d.row(i);
    out.insert({{r.begin(), r.end()}, d.labels[i]});
  }
  return out;
}

}  // namespace

TEST_CASE("shard_partition: single node receives everything") {
  Rng rng(3);
  const auto data = balanced(5, 4, 2, rng);
  const auto parts = shard_partition(data, 1, 2, 11);
  REQUIRE(parts.size() == 1);
  CHECK(as_multiset(parts[0]) == as_multiset(data));
}

TEST_CASE("shard_partition: 100 samples, 10 classes, 5 nodes") {
  Rng rng(4);
  const auto data = balanced(10, 10, 3, rng);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto parts = shard_partition(data, 5, 2, seed);
    REQUIRE(parts.size() == 5);
    for (const auto& p : parts) {
      CHECK(p.size() == 20);
      const std::set<int> labels(p.labels.begin(), p.labels.end());
      CHECK(labels.size() <= 2);
    }
  }
}

TEST_CASE("shard_partition: union is the input multiset and sizes stay within 1") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto samples = 30 + uniform_index(rng, 200);
    const auto classes = 2 + uniform_index(rng, 8);
    auto data = oracle::random_dataset(samples, 2, classes, rng);
    const auto n = 1 + uniform_index(rng, 6);
    const auto spn = 1 + uniform_index(rng, 3);
    if (samples < n * spn) continue;
    const auto parts = shard_partition(data, n, spn, trial);
    std::multiset<Sample> merged;
    std::size_t min_size = samples;
    std::size_t max_size = 0;
    for (const auto& p : parts) {
      const auto ms = as_multiset(p);
      merged.insert(ms.begin(), ms.end());
      min_size = std::min(min_size, p.size());
      max_size = std::max(max_size, p.size());
    }
    CHECK(merged == as_multiset(data));
    // Each node holds spn shards, each shard within 1 of the others.
    CHECK(max_size - min_size <= spn);
  }
}

TEST_CASE("shard_partition: errors and determinism") {
  Rng rng(6);
  const auto data = balanced(2, 2, 2, rng);
  CHECK_THROWS_AS(shard_partition(data, 3, 2, 1), InvalidArgument);
  CHECK_THROWS_AS(shard_partition(data, 0, 2, 1), InvalidArgument);
  const auto big = balanced(20, 4, 2, rng);
  CHECK(shard_partition(big, 4, 2, 9) == shard_partition(big, 4, 2, 9));
}

TEST_CASE("loss: closed-form cases") {
  SUBCASE("least-squares at the exact solution of a consistent system") {
    Rng rng(7);
    auto d = oracle::random_dataset(6, 3, 1, rng);
    const ModelVector truth(std::vector<double>{0.5, -1.25, 2.0});
    d.targets.clear();
    for (std::size_t i = 0; i < d.size(); ++i) {
      double y = 0.0;
      for (std::size_t k = 0; k < 3; ++k) y += d.row(i)[k] * truth[k];
      d.targets.push_back(y);
    }
    const TaskSpec task{TaskKind::kLeastSquares, 3, 0, 0.0};
    CHECK(loss(truth, d, task) < 1e-28);
    for (double g : gradient(truth, d, task).values) CHECK(std::abs(g) < 1e-8);
  }
  SUBCASE("logistic with the zero model is ln C per sample") {
    Rng rng(8);
    for (std::size_t classes : {2u, 3u, 10u}) {
      const auto d = oracle::random_dataset(9, 4, classes, rng);
      const TaskSpec task{TaskKind::kLogistic, 4, classes, 0.0};
      CHECK(loss(ModelVector(4 * classes), d, task) ==
            doctest::Approx(std::log(static_cast<double>(classes))).epsilon(1e-14));
    }
  }
}

TEST_CASE("loss matches a direct long-double evaluation") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const bool logistic = trial % 2 == 0;
    const std::size_t f = 1 + uniform_index(rng, 5);
    const std::size_t classes = logistic ? 2 + uniform_index(rng, 4) : 1;
    const TaskSpec task{logistic ? TaskKind::kLogistic : TaskKind::kLeastSquares, f,
                        logistic ? classes : 0, 0.1 * uniform01(rng)};
    const auto d = oracle::random_dataset(1 + uniform_index(rng, 12), f, classes, rng, !logistic);
    const auto x = oracle::random_model(task.model_dim(), 1.0, rng);
    CHECK(std::abs(loss(x, d, task) - oracle::loss(x, d, task)) < 1e-10);
  }
}

TEST_CASE("gradient matches central finite differences on 100 draws per task kind") {
  Rng rng(10);
  for (auto kind : {TaskKind::kLeastSquares, TaskKind::kLogistic}) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t f = 1 + uniform_index(rng, 6);
      const std::size_t classes = kind == TaskKind::kLogistic ? 2 + uniform_index(rng, 5) : 1;
      const TaskSpec task{kind, f, kind == TaskKind::kLogistic ? classes : 0,
                          trial % 3 == 0 ? 0.0 : 0.05 * uniform01(rng)};
      const auto batch = oracle::random_dataset(1 + uniform_index(rng, 16), f, classes, rng,
                                                kind == TaskKind::kLeastSquares);
      const auto x = oracle::random_model(task.model_dim(), 0.7, rng);
      const auto analytic = gradient(x, batch, task).values;
      const auto numeric = oracle::finite_difference(
          [&](const ModelVector& m) { return oracle::loss(m, batch, task); }, x);
      worst = std::max(worst, relative_error(analytic, numeric));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("gradient is invariant to duplicating every sample") {
  Rng rng(11);
  const auto d = oracle::random_dataset(7, 3, 4, rng);
  LabeledDataset doubled = d;
  for (std::size_t i = 0; i < d.size(); ++i) doubled.append(d, i);
  const TaskSpec task{TaskKind::kLogistic, 3, 4, 0.01};
  const auto x = oracle::random_model(12, 1.0, rng);
  const auto g1 = gradient(x, d, task).values;
  const auto g2 = gradient(x, doubled, task).values;
  for (std::size_t k = 0; k < g1.size(); ++k) CHECK(g1[k] == doctest::Approx(g2[k]).epsilon(1e-13));
}

TEST_CASE("gradient and loss reject bad shapes") {
  Rng rng(12);
  const auto d = oracle::random_dataset(4, 3, 2, rng);
  const TaskSpec task{TaskKind::kLogistic, 3, 2, 0.0};
  CHECK_THROWS_AS(gradient(ModelVector(5), d, task), DimensionError);
  CHECK_THROWS_AS(loss(ModelVector(6), oracle::random_dataset(2, 4, 2, rng), task), DimensionError);
  LabeledDataset empty;
  empty.feature_dim = 3;
  CHECK_THROWS_AS(gradient(ModelVector(6), empty, task), InvalidArgument);
}

TEST_CASE("sgd_local_update examples") {
  SUBCASE("zero steps leave the model untouched") {
    Rng rng(13);
    const auto d = oracle::random_dataset(10, 2, 3, rng);
    const TaskSpec task{TaskKind::kLogistic, 2, 3, 0.0};
    const auto x = oracle::random_model(6, 1.0, rng);
    BatchSampler sampler(d.size(), 1);
    CHECK(sgd_local_update(x, d, task, 0.1, 0, 4, sampler) == x);
  }
  SUBCASE("one analytic step on f(x) = x^2 / 2") {
    LabeledDataset d;
    d.feature_dim = 1;
    d.features = {1.0};
    d.labels = {0};
    d.targets = {0.0};
    const TaskSpec task{TaskKind::kLeastSquares, 1, 0, 0.0};
    BatchSampler sampler(1, 1);
    const auto out = sgd_local_update(ModelVector(std::vector<double>{1.0}), d, task, 0.1, 1, 1, sampler);
    CHECK(out[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("two steps equal two chained single steps") {
    Rng rng(14);
    const auto d = oracle::random_dataset(23, 3, 4, rng);
    const TaskSpec task{TaskKind::kLogistic, 3, 4, 0.0};
    const auto x = oracle::random_model(12, 1.0, rng);
    BatchSampler a(d.size(), 77);
    BatchSampler b(d.size(), 77);
    const auto twice = sgd_local_update(x, d, task, 0.2, 2, 5, a);
    const auto chained =
        sgd_local_update(sgd_local_update(x, d, task, 0.2, 1, 5, b), d, task, 0.2, 1, 5, b);
    CHECK(twice == chained);
  }
}

TEST_CASE("BatchSampler draws without replacement within an epoch") {
  BatchSampler sampler(10, 5);
  std::set<std::size_t> seen;
  for (int i = 0; i < 3; ++i) {
    for (auto idx : sampler.next(3)) CHECK(seen.insert(idx).second);
  }
  CHECK(seen.size() == 9);
  // Only one index left, so the next batch comes from a fresh permutation.
  const auto batch = sampler.next(3);
  CHECK(std::set<std::size_t>(batch.begin(), batch.end()).size() == 3);
  BatchSampler tiny(2, 1);
  CHECK(tiny.next(5).size() == 2);
}

TEST_CASE("least-squares loss is non-increasing with a small full-batch step") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelVector truth;
    const auto d = make_linear_regression(40, 5, 0.3, seed, &truth);
    const TaskSpec task{TaskKind::kLeastSquares, 5, 0, 0.0};
    // L <= trace(A^T A / s) bounds the largest curvature.
    double trace = 0.0;
    for (double v : d.features) trace += v * v;
    const double lr = 1.0 / (trace / static_cast<double>(d.size()));
    BatchSampler sampler(d.size(), seed);
    ModelVector x(5);
    double prev = loss(x, d, task);
    for (int step = 0; step < 30; ++step) {
      x = sgd_local_update(x, d, task, lr, 1, d.size(), sampler);
      const double cur = loss(x, d, task);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("evaluate_accuracy") {
  SUBCASE("perfect separation") {
    LabeledDataset d;
    d.feature_dim = 2;
    d.features = {1, 0, 2, 0.1, 0, 1, 0.2, 3};
    d.labels = {0, 0, 1, 1};
    const TaskSpec task{TaskKind::kLogistic, 2, 2, 0.0};
    CHECK(evaluate_accuracy(ModelVector(std::vector<double>{1, 0, 0, 1}), d, task) == 1.0);
  }
  SUBCASE("zero model predicts class 0 on a balanced set") {
    Rng rng(15);
    const auto d = balanced(7, 5, 3, rng);
    const TaskSpec task{TaskKind::kLogistic, 3, 5, 0.0};
    CHECK(evaluate_accuracy(ModelVector(15), d, task) == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("matches a per-sample argmax oracle exactly") {
    Rng rng(16);
    for (int trial = 0; trial < 30; ++trial) {
      const auto classes = 2 + uniform_index(rng, 6);
      const auto d = oracle::random_dataset(50, 4, classes, rng);
      const TaskSpec task{TaskKind::kLogistic, 4, classes, 0.0};
      const auto x = oracle::random_model(task.model_dim(), 1.0, rng);
      CHECK(evaluate_accuracy(x, d, task) == oracle::accuracy(x, d, classes));
    }
  }
  SUBCASE("unsupported for least-squares") {
    LabeledDataset d;
    d.feature_dim = 1;
    d.features = {1.0};
    d.labels = {0};
    CHECK_THROWS_AS(evaluate_accuracy(ModelVector(1), d, {TaskKind::kLeastSquares, 1, 0, 0.0}),
                    InvalidArgument);
  }
}

TEST_CASE("synthetic data is balanced, deterministic and learnable") {
  SyntheticSpec spec;
  spec.feature_dim = 8;
  spec.class_count = 4;
  spec.separation = 2.0;
  spec.train_samples = 400;
  spec.eval_samples = 200;
  spec.seed = 3;
  const auto a = make_synthetic(spec);
  const auto b = make_synthetic(spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK_FALSE(a.validation == a.test);
  std::map<int, int> counts;
  for (int l : a.train.labels) ++counts[l];
  CHECK(counts.size() == 4);
  for (auto [label, count] : counts) CHECK(count == 100);

  const TaskSpec task{TaskKind::kLogistic, 8, 4, 0.0};
  BatchSampler sampler(a.train.size(), 1);
  const auto x = sgd_local_update(ModelVector(32), a.train, task, 0.1, 300, 32, sampler);
  CHECK(evaluate_accuracy(x, a.test, task) > 0.8);
}

TEST_CASE("synthetic noise spread scales per-feature deviation") {
  SyntheticSpec spec;
  spec.feature_dim = 3;
  spec.class_count = 2;
  spec.separation = 0.0;
  spec.noise = 2.0;
  spec.noise_spread = 16.0;
  spec.train_samples = 20000;
  spec.eval_samples = 10;
  const auto d = make_synthetic(spec).train;
  // Centers are zero, so each column is pure noise: 2, 2/4, 2/16.
  const double expected[] = {2.0, 0.5, 0.125};
  for (std::size_t k = 0; k < 3; ++k) {
    double sq = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) sq += d.features[i * 3 + k] * d.features[i * 3 + k];
    const double sd = std::sqrt(sq / static_cast<double>(d.size()));
    CHECK(std::abs(sd / expected[k] - 1.0) < 0.03);
  }
  SyntheticSpec plain;
  SyntheticSpec unit = plain;
  unit.noise_spread = 1.0;
  CHECK(make_synthetic(plain).train == make_synthetic(unit).train);
  spec.noise_spread = 0.5;
  CHECK_THROWS_AS(make_synthetic(spec), InvalidArgument);
}

TEST_CASE("dataset CSV round trip and errors") {
  Rng rng(17);
  const auto d = oracle::random_dataset(12, 3, 4, rng);
  std::stringstream buf;
  write_dataset_csv(buf, d);
  std::string header;
  std::getline(buf, header);
  CHECK(header == "x0,x1,x2,label");
  buf.seekg(0);
  CHECK(read_dataset_csv(buf) == d);

  std::istringstream bad_label("x0,label\n0.5,-1\n");
  CHECK_THROWS_AS(read_dataset_csv(bad_label), ParseError);
  std::istringstream short_row("x0,x1,label\n0.5,1\n");
  try {
    read_dataset_csv(short_row);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream empty("");
  CHECK_THROWS_AS(read_dataset_csv(empty), ParseError);
}
