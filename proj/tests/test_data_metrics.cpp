#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>
#include <type_traits>

#include "bipc/data.hpp"
#include "bipc/experiment.hpp"
#include "bipc/metrics.hpp"
#include "support.hpp"

using namespace bipc;
using namespace bipc::data;

namespace {

template <class T>
concept HasLabels = requires(T t) { t.labels; };

template <class T>
concept HasLabelAccessor = requires(const T& t) { t.labels(); } || requires(const T& t) { t.labels_; };

static_assert(HasLabels<LabeledSet>);
static_assert(!HasLabels<UnlabeledSet>);
static_assert(!HasLabelAccessor<SealedLabels>);
static_assert(!std::is_constructible_v<SealedLabels, std::vector<int>>);

GeneratorSpec small_spec(std::uint64_t seed) {
  GeneratorSpec s;
  s.seed = seed;
  return s;
}

Matrix shifted_copy(const Matrix& x, double offset) {
  Matrix y = x;
  for (double& v : y.values()) v += offset;
  return y;
}

cli::ExperimentConfig baseline_config(double rotation, double noise) {
  cli::ExperimentConfig cfg;
  cfg.mode = cli::Mode::baseline;
  cfg.generator.shift = ShiftSpec{rotation, {}, noise};
  return cfg;
}

double run_accuracy(const cli::ExperimentConfig& cfg) {
  const cli::Prepared prep = cli::prepare(cfg);
  return train::train(prep.pretrained, prep.pair.source, prep.pair.target, prep.pair.target_labels,
                      cli::effective_schedule(cfg), cli::effective_train(cfg))
      .report.final_target_acc;
}

}  // namespace

TEST_CASE("pretrain task counts and split") {
  GeneratorSpec spec = small_spec(3);
  spec.pretrain_samples_per_class = 100;
  const PretrainTask task = make_pretrain_task(spec);
  CHECK(task.train.size() + task.heldout.size() == 800);
  CHECK(task.heldout.size() == 8 * 25);
  std::vector<int> per(8, 0);
  for (int y : task.heldout.labels) ++per[static_cast<std::size_t>(y)];
  for (int n : per) CHECK(n == 25);
  CHECK(task.train.class_count == 8);
  CHECK(task.train.tag == DomainTag::pretrain);
}

TEST_CASE("zero spread collapses every class onto its center") {
  GeneratorSpec spec = small_spec(4);
  spec.cluster_spread = 0.0;
  spec.pretrain_rotation_max = 0.0;
  const PretrainTask task = make_pretrain_task(spec);
  const Matrix centers = class_centers(spec);
  for (std::size_t r = 0; r < task.train.size(); ++r)
    for (std::size_t d = 0; d < centers.cols(); ++d)
      CHECK(task.train.inputs(r, d) == centers(static_cast<std::size_t>(task.train.labels[r]), d));
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    double norm = 0.0;
    for (double v : centers.row(c)) norm += v * v;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t k = 0; k < c; ++k) CHECK(centers.row(c)[0] != centers.row(k)[0]);
  }
}

TEST_CASE("generators are pure functions of the spec") {
  const GeneratorSpec spec = small_spec(5);
  const PretrainTask a = make_pretrain_task(spec), b = make_pretrain_task(spec);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.heldout.labels == b.heldout.labels);
  const UdaPair p = make_uda_pair(spec), q = make_uda_pair(spec);
  CHECK(p.source.inputs == q.source.inputs);
  CHECK(p.source.labels == q.source.labels);
  CHECK(p.target.inputs == q.target.inputs);
  const GeneratorSpec other = small_spec(6);
  CHECK(make_uda_pair(other).target.inputs != p.target.inputs);
}

TEST_CASE("uda pair shapes and target label channel") {
  GeneratorSpec spec = small_spec(7);
  const UdaPair pair = make_uda_pair(spec);
  CHECK(pair.source.size() == 400);
  CHECK(pair.target.size() == 400);
  CHECK(pair.target.class_count == 4);
  CHECK(pair.target_labels.size() == 400);
  std::vector<int> perfect = pair.source.labels;
  CHECK(sealed_accuracy(perfect, pair.target_labels) == 1.0);

  spec.target_classes = 2;
  const UdaPair partial = make_uda_pair(spec);
  CHECK(partial.target.size() == 200);
  CHECK(partial.target.class_count == 4);
  CHECK(partial.source.size() == 400);
}

TEST_CASE("zero shift leaves source and target identically distributed") {
  GeneratorSpec spec = small_spec(8);
  spec.shift = ShiftSpec{};
  const UdaPair pair = make_uda_pair(spec);
  const Matrix centers = class_centers(spec);
  // Class means of the target match the centers to sampling error.
  std::vector<int> truth = pair.source.labels;
  for (std::size_t c = 0; c < 4; ++c) {
    double err = 0.0;
    for (std::size_t d = 0; d < centers.cols(); ++d) {
      double mean = 0.0;
      for (std::size_t r = 0; r < 100; ++r) mean += pair.target.inputs(c * 100 + r, d);
      err = std::max(err, std::abs(mean / 100 - centers(c, d)));
    }
    CHECK(err < 0.1);
  }
  CHECK(metrics::proxy_a_distance(pair.source.inputs, pair.target.inputs, 1) < 0.25);
}

TEST_CASE("apply_shift rotates each coordinate plane") {
  Matrix x = Matrix::from_rows({{1, 0, 0, 2}});
  Rng rng(1);
  apply_shift(x, ShiftSpec{std::numbers::pi / 2, {}, 0.0}, rng);
  CHECK(x(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(x(0, 1) == doctest::Approx(1.0));
  CHECK(x(0, 2) == doctest::Approx(-2.0));
  CHECK(x(0, 3) == doctest::Approx(0.0).epsilon(1e-15));
  Matrix y = Matrix::from_rows({{1, 1}});
  apply_shift(y, ShiftSpec{0.0, {0.5, -1.0}, 0.0}, rng);
  CHECK(y == Matrix::from_rows({{1.5, 0.0}}));
}

TEST_CASE("generator spec validation") {
  GeneratorSpec spec;
  spec.task_classes = 9;
  CHECK_THROWS_AS(validate(spec), ContractViolation);
  spec = GeneratorSpec{};
  spec.shift.noise = -1.0;
  CHECK_THROWS_AS(validate(spec), ContractViolation);
  spec = GeneratorSpec{};
  spec.shift.translation = {1.0, 2.0};
  CHECK_THROWS_AS(make_uda_pair(spec), ContractViolation);
  spec = GeneratorSpec{};
  spec.target_classes = 5;
  CHECK_THROWS_AS(validate(spec), ContractViolation);
}

TEST_CASE("dataset dump round-trips exactly") {
  GeneratorSpec spec = small_spec(9);
  const UdaPair pair = make_uda_pair(spec);
  std::stringstream labeled;
  write_dataset(labeled, pair.source);
  const LabeledSet back = read_labeled(labeled);
  CHECK(back.inputs == pair.source.inputs);
  CHECK(back.labels == pair.source.labels);
  CHECK(back.class_count == pair.source.class_count);
  CHECK(back.tag == DomainTag::source);

  std::stringstream unlabeled;
  write_dataset(unlabeled, pair.target);
  const std::string text = unlabeled.str();
  CHECK(text.rfind("bipc-dataset 1 8 4 400 target unlabeled\n", 0) == 0);
  const UnlabeledSet t = read_unlabeled(unlabeled);
  CHECK(t.inputs == pair.target.inputs);
  CHECK(t.tag == DomainTag::target);

  std::stringstream again;
  write_dataset(again, t);
  CHECK(again.str() == text);
}

TEST_CASE("dataset reader rejects malformed dumps") {
  auto bad_labeled = [](const std::string& s) {
    std::istringstream in(s);
    return read_labeled(in);
  };
  CHECK_THROWS_AS(bad_labeled(""), ContractViolation);
  CHECK_THROWS_AS(bad_labeled("bipc-dataset 2 1 2 1 source labeled\n0 1\n"), ContractViolation);
  CHECK_THROWS_AS(bad_labeled("bipc-dataset 1 1 2 1 source labeled\n5 1\n"), ContractViolation);
  CHECK_THROWS_AS(bad_labeled("bipc-dataset 1 2 2 2 source labeled\n0 1 2\n"), ContractViolation);
  CHECK_THROWS_AS(bad_labeled("bipc-dataset 1 1 2 1 lab labeled\n0 1\n"), ContractViolation);
  CHECK_THROWS_AS(bad_labeled("bipc-dataset 1 1 2 1 source unlabeled\n1\n"), ContractViolation);
  std::istringstream in("bipc-dataset 1 1 2 1 target labeled\n0 1\n");
  CHECK_THROWS_AS(read_unlabeled(in), ContractViolation);
}

TEST_CASE("accuracy examples") {
  CHECK(metrics::accuracy(std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3}) == 1.0);
  CHECK(metrics::accuracy(std::vector<int>{0, 0}, std::vector<int>{1, 1}) == 0.0);
  CHECK(metrics::accuracy(std::vector<int>{0, 1, 1}, std::vector<int>{0, 1, 0}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(metrics::accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), ContractViolation);
  CHECK(sealed_accuracy(std::vector<int>{0, 1, 1}, seal({0, 1, 0})) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(sealed_accuracy(std::vector<int>{0}, seal({0, 1})), ContractViolation);
}

TEST_CASE("proxy A-distance on indistinguishable domains is small") {
  Rng rng(10);
  const Matrix x = testing::random_matrix(400, 6, rng);
  std::vector<std::size_t> perm = rng.permutation(400);
  const Matrix shuffled = gather_rows(x, perm);
  CHECK(metrics::proxy_a_distance(x, shuffled, 3) < 0.25);
  const Matrix y = testing::random_matrix(400, 6, rng);
  CHECK(metrics::proxy_a_distance(x, y, 3) < 0.25);
}

TEST_CASE("proxy A-distance on separated clusters approaches 2") {
  Rng rng(11);
  const Matrix x = testing::random_matrix(200, 4, rng, 0.1);
  const Matrix far = shifted_copy(testing::random_matrix(200, 4, rng, 0.1), 10.0);
  const double d = metrics::proxy_a_distance(x, far, 5);
  CHECK(d > 1.9);
  CHECK(d <= 2.0);
}

TEST_CASE("proxy A-distance is symmetric, bounded and deterministic") {
  Rng rng(12);
  for (int t = 0; t < 5; ++t) {
    const Matrix a = testing::random_matrix(60, 3, rng);
    const Matrix b = shifted_copy(testing::random_matrix(80, 3, rng), 0.3 * t);
    const double ab = metrics::proxy_a_distance(a, b, 7);
    CHECK(ab == metrics::proxy_a_distance(b, a, 7));
    CHECK(ab == metrics::proxy_a_distance(a, b, 7));
    CHECK((ab >= 0.0 && ab <= 2.0));
  }
}

TEST_CASE("proxy A-distance preconditions") {
  Rng rng(13);
  const Matrix ok = testing::random_matrix(20, 3, rng);
  CHECK_THROWS_AS(metrics::proxy_a_distance(ok, testing::random_matrix(9, 3, rng), 1),
                  ContractViolation);
  CHECK_THROWS_AS(metrics::proxy_a_distance(ok, testing::random_matrix(20, 4, rng), 1),
                  ContractViolation);
}

TEST_CASE("fig1 analog on a zero-shift pair and the default shifted pair") {
  cli::ExperimentConfig cfg;
  cfg.generator.shift = ShiftSpec{};
  const cli::Prepared same = cli::prepare(cfg);
  const auto d0 = metrics::fig1_analog(same.pretrained, same.pair.source.inputs,
                                       same.pair.target.inputs, 1);
  CHECK(d0.feature_distance < 0.2);
  CHECK(d0.probability_distance < 0.2);

  const cli::Prepared shifted = cli::prepare(cli::ExperimentConfig{});
  const auto d1 = metrics::fig1_analog(shifted.pretrained, shifted.pair.source.inputs,
                                       shifted.pair.target.inputs, 1);
  CHECK(d1.feature_distance > 0.0);
  CHECK(d1.probability_distance > 0.0);
  MESSAGE("default pair: feature " << d1.feature_distance << ", probability "
                                   << d1.probability_distance);
}

TEST_CASE("rotation by pi/6 with noise lowers baseline accuracy against zero shift") {
  const double clean = run_accuracy(baseline_config(0.0, 0.0));
  const double rotated = run_accuracy(baseline_config(std::numbers::pi / 6, 0.05));
  MESSAGE("baseline zero shift " << clean << ", rotated " << rotated);
  CHECK(clean - rotated >= 0.10);
}

TEST_CASE("with zero shift adaptation stays within two points of the baseline") {
  cli::ExperimentConfig uda = baseline_config(0.0, 0.0);
  uda.mode = cli::Mode::uda;
  const double base = run_accuracy(baseline_config(0.0, 0.0));
  const double bipc = run_accuracy(uda);
  MESSAGE("zero shift: baseline " << base << ", adapted " << bipc);
  CHECK(std::abs(base - bipc) <= 0.02 + 1e-12);
}
