#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>
#include <protograph/data.hpp>
#include <protograph/graph.hpp>
#include <protograph/loss.hpp>
#include <protograph/optim.hpp>
#include <protograph/train.hpp>

#include "oracles.hpp"

using namespace protograph;

namespace {

Vectord probs(std::initializer_list<double> v) {
  Vectord p(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

/// Random point on the probability simplex.
Vectord random_probs(Index n, std::mt19937& eng) {
  std::uniform_real_distribution<double> dist(0.01, 1.0);
  Vectord p(n);
  double sum = 0;
  for (Index i = 0; i < n; ++i) {
    p(i) = dist(eng);
    sum += p(i);
  }
  return p / sum;
}

FewShotDataset tiny_dataset() {
  SyntheticSpec spec;
  spec.k_base = 3;
  spec.k_novel = 2;
  spec.dim = 4;
  spec.train_per_class = 6;
  spec.test_per_class = 2;
  spec.cluster_std = 0.5;
  spec.mean_scale = 3.0;
  spec.seed = 7;
  return synth_generate(spec).dataset;
}

CorrelationGraph<double> tiny_graph(Index n, std::uint32_t seed) {
  std::mt19937 eng(seed);
  auto g = kg_transform(oracles::random_distances(n, eng), 0.4);
  return symmetrize(g);
}

}  // namespace

TEST_CASE("cross_entropy hand values and clamping") {
  CHECK(cross_entropy(probs({0.5, 0.25, 0.25}), 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cross_entropy(probs({1.0, 0.0}), 0) == 0.0);
  // Zero probability is clamped to the smallest normal, not -inf.
  const double ce = cross_entropy(probs({0.0, 1.0}), 0);
  CHECK(std::isfinite(ce));
  CHECK(ce == doctest::Approx(-std::log(std::numeric_limits<double>::min())).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(probs({0.5, 0.5}), 2), InputError);
}

TEST_CASE("squared gradient-magnitude loss hand value") {
  Vectord x(2);
  x << 3, 4;  // squared norm 25
  const double loss = sgm_loss(probs({0.5, 0.5}), 0, x, SgmForm::Squared);
  CHECK(loss == doctest::Approx(25.0 * (0.25 + 0.25)).epsilon(1e-12));
}

TEST_CASE("squared form is positive unless p is the one-hot target") {
  std::mt19937 eng(50);
  Vectord x(3);
  x << 1, -1, 2;
  for (int t = 0; t < 100; ++t) {
    const Vectord p = random_probs(4, eng);
    CHECK(sgm_loss(p, 1, x, SgmForm::Squared) > 0.0);
  }
  CHECK(sgm_loss(probs({0.0, 1.0, 0.0, 0.0}), 1, x, SgmForm::Squared) == 0.0);
}

TEST_CASE("literal form telescopes to exactly zero") {
  std::mt19937 eng(51);
  Vectord x(3);
  x << 2, 0, -1;
  for (int t = 0; t < 1000; ++t) {
    const Vectord p = random_probs(5, eng);
    const Index y = static_cast<Index>(eng() % 5);
    CHECK(sgm_loss(p, y, x, SgmForm::PaperLiteral) == 0.0);
  }
}

TEST_CASE("sgm form strings round-trip") {
  CHECK(sgm_form_from_string(to_string(SgmForm::Squared)) == SgmForm::Squared);
  CHECK(sgm_form_from_string(to_string(SgmForm::PaperLiteral)) == SgmForm::PaperLiteral);
  CHECK_THROWS_AS(sgm_form_from_string("cubed"), ConfigError);
}

TEST_CASE("ce_score_grad is softmax minus one-hot, matching finite differences") {
  std::mt19937 eng(52);
  const Vectord s = oracles::random_vector(5, eng);
  const Index y = 2;
  const Vectord p = softmax(s);
  const Vectord g = ce_score_grad(p, y);
  for (Index i = 0; i < 5; ++i) {
    CHECK(g(i) == doctest::Approx(p(i) - (i == y ? 1.0 : 0.0)).epsilon(1e-12));
  }

  Vectord mutable_s = s;
  auto loss = [&] { return cross_entropy(softmax(mutable_s), y); };
  for (Index i = 0; i < 5; ++i) {
    const double num = oracles::fd(mutable_s(i), loss);
    CHECK(oracles::rel_err(g(i), num) < 1e-8);
  }
}

TEST_CASE("sgm_score_grad matches finite differences through the softmax") {
  std::mt19937 eng(53);
  Vectord s = oracles::random_vector(4, eng);
  const Vectord x = oracles::random_vector(3, eng);
  const Index y = 1;
  const Vectord g = sgm_score_grad(softmax(s), y, x, SgmForm::Squared);
  auto loss = [&] { return sgm_loss(softmax(s), y, x, SgmForm::Squared); };
  for (Index i = 0; i < 4; ++i) {
    const double num = oracles::fd(s(i), loss);
    CHECK(oracles::rel_err(g(i), num) < 1e-7);
  }
  // The literal form is constant, so its score gradient vanishes.
  CHECK(sgm_score_grad(softmax(s), y, x, SgmForm::PaperLiteral).isZero(0));
}

TEST_CASE("loss_stage1 with zero sgm weight is the mean cross entropy") {
  std::mt19937 eng(54);
  Stage1Head<double> head;
  head.w = oracles::random_matrix(3, 4, eng);
  head.class_ids = {0, 1, 2};
  const Matrixd features = oracles::random_matrix(6, 4, eng);
  const std::vector<Index> labels{0, 1, 2, 0, 1, 2};

  const auto res = loss_stage1<double>(features, labels, head, 0.0, SgmForm::Squared);
  double expected = 0;
  for (Index i = 0; i < 6; ++i) {
    std::vector<double> s;
    for (Index r = 0; r < 3; ++r) s.push_back(oracles::dot(head.w.row(r).transpose(), features.row(i).transpose()));
    const auto p = oracles::softmax_loops(s);
    expected -= std::log(p[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])]) / 6.0;
  }
  CHECK(res.loss_ce == doctest::Approx(expected).epsilon(1e-12));
  CHECK(res.total == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss_stage1 sgm term scales linearly with its weight") {
  std::mt19937 eng(55);
  Stage1Head<double> head;
  head.w = oracles::random_matrix(3, 4, eng);
  head.class_ids = {0, 1, 2};
  const Matrixd features = oracles::random_matrix(5, 4, eng);
  const std::vector<Index> labels{0, 1, 2, 1, 0};

  const auto r1 = loss_stage1<double>(features, labels, head, 1.0, SgmForm::Squared);
  const auto r2 = loss_stage1<double>(features, labels, head, 2.0, SgmForm::Squared);
  CHECK(r1.loss_ce == doctest::Approx(r2.loss_ce).epsilon(1e-12));
  CHECK(r1.loss_sgm == doctest::Approx(r2.loss_sgm).epsilon(1e-12));
  CHECK(r2.total - r2.loss_ce == doctest::Approx(2.0 * (r1.total - r1.loss_ce)).epsilon(1e-12));
}

TEST_CASE("loss_stage1 head gradient matches finite differences") {
  std::mt19937 eng(56);
  Stage1Head<double> head;
  head.w = oracles::random_matrix(3, 4, eng);
  head.class_ids = {0, 2, 4};  // non-contiguous global ids
  const Matrixd features = oracles::random_matrix(5, 4, eng);
  const std::vector<Index> labels{0, 2, 4, 2, 0};

  const auto res = loss_stage1<double>(features, labels, head, 0.7, SgmForm::Squared);
  auto loss = [&] { return loss_stage1<double>(features, labels, head, 0.7, SgmForm::Squared).total; };
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 4; ++j) {
      const double num = oracles::fd(head.w(i, j), loss);
      CHECK(oracles::rel_err(res.dhead(i, j), num) < 1e-6);
    }
  }
}

TEST_CASE("loss_stage1 rejects labels outside the head") {
  std::mt19937 eng(57);
  Stage1Head<double> head;
  head.w = oracles::random_matrix(2, 3, eng);
  head.class_ids = {0, 1};
  const Matrixd features = oracles::random_matrix(2, 3, eng);
  CHECK_THROWS_AS(loss_stage1<double>(features, {0, 5}, head, 1.0, SgmForm::Squared), InputError);
  CHECK_THROWS_AS(loss_stage1<double>(Matrixd(0, 3), {}, head, 1.0, SgmForm::Squared), InputError);
  CHECK_THROWS_AS(loss_stage1<double>(features, {0}, head, 1.0, SgmForm::Squared), InputError);
}

namespace {

struct Stage2Fixture {
  Matrixd features;
  std::vector<Index> labels;
  std::vector<CorrelationGraph<double>> graphs;
  std::vector<KgtmConfig> cfgs;
  std::vector<KgtmParams<double>> params;
  ClassifierConfig ccfg;

  explicit Stage2Fixture(std::size_t m_count, bool identical = false) {
    const Index k = 5;
    const Index f = 3;
    std::mt19937 eng(60);
    features = oracles::random_matrix(4, f, eng);
    labels = {0, 2, 4, 1};
    for (std::size_t m = 0; m < m_count; ++m) {
      graphs.push_back(identical && m > 0 ? graphs.front() : tiny_graph(k, 61 + static_cast<std::uint32_t>(m)));
      KgtmConfig cfg;
      cfg.n_classes = k;
      cfg.hidden_dim = 3;
      cfg.feature_dim = f;
      cfg.steps = 2;
      cfg.init_seed = identical ? 62 : 62 + m;
      cfgs.push_back(cfg);
      params.push_back(init_params<double>(cfg));
    }
    ccfg.similarity = Similarity::Cosine;
    ccfg.ensemble = Ensemble::Mean;
  }
};

}  // namespace

TEST_CASE("loss_stage2 with identical copies reproduces the single-graph loss") {
  for (std::size_t m_count : {std::size_t{2}, std::size_t{3}}) {
    for (Ensemble ens : {Ensemble::Mean, Ensemble::Max}) {
      Stage2Fixture single(1, true);
      single.ccfg.ensemble = Ensemble::None;
      const auto base = loss_stage2<double>(single.features, single.labels, single.graphs,
                                            single.cfgs, single.params, single.ccfg, 0.01);

      Stage2Fixture multi(m_count, true);
      multi.ccfg.ensemble = ens;
      const auto res = loss_stage2<double>(multi.features, multi.labels, multi.graphs, multi.cfgs,
                                           multi.params, multi.ccfg, 0.01);
      CHECK(std::abs(res.loss_ce - base.loss_ce) < 1e-12);
      CHECK(std::abs(res.loss_reg - base.loss_reg) < 1e-12);
      CHECK(std::abs(res.total - base.total) < 1e-12);
    }
  }
}

TEST_CASE("loss_stage2 under mean keeps copy gradients symmetric") {
  Stage2Fixture multi(2, true);
  multi.ccfg.ensemble = Ensemble::Mean;
  const auto res = loss_stage2<double>(multi.features, multi.labels, multi.graphs, multi.cfgs,
                                       multi.params, multi.ccfg, 0.01);
  REQUIRE(res.grads.size() == 2);
  std::vector<const Matrixd*> g0, g1;
  visit_tensors(res.grads[0], [&](const char*, const Matrixd& t) { g0.push_back(&t); });
  visit_tensors(res.grads[1], [&](const char*, const Matrixd& t) { g1.push_back(&t); });
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK(*g0[i] == *g1[i]);
}

TEST_CASE("loss_stage2 with zero eta has no regularization term") {
  Stage2Fixture fx(2);
  const auto res = loss_stage2<double>(fx.features, fx.labels, fx.graphs, fx.cfgs, fx.params,
                                       fx.ccfg, 0.0);
  CHECK(res.loss_reg == 0.0);
  CHECK(res.total == res.loss_ce);
}

TEST_CASE("loss_stage2 gradients match finite differences in joint mode") {
  for (Ensemble ens : {Ensemble::Mean, Ensemble::Max}) {
    Stage2Fixture fx(2);
    fx.ccfg.ensemble = ens;
    const auto res = loss_stage2<double>(fx.features, fx.labels, fx.graphs, fx.cfgs, fx.params,
                                         fx.ccfg, 0.01, true);
    auto loss = [&] {
      return loss_stage2<double>(fx.features, fx.labels, fx.graphs, fx.cfgs, fx.params, fx.ccfg,
                                 0.01, true)
          .total;
    };
    for (std::size_t m = 0; m < 2; ++m) {
      std::vector<Matrixd*> ptensors;
      std::vector<const Matrixd*> gtensors;
      visit_tensors(fx.params[m], [&](const char*, Matrixd& t) { ptensors.push_back(&t); });
      visit_tensors(res.grads[m], [&](const char*, const Matrixd& t) { gtensors.push_back(&t); });
      for (std::size_t ti = 0; ti < ptensors.size(); ++ti) {
        Matrixd& param = *ptensors[ti];
        for (Index i = 0; i < param.rows(); ++i) {
          for (Index j = 0; j < param.cols(); ++j) {
            const double num = oracles::fd(param(i, j), loss, 1e-5);
            CHECK(oracles::rel_err((*gtensors[ti])(i, j), num) < 1e-5);
          }
        }
      }
    }
  }
}

TEST_CASE("loss_stage2 independent mode trains each module as if alone") {
  Stage2Fixture fx(2);
  fx.ccfg.ensemble = Ensemble::Max;
  const auto res = loss_stage2<double>(fx.features, fx.labels, fx.graphs, fx.cfgs, fx.params,
                                       fx.ccfg, 0.01, false);

  double total = 0;
  for (std::size_t m = 0; m < 2; ++m) {
    ClassifierConfig solo = fx.ccfg;
    solo.ensemble = Ensemble::None;
    const auto alone = loss_stage2<double>(
        fx.features, fx.labels, {fx.graphs[m]}, {fx.cfgs[m]}, {fx.params[m]}, solo, 0.01, true);
    total += alone.total;
    std::vector<const Matrixd*> gm, ga;
    visit_tensors(res.grads[m], [&](const char*, const Matrixd& t) { gm.push_back(&t); });
    visit_tensors(alone.grads[0], [&](const char*, const Matrixd& t) { ga.push_back(&t); });
    for (std::size_t i = 0; i < gm.size(); ++i) {
      CHECK((*gm[i] - *ga[i]).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  CHECK(res.total == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("loss_stage2 input validation and divergence") {
  Stage2Fixture fx(2);
  SUBCASE("label count mismatch") {
    CHECK_THROWS_AS(loss_stage2<double>(fx.features, {0, 1}, fx.graphs, fx.cfgs, fx.params,
                                        fx.ccfg, 0.01),
                    InputError);
  }
  SUBCASE("no graphs") {
    CHECK_THROWS_AS(loss_stage2<double>(fx.features, fx.labels, {}, {}, {}, fx.ccfg, 0.01),
                    InputError);
  }
  SUBCASE("count mismatch") {
    CHECK_THROWS_AS(loss_stage2<double>(fx.features, fx.labels, fx.graphs, {fx.cfgs[0]}, fx.params,
                                        fx.ccfg, 0.01),
                    InputError);
  }
  SUBCASE("non-finite features diverge") {
    Matrixd bad = fx.features;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(loss_stage2<double>(bad, fx.labels, fx.graphs, fx.cfgs, fx.params, fx.ccfg,
                                        0.01),
                    DivergenceError);
  }
}

TEST_CASE("lr schedule steps down by the decay factor at each interval") {
  TrainConfig cfg;  // lr0 0.1, factor 30, interval 30
  CHECK(lr_at(0, cfg) == 0.1);
  CHECK(lr_at(29, cfg) == 0.1);
  CHECK(lr_at(30, cfg) == doctest::Approx(0.1 / 30.0).epsilon(1e-15));
  CHECK(lr_at(59, cfg) == doctest::Approx(0.1 / 30.0).epsilon(1e-15));
  CHECK(lr_at(60, cfg) == doctest::Approx(0.1 / 900.0).epsilon(1e-15));
  CHECK_THROWS_AS(lr_at(-1, cfg), InputError);

  TrainConfig fast;
  fast.lr0 = 1.0;
  fast.lr_decay_factor = 2.0;
  fast.lr_decay_interval = 1;
  CHECK(lr_at(3, fast) == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("sgd_step matches the two-step closed-form recurrence") {
  // v1 = g + wd p0;          p1 = p0 - lr v1
  // v2 = mu v1 + g + wd p1;  p2 = p1 - lr v2
  const double lr = 0.1, mu = 0.9, wd = 0.01, g = 2.0, p0 = 1.0;
  Matrixd p(1, 1), grad(1, 1), v(1, 1);
  p << p0;
  grad << g;
  v << 0.0;
  sgd_step<double>(p, grad, v, lr, mu, wd);
  const double v1 = g + wd * p0;
  const double p1 = p0 - lr * v1;
  CHECK(std::abs(p(0, 0) - p1) < 1e-12);
  sgd_step<double>(p, grad, v, lr, mu, wd);
  const double v2 = mu * v1 + g + wd * p1;
  const double p2 = p1 - lr * v2;
  CHECK(std::abs(p(0, 0) - p2) < 1e-12);
  CHECK(std::abs(v(0, 0) - v2) < 1e-12);
}

TEST_CASE("sgd_step with zero momentum and decay is plain gradient descent") {
  std::mt19937 eng(70);
  Matrixd p = oracles::random_matrix(3, 2, eng);
  const Matrixd grad = oracles::random_matrix(3, 2, eng);
  Matrixd v = Matrixd::Zero(3, 2);
  const Matrixd before = p;
  sgd_step<double>(p, grad, v, 0.5, 0.0, 0.0);
  CHECK((p - (before - 0.5 * grad)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sgd_step over parameter packs honors freeze_hinit") {
  KgtmConfig cfg;
  cfg.n_classes = 4;
  cfg.feature_dim = 3;
  cfg.init_seed = 71;
  auto params = init_params<double>(cfg);
  auto grads = init_params<double>(resolved(cfg));  // arbitrary nonzero values as gradients
  grads.ob.setConstant(0.1);
  auto velocity = zeros_like(params);
  const Matrixd hinit_before = params.hinit;
  const Matrixd wz_before = params.wz;

  sgd_step<double>(params, grads, velocity, 0.1, 0.9, 0.0, true);
  CHECK(params.hinit == hinit_before);
  CHECK(velocity.hinit.isZero(0));
  CHECK(params.wz != wz_before);

  sgd_step<double>(params, grads, velocity, 0.1, 0.9, 0.0, false);
  CHECK(params.hinit != hinit_before);
}

TEST_CASE("train config validation rejects bad settings") {
  auto check_throws = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  };
  check_throws([](TrainConfig& c) { c.lr0 = 0.0; });
  check_throws([](TrainConfig& c) { c.momentum = 1.0; });
  check_throws([](TrainConfig& c) { c.momentum = -0.1; });
  check_throws([](TrainConfig& c) { c.weight_decay = -1e-9; });
  check_throws([](TrainConfig& c) { c.batch_size = 7; });
  check_throws([](TrainConfig& c) { c.batch_size = 0; });
  check_throws([](TrainConfig& c) { c.epochs = -1; });
  check_throws([](TrainConfig& c) { c.lr_decay_factor = 0.5; });
  check_throws([](TrainConfig& c) { c.lr_decay_interval = 0; });
  check_throws([](TrainConfig& c) { c.sgm_weight = -1; });
  check_throws([](TrainConfig& c) { c.proto_reg = -1; });
  CHECK_NOTHROW(validate(TrainConfig{}));
}

TEST_CASE("balanced_batch splits half base, half novel") {
  const FewShotDataset ds = tiny_dataset();
  Rng rng(3);
  const auto batch = balanced_batch(ds, 8, rng);
  REQUIRE(batch.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    const Index row = batch[i];
    CHECK(ds.sample_split[static_cast<std::size_t>(row)] == SampleSplit::Train);
    const ClassRole role = ds.class_role[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(row)])];
    CHECK(role == (i < 4 ? ClassRole::Base : ClassRole::Novel));
  }
}

TEST_CASE("balanced_batch draws without replacement from large pools") {
  const FewShotDataset ds = tiny_dataset();  // 18 base / 12 novel train samples
  Rng rng(4);
  const auto batch = balanced_batch(ds, 16, rng);
  const std::set<Index> base_half(batch.begin(), batch.begin() + 8);
  const std::set<Index> novel_half(batch.begin() + 8, batch.end());
  CHECK(base_half.size() == 8);
  CHECK(novel_half.size() == 8);
}

TEST_CASE("balanced_batch falls back to replacement when a pool is short") {
  FewShotDataset ds = tiny_dataset();
  const FewShotDataset one_shot = ksample(ds, 1, 9);  // novel pool shrinks to 2
  Rng rng(5);
  const auto batch = balanced_batch(one_shot, 12, rng);
  REQUIRE(batch.size() == 12);
  const std::set<Index> novel_half(batch.begin() + 6, batch.end());
  // Six draws from a two-sample pool must repeat.
  CHECK(novel_half.size() <= 2);
}

TEST_CASE("balanced_batch advances the caller's generator deterministically") {
  const FewShotDataset ds = tiny_dataset();
  Rng a(6);
  Rng b(6);
  CHECK(balanced_batch(ds, 8, a) == balanced_batch(ds, 8, b));
  const auto second_a = balanced_batch(ds, 8, a);
  const auto second_b = balanced_batch(ds, 8, b);
  CHECK(second_a == second_b);

  Rng c(7);
  bool all_equal = true;
  for (int t = 0; t < 5; ++t) {
    Rng d(6);
    if (balanced_batch(ds, 8, c) != balanced_batch(ds, 8, d)) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("balanced_batch validates batch size") {
  const FewShotDataset ds = tiny_dataset();
  Rng rng(8);
  CHECK_THROWS_AS(balanced_batch(ds, 7, rng), ConfigError);
  CHECK_THROWS_AS(balanced_batch(ds, 0, rng), ConfigError);
}

TEST_CASE("train log serializes one json object per epoch") {
  TrainLog log;
  log.epochs.push_back({0, 1.5, 0.25, 1.75, 0.1, 0.01});
  log.epochs.push_back({1, 1.2, 0.20, 1.40, 0.1, 0.01});
  const auto path = std::filesystem::temp_directory_path() / "protograph_trainlog.jsonl";
  write_jsonl(log, path.string());

  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == lines);
    CHECK(j.contains("loss_ce"));
    CHECK(j.contains("loss_aux"));
    CHECK(j.contains("total"));
    CHECK(j.contains("lr"));
    CHECK(j.contains("seconds"));
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("train_stage1 fits a separable base split deterministically") {
  const FewShotDataset ds = tiny_dataset();
  TrainConfig tcfg;
  tcfg.epochs = 20;
  tcfg.batch_size = 8;
  tcfg.lr0 = 0.05;
  tcfg.seed = 11;

  const auto run1 = train_stage1(ds, tcfg);
  REQUIRE(run1.log.epochs.size() == 20);
  CHECK(run1.head.class_ids == std::vector<Index>{0, 1, 2});
  CHECK(run1.head.w.rows() == 3);
  CHECK(run1.log.epochs.back().loss_ce < run1.log.epochs.front().loss_ce);
  CHECK(run1.log.epochs.back().loss_ce < 0.1);

  const auto run2 = train_stage1(ds, tcfg);
  CHECK(run1.head.w == run2.head.w);
}

TEST_CASE("train_stage2 with zero epochs returns the initial parameters") {
  const FewShotDataset ds = tiny_dataset();
  std::vector<CorrelationGraph<double>> graphs{tiny_graph(5, 80)};
  KgtmConfig kc;
  kc.n_classes = 5;
  kc.feature_dim = 4;
  kc.init_seed = 81;
  TrainConfig tcfg;
  tcfg.epochs = 0;
  tcfg.batch_size = 8;
  ClassifierConfig ccfg;
  ccfg.ensemble = Ensemble::None;

  const auto res = train_stage2(ds, graphs, {kc}, ccfg, tcfg);
  CHECK(res.log.epochs.empty());
  const auto fresh = init_params<double>(kc);
  CHECK(res.params[0].wz == fresh.wz);
  CHECK(res.params[0].hinit == fresh.hinit);
}

TEST_CASE("train_stage2 reduces the loss and is deterministic") {
  const FewShotDataset ds = tiny_dataset();
  std::vector<CorrelationGraph<double>> graphs{tiny_graph(5, 82)};
  KgtmConfig kc;
  kc.n_classes = 5;
  kc.feature_dim = 4;
  kc.init_seed = 83;
  TrainConfig tcfg;
  tcfg.epochs = 10;
  tcfg.batch_size = 8;
  tcfg.seed = 84;
  ClassifierConfig ccfg;
  ccfg.ensemble = Ensemble::None;

  const auto r1 = train_stage2(ds, graphs, {kc}, ccfg, tcfg);
  REQUIRE(r1.log.epochs.size() == 10);
  CHECK(r1.log.epochs.back().loss_ce < r1.log.epochs.front().loss_ce);
  // 30 train samples at batch 8: four steps per epoch, logged losses averaged.
  CHECK(r1.log.epochs.front().lr == tcfg.lr0);

  const auto r2 = train_stage2(ds, graphs, {kc}, ccfg, tcfg);
  CHECK(r1.params[0].wz == r2.params[0].wz);
  CHECK(r1.params[0].hinit == r2.params[0].hinit);
}

TEST_CASE("train_stage2 reports the epoch and step when it diverges") {
  const FewShotDataset ds = tiny_dataset();
  std::vector<CorrelationGraph<double>> graphs{tiny_graph(5, 85)};
  KgtmConfig kc;
  kc.n_classes = 5;
  kc.feature_dim = 4;
  kc.init_seed = 86;
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 8;
  tcfg.lr0 = 1e200;  // blows the parameters out in a step or two
  ClassifierConfig ccfg;
  ccfg.ensemble = Ensemble::None;

  try {
    train_stage2(ds, graphs, {kc}, ccfg, tcfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("step") != std::string::npos);
  }
}
