// SPDX-License-Identifier: Apache-2.0
#include "plood/error.hpp"
#include "plood/ssfe.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace plood;
using namespace plood::ssfe;
using namespace plood::testing;

namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

// Combined loss over the whole set at fixed parameters.
double dataset_loss(net::BackboneParams const &p, data::LabeledImageSet const &set)
{
  std::vector<Index> all(static_cast<std::size_t>(set.size()));
  std::iota(all.begin(), all.end(), Index{0});
  SsfeGraph g;
  g.bind_params(p);
  g.forward(make_rotation_batch(set.images, all), 0.5);
  return g.l_ssfe();
}

} // namespace

TEST_CASE("rotation probabilities")
{
  RowMatrix t(2, 4);
  t << 0, 0, 0, 0, std::log(2.0), 0, 0, 0;
  auto const p = rotation_probs(t);
  for (Index j = 0; j < 4; ++j) {
    CHECK(p(0, j) == doctest::Approx(0.25).epsilon(1e-15));
  }
  CHECK(p(1, 0) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(p(1, 3) == doctest::Approx(0.2).epsilon(1e-15));

  auto rng = make_rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix l = random_matrix(rng, 1, 4, -5, 5);
    auto      q = rotation_probs(l);
    double    z = 0;
    for (Index j = 0; j < 4; ++j) {
      z += std::exp(l(0, j));
    }
    for (Index j = 0; j < 4; ++j) {
      CHECK(std::abs(q(0, j) - std::exp(l(0, j)) / z) <= 1e-12);
    }
  }
  t(0, 0) = std::nan("");
  CHECK_THROWS_AS(rotation_probs(t), Error);
}

TEST_CASE("rotation weights")
{
  RowMatrix p(3, 4);
  p << 0.1, 0.2, 0.3, 0.4, 0.3, 0.25, 0.2, 0.25, 0.25, 0.25, 0.25, 0.25;
  auto const w = rotation_weights(p, {1, 2, 4});
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 0.75);
  CHECK(w[2] == 0.75);
  CHECK_THROWS_AS(rotation_weights(p, {1, 2, 5}), Error);
}

TEST_CASE("rotation cross-entropy examples")
{
  RowMatrix p = RowMatrix::Constant(2, 2, 0.5);
  Eigen::Vector2d w(1.0, 0.5);
  CHECK(loss_rc(p, {1, 2}, w) == doctest::Approx(0.5 * (1.5 * std::log(2.0))).epsilon(1e-14));
  CHECK(loss_rc(p, {1, 2}, w) == doctest::Approx(0.5199).epsilon(1e-4));
  CHECK(loss_rc(p, {1, 2}, Eigen::Vector2d(2 * w)) == doctest::Approx(2 * loss_rc(p, {1, 2}, w)).epsilon(1e-15));
  RowMatrix onehot = RowMatrix::Identity(4, 4);
  CHECK(loss_rc(onehot, {1, 2, 3, 4}, Eigen::Vector4d::Ones()) == 0.0);
}

TEST_CASE("rotation invariance loss examples")
{
  RowMatrix h(2, 2);
  h << 1, 0, 0, 1;
  CHECK(loss_ri(h, 2) == doctest::Approx(0.5).epsilon(1e-15));
  auto      rng = make_rng(2);
  RowMatrix f = random_matrix(rng, 8, 5);
  CHECK(loss_ri(RowMatrix(3.0 * f), 4) == doctest::Approx(9.0 * loss_ri(f, 4)).epsilon(1e-13));
  RowMatrix same(8, 5);
  for (Index r = 0; r < 8; ++r) {
    same.row(r) = f.row(r / 4 * 4);
  }
  CHECK(loss_ri(same, 4) == 0.0);
  CHECK_THROWS_AS(loss_ri(f, 3), Error);
}

TEST_CASE("combined loss")
{
  CHECK(loss_ssfe(0.52, 0.5, 1.0) == 0.52);
  CHECK(loss_ssfe(0.52, 0.5, 0.0) == 0.5);
  CHECK(loss_ssfe(0.52, 0.5, 0.5) == doctest::Approx(0.51).epsilon(1e-15));
  CHECK_THROWS_AS(loss_ssfe(1, 1, 1.5), Error);
}

TEST_CASE("loss kernels against double-loop oracles on random batches")
{
  auto rng = make_rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Index const        n = uniform_int(rng, 1, 6), R = 4;
    RowMatrix const    logits = random_matrix(rng, n * R, R, -6, 6);
    std::vector<Index> labels;
    for (Index i = 0; i < n * R; ++i) {
      labels.push_back(i % R + 1);
    }
    RowMatrix const       probs = rotation_probs(logits);
    Eigen::VectorXd const w = rotation_weights(probs, labels);
    CHECK((w.array() >= 0.0).all());
    CHECK((w.array() <= 1.0).all());
    double const rc = loss_rc(probs, labels, w);
    CHECK(rc >= 0.0);
    CHECK(close(rc, oracle_loss_rc(logits, labels, w)));

    RowMatrix const h = random_matrix(rng, n * R, 32, -2, 2);
    double const    ri = loss_ri(h, R);
    CHECK(ri >= 0.0);
    CHECK(close(ri, oracle_loss_ri(h, R)));
  }
}

TEST_CASE("training graph agrees with the kernels")
{
  auto rng = make_rng(4);
  auto images = random_tensor(rng, {3, 1, 16, 16}, 0, 1);
  auto batch = make_rotation_batch(images, {2, 0, 1});
  CHECK(batch.images.dim(0) == 12);
  SsfeGraph g;
  g.bind_params(net::init_ssfe(5));
  g.forward(batch, 0.3);
  CHECK(close(g.l_rc(), loss_rc(g.probs(), batch.rotation_labels, g.weights())));
  CHECK(close(g.l_ri(), loss_ri(g.h_ri(), 4)));
  CHECK(close(g.l_ssfe(), loss_ssfe(g.l_rc(), g.l_ri(), 0.3)));
  CHECK(g.weights() == rotation_weights(g.probs(), batch.rotation_labels));
}

TEST_CASE("training")
{
  auto const set = data::generate_id_dataset(data::GlyphSpec::standard(6), 64, 7);
  SsfeConfig cfg;
  cfg.seed = 11;
  cfg.epochs = 0;
  auto const none = train_ssfe(set, cfg);
  auto const init = net::init_ssfe(11);
  CHECK(none.log.empty());
  for (std::size_t k = 0; k < net::kSlotCount; ++k) {
    CHECK(none.params.tensors[k] == init.tensors[k]);
  }

  cfg.epochs = 2;
  cfg.batch_size = 16;
  auto const a = train_ssfe(set, cfg), b = train_ssfe(set, cfg);
  REQUIRE(a.log.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(a.log[e].l_ssfe == b.log[e].l_ssfe);
    CHECK(a.log[e].l_rc == b.log[e].l_rc);
  }
  CHECK(net::checksum(a.params) == net::checksum(b.params));
  CHECK(log_csv(a.log).rfind("epoch,l_rc,l_ri,l_ssfe,wall_ms\n", 0) == 0);

  cfg.alpha = 2.0;
  CHECK_THROWS_AS(train_ssfe(set, cfg), ConfigError);
}

TEST_CASE("fifty epochs reduce the combined loss")
{
  auto const set = data::generate_id_dataset(data::GlyphSpec::standard(6), 600, 8);
  SsfeConfig cfg;
  cfg.seed = 12;
  auto const r = train_ssfe(set, cfg);
  REQUIRE(r.log.size() == 50);
  double const before = dataset_loss(net::init_ssfe(12), set), after = dataset_loss(r.params, set);
  MESSAGE("combined loss " << before << " -> " << after);
  CHECK(after < before);
  CHECK(r.log.back().l_ssfe < r.log.front().l_ssfe);
}
