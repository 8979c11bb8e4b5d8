// SPDX-License-Identifier: Apache-2.0
#include "plood/error.hpp"
#include "plood/pll.hpp"
#include "plood/scoring.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace plood;
using namespace plood::pll;
using namespace plood::testing;

namespace {

data::MaskMatrix mask_of(std::initializer_list<std::initializer_list<int>> rows)
{
  data::MaskMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (auto const &r : rows) {
    Index j = 0;
    for (int v : r) {
      m(i, j++) = v != 0;
    }
    ++i;
  }
  return m;
}

data::MaskMatrix random_mask(Rng &rng, Index n, Index q)
{
  data::MaskMatrix m(n, q);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < q; ++j) {
      m(i, j) = uniform(rng, 0, 1) < 0.4;
    }
    m(i, uniform_int(rng, 0, q - 1)) = true;
  }
  return m;
}

} // namespace

TEST_CASE("initial confidence is uniform over candidates")
{
  auto const c = init_confidence(mask_of({{0, 0, 0, 1, 0, 0}}));
  CHECK(c.values.row(0) == (Eigen::RowVectorXd(6) << 0, 0, 0, 1, 0, 0).finished());
  auto const d = init_confidence(mask_of({{1, 1, 0}}));
  CHECK(d.values(0, 0) == 0.5);
  CHECK(d.values(0, 1) == 0.5);
  CHECK(d.values(0, 2) == 0.0);
  auto       rng = make_rng(1);
  auto const r = init_confidence(random_mask(rng, 50, 7));
  CHECK(r.valid(0.0));
  CHECK_THROWS_AS(init_confidence(mask_of({{0, 0}})), Error);
}

TEST_CASE("partial-label loss")
{
  auto const c = init_confidence(mask_of({{1, 1, 0}}));
  RowMatrix  p(1, 3);
  p << 0.7, 0.2, 0.1;
  CHECK(loss_pl(p, c) == doctest::Approx(-(0.5 * std::log(0.7) + 0.5 * std::log(0.2))).epsilon(1e-14));
  CHECK(loss_pl(p, c) == doctest::Approx(0.98306).epsilon(1e-5));
  RowMatrix q = p;
  q(0, 2) = 0.9;
  CHECK(loss_pl(q, c) == loss_pl(p, c));

  auto const one = init_confidence(mask_of({{0, 1, 0}}));
  RowMatrix  sure(1, 3);
  sure << 0, 1, 0;
  CHECK(loss_pl(sure, one) == 0.0);

  auto rng = make_rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Index const      n = uniform_int(rng, 1, 8), k = uniform_int(rng, 2, 9);
    RowMatrix const  probs = random_probs(rng, n, k);
    data::MaskMatrix m = data::MaskMatrix::Constant(n, k, false);
    std::vector<Index> labels;
    for (Index i = 0; i < n; ++i) {
      labels.push_back(uniform_int(rng, 0, k - 1));
      m(i, labels.back()) = true;
    }
    double ce = 0.0;
    for (Index i = 0; i < n; ++i) {
      ce -= std::log(probs(i, labels[static_cast<std::size_t>(i)]));
    }
    CHECK(std::abs(loss_pl(probs, init_confidence(m)) - ce / static_cast<double>(n)) <= 1e-12);
  }
}

TEST_CASE("partial-label loss against the double-loop oracle")
{
  auto rng = make_rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    Index const     n = uniform_int(rng, 1, 12), q = uniform_int(rng, 2, 8);
    RowMatrix const logits = random_matrix(rng, n, q, -6, 6);
    auto const      c = update_confidence(init_confidence(random_mask(rng, n, q)), random_matrix(rng, n, q, -2, 2));
    double const    loss = loss_pl(score::softmax_rows(logits), c);
    double const    expect = oracle_loss_pl(logits, c.values);
    CHECK(loss >= 0.0);
    CHECK(std::abs(loss - expect) <= 1e-12 * std::max(1.0, expect));
  }
}

TEST_CASE("confidence update")
{
  auto const c = init_confidence(mask_of({{1, 1, 0}}));
  RowMatrix  p(1, 3);
  p << 0.7, 0.2, 0.1;
  auto const next = update_confidence(c, p);
  CHECK(next.values(0, 0) == doctest::Approx(0.62245).epsilon(1e-5));
  CHECK(next.values(0, 1) == doctest::Approx(0.37755).epsilon(1e-5));
  CHECK(next.values(0, 2) == 0.0);
  double const a = std::exp(0.7) * 0.5, b = std::exp(0.2) * 0.5;
  CHECK(next.values(0, 0) == doctest::Approx(a / (a + b)).epsilon(1e-14));

  auto const u = init_confidence(mask_of({{1, 0, 1, 1}}));
  CHECK(update_confidence(u, RowMatrix::Constant(1, 4, 0.25)).values.isApprox(u.values, 1e-15));

  auto rng = make_rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Index const      n = uniform_int(rng, 1, 10), k = uniform_int(rng, 2, 8);
    ConfidenceMatrix cm{random_probs(rng, n, k), random_mask(rng, n, k)};
    cm.values = (cm.values.array() * cm.mask.cast<double>()).matrix();
    for (Index i = 0; i < n; ++i) {
      cm.values.row(i) /= cm.values.row(i).sum();
    }
    RowMatrix const s = random_probs(rng, n, k);
    auto const      out = update_confidence(cm, s);
    CHECK(out.valid(1e-12));
    CHECK(((out.values.array() != 0.0) <= (cm.values.array() != 0.0)).all());

    ConfidenceMatrix scaled = cm;
    for (Index i = 0; i < n; ++i) {
      scaled.values.row(i) *= uniform(rng, 0.1, 10.0);
    }
    CHECK(update_confidence(scaled, s).values.isApprox(out.values, 1e-13));
  }
}

TEST_CASE("fine-tuning")
{
  auto const set = data::generate_id_dataset(data::GlyphSpec::standard(6), 300, 4, data::Origin::IdTrain, 0.3);
  auto const start = net::init_ssfe(5);
  PllConfig  cfg;
  cfg.seed = 6;
  cfg.epochs = 0;
  auto const none = finetune_pll(set, start, cfg);
  CHECK(none.confidence.values == init_confidence(set.candidates).values);
  CHECK(none.log.empty());

  cfg.epochs = 50;
  Index epochs_seen = 0;
  bool  all_valid = true;
  auto  r = finetune_pll(set, start, cfg, [&](Index epoch, ConfidenceMatrix const &c) {
    ++epochs_seen;
    CHECK(epoch == epochs_seen);
    all_valid = all_valid && c.valid(1e-9) && (c.mask == set.candidates).all();
  });
  CHECK(epochs_seen == 50);
  CHECK(all_valid);
  double const mean_max = r.confidence.values.rowwise().maxCoeff().mean();
  MESSAGE("mean row max of C: " << mean_max);
  CHECK(mean_max >= 0.9);
  CHECK(r.log.back().mean_max_confidence == doctest::Approx(mean_max).epsilon(1e-12));
  CHECK(r.params.phase == net::Phase::Pll);
  CHECK(r.params[net::Slot::RotW] == start[net::Slot::RotW]);

  auto const path = std::filesystem::temp_directory_path() / "plood_test_confidence.plcm";
  save_confidence(r.confidence, path);
  auto const back = load_confidence(path);
  CHECK(back.values == r.confidence.values);
  CHECK((back.mask == r.confidence.mask).all());
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 2);
  CHECK_THROWS_AS(load_confidence(path), FormatError);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(finetune_pll(data::generate_ood_dataset(data::OodKind::Blob, 10, 1), start, cfg), Error);
}

TEST_CASE("alternative update modes keep the invariants")
{
  auto const set = data::generate_id_dataset(data::GlyphSpec::standard(5), 120, 9, data::Origin::IdTrain, 0.5);
  for (auto input : {UpdateInput::Probabilities, UpdateInput::Logits}) {
    for (auto cadence : {UpdateCadence::Epoch, UpdateCadence::Step}) {
      PllConfig cfg;
      cfg.epochs = 3;
      cfg.batch_size = 32;
      cfg.update_input = input;
      cfg.cadence = cadence;
      bool ok = true;
      auto r = finetune_pll(set, net::init_ssfe(1), cfg, [&](Index, ConfidenceMatrix const &c) { ok = ok && c.valid(1e-9); });
      CHECK(ok);
      CHECK(r.log.size() == 3);
      CHECK(parse_update_input(update_input_name(input)) == input);
      CHECK(parse_cadence(cadence_name(cadence)) == cadence);
    }
  }
}
