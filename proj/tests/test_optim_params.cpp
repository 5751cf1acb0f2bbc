#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"

#include "facile/error.hpp"
#include "facile/optim.hpp"
#include "facile/params.hpp"
#include "gradcheck.hpp"

using namespace facile;

TEST_CASE("cosine schedule endpoints and midpoint") {
  SgdConfig cfg{0.1, 0.9, 0.0, 100};
  CHECK(cosine_lr(cfg, 0) == 0.1);
  CHECK(cosine_lr(cfg, 50) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(cosine_lr(cfg, 99) < 1e-4);
  double prev = cosine_lr(cfg, 0);
  for (std::size_t t = 1; t < 100; ++t) {
    CHECK(cosine_lr(cfg, t) <= prev);
    prev = cosine_lr(cfg, t);
  }
}

TEST_CASE("plain gradient step") {
  Tensor p = Tensor::vector({1.0, -2.0}, true);
  Sgd opt({p}, {0.1, 0.0, 0.0, 10});
  {
    Tape tape;
    tape.backward(sum_all(mul(Tensor::vector({3.0, 4.0}), p)));
  }
  opt.step(0);
  CHECK(p.to_vector()[0] == doctest::Approx(1.0 - 0.1 * 3.0));
  CHECK(p.to_vector()[1] == doctest::Approx(-2.0 - 0.1 * 4.0));
}

TEST_CASE("zero gradient is a fixed point") {
  Tensor p = Tensor::vector({0.25, 0.5}, true);
  Sgd opt({p}, {0.1, 0.0, 0.0, 10});
  opt.zero_grad();
  opt.step(3);
  CHECK(p.to_vector() == std::vector<double>{0.25, 0.5});
}

TEST_CASE("momentum and weight decay follow the update rule") {
  Tensor p = Tensor::vector({1.0}, true);
  SgdConfig cfg{0.5, 0.9, 0.1, 4};
  Sgd opt({p}, cfg);
  double v = 0.0, x = 1.0;
  for (std::size_t t = 0; t < 4; ++t) {
    opt.zero_grad();
    {
      Tape tape;
      tape.backward(sum_all(mul(p, p)));
    }
    opt.step(t);
    v = 0.9 * v + 2.0 * x + 0.1 * x;
    x -= cosine_lr(cfg, t) * v;
    CHECK(p.to_vector()[0] == doctest::Approx(x).epsilon(1e-14));
  }
  CHECK_THROWS_AS(opt.step(4), ScheduleExhaustedError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(5);
  ParamSet ps;
  ps.add("a", facile::testing::random_tensor({3, 2}, rng));
  ps.add("b", Tensor::vector({std::numbers::pi, 1e-300, -0.1}, true));
  const auto path = std::filesystem::temp_directory_path() / "facile_test_params.json";
  save_checkpoint(path, ps, {{"kind", "test"}});
  ParamSet target;
  target.add("a", Tensor::zeros({3, 2}));
  target.add("b", Tensor::zeros({3}));
  const auto doc = load_checkpoint_document(path);
  CHECK(doc.at("header").at("kind") == "test");
  params_from_json(doc, target);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(ps.entries()[i].tensor.to_vector() == target.entries()[i].tensor.to_vector());
  }
  ParamSet wrong;
  wrong.add("a", Tensor::zeros({2, 3}));
  wrong.add("b", Tensor::zeros({3}));
  CHECK_THROWS_AS(params_from_json(doc, wrong), FormatError);
  ParamSet missing;
  missing.add("a", Tensor::zeros({3, 2}));
  CHECK_THROWS_AS(params_from_json(doc, missing), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("parameter sets reject duplicate names") {
  ParamSet ps;
  ps.add("w", Tensor::zeros({1}));
  CHECK_THROWS(ps.add("w", Tensor::zeros({1})));
  CHECK(ps.total_numel() == 1);
}
