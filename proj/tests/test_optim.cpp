#include <doctest.h>

#include <cmath>

#include "alcr/optim.hpp"
#include "alcr/tensor.hpp"

using namespace alcr::autodiff;

TEST_CASE("optim: clip_global_norm scales to max_norm and reports prior norm") {
  // [DERIVED] grads (600, 0, 800) have norm 1000; clipping at 400 scales by
  // 0.4 to (240, 0, 320).
  Gradients g;
  g["a"] = Tensor({2}, std::vector<double>{600.0, 0.0});
  g["b"] = Tensor({1}, std::vector<double>{800.0});
  double before = clip_global_norm(g, 400.0);
  CHECK(before == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(g.by_name.at("a")[0] == doctest::Approx(240.0).epsilon(1e-12));
  CHECK(g.by_name.at("a")[1] == 0.0);
  CHECK(g.by_name.at("b")[0] == doctest::Approx(320.0).epsilon(1e-12));
  CHECK(g.global_l2_norm() == doctest::Approx(400.0).epsilon(1e-9));
}

TEST_CASE("optim: clip below threshold is a no-op and idempotent") {
  Gradients g;
  g["a"] = Tensor({2}, std::vector<double>{3.0, 4.0});
  double before = clip_global_norm(g, 400.0);
  CHECK(before == doctest::Approx(5.0));
  CHECK(g.by_name.at("a")[0] == 3.0);
  CHECK(g.by_name.at("a")[1] == 4.0);
  // Clipping an already-clipped gradient changes nothing.
  Gradients h;
  h["a"] = Tensor({2}, std::vector<double>{600.0, 800.0});
  clip_global_norm(h, 400.0);
  double v0 = h.by_name.at("a")[0];
  clip_global_norm(h, 400.0);
  CHECK(h.by_name.at("a")[0] == doctest::Approx(v0).epsilon(1e-12));
}

TEST_CASE("optim: first adam step matches the closed form") {
  // [DERIVED] at t=1 bias correction makes m_hat = g and v_hat = g^2, so the
  // update is lr * g / (|g| + eps) regardless of beta values.
  ParameterStore ps;
  ps.add("p", Tensor({1}, std::vector<double>{1.0}));
  Gradients g;
  g["p"] = Tensor({1}, std::vector<double>{0.5});
  AdamState st(ps);
  AdamConfig cfg;  // lr = 0.001
  adam_step(ps, g, st, cfg);
  CHECK(st.step == 1);
  double expect = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
  CHECK(ps.at("p")[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("optim: two adam steps match a hand-rolled reference") {
  // [DERIVED] independent scalar re-implementation of Adam, run alongside.
  ParameterStore ps;
  ps.add("p", Tensor({1}, std::vector<double>{0.8}));
  AdamState st(ps);
  AdamConfig cfg;
  double p = 0.8, m = 0.0, v = 0.0;
  const double gvals[2] = {0.5, -0.25};
  for (int t = 1; t <= 2; ++t) {
    double gv = gvals[t - 1];
    Gradients g;
    g["p"] = Tensor({1}, std::vector<double>{gv});
    adam_step(ps, g, st, cfg);
    m = cfg.beta1 * m + (1 - cfg.beta1) * gv;
    v = cfg.beta2 * v + (1 - cfg.beta2) * gv * gv;
    double mh = m / (1 - std::pow(cfg.beta1, t));
    double vh = v / (1 - std::pow(cfg.beta2, t));
    p -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    CHECK(ps.at("p")[0] == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(st.step == 2);
}

TEST_CASE("optim: missing gradient entries leave moments decaying only") {
  ParameterStore ps;
  ps.add("touched", Tensor({1}, std::vector<double>{1.0}));
  ps.add("silent", Tensor({1}, std::vector<double>{2.0}));
  AdamState st(ps);
  AdamConfig cfg;
  Gradients g;
  g["touched"] = Tensor({1}, std::vector<double>{1.0});
  adam_step(ps, g, st, cfg);
  CHECK(ps.at("touched")[0] < 1.0);
  // Zero gradient with zero moments: parameter must not move.
  CHECK(ps.at("silent")[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("optim: lr schedule") {
  // [DERIVED] 0.003 / 1.1^1 and 0.003 / 1.1^2.
  CHECK(lr_at_epoch(0.003, 1.1, 0) == doctest::Approx(0.003).epsilon(1e-15));
  CHECK(lr_at_epoch(0.003, 1.1, 1) == doctest::Approx(0.003 / 1.1).epsilon(1e-12));
  CHECK(lr_at_epoch(0.003, 1.1, 2) == doctest::Approx(0.003 / 1.21).epsilon(1e-12));
  CHECK(lr_at_epoch(0.001, 1.1, 2) == doctest::Approx(0.001 / 1.21).epsilon(1e-12));
}
