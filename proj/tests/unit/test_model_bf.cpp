#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "odx/error.hpp"
#include "odx/model_bf.hpp"
#include "odx/train.hpp"
#include "support.hpp"

using namespace odx;

namespace {

SparseODTensor make_sparse(const DenseTensor& hist, std::vector<double> omega, std::size_t n, std::size_t np) {
  SparseODTensor t;
  t.hist = hist;
  t.omega = DenseTensor({n, np}, std::move(omega));
  return t;
}

std::size_t param_index(const ParameterSet& p, const std::string& name) { return p.index_of(name); }

}  // namespace

TEST_SUITE("model_bf") {
  TEST_CASE("zero tensor with zero biases gives zero factors") {
    BFModel m({3, 2, 2}, {}, 1);
    auto& p = m.parameters();
    p[param_index(p, "fact.b_r")].value.fill(0.0);
    p[param_index(p, "fact.b_c")].value.fill(0.0);
    DenseTensor zero({3, 2, 2});
    Tape t;
    auto f = m.factorize(t, zero);
    CHECK(f.r.dims() == Dims{3, 5, 2});
    CHECK(f.c.dims() == Dims{5, 2, 2});
    for (double v : f.r.value().values()) CHECK(v == 0.0);
    for (double v : f.c.value().values()) CHECK(v == 0.0);
  }

  TEST_CASE("zero weights pass the relu of the bias through") {
    BFModel m({2, 2, 2}, {1, 2, 1}, 1);
    auto& p = m.parameters();
    p[param_index(p, "fact.F_r")].value.fill(0.0);
    auto& br = p[param_index(p, "fact.b_r")].value;
    br = DenseTensor({4}, std::vector<double>{0.5, -1.0, 2.0, 0.0});
    std::mt19937_64 rng(1);
    auto hist = testing::random_tensor({2, 2, 2}, rng, 0, 1);
    Tape t;
    auto r = m.factorize(t, hist).r.value();
    CHECK(r.dims() == Dims{2, 1, 2});
    CHECK(r == DenseTensor({2, 1, 2}, std::vector<double>{0.5, 0.0, 2.0, 0.0}));
  }

  TEST_CASE("factorization matches a dense algebra oracle") {
    BFModel m({3, 4, 2}, {2, 2, 1}, 7);
    std::mt19937_64 rng(3);
    auto hist = testing::random_tensor({3, 4, 2}, rng, 0, 1);
    Tape t;
    auto f = m.factorize(t, hist);
    const auto& p = m.parameters();
    auto check_stream = [&](const char* w, const char* b, const DenseTensor& got) {
      const auto& W = p[param_index(p, w)].value;
      const auto& B = p[param_index(p, b)].value;
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> We(
          W.data(), static_cast<Eigen::Index>(W.dim(0)), static_cast<Eigen::Index>(W.dim(1)));
      Eigen::Map<const Eigen::VectorXd> x(hist.data(), static_cast<Eigen::Index>(hist.size()));
      Eigen::Map<const Eigen::VectorXd> be(B.data(), static_cast<Eigen::Index>(B.size()));
      Eigen::VectorXd y = (We * x + be).cwiseMax(0.0);
      REQUIRE(got.size() == static_cast<std::size_t>(y.size()));
      for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(std::abs(got[static_cast<std::size_t>(i)] - y(i)) < 1e-12);
    };
    check_stream("fact.F_r", "fact.b_r", f.r.value());
    check_stream("fact.F_c", "fact.b_c", f.c.value());
  }

  TEST_CASE("gru with zero weights halves the state") {
    ParameterSet p;
    const auto first = add_gru_parameters(p, "g", 3, 2);
    Tape t;
    auto w = gru_vars(t, p, first);
    Var x = t.constant(DenseTensor::vector({0.3, -0.7, 1.1}));
    Var h = t.constant(DenseTensor::vector({0.8, -0.4}));
    auto out = gru_cell(x, h, w).value();
    CHECK(out[0] == doctest::Approx(0.4));
    CHECK(out[1] == doctest::Approx(-0.2));
  }

  TEST_CASE("gru fixed point at zero state and zero candidate") {
    ParameterSet p;
    const auto first = add_gru_parameters(p, "g", 2, 3);
    std::mt19937_64 rng(4);
    for (std::size_t i = first; i < first + 6; ++i) p.init_uniform(i, 5, rng);
    p[first + 5].value.fill(0.0);  // bh
    Tape t;
    auto w = gru_vars(t, p, first);
    auto out = gru_cell(t.constant(DenseTensor({2})), t.constant(DenseTensor({3})), w).value();
    for (double v : out.values()) CHECK(v == 0.0);
  }

  TEST_CASE("gradient check through three chained gru cells") {
    ParameterSet p;
    const auto first = add_gru_parameters(p, "g", 2, 3);
    std::mt19937_64 rng(5);
    for (std::size_t i = first; i < first + 6; ++i) p.init_uniform(i, 5, rng);
    const std::vector<DenseTensor> xs{DenseTensor::vector({0.2, -0.5}), DenseTensor::vector({1.0, 0.3}),
                                      DenseTensor::vector({-0.8, 0.6})};
    Objective f = [&](ParameterSet& ps, bool g) {
      Tape t;
      auto w = gru_vars(t, ps, first);
      Var h = t.constant(DenseTensor::vector({0.1, -0.2, 0.3}));
      for (const auto& x : xs) h = gru_cell(t.constant(x), h, w);
      Var l = ad::sum_squares(h);
      if (g) {
        t.backward(l);
        t.accumulate_into(ps);
      }
      return l.value()[0];
    };
    auto r = finite_diff_check(p, f);
    CHECK_MESSAGE(r.passed, r.worst_parameter, " ", r.max_relative_error);
  }

  TEST_CASE("seq2seq learns to copy the last input") {
    const std::size_t dim = 3, hidden = 8;
    ParameterSet p;
    const auto first = add_seq2seq_parameters(p, "s", dim, hidden, 1);
    std::mt19937_64 rng(2);
    for (std::size_t i = 0; i < p.size(); ++i) p.init_uniform(i, p[i].value.dims().size() == 2 ? p[i].value.dim(1) : hidden, rng);
    std::vector<std::vector<DenseTensor>> seqs;
    for (int n = 0; n < 24; ++n) {
      std::vector<DenseTensor> s;
      for (int j = 0; j < 3; ++j) s.push_back(testing::random_tensor({dim}, rng));
      seqs.push_back(s);
    }
    auto epoch_loss = [&](bool train) {
      Tape t;
      auto w = seq2seq_vars(t, p, first, 1);
      std::vector<Var> terms;
      for (const auto& s : seqs) {
        std::vector<Var> in;
        for (const auto& x : s) in.push_back(t.constant_ref(x));
        auto out = seq2seq_forecast(t, in, w, 1);
        terms.push_back(ad::sum_squares(ad::sub(out[0], in.back())));
      }
      Var l = ad::add_scalars(terms);
      if (train) {
        t.backward(l);
        t.accumulate_into(p);
      }
      return l.value()[0];
    };
    const double initial = epoch_loss(false);
    AdamState adam(p);
    for (int step = 0; step < 400; ++step) {
      epoch_loss(true);
      adam_step(p, adam, 0.02);
    }
    const double final_loss = epoch_loss(false);
    CHECK(final_loss < 0.1 * initial);
  }

  TEST_CASE("seq2seq is deterministic") {
    ParameterSet p;
    const auto first = add_seq2seq_parameters(p, "s", 2, 3, 2);
    std::mt19937_64 rng(8);
    for (std::size_t i = 0; i < p.size(); ++i) p.init_uniform(i, 3, rng);
    auto run = [&] {
      Tape t;
      auto w = seq2seq_vars(t, p, first, 2);
      auto out = seq2seq_forecast(t, {t.constant(DenseTensor::vector({1, 2})), t.constant(DenseTensor::vector({3, 4}))}, w, 3);
      std::vector<DenseTensor> v;
      for (auto& o : out) v.push_back(o.value());
      return v;
    };
    CHECK(run() == run());
  }

  TEST_CASE("recovery of zero factors is uniform") {
    Tape t;
    auto out = recover(t.constant(DenseTensor({2, 3, 4})), t.constant(DenseTensor({3, 5, 4}))).value();
    CHECK(out.dims() == Dims{2, 5, 4});
    for (double v : out.values()) CHECK(v == 0.25);
  }

  TEST_CASE("recovery with logits (0, ln 3)") {
    Tape t;
    // beta = 1, K = 2, one origin and one destination
    Var r = t.constant(DenseTensor({1, 1, 2}, std::vector<double>{1.0, std::log(3.0)}));
    Var c = t.constant(DenseTensor({1, 1, 2}, std::vector<double>{0.0, 1.0}));
    auto out = recover(r, c).value();
    CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(0.75).epsilon(1e-14));
  }

  TEST_CASE("bf_loss on perfect fit, empty mask and a hand expansion") {
    Tape t;
    DenseTensor hist({1, 2, 2}, std::vector<double>{0.3, 0.7, 0.5, 0.5});
    auto truth = make_sparse(hist, {1.0, 0.0}, 1, 2);
    const SparseODTensor* tp[] = {&truth};
    FactorPair f{t.constant(DenseTensor({1, 1, 2}, std::vector<double>{0.5, -1.0})),
                 t.constant(DenseTensor({1, 2, 2}, std::vector<double>{2.0, 0.0, 1.0, 3.0}))};
    FactorPair fs[] = {f};
    SUBCASE("perfect fit") {
      Var pred = t.constant(DenseTensor({1, 2, 2}, std::vector<double>{0.3, 0.7, 0.1, 0.9}));
      Var ps[] = {pred};
      CHECK(bf_loss(ps, tp, fs, 0.0).value()[0] == 0.0);
    }
    SUBCASE("no observed cells") {
      auto empty = make_sparse(hist, {0.0, 0.0}, 1, 2);
      const SparseODTensor* ep[] = {&empty};
      Var ps[] = {t.constant(DenseTensor({1, 2, 2}, 0.9))};
      CHECK(bf_loss(ps, ep, fs, 0.0).value()[0] == 0.0);
    }
    SUBCASE("single observed cell") {
      Var ps[] = {t.constant(DenseTensor({1, 2, 2}, std::vector<double>{0.6, 0.4, 0.0, 1.0}))};
      const double lambda = 0.1;
      const double data = (0.3 - 0.6) * (0.3 - 0.6) + (0.7 - 0.4) * (0.7 - 0.4);
      const double reg = lambda * (0.25 + 1.0) + lambda * (4.0 + 0.0 + 1.0 + 9.0);
      CHECK(bf_loss(ps, tp, fs, lambda).value()[0] == doctest::Approx(data + reg).epsilon(1e-14));
    }
  }

  TEST_CASE("bf loss gradient on a 2x2x2 instance") {
    auto ds = testing::toy_dataset(2, 2, 2, 20, 3, 0.2);
    BFModel m({2, 2, 2}, {2, 2, 1}, 4);
    auto r = testing::model_gradcheck(m, ds, 2, 1, 1e-3);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter, " ", r.max_relative_error);
  }

  TEST_CASE("bf end-to-end gradient on N = N' = 3, K = 2, beta = 2") {
    auto ds = testing::toy_dataset(3, 3, 2, 20, 9, 0.3);
    BFModel m({3, 3, 2}, {2, 2, 1}, 11);
    auto r = testing::model_gradcheck(m, ds, 2, 1, 1e-3);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter, " ", r.max_relative_error);
    SUBCASE("and with a two-step horizon") {
      BFModel m2({3, 3, 2}, {2, 2, 2}, 12);
      auto r2 = testing::model_gradcheck(m2, ds, 2, 2, 1e-3);
      CHECK_MESSAGE(r2.max_relative_error < 1e-4, r2.worst_parameter, " ", r2.worst_index, " ", r2.worst_analytic, " ", r2.worst_numeric);
    }
  }

  TEST_CASE("bf parameter count equals the closed-form sum") {
    const std::size_t N = 2, Np = 2, K = 2, B = 1, H = 2;
    BFModel m({N, Np, K}, {B, H, 1}, 1);
    const std::size_t l = N * Np * K, rd = N * B * K, cd = Np * B * K;
    auto gru = [&](std::size_t in) { return 3 * (H * (in + H) + H); };
    auto stream = [&](std::size_t d) { return 2 * gru(d) + d * H + d; };
    const std::size_t expected = (rd * l + rd) + (cd * l + cd) + stream(rd) + stream(cd);
    CHECK(param_count(m) == expected);
    CHECK(param_count(m) == 264);
  }

  TEST_CASE("predictions are valid histograms") {
    auto ds = testing::toy_dataset(3, 4, 3, 20);
    BFModel m({3, 4, 3}, {}, 2);
    auto w = testing::window_ptrs(ds, 0, 3, 2);
    Tape t;
    ForwardOptions o;
    o.horizon = 2;
    auto res = m.forward(t, w.inputs, {}, o);
    CHECK_FALSE(res.has_loss);
    REQUIRE(res.predictions.size() == 2);
    for (const auto& p : res.predictions) {
      const auto& v = p.value();
      for (std::size_t cell = 0; cell < 12; ++cell) {
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += v[cell * 3 + k];
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
    }
  }

  TEST_CASE("mismatched window shapes are rejected") {
    auto ds = testing::toy_dataset(3, 3, 2, 10);
    BFModel m({2, 3, 2}, {}, 1);
    auto w = testing::window_ptrs(ds, 0, 2, 1);
    Tape t;
    ForwardOptions o;
    CHECK_THROWS_AS(m.forward(t, w.inputs, w.targets, o), ShapeError);
  }
}
