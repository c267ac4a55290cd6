#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mmfl/network.hpp"
#include "oracles.hpp"

using namespace mmfl;

namespace {

LayerSpec dense(Index in, Index out, Activation a = Activation::identity, std::string prefix = "l0") {
  return {in, out, a, 0.01, std::move(prefix)};
}

Network<double> identity_net(Activation a) {
  auto net = init_network<double>({dense(2, 2, a)}, 1);
  net.params.at("l0.weight") = Tensord({2, 2}, {1, 0, 0, 1});
  return net;
}

}  // namespace

TEST_CASE("init_network lays out weight and zero bias per layer") {
  const auto net = init_network<double>({dense(2, 3, Activation::relu, "img.enc.0")}, 42);
  REQUIRE(net.params.size() == 2);
  CHECK(net.params.at("img.enc.0.weight").shape() == Shape{2, 3});
  CHECK(net.params.at("img.enc.0.bias").shape() == Shape{3});
  CHECK(net.params.at("img.enc.0.bias").data().isZero(0.0));

  const double bound = std::sqrt(6.0 / 5.0);
  CHECK(net.params.at("img.enc.0.weight").data().cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("init_network is deterministic under its seed") {
  const std::vector<LayerSpec> layers{dense(4, 8, Activation::relu, "a"), dense(8, 3, Activation::softmax, "b")};
  CHECK(init_network<double>(layers, 9).params == init_network<double>(layers, 9).params);
  CHECK_FALSE(init_network<double>(layers, 9).params == init_network<double>(layers, 10).params);
}

TEST_CASE("init_network rejects a broken dimension chain") {
  CHECK_THROWS_AS(init_network<double>({dense(4, 8, Activation::relu, "a"), dense(7, 3, Activation::identity, "b")}, 1),
                  ConfigError);
  CHECK_THROWS_AS(init_network<double>({LayerSpec{2, 2, Activation::leaky_relu, 1.5, "x"}}, 1), ConfigError);
}

TEST_CASE("forward applies the documented activations") {
  SUBCASE("identity") {
    auto [out, tape] = forward(identity_net(Activation::identity), Tensord({1, 2}, {1, 2}));
    CHECK(out == Tensord({1, 2}, {1, 2}));
  }
  SUBCASE("relu") {
    auto [out, tape] = forward(identity_net(Activation::relu), Tensord({1, 2}, {-1, 2}));
    CHECK(out == Tensord({1, 2}, {0, 2}));
  }
  SUBCASE("leaky relu") {
    auto [out, tape] = forward(identity_net(Activation::leaky_relu), Tensord({1, 2}, {-1, 2}));
    CHECK(out.data()[0] == doctest::Approx(-0.01).epsilon(1e-15));
    CHECK(out.data()[1] == 2.0);
  }
  SUBCASE("wrong input width") {
    CHECK_THROWS_AS(forward(identity_net(Activation::relu), Tensord({1, 3})), ShapeError);
  }
}

TEST_CASE("softmax rows") {
  auto third = softmax(Tensord({1, 3}, {0, 0, 0}));
  for (Index i = 0; i < 3; ++i) CHECK(third.data()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto saturated = softmax(Tensord({1, 2}, {1000, 0}));
  CHECK(saturated.all_finite());
  CHECK(std::abs(saturated.data()[0] - 1.0) < 1e-12);
  CHECK(std::abs(saturated.data()[1]) < 1e-12);

  auto ln2 = softmax(Tensord({1, 2}, {std::log(2.0), 0}));
  CHECK(std::abs(ln2.data()[0] - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(ln2.data()[1] - 1.0 / 3.0) < 1e-15);

  std::mt19937_64 rng(3);
  const RowMatrixd logits = oracle::random_matrix(rng, 5, 7, 300.0);
  const RowMatrixd p = softmax(logits);
  CHECK(p.allFinite());
  CHECK((p.array() >= 0.0).all());
  for (Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("backward of zero output gradient is zero") {
  std::mt19937_64 rng(5);
  const auto net = fixtures::random_network(rng);
  const Tensord x = Tensord::from_matrix(oracle::random_matrix(rng, 3, net.layers.front().in_dim));
  auto [out, tape] = forward(net, x);
  const auto result = backward(net, tape, Tensord(out.shape()));
  for (const auto& [key, g] : result.grads) CHECK(g.data().isZero(0.0));
}

TEST_CASE("backward of sum(xW + b) has closed form") {
  auto net = init_network<double>({dense(3, 2)}, 11);
  const RowMatrixd x{{1.0, -2.0, 0.5}, {3.0, 0.25, -1.0}};
  auto [out, tape] = forward(net, Tensord::from_matrix(x));
  Tensord ones(out.shape());
  ones.data().setOnes();
  const auto result = backward(net, tape, ones);

  const auto& db = result.grads.at("l0.bias");
  CHECK(db.data()[0] == 2.0);  // one per batch row
  CHECK(db.data()[1] == 2.0);
  const auto dw = result.grads.at("l0.weight").matrix();
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j) CHECK(dw(i, j) == doctest::Approx(x.col(i).sum()).epsilon(1e-15));
}

TEST_CASE("analytic gradients match central differences on random nets") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const auto net = fixtures::random_network(rng);
    const RowMatrixd x = oracle::random_matrix(rng, 4, net.layers.front().in_dim);
    const RowMatrixd weights = oracle::random_matrix(rng, 4, net.layers.back().out_dim);
    auto loss = [&](const ParameterMapd& p) {
      auto tape = forward(std::span<const LayerSpec>(net.layers), p, x);
      return (tape.output.array() * weights.array()).sum();
    };
    auto tape = forward(std::span<const LayerSpec>(net.layers), net.params, x);
    const auto analytic = backward(std::span<const LayerSpec>(net.layers), net.params, tape, weights);
    const auto numeric = oracle::finite_differences(loss, net.params);
    CHECK(oracle::max_relative_error(analytic.grads, numeric) < 1e-4);

    auto input_loss = [&](const RowMatrixd& xi) {
      return (forward(std::span<const LayerSpec>(net.layers), net.params, xi).output.array() * weights.array()).sum();
    };
    CHECK(oracle::max_relative_error(analytic.input_grad, oracle::finite_differences(input_loss, x)) < 1e-4);
  }
}

TEST_CASE("backward rejects a tape from another network") {
  std::mt19937_64 rng(8);
  auto a = init_network<double>({dense(2, 3, Activation::relu, "a"), dense(3, 2, Activation::identity, "b")}, 1);
  auto b = init_network<double>({dense(2, 2, Activation::identity, "a")}, 1);
  auto [out, tape] = forward(a, Tensord({1, 2}, {1, 1}));
  CHECK_THROWS_AS(backward(b, tape, Tensord({1, 2})), InvariantError);
}

TEST_CASE("sgd_step") {
  const ParameterMapd params{{"w", Tensord({1}, {1.0})}};
  const ParameterMapd grads{{"w", Tensord({1}, {2.0})}};
  CHECK(sgd_step(params, grads, 0.0) == params);
  CHECK(sgd_step(params, grads, 0.5) == ParameterMapd{{"w", Tensord({1}, {0.0})}});
  CHECK(params.at("w").data()[0] == 1.0);

  CHECK_THROWS_AS(sgd_step(params, ParameterMapd{}, 0.1), CompatibilityError);
  CHECK_THROWS_AS(sgd_step(params, ParameterMapd{{"w", Tensord({2}, {1.0, 1.0})}}, 0.1), CompatibilityError);
}

TEST_CASE("tensor guards its shape") {
  CHECK_THROWS_AS(Tensord({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensord(Shape{0, 3}), ShapeError);
  ParameterMapd m;
  m.insert("a", Tensord({1}));
  CHECK_THROWS_AS(m.insert("a", Tensord({1})), CompatibilityError);
  CHECK_THROWS_AS(m.at("missing"), CompatibilityError);
}
