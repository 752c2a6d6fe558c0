// Copyright 2026 The idealmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "doctest.h"

#include "idealmix/json_io.hpp"
#include "idealmix/model.hpp"
#include "support.hpp"

using namespace idealmix;
namespace t = idealmix::testing;

namespace {

// Scalar loops, no Eigen products.
std::vector<double> naive_forward(const ModelState& model, const std::vector<double>& x) {
  std::vector<double> a = x;
  const std::size_t layers = model.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const MatrixXd& w = model.weights[l];
    std::vector<double> in = a;
    if (model.spec.bias == BiasMode::kFolded) in.push_back(1.0);
    std::vector<double> z(static_cast<std::size_t>(w.rows()), 0.0);
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) z[i] += w(i, j) * in[static_cast<std::size_t>(j)];
    if (l + 1 < layers) {
      for (double& v : z) {
        if (model.spec.activation == Activation::kTanh) v = std::tanh(v);
        if (model.spec.activation == Activation::kRelu) v = v > 0 ? v : 0.0;
      }
      a = z;
    } else {
      double mx = z[0];
      for (double v : z) mx = std::max(mx, v);
      double s = 0.0;
      for (double& v : z) s += (v = std::exp(v - mx));
      for (double& v : z) v /= s;
      return z;
    }
  }
  return a;
}

std::vector<ModelSpec> model_families() {
  return {ModelSpec::logistic(3, 4, 0.0), ModelSpec::logistic(5, 2, 0.1),
          ModelSpec::mlp(3, {4}, 3, Activation::kTanh, 0.05),
          ModelSpec::mlp(4, {5, 3}, 3, Activation::kTanh, 0.0),
          ModelSpec::mlp(3, {6}, 2, Activation::kRelu, 0.02)};
}

ModelSpec binary_unbiased() {
  ModelSpec spec = ModelSpec::logistic(1, 2, 0.0);
  spec.bias = BiasMode::kNone;
  return spec;
}

std::vector<Example> single_positive() { return {Example{VectorXd::Ones(1), 1}}; }

std::vector<Example> separable(Rng& rng, std::size_t n) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    VectorXd x(2);
    x << (y ? 2.0 : -2.0) + 0.3 * rng.normal(), 0.5 * rng.normal();
    out.push_back({x, y});
  }
  return out;
}

std::vector<Example> xor_set() {
  std::vector<Example> out;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) out.push_back({(VectorXd(2) << a, b).finished(), a ^ b});
  return out;
}

}  // namespace

TEST_SUITE("model spec") {
  TEST_CASE("parameter layout") {
    const auto spec = ModelSpec::mlp(3, {4}, 2, Activation::kTanh, 0.1);
    CHECK(spec.num_layers() == 2);
    CHECK(spec.layer_param_count(0) == 16);
    CHECK(spec.layer_param_count(1) == 10);
    CHECK(spec.layer_offset(1) == 16);
    CHECK(spec.num_params() == 26);
  }

  TEST_CASE("validation") {
    ModelSpec broken = ModelSpec::mlp(3, {4}, 2, Activation::kTanh, 0.1);
    broken.layers[1].in = 5;
    CHECK_THROWS_AS(broken.validate(), Error);
    CHECK_THROWS_AS(ModelSpec::logistic(3, 1, 0.0).validate(), Error);
    CHECK_THROWS_AS(ModelSpec::logistic(3, 2, -1.0).validate(), Error);
  }

  TEST_CASE("flat round trip") {
    Rng rng(1);
    const auto spec = ModelSpec::mlp(3, {4}, 2, Activation::kTanh, 0.1);
    const VectorXd theta = t::random_vector(rng, spec.num_params());
    CHECK(ModelState::from_flat(spec, theta).flat() == theta);
    CHECK_THROWS_AS(ModelState::from_flat(spec, VectorXd::Zero(3)), Error);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("zero weights predict uniformly") {
    const auto model = ModelState::zeros(ModelSpec::logistic(3, 5, 0.0));
    const VectorXd p = forward(model, VectorXd::Constant(3, 7.0));
    CHECK((p.array() - 0.2).abs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("a dominant logit saturates") {
    auto model = ModelState::zeros(ModelSpec::logistic(2, 3, 0.0));
    model.weights[0](0, 2) = 50.0;  // bias column of class 0
    CHECK(forward(model, VectorXd::Zero(2))(0) >= 1 - 1e-6);
  }

  TEST_CASE("matches a scalar reference implementation") {
    Rng rng(2);
    for (const auto& spec : model_families()) {
      const auto model = t::random_model(spec, rng, 1.0);
      for (int k = 0; k < 5; ++k) {
        const VectorXd x = t::random_vector(rng, spec.input_dim());
        const VectorXd p = forward(model, x);
        const auto want = naive_forward(model, std::vector<double>(x.data(), x.data() + x.size()));
        CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
        CHECK(p.minCoeff() >= 0.0);
        for (Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(want[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("wrong input length") {
    const auto model = ModelState::zeros(ModelSpec::logistic(3, 2, 0.0));
    CHECK_THROWS_AS(forward(model, VectorXd::Zero(4)), Error);
  }
}

TEST_SUITE("loss") {
  TEST_CASE("zero weights give ln k") {
    Rng rng(3);
    const auto data = t::random_examples(rng, 20, 3, 4);
    CHECK(loss(ModelState::zeros(ModelSpec::logistic(3, 4, 0.0)), data) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }

  TEST_CASE("binary logistic at zero is ln 2") {
    CHECK(loss(ModelState::zeros(binary_unbiased()), single_positive()) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }

  TEST_CASE("near-perfect predictor has near-zero loss") {
    ModelState model = ModelState::zeros(binary_unbiased());
    model.weights[0] << -20.0, 20.0;
    std::vector<Example> data{{VectorXd::Ones(1), 1}, {-VectorXd::Ones(1), 0}};
    CHECK(loss(model, data) <= 1e-6);
  }

  TEST_CASE("mean of per-example losses plus regularizer") {
    Rng rng(4);
    const auto spec = ModelSpec::mlp(3, {4}, 3, Activation::kTanh, 0.3);
    const auto model = t::random_model(spec, rng);
    const auto data = t::random_examples(rng, 9, 3, 3);
    double sum = 0.0;
    for (const auto& e : data) sum += -std::log(forward(model, e.x)(e.y));
    const double want = sum / 9.0 + 0.15 * model.flat().squaredNorm();
    CHECK(loss(model, data) == doctest::Approx(want).epsilon(1e-13));
    CHECK(loss(model, data, Regularization::kExclude) == doctest::Approx(sum / 9.0).epsilon(1e-13));
  }

  TEST_CASE("invalid datasets") {
    const auto model = ModelState::zeros(ModelSpec::logistic(2, 2, 0.0));
    CHECK_THROWS_AS(loss(model, std::vector<Example>{}), Error);
    CHECK_THROWS_AS(loss(model, std::vector<Example>{{VectorXd::Zero(2), 2}}), Error);
    try {
      loss(model, std::vector<Example>{{VectorXd::Zero(3), 0}});
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDimensionMismatch);
    }
  }
}

TEST_SUITE("grad") {
  TEST_CASE("binary logistic closed form") {
    const Gradient g = grad(ModelState::zeros(binary_unbiased()), single_positive());
    CHECK(g.flat(0) == doctest::Approx(0.5));
    CHECK(g.flat(1) == doctest::Approx(-0.5));
  }

  TEST_CASE("matches central finite differences for every family") {
    Rng rng(5);
    for (const auto& spec : model_families()) {
      for (int trial = 0; trial < 3; ++trial) {
        const auto model = t::random_model(spec, rng);
        const auto data = t::random_examples(rng, 12, spec.input_dim(), spec.num_classes());
        const VectorXd g = grad(model, data).flat;
        INFO("params " << spec.num_params());
        CHECK(t::rel_inf_error(g, t::fd_gradient(model, data)) <= 1e-5);
      }
    }
  }

  TEST_CASE("weighted batch gradient matches finite differences") {
    Rng rng(6);
    const auto spec = ModelSpec::logistic(3, 3, 0.05);
    const auto model = t::random_model(spec, rng);
    const auto data = t::random_examples(rng, 10, 3, 3);
    VectorXd w(10);
    for (Index i = 0; i < 10; ++i) w(i) = 0.02 + 0.2 * rng.uniform();
    const Batch batch = make_batch(data, w);
    const VectorXd theta = model.flat();
    VectorXd fd(theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
      VectorXd p = theta, m = theta;
      p(i) += 1e-5;
      m(i) -= 1e-5;
      fd(i) = (loss(ModelState::from_flat(spec, p), batch) -
               loss(ModelState::from_flat(spec, m), batch)) / 2e-5;
    }
    CHECK(t::rel_inf_error(grad(model, batch).flat, fd) <= 1e-5);
  }

  TEST_CASE("captures reproduce the data gradient") {
    Rng rng(7);
    for (const auto& spec : model_families()) {
      const auto model = t::random_model(spec, rng);
      const auto data = t::random_examples(rng, 15, spec.input_dim(), spec.num_classes());
      const Gradient g = grad(model, data, Regularization::kExclude);
      REQUIRE(g.captures.size() == spec.num_layers());
      VectorXd rebuilt = VectorXd::Zero(spec.num_params());
      for (const auto& cap : g.captures) {
        CHECK(cap.inputs.cols() == 15);
        CHECK(cap.inputs.rows() == spec.weight_cols(cap.layer_index));
        CHECK(cap.errors.rows() == spec.weight_rows(cap.layer_index));
        MatrixXd sum = MatrixXd::Zero(cap.errors.rows(), cap.inputs.rows());
        for (Index n = 0; n < 15; ++n) sum += cap.errors.col(n) * cap.inputs.col(n).transpose();
        sum /= 15.0;
        rebuilt.segment(spec.layer_offset(cap.layer_index), sum.size()) =
            Eigen::Map<const VectorXd>(sum.data(), sum.size());
      }
      CHECK((rebuilt - g.flat).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }

  TEST_CASE("per-example capture equals that example's gradient") {
    Rng rng(8);
    const auto spec = ModelSpec::mlp(3, {4}, 3, Activation::kTanh, 0.0);
    const auto model = t::random_model(spec, rng);
    const auto data = t::random_examples(rng, 4, 3, 3);
    const Gradient all = grad(model, data);
    for (Index n = 0; n < 4; ++n) {
      const Gradient one = grad(model, ExampleSpan(&data[static_cast<std::size_t>(n)], 1));
      for (const auto& cap : all.captures) {
        const MatrixXd outer = cap.errors.col(n) * cap.inputs.col(n).transpose();
        const VectorXd want = one.flat.segment(spec.layer_offset(cap.layer_index), outer.size());
        CHECK((Eigen::Map<const VectorXd>(outer.data(), outer.size()) - want)
                  .cwiseAbs()
                  .maxCoeff() <= 1e-8);
      }
    }
  }
}

TEST_SUITE("exact_hessian") {
  TEST_CASE("binary logistic closed form") {
    const MatrixXd h = exact_hessian(ModelState::zeros(binary_unbiased()), single_positive());
    CHECK(h(1, 1) == doctest::Approx(0.25));
    CHECK(h(0, 0) == doctest::Approx(0.25));
    CHECK(h(0, 1) == doctest::Approx(-0.25));
  }

  TEST_CASE("regularizer alone gives l2 I") {
    Rng rng(9);
    const auto spec = ModelSpec::mlp(2, {3}, 2, Activation::kTanh, 0.37);
    const auto data = t::random_examples(rng, 3, 2, 2);
    const Batch batch = make_batch(data, VectorXd::Zero(3));
    const MatrixXd h = exact_hessian(t::random_model(spec, rng), batch);
    CHECK((h - 0.37 * MatrixXd::Identity(spec.num_params(), spec.num_params()))
              .cwiseAbs()
              .maxCoeff() <= 1e-14);
  }

  TEST_CASE("matches finite differences of the gradient and is symmetric") {
    Rng rng(10);
    for (const auto& spec : model_families()) {
      if (spec.activation == Activation::kRelu) continue;  // piecewise linear: FD straddles kinks
      const auto model = t::random_model(spec, rng);
      const auto data = t::random_examples(rng, 10, spec.input_dim(), spec.num_classes());
      const MatrixXd h = exact_hessian(model, data);
      CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
      const MatrixXd fd = t::fd_hessian(model, data);
      CHECK((h - fd).cwiseAbs().maxCoeff() <= 1e-4 * std::max(1.0, h.cwiseAbs().maxCoeff()));
    }
  }

  TEST_CASE("relu network Hessian is symmetric and matches on smooth pieces") {
    Rng rng(11);
    const auto spec = ModelSpec::mlp(3, {6}, 2, Activation::kRelu, 0.02);
    const auto model = t::random_model(spec, rng);
    const auto data = t::random_examples(rng, 10, 3, 2);
    const MatrixXd h = exact_hessian(model, data);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((h - t::fd_hessian(model, data)).cwiseAbs().maxCoeff() <= 1e-4);
  }

  TEST_CASE("parameter guard") {
    const auto spec = ModelSpec::logistic(100, 40, 0.1);  // 4040 params
    const auto data = std::vector<Example>{{VectorXd::Zero(100), 0}};
    try {
      exact_hessian(ModelState::zeros(spec), data);
      FAIL("expected refusal");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kSizeGuard);
      CHECK(std::string(e.what()).find("4040") != std::string::npos);
    }
  }
}

TEST_SUITE("train_to_convergence") {
  TEST_CASE("separable data converges below ln 2") {
    Rng rng(12);
    const auto data = separable(rng, 40);
    const auto model = train_to_convergence(ModelSpec::logistic(2, 2, 1e-2), data, {});
    CHECK(model.meta.converged);
    CHECK(model.meta.grad_norm <= 1e-6);
    CHECK(loss(model, data) < std::log(2.0));
    CHECK(grad(model, data).flat.lpNorm<Eigen::Infinity>() <= 1e-6);
  }

  TEST_CASE("XOR with a linear model ends at the uniform predictor") {
    const auto data = xor_set();
    const auto model = train_to_convergence(ModelSpec::logistic(2, 2, 1e-2), data, {});
    CHECK(model.meta.converged);
    CHECK(loss(model, data, Regularization::kExclude) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-3));
  }

  TEST_CASE("bitwise deterministic") {
    Rng rng(13);
    const auto data = t::random_examples(rng, 30, 3, 3);
    const auto spec = ModelSpec::mlp(3, {4}, 3, Activation::kTanh, 1e-2);
    TrainConfig cfg;
    cfg.seed = 77;
    const auto a = train_to_convergence(spec, data, cfg);
    const auto b = train_to_convergence(spec, data, cfg);
    CHECK(a.flat() == b.flat());
    CHECK(a.meta.iterations == b.meta.iterations);
  }

  TEST_CASE("strict convexity: different seeds reach the same optimum") {
    Rng rng(14);
    const auto data = t::random_examples(rng, 60, 4, 3);
    const auto spec = ModelSpec::logistic(4, 3, 1e-2);
    TrainConfig a_cfg, b_cfg;
    a_cfg.seed = 1;
    b_cfg.seed = 2;
    const auto a = train_to_convergence(spec, data, a_cfg);
    const auto b = train_to_convergence(spec, data, b_cfg);
    CHECK(a.meta.converged);
    CHECK(b.meta.converged);
    CHECK(a.flat() != b.flat());
    CHECK((a.flat() - b.flat()).cwiseAbs().maxCoeff() <= 1e-4);
  }

  TEST_CASE("tight tolerance is reachable") {
    Rng rng(15);
    const auto data = t::random_examples(rng, 80, 4, 3);
    TrainConfig cfg;
    cfg.tol = 1e-10;
    const auto model = train_to_convergence(ModelSpec::logistic(4, 3, 1e-2), data, cfg);
    CHECK(model.meta.converged);
  }

  TEST_CASE("iteration budget exhaustion is reported") {
    Rng rng(16);
    const auto data = t::random_examples(rng, 50, 4, 3);
    TrainConfig cfg;
    cfg.max_iters = 3;
    const auto model = train_to_convergence(ModelSpec::logistic(4, 3, 1e-2), data, cfg);
    CHECK_FALSE(model.meta.converged);
    CHECK(model.meta.iterations == 3);
  }

  TEST_CASE("loose mode runs a fixed number of steps") {
    Rng rng(17);
    const auto data = t::random_examples(rng, 50, 4, 3);
    TrainConfig cfg;
    cfg.fixed_iterations = 7;
    const auto model = train_to_convergence(ModelSpec::logistic(4, 3, 1e-2), data, cfg);
    CHECK(model.meta.iterations == 7);
  }

  TEST_CASE("non-finite loss is a numerical failure") {
    std::vector<Example> data{{(VectorXd(2) << 1.0, std::nan("")).finished(), 0},
                              {VectorXd::Ones(2), 1}};
    try {
      train_to_convergence(ModelSpec::logistic(2, 2, 1e-2), data, {});
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumericalFailure);
      CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }
  }

  TEST_CASE("initialization range") {
    const auto model = initialize(ModelSpec::mlp(5, {7}, 3, Activation::kTanh, 0.0), 3);
    CHECK(model.flat().cwiseAbs().maxCoeff() <= 0.05);
    CHECK(model.flat().cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is exact") {
    Rng rng(18);
    const auto spec = ModelSpec::mlp(3, {4}, 2, Activation::kRelu, 0.125);
    auto model = t::random_model(spec, rng);
    model.meta = {1.5e-7, 42, true};
    const Json j = Json::parse(dump_json(model_to_json(model)));
    const ModelState back = model_from_json(j);
    CHECK(back.flat() == model.flat());
    CHECK(back.spec.activation == Activation::kRelu);
    CHECK(back.spec.l2_reg == 0.125);
    CHECK(back.meta.iterations == 42);
    CHECK(back.meta.converged);
    CHECK(dump_json(model_to_json(back)) == dump_json(model_to_json(model)));
  }

  TEST_CASE("rejects foreign documents") {
    CHECK_THROWS_AS(model_from_json(Json{{"format", "other"}}), Error);
  }

  TEST_CASE("rendering is sorted with full precision") {
    const Json j = {{"b", 0.1}, {"a", 1}, {"c", std::nan("")}};
    CHECK(dump_json(j, -1) == "{\"a\":1,\"b\":0.10000000000000001,\"c\":null}");
  }
}
