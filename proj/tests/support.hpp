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

#ifndef IDEALMIX_TESTS_SUPPORT_HPP_
#define IDEALMIX_TESTS_SUPPORT_HPP_

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "idealmix/model.hpp"
#include "idealmix/rng.hpp"

namespace idealmix::testing {

inline MatrixXd random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline VectorXd random_vector(Rng& rng, Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale);
}

inline MatrixXd random_symmetric(Rng& rng, Index n) {
  const MatrixXd a = random_matrix(rng, n, n);
  return (a + a.transpose()) / 2.0;
}

inline std::vector<Example> random_examples(Rng& rng, std::size_t count, Index features,
                                            Index classes, double scale = 1.0) {
  std::vector<Example> out(count);
  for (auto& e : out) {
    e.x = random_vector(rng, features, scale);
    e.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  }
  return out;
}

inline ModelState random_model(const ModelSpec& spec, Rng& rng, double scale = 0.5) {
  return ModelState::from_flat(spec, random_vector(rng, spec.num_params(), scale));
}

inline double rel_inf_error(const VectorXd& got, const VectorXd& want) {
  return (got - want).lpNorm<Eigen::Infinity>() /
         std::max(1e-300, want.lpNorm<Eigen::Infinity>());
}

/// Central finite differences of the regularized loss.
inline VectorXd fd_gradient(const ModelState& model, ExampleSpan data, double h = 1e-5,
                            Regularization reg = Regularization::kInclude) {
  const VectorXd theta = model.flat();
  VectorXd out(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    VectorXd p = theta, m = theta;
    p(i) += h;
    m(i) -= h;
    out(i) = (loss(ModelState::from_flat(model.spec, p), data, reg) -
              loss(ModelState::from_flat(model.spec, m), data, reg)) /
             (2.0 * h);
  }
  return out;
}

/// Central finite differences of the analytic gradient, column by column.
inline MatrixXd fd_hessian(const ModelState& model, ExampleSpan data, double h = 1e-5) {
  const VectorXd theta = model.flat();
  MatrixXd out(theta.size(), theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    VectorXd p = theta, m = theta;
    p(i) += h;
    m(i) -= h;
    out.col(i) = (grad(ModelState::from_flat(model.spec, p), data).flat -
                  grad(ModelState::from_flat(model.spec, m), data).flat) /
                 (2.0 * h);
  }
  return out;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("idealmix_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace idealmix::testing

#endif  // IDEALMIX_TESTS_SUPPORT_HPP_
