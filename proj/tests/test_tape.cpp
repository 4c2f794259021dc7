#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "catmt/rng.hpp"
#include "catmt/tape.hpp"

using namespace catmt;
using DMat = MatT<double>;
using DTape = TapeT<double>;

namespace {

DMat random_mat(int r, int c, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  DMat m(r, c);
  for (auto& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

using BuildFn = std::function<int(DTape&, const std::vector<int>&)>;

double eval_loss(std::vector<DMat>& params, const BuildFn& build) {
  DTape tape;
  std::vector<int> ids;
  ids.reserve(params.size());
  for (auto& p : params) ids.push_back(tape.param(p, nullptr));
  return tape.value(build(tape, ids)).at(0, 0);
}

// Central finite differences against backward through `build` for every
// coordinate of every parameter.
void check_op_gradients(std::vector<DMat> params, const BuildFn& build, double eps = 1e-6,
                        double tol = 1e-6) {
  std::vector<DMat> grads;
  grads.reserve(params.size());
  for (auto& p : params) grads.push_back(DMat::zeros_like(p));
  {
    DTape tape;
    std::vector<int> ids;
    for (std::size_t i = 0; i < params.size(); ++i) ids.push_back(tape.param(params[i], &grads[i]));
    tape.backward(build(tape, ids));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t c = 0; c < params[i].data.size(); ++c) {
      const double orig = params[i].data[c];
      params[i].data[c] = orig + eps;
      const double f_plus = eval_loss(params, build);
      params[i].data[c] = orig - eps;
      const double f_minus = eval_loss(params, build);
      params[i].data[c] = orig;
      const double fd = (f_plus - f_minus) / (2.0 * eps);
      const double bp = grads[i].data[c];
      const double err = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1.0});
      INFO("param " << i << " coord " << c << " fd " << fd << " bp " << bp);
      REQUIRE(err < tol);
    }
  }
}

}  // namespace

TEST_CASE("matmul gradients match finite differences", "[tape]") {
  SplitMix64 rng(1);
  check_op_gradients({random_mat(3, 4, rng), random_mat(4, 2, rng)},
                     [](DTape& t, const std::vector<int>& p) { return t.sum(t.matmul(p[0], p[1])); });
}

TEST_CASE("matmul_nt gradients match finite differences", "[tape]") {
  SplitMix64 rng(2);
  check_op_gradients({random_mat(3, 4, rng), random_mat(5, 4, rng)},
                     [](DTape& t, const std::vector<int>& p) { return t.sum(t.matmul_nt(p[0], p[1])); });
}

TEST_CASE("add and add_rowvec gradients match finite differences", "[tape]") {
  SplitMix64 rng(3);
  check_op_gradients({random_mat(3, 4, rng), random_mat(3, 4, rng), random_mat(1, 4, rng)},
                     [](DTape& t, const std::vector<int>& p) {
                       return t.sum(t.add_rowvec(t.add(p[0], p[1]), p[2]));
                     });
}

TEST_CASE("relu gradients match finite differences away from the kink", "[tape]") {
  SplitMix64 rng(4);
  DMat x = random_mat(4, 4, rng);
  for (auto& v : x.data) {
    if (std::abs(v) < 0.05) v += 0.1;  // keep the finite difference off the kink
  }
  check_op_gradients({x}, [](DTape& t, const std::vector<int>& p) { return t.sum(t.relu(p[0])); });
}

TEST_CASE("scale gradients match finite differences", "[tape]") {
  SplitMix64 rng(5);
  check_op_gradients({random_mat(3, 3, rng)},
                     [](DTape& t, const std::vector<int>& p) { return t.sum(t.scale(p[0], 2.5)); });
}

TEST_CASE("layer_norm gradients match finite differences", "[tape]") {
  SplitMix64 rng(6);
  check_op_gradients({random_mat(3, 6, rng), random_mat(1, 6, rng, 0.5, 1.5), random_mat(1, 6, rng)},
                     [](DTape& t, const std::vector<int>& p) {
                       return t.sum(t.layer_norm(p[0], p[1], p[2]));
                     },
                     1e-6, 1e-5);
}

TEST_CASE("masked softmax gradients match finite differences", "[tape]") {
  SplitMix64 rng(7);
  std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 1, 1, 1, 0, 1, 1, 1};
  // weight the probabilities so the gradient is not identically zero
  DMat weights = random_mat(3, 4, rng);
  check_op_gradients({random_mat(3, 4, rng)}, [mask, weights](DTape& t, const std::vector<int>& p) {
    int probs = t.softmax_rows(p[0], mask);
    return t.sum(t.matmul_nt(probs, t.constant(weights)));
  });
}

TEST_CASE("fully masked softmax row is an error", "[tape]") {
  DTape tape;
  int x = tape.constant(DMat::filled(2, 2, 1.0));
  CHECK_THROWS_WITH(tape.softmax_rows(x, {0, 0, 1, 1}),
                    Catch::Matchers::ContainsSubstring("fully masked"));
}

TEST_CASE("gather_rows routes gradients to looked-up rows only", "[tape]") {
  SplitMix64 rng(8);
  DMat table = random_mat(5, 3, rng);
  check_op_gradients({table}, [](DTape& t, const std::vector<int>& p) {
    return t.sum(t.gather_rows(p[0], {0, 2, 2}));
  });

  DMat grad = DMat::zeros_like(table);
  DTape tape;
  int node = tape.param(table, &grad);
  tape.backward(tape.sum(tape.gather_rows(node, {1})));
  for (int j = 0; j < 3; ++j) {
    CHECK(grad.at(1, j) == 1.0);
    CHECK(grad.at(0, j) == 0.0);  // untouched rows stay exactly zero
    CHECK(grad.at(4, j) == 0.0);
  }
}

TEST_CASE("concat_cols gradients match finite differences", "[tape]") {
  SplitMix64 rng(9);
  check_op_gradients({random_mat(3, 2, rng), random_mat(3, 3, rng)},
                     [](DTape& t, const std::vector<int>& p) {
                       return t.sum(t.concat_cols({p[0], p[1]}));
                     });
}

TEST_CASE("cross_entropy_sum gradients match finite differences", "[tape]") {
  SplitMix64 rng(10);
  std::vector<int> gold{2, 0, 3, 1};  // 0 is the skipped pad row
  check_op_gradients({random_mat(4, 5, rng)}, [gold](DTape& t, const std::vector<int>& p) {
    return t.cross_entropy_sum(p[0], gold, /*skip_id=*/0);
  });
}

TEST_CASE("cross_entropy_sum counts non-pad rows and checks shapes", "[tape]") {
  DTape tape;
  int logits = tape.constant(DMat::filled(3, 4, 0.0));
  int count = -1;
  int loss = tape.cross_entropy_sum(logits, {1, 0, 2}, 0, &count);
  CHECK(count == 2);
  CHECK_THAT(tape.value(loss).at(0, 0), Catch::Matchers::WithinAbs(2.0 * std::log(4.0), 1e-12));
  CHECK_THROWS(tape.cross_entropy_sum(logits, {1, 2}, 0));
}

TEST_CASE("scaling the loss by two doubles every gradient", "[tape]") {
  SplitMix64 rng(11);
  DMat x = random_mat(3, 4, rng);
  auto run = [&](double factor) {
    DMat grad = DMat::zeros_like(x);
    DTape tape;
    int node = tape.param(x, &grad);
    int loss = tape.sum(tape.matmul_nt(node, node));
    tape.backward(tape.scale(loss, factor));
    return grad;
  };
  auto g1 = run(1.0);
  auto g2 = run(2.0);
  for (std::size_t i = 0; i < g1.data.size(); ++i) {
    CHECK_THAT(g2.data[i], Catch::Matchers::WithinRel(2.0 * g1.data[i], 1e-12));
  }
}

TEST_CASE("dropout scales kept entries and mirrors the mask in backward", "[tape]") {
  SplitMix64 rng(12);
  DMat x = DMat::filled(20, 20, 1.0);
  DMat grad = DMat::zeros_like(x);
  DTape tape;
  int node = tape.param(x, &grad);
  SplitMix64 drop_rng(99);
  int dropped = tape.dropout(node, 0.5, drop_rng);
  tape.backward(tape.sum(dropped));
  const auto& value = tape.value(dropped);
  for (std::size_t i = 0; i < value.data.size(); ++i) {
    CHECK((value.data[i] == 0.0 || value.data[i] == 2.0));
    CHECK(grad.data[i] == value.data[i]);  // same mask, same scale
  }
}

TEST_CASE("backward requires a scalar node", "[tape]") {
  DTape tape;
  int x = tape.constant(DMat::filled(2, 2, 1.0));
  CHECK_THROWS(tape.backward(x));
}
