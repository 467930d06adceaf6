#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "msaff/gradcheck.hpp"
#include "msaff/ops.hpp"
#include "msaff/params.hpp"
#include "oracles.hpp"

using namespace msaff;

namespace {

Tensor rand_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0, bool rg = false) {
  return Tensor::randn(std::move(shape), rng, stddev, rg);
}

}  // namespace

TEST_CASE("conv2d: ones kernel over ones input sums the window") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(9.0));
}

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
  std::mt19937_64 rng(1);
  Tensor x = rand_tensor({2, 1, 4, 5}, rng);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  REQUIRE(y.shape() == x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(y.data()[static_cast<std::size_t>(i)] == x.data()[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("conv2d matches the six-loop reference") {
  std::mt19937_64 rng(7);
  Tensor x = rand_tensor({2, 4, 8, 8}, rng);
  Tensor w = rand_tensor({8, 4, 3, 3}, rng, 0.5);
  Tensor b = rand_tensor({8}, rng, 0.5);
  for (auto [stride, padding] : {std::pair{1, 0}, std::pair{1, 1}, std::pair{2, 1}}) {
    Tensor y = conv2d(x, w, b, stride, padding);
    int oh = 0, ow = 0;
    auto bias = b.data();
    auto ref = oracle::conv2d_naive(x.data(), 2, 4, 8, 8, w.data(), 8, 3, 3, &bias, stride,
                                    padding, oh, ow);
    REQUIRE(y.shape() == Shape{2, 8, oh, ow});
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("conv2d rejects channel mismatches with the offending axes") {
  Tensor x = Tensor::zeros({1, 3, 4, 4});
  Tensor w = Tensor::zeros({2, 4, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w, Tensor(), 1, 1), ShapeError);
}

TEST_CASE("conv1d: kernel [1] is the identity") {
  std::mt19937_64 rng(2);
  Tensor x = rand_tensor({1, 1, 6}, rng);
  Tensor w = Tensor::full({1, 1, 1}, 1.0);
  Tensor y = conv1d(x, w, Tensor(), 0);
  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(y.data()[static_cast<std::size_t>(i)] == x.data()[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("conv1d: box filter by hand") {
  Tensor x = Tensor::from_data({1, 1, 3}, {1.0, 2.0, 3.0});
  Tensor w = Tensor::full({1, 1, 3}, 1.0);
  Tensor y = conv1d(x, w, Tensor(), 1);
  REQUIRE(y.shape() == Shape{1, 1, 3});
  CHECK(y.data()[0] == doctest::Approx(3.0));
  CHECK(y.data()[1] == doctest::Approx(6.0));
  CHECK(y.data()[2] == doctest::Approx(5.0));
}

TEST_CASE("conv1d matches the nested-loop reference") {
  std::mt19937_64 rng(3);
  Tensor x = rand_tensor({2, 3, 9}, rng);
  Tensor w = rand_tensor({4, 3, 3}, rng);
  Tensor b = rand_tensor({4}, rng);
  Tensor y = conv1d(x, w, b, 1);
  int ol = 0;
  auto bias = b.data();
  auto ref = oracle::conv1d_naive(x.data(), 2, 3, 9, w.data(), 4, 3, &bias, 1, ol);
  REQUIRE(y.shape() == Shape{2, 4, ol});
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv1d_same requires an odd kernel") {
  Tensor x = Tensor::zeros({1, 2, 5});
  Tensor w = Tensor::zeros({2, 2, 4});
  CHECK_THROWS_AS(conv1d_same(x, w, Tensor()), ConfigError);
}

TEST_CASE("softmax of equal logits is uniform") {
  for (int n : {2, 5, 9}) {
    Tensor x = Tensor::full({n}, 3.25);
    Tensor y = softmax(x, 0);
    for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / n));
  }
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rand_tensor({4, 7}, rng, 5.0);
    Tensor y = softmax(x, 1);
    for (int i = 0; i < 4; ++i) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) {
        const double v = y.at({i, j});
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("sigmoid(0) = 0.5") {
  Tensor y = sigmoid(Tensor::zeros({3}));
  for (double v : y.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("GAP + GMP of a constant tensor doubles it") {
  Tensor x = Tensor::full({2, 3, 4}, 1.5);
  Tensor y = add(reduce_mean(x, 2), reduce_max(x, 2));
  for (double v : y.data()) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("concat then slice along the same axis is the identity") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<int> d(1, 4);
    const int rows = d(rng), c1 = d(rng), c2 = d(rng);
    Tensor a = rand_tensor({rows, c1}, rng);
    Tensor b = rand_tensor({rows, c2}, rng);
    Tensor cat = concat({a, b}, 1);
    Tensor a2 = slice(cat, 1, 0, c1);
    Tensor b2 = slice(cat, 1, c1, c2);
    CHECK(a2.data() == a.data());
    CHECK(b2.data() == b.data());
  }
}

TEST_CASE("concat rejects ragged operands") {
  CHECK_THROWS_AS(concat({Tensor::zeros({2, 3}), Tensor::zeros({3, 3})}, 1), ShapeError);
}

TEST_CASE("axis bounds are validated") {
  Tensor x = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(softmax(x, 2), ShapeError);
  CHECK_THROWS_AS(reduce_mean(x, -1), ShapeError);
  CHECK_THROWS_AS(slice(x, 1, 2, 4), ShapeError);
}

TEST_CASE("non-finite leaf values are rejected") {
  CHECK_THROWS_AS(Tensor::from_data({2}, {1.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(
      Tensor::from_data({1}, {std::numeric_limits<double>::infinity()}), NumericError);
}

TEST_CASE("ops reject non-finite results instead of propagating them") {
  Tensor big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("backward of sum yields all-ones gradient") {
  std::mt19937_64 rng(17);
  Tensor x = rand_tensor({3, 4}, rng, 1.0, true);
  backward(sum(x));
  for (double g : x.grad().data()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of sum(sigmoid(x)) at zero is 0.25 everywhere") {
  Tensor x = Tensor::zeros({5}, true);
  backward(sum(sigmoid(x)));
  for (double g : x.grad().data()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(backward(add_scalar(x, 1.0)), UsageError);
}

TEST_CASE("graph trace visits each node exactly once") {
  Tensor x = Tensor::zeros({2}, true);
  Tensor y = add(x, x);       // diamond: x feeds both operands
  Tensor loss = sum(mul(y, y));
  Graph g = Graph::trace(loss);
  CHECK(g.node_count() == 4);  // x, add, mul, sum
  backward(loss);
  CHECK(x.grad().shape() == Shape{2});
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
  std::mt19937_64 rng_a(23), rng_b(23);
  Tensor xa = rand_tensor({2, 3, 6, 5}, rng_a);
  Tensor wa = rand_tensor({4, 3, 3, 3}, rng_a);
  Tensor xb = rand_tensor({2, 3, 6, 5}, rng_b);
  Tensor wb = rand_tensor({4, 3, 3, 3}, rng_b);
  Tensor ya = softmax(reduce_mean(conv2d(xa, wa, Tensor(), 1, 1), 3), 1);
  Tensor yb = softmax(reduce_mean(conv2d(xb, wb, Tensor(), 1, 1), 3), 1);
  REQUIRE(ya.size() == yb.size());
  CHECK(std::memcmp(ya.data().data(), yb.data().data(),
                    ya.data().size() * sizeof(double)) == 0);
}

TEST_CASE("checkpoint round-trip preserves exact bits and header layout") {
  std::mt19937_64 rng(29);
  ParameterStore store;
  store.set("alpha.w", rand_tensor({3, 4}, rng, 1.0, true));
  store.set("beta.b", rand_tensor({7}, rng, 1.0, true));
  const auto file = std::filesystem::temp_directory_path() / "msaff_ckpt_test.bin";
  store.save(file);

  // header is a single JSON line naming shapes and byte offsets
  std::ifstream in(file, std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header.find("\"msaff-checkpoint\"") != std::string::npos);
  CHECK(header.find("\"alpha.w\"") != std::string::npos);
  CHECK(header.find("\"offset\"") != std::string::npos);

  ParameterStore loaded = ParameterStore::load(file, false);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.at("alpha.w").shape() == Shape{3, 4});
  CHECK(std::memcmp(loaded.at("alpha.w").data().data(), store.at("alpha.w").data().data(),
                    12 * sizeof(double)) == 0);
  CHECK(std::memcmp(loaded.at("beta.b").data().data(), store.at("beta.b").data().data(),
                    7 * sizeof(double)) == 0);
  std::filesystem::remove(file);
}

TEST_CASE("checkpoint loader flags truncated data") {
  std::mt19937_64 rng(31);
  ParameterStore store;
  store.set("w", rand_tensor({4, 4}, rng));
  const auto file = std::filesystem::temp_directory_path() / "msaff_ckpt_trunc.bin";
  store.save(file);
  const auto size = std::filesystem::file_size(file);
  std::filesystem::resize_file(file, size - 16);
  CHECK_THROWS_AS(ParameterStore::load(file, false), DataError);
  std::filesystem::remove(file);
}

TEST_CASE("gradcheck: 50 random trials per differentiable op") {
  GradcheckOptions opt;
  opt.trials = 50;
  opt.seed = 424242;
  auto rows = run_gradcheck_suite(opt);
  CHECK(covers_manifest(rows));
  for (const auto& row : rows) {
    CAPTURE(row.component);
    CAPTURE(row.max_abs_err);
    CAPTURE(row.max_rel_err);
    CHECK(row.pass);
  }
}

TEST_CASE("gradcheck: corrupted analytic gradient fails its row") {
  GradcheckOptions opt;
  opt.trials = 2;
  opt.corrupt_component = "matmul";
  auto rows = run_gradcheck_suite(opt);
  bool matmul_failed = false;
  for (const auto& row : rows) {
    if (row.component == "matmul") matmul_failed = !row.pass;
  }
  CHECK(matmul_failed);
}
