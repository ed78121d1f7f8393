#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "gs/checkpoint.hpp"
#include "gs/ops.hpp"
#include "gs/optim.hpp"
#include "gs/rng.hpp"
#include "testutil.hpp"

using namespace gs;
using gstest::gradcheck;
using gstest::project_to_scalar;
using gstest::rand_tensor;

namespace {
constexpr double kGradTol = 1e-5;
}

TEST_CASE("elementwise binary ops: values and gradients") {
  Rng rng(11);
  Tensor a = rand_tensor(rng, {3, 4}, -2.0, 2.0);
  Tensor b = rand_tensor(rng, {3, 4}, 0.5, 2.0);

  CHECK(add(a, b).at(1, 2) == doctest::Approx(a.at(1, 2) + b.at(1, 2)));
  CHECK(sub(a, b).at(2, 3) == doctest::Approx(a.at(2, 3) - b.at(2, 3)));
  CHECK(mul(a, b).at(0, 1) == doctest::Approx(a.at(0, 1) * b.at(0, 1)));
  CHECK(div(a, b).at(1, 0) == doctest::Approx(a.at(1, 0) / b.at(1, 0)));

  CHECK(gradcheck({a, b}, [&] { return project_to_scalar(add(a, b), 1); }) < kGradTol);
  CHECK(gradcheck({a, b}, [&] { return project_to_scalar(sub(a, b), 2); }) < kGradTol);
  CHECK(gradcheck({a, b}, [&] { return project_to_scalar(mul(a, b), 3); }) < kGradTol);
  CHECK(gradcheck({a, b}, [&] { return project_to_scalar(div(a, b), 4); }) < kGradTol);
}

TEST_CASE("broadcast add/mul over trailing dims") {
  Rng rng(12);
  Tensor x = rand_tensor(rng, {5, 3}, -1.0, 1.0);
  Tensor row = rand_tensor(rng, {3}, -1.0, 1.0);
  Tensor col = rand_tensor(rng, {5, 1}, 0.5, 1.5);

  Tensor y = add(x, row);
  CHECK(y.at(2, 1) == doctest::Approx(x.at(2, 1) + row.data()[1]));
  Tensor z = mul(x, col);
  CHECK(z.at(4, 2) == doctest::Approx(x.at(4, 2) * col.data()[4]));

  CHECK(gradcheck({x, row}, [&] { return project_to_scalar(add(x, row), 5); }) < kGradTol);
  CHECK(gradcheck({x, col}, [&] { return project_to_scalar(mul(x, col), 6); }) < kGradTol);
  CHECK(gradcheck({x, row, col}, [&] {
          return project_to_scalar(div(add(x, row), col), 7);
        }) < kGradTol);
}

TEST_CASE("broadcast rejects mismatched shapes") {
  Tensor a = Tensor::zeros({3, 4});
  Tensor b = Tensor::zeros({3, 5});
  CHECK_THROWS(add(a, b));
}

TEST_CASE("unary ops: gradients at generic points") {
  Rng rng(13);
  Tensor x = rand_tensor(rng, {4, 5}, 0.3, 2.0);  // positive, away from kinks
  Tensor s = rand_tensor(rng, {4, 5}, -2.0, 2.0);

  CHECK(gradcheck({s}, [&] { return project_to_scalar(relu(addc(s, 3.0)), 1); }) < kGradTol);
  CHECK(gradcheck({s}, [&] { return project_to_scalar(gelu(s), 2); }) < kGradTol);
  CHECK(gradcheck({s}, [&] { return project_to_scalar(gs::exp(s), 3); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return project_to_scalar(gs::log(x), 4); }) < kGradTol);
  CHECK(gradcheck({s}, [&] { return project_to_scalar(sigmoid(s), 5); }) < kGradTol);
  CHECK(gradcheck({s}, [&] { return project_to_scalar(softplus(s), 6); }) < kGradTol);
  CHECK(gradcheck({s}, [&] { return project_to_scalar(gs::tanh(s), 7); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return project_to_scalar(gs::sqrt(x), 8); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return project_to_scalar(gs::abs(x), 9); }) < kGradTol);
  CHECK(gradcheck({s}, [&] { return project_to_scalar(affine(s, 2.5, -0.75), 10); }) < kGradTol);
}

TEST_CASE("clamp passes gradient only inside the band") {
  Tensor x = Tensor::from_data({3}, {-1.0, 0.25, 2.0}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = clamp(x, 0.0, 1.0);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 0.25);
    CHECK(y.data()[2] == 1.0);
    tape.backward(sum(y));
  }
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("softmax values and gradient") {
  Tensor x = Tensor::from_data({2}, {0.0, std::log(2.0)}, true);
  Tensor y = softmax(x, 0);
  CHECK(y.data()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  Rng rng(14);
  Tensor a = rand_tensor(rng, {3, 6}, -3.0, 3.0);
  for (int64_t axis : {0, 1}) {
    CHECK(gradcheck({a}, [&, axis] { return project_to_scalar(softmax(a, axis), 20 + axis); }) <
          kGradTol);
    Tensor sm = softmax(a, axis);
    Tensor tot = sum_axis(sm, axis);
    for (double v : tot.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : sm.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("softmax rank-3 over middle axis") {
  Rng rng(15);
  Tensor a = rand_tensor(rng, {2, 4, 3}, -2.0, 2.0);
  CHECK(gradcheck({a}, [&] { return project_to_scalar(softmax(a, 1), 30); }) < kGradTol);
}

TEST_CASE("matmul and transpose") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8}, true);
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);

  Rng rng(16);
  Tensor m = rand_tensor(rng, {3, 4}, -1.0, 1.0);
  Tensor n = rand_tensor(rng, {4, 5}, -1.0, 1.0);
  CHECK(gradcheck({m, n}, [&] { return project_to_scalar(matmul(m, n), 40); }) < kGradTol);
  CHECK(gradcheck({m}, [&] { return project_to_scalar(transpose(m), 41); }) < kGradTol);
  CHECK(transpose(m).at(2, 1) == m.at(1, 2));
  CHECK_THROWS(matmul(m, m));
}

TEST_CASE("conv2d identity kernel reproduces input") {
  Rng rng(17);
  Tensor x = rand_tensor(rng, {2, 5, 7}, -1.0, 1.0, false);
  Tensor w = Tensor::zeros({2, 2, 3, 3});
  // center tap of the matching channel
  w.data()[(0 * 2 + 0) * 9 + 4] = 1.0;
  w.data()[(1 * 2 + 1) * 9 + 4] = 1.0;
  Tensor b = Tensor::zeros({2});
  Tensor y = conv2d(x, w, b, 1);
  REQUIRE(y.shape() == Shape{2, 5, 7});
  for (size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("conv2d gradients, stride 1 and 2") {
  Rng rng(18);
  for (int64_t stride : {1, 2}) {
    Tensor x = rand_tensor(rng, {2, 5, 6}, -1.0, 1.0);
    Tensor w = rand_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5);
    Tensor b = rand_tensor(rng, {3}, -0.5, 0.5);
    Tensor y = conv2d(x, w, b, stride);
    CHECK(y.dim(1) == (stride == 1 ? 5 : 3));
    CHECK(y.dim(2) == (stride == 1 ? 6 : 3));
    CHECK(gradcheck({x, w, b}, [&, stride] {
            return project_to_scalar(conv2d(x, w, b, stride), 50 + stride);
          }) < kGradTol);
  }
}

TEST_CASE("layernorm normalizes rows and gradchecks") {
  Rng rng(19);
  Tensor x = rand_tensor(rng, {4, 8}, -2.0, 2.0);
  Tensor g = rand_tensor(rng, {8}, 0.5, 1.5);
  Tensor b = rand_tensor(rng, {8}, -0.5, 0.5);
  Tensor ones = Tensor::full({8}, 1.0);
  Tensor zero = Tensor::zeros({8});
  Tensor y = layernorm(x, ones, zero);
  for (int64_t r = 0; r < 4; ++r) {
    double mu = 0.0, var = 0.0;
    for (int64_t c = 0; c < 8; ++c) mu += y.at(r, c);
    mu /= 8.0;
    for (int64_t c = 0; c < 8; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
    var /= 8.0;
    CHECK(mu == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
  CHECK(gradcheck({x, g, b}, [&] { return project_to_scalar(layernorm(x, g, b), 60); }) < kGradTol);
}

TEST_CASE("bilinear_sample midpoint and border semantics") {
  Tensor f = Tensor::from_data({1, 2, 2}, {0, 1, 2, 3});
  Tensor pts = Tensor::from_data(
      {4, 2}, {0.5, 0.5,      // cell midpoint
               -5.0, -5.0,    // far outside: zero
               -0.5, 0.0,     // half outside: only x=0 column contributes
               1.0, 1.0});    // exact corner
  Tensor y = bilinear_sample(f, pts);
  CHECK(y.at(0, 0) == doctest::Approx(1.5));
  CHECK(y.at(1, 0) == 0.0);
  CHECK(y.at(2, 0) == doctest::Approx(0.5 * 0.0));
  CHECK(y.at(3, 0) == doctest::Approx(3.0));
}

TEST_CASE("bilinear_sample gradients wrt features and points") {
  Rng rng(20);
  Tensor f = rand_tensor(rng, {3, 6, 7}, -1.0, 1.0);
  // interior, non-integer points plus one partially outside
  Tensor pts = Tensor::from_data({4, 2}, {1.3, 2.6, 4.2, 0.4, 5.7, 4.9, -0.6, 2.3}, true);
  CHECK(gradcheck({f, pts}, [&] { return project_to_scalar(bilinear_sample(f, pts), 70); }) <
        kGradTol);
}

TEST_CASE("reductions and reshaping") {
  Rng rng(21);
  Tensor x = rand_tensor(rng, {3, 4}, -1.0, 1.0);
  double manual = 0.0;
  for (double v : x.data()) manual += v;
  CHECK(sum(x).item() == doctest::Approx(manual));
  CHECK(mean(x).item() == doctest::Approx(manual / 12.0));

  CHECK(gradcheck({x}, [&] { return sum(x); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return mean(x); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return project_to_scalar(sum_axis(x, 0), 80); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return project_to_scalar(sum_axis(x, 1, true), 81); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return project_to_scalar(mean_axis(x, 1), 82); }) < kGradTol);
  CHECK(gradcheck({x}, [&] { return project_to_scalar(reshape(x, {2, 6}), 83); }) < kGradTol);
  CHECK(sum_axis(x, 0).shape() == Shape{4});
  CHECK(sum_axis(x, 1, true).shape() == Shape{3, 1});
  CHECK_THROWS(reshape(x, {5, 2}));
}

TEST_CASE("slice, concat, gather") {
  Rng rng(22);
  Tensor x = rand_tensor(rng, {4, 6}, -1.0, 1.0);
  Tensor y = rand_tensor(rng, {2, 6}, -1.0, 1.0);
  Tensor z = rand_tensor(rng, {4, 3}, -1.0, 1.0);

  Tensor sl = slice_cols(x, 2, 5);
  CHECK(sl.shape() == Shape{4, 3});
  CHECK(sl.at(1, 0) == x.at(1, 2));

  Tensor c0 = concat(x, y, 0);
  CHECK(c0.shape() == Shape{6, 6});
  CHECK(c0.at(4, 3) == y.at(0, 3));
  Tensor c1 = concat(x, z, 1);
  CHECK(c1.shape() == Shape{4, 9});
  CHECK(c1.at(2, 7) == z.at(2, 1));

  Tensor g = gather_rows(x, {3, 1, 1, 0});
  CHECK(g.shape() == Shape{4, 6});
  CHECK(g.at(0, 0) == x.at(3, 0));
  CHECK(g.at(1, 5) == x.at(1, 5));

  CHECK(gradcheck({x}, [&] { return project_to_scalar(slice_cols(x, 2, 5), 90); }) < kGradTol);
  CHECK(gradcheck({x, y}, [&] { return project_to_scalar(concat(x, y, 0), 91); }) < kGradTol);
  CHECK(gradcheck({x, z}, [&] { return project_to_scalar(concat(x, z, 1), 92); }) < kGradTol);
  // repeated indices must accumulate
  CHECK(gradcheck({x}, [&] { return project_to_scalar(gather_rows(x, {3, 1, 1, 0}), 93); }) <
        kGradTol);
  CHECK_THROWS(gather_rows(x, {4}));
}

TEST_CASE("diamond graph accumulates exactly once per path") {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor a = add(x, x);          // 2x
    Tensor loss = mul(a, x);       // 2x^2, d/dx = 4x = 12
    tape.backward(sum(loss));
  }
  CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("detach blocks gradient flow") {
  Tensor x = Tensor::from_data({1}, {2.0}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = mul(detach(mul(x, x)), x);  // treated as c*x with c=4
    tape.backward(sum(y));
  }
  CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("no active tape means no recording") {
  Tensor x = Tensor::from_data({1}, {2.0}, true);
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::zeros({2, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = add(x, x);
  CHECK_THROWS(tape.backward(y));
}

TEST_CASE("strict mode rejects bad domains") {
  set_strict_mode(true);
  Tensor zero = Tensor::zeros({2});
  Tensor neg = Tensor::from_data({2}, {-1.0, 1.0});
  CHECK_THROWS(gs::log(zero));
  CHECK_THROWS(gs::sqrt(neg));
  CHECK_THROWS(div(neg, zero));
}

TEST_CASE("identical seeds give bitwise identical gradients") {
  auto run = [] {
    Rng rng(123);
    Tensor a = rand_tensor(rng, {6, 6}, -1.0, 1.0);
    Tensor b = rand_tensor(rng, {6, 6}, -1.0, 1.0);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = mean(mul(matmul(a, b), sigmoid(a)));
    tape.backward(loss);
    return std::make_pair(a.grad(), b.grad());
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}

TEST_CASE("results identical across thread counts") {
  auto run = [] {
    Rng rng(321);
    Tensor a = rand_tensor(rng, {64, 64}, -1.0, 1.0);
    Tensor b = rand_tensor(rng, {64, 64}, -1.0, 1.0);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = mean(gelu(matmul(a, b)));
    tape.backward(loss);
    return std::make_tuple(loss.item(), a.grad(), b.grad());
  };
  set_num_threads(1);
  auto r1 = run();
  set_num_threads(8);
  auto r8 = run();
  set_num_threads(1);
  CHECK(std::get<0>(r1) == std::get<0>(r8));
  CHECK(std::get<1>(r1) == std::get<1>(r8));
  CHECK(std::get<2>(r1) == std::get<2>(r8));
}

TEST_CASE("memory accounting returns to baseline") {
  int64_t before = memory_stats().current_bytes;
  {
    Tensor big = Tensor::zeros({64, 64}, true);
    CHECK(memory_stats().current_bytes >= before + 64 * 64 * 8 * 2);
  }
  CHECK(memory_stats().current_bytes == before);
  CHECK(memory_stats().peak_bytes >= before + 64 * 64 * 8 * 2);
}

TEST_CASE("rng mappings are reproducible and well-distributed") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(8);
  double mean_acc = 0.0;
  int n = 20000;
  for (int i = 0; i < n; ++i) mean_acc += c.normal();
  CHECK(std::fabs(mean_acc / n) < 0.05);
  Rng d(9);
  for (int i = 0; i < 1000; ++i) {
    double u = d.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("adam single step matches closed form") {
  Tensor p = Tensor::from_data({1}, {1.0}, true);
  Adam opt({{"p", p}}, 0.1, 0.0);
  p.grad()[0] = 0.5;
  opt.step();
  double m_hat = 0.5;                 // (0.1*0.5)/(1-0.9)
  double v_hat = 0.25;                // (0.001*0.25)/(1-0.999)
  double expect = 1.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(p.data()[0] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("adam with zero grad and zero decay is a no-op") {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  Adam opt({{"p", p}}, 0.1, 0.0);
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    opt.step();
  }
  CHECK(p.data()[0] == 1.0);
  CHECK(p.data()[1] == -2.0);
  CHECK(p.data()[2] == 0.5);
}

TEST_CASE("weight decay is decoupled from the gradient path") {
  Tensor p = Tensor::from_data({1}, {2.0}, true);
  Adam opt({{"p", p}}, 0.1, 0.01);
  opt.zero_grad();
  opt.step();  // zero grad: only decay acts
  CHECK(p.data()[0] == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0).epsilon(1e-14));
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 2e-4) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(cosine_lr(100, 100, 2e-4) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_lr(50, 100, 2e-4) == doctest::Approx(1e-4).epsilon(1e-12));
  // monotone decreasing
  double prev = cosine_lr(0, 50, 1.0);
  for (int s = 1; s <= 50; ++s) {
    double cur = cosine_lr(s, 50, 1.0);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(33);
  Tensor a = rand_tensor(rng, {3, 5}, -10.0, 10.0, false);
  Tensor b = rand_tensor(rng, {7}, -1.0, 1.0, false);
  b.data()[0] = 0x1.fffffffffffffp+2;  // awkward value, must survive exactly
  std::string path = "tensors_roundtrip.bin";
  save_tensors(path, {{"weights.a", a}, {"weights.b", b}});
  auto loaded = load_tensors(path);
  REQUIRE(loaded.count("weights.a"));
  REQUIRE(loaded.count("weights.b"));
  CHECK(loaded["weights.a"].shape() == a.shape());
  CHECK(loaded["weights.a"].data() == a.data());
  CHECK(loaded["weights.b"].data() == b.data());
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects garbage") {
  std::string path = "tensors_garbage.bin";
  {
    std::ofstream f(path);
    f << "not a container";
  }
  CHECK_THROWS(load_tensors(path));
  std::remove(path.c_str());
  CHECK_THROWS(load_tensors("does_not_exist.bin"));
}

TEST_CASE("adam state round trips through the container") {
  Rng rng(34);
  Tensor p = rand_tensor(rng, {4}, -1.0, 1.0);
  Adam opt({{"p", p}}, 0.05, 0.0);
  for (int i = 0; i < 3; ++i) {
    for (double& g : p.grad()) g = rng.uniform(-1.0, 1.0);
    opt.step();
  }
  save_tensors("adam_state.bin", opt.state());
  auto loaded = load_tensors("adam_state.bin");

  Tensor p2 = Tensor::from_data({4}, p.data(), true);
  Adam opt2({{"p", p2}}, 0.05, 0.0);
  NamedTensors state;
  for (auto& [k, v] : loaded) state.emplace_back(k, v);
  opt2.load_state(state);
  CHECK(opt2.step_count() == 3);

  // one more identical step must produce identical parameters
  Rng rng2(35);
  for (size_t i = 0; i < 4; ++i) {
    double g = rng2.uniform(-1.0, 1.0);
    p.grad()[i] = g;
    p2.grad()[i] = g;
  }
  opt.step();
  opt2.step();
  CHECK(p.data() == p2.data());
  std::remove("adam_state.bin");
}
