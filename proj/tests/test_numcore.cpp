// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support/gradcheck.hpp"

using namespace camc;
using camc::testing::random_tensor;
using camc::testing::TensorD;
using camc::testing::TapeD;
using camc::testing::VarD;

namespace {

nc::Tensor<float> tf(nc::Shape s, std::vector<float> v) { return nc::Tensor<float>(std::move(s), std::move(v)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Independent LSTM cell: gates [i | f | g | o].
void reference_step(const TensorD& x, const TensorD& h, const TensorD& c, const TensorD& w, const TensorD& u,
                    const TensorD& b, TensorD& h_out, TensorD& c_out) {
  const std::size_t batch = x.dim(0), d = x.dim(1), hid = h.dim(1);
  h_out = TensorD({batch, hid});
  c_out = TensorD({batch, hid});
  for (std::size_t r = 0; r < batch; ++r) {
    std::vector<double> z(4 * hid);
    for (std::size_t j = 0; j < 4 * hid; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < d; ++k) s += x(r, k) * w(k, j);
      for (std::size_t k = 0; k < hid; ++k) s += h(r, k) * u(k, j);
      z[j] = s;
    }
    for (std::size_t j = 0; j < hid; ++j) {
      const double i = sigmoid(z[j]), f = sigmoid(z[hid + j]), g = std::tanh(z[2 * hid + j]), o = sigmoid(z[3 * hid + j]);
      c_out(r, j) = f * c(r, j) + i * g;
      h_out(r, j) = o * std::tanh(c_out(r, j));
    }
  }
}

}  // namespace

TEST_SUITE("numcore") {
  TEST_CASE("selu closed form") {
    nc::Tape<double> tape(false);
    auto y = nc::selu(tape, tape.constant(TensorD({3}, std::vector<double>{0.0, -1.0, 2.0})));
    CHECK(y.value()[0] == 0.0);
    CHECK(y.value()[1] == doctest::Approx(-1.111330).epsilon(1e-6));
    CHECK(y.value()[2] == doctest::Approx(2.0 * nc::kSeluLambda));
  }

  TEST_CASE("softmax of zeros is uniform") {
    nc::Tape<float> tape(false);
    auto p = nc::softmax(tape, tape.constant(nc::Tensor<float>({1, 11})));
    for (float v : p.value().span()) CHECK(v == doctest::Approx(1.0 / 11.0));
  }

  TEST_CASE("dense special cases and brute-force matmul") {
    nc::Tape<double> tape(false);
    std::mt19937_64 rng(3);
    auto x = random_tensor({3, 5}, rng);
    auto b = random_tensor({2}, rng);
    auto y = nc::dense(tape, tape.constant(x), tape.constant(TensorD({5, 2})), tape.constant(b));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 2; ++j) CHECK(y.value()(r, j) == b[j]);

    TensorD eye({5, 5});
    for (std::size_t i = 0; i < 5; ++i) eye(i, i) = 1.0;
    auto same = nc::dense(tape, tape.constant(x), tape.constant(eye), tape.constant(TensorD({5})));
    CHECK(same.value() == x);

    auto w = random_tensor({5, 2}, rng);
    auto prod = nc::matmul(tape, tape.constant(x), tape.constant(w));
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += x(i, k) * w(k, j);
        worst = std::max(worst, std::abs(s - prod.value()(i, j)));
      }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("conv1d special cases") {
    nc::Tape<float> tape(false);
    const std::size_t k = 8, cin = 2, cout = 64, len = 512;
    nc::Tensor<float> b({cout});
    for (std::size_t i = 0; i < cout; ++i) b[i] = static_cast<float>(i);
    auto zero = nc::conv1d(tape, tape.constant(nc::Tensor<float>({1, len, cin})), tape.constant(nc::Tensor<float>({k, cin, cout})),
                           tape.constant(b));
    CHECK(zero.value().shape() == nc::Shape{1, len, cout});
    for (std::size_t l = 0; l < len; l += 97)
      for (std::size_t c = 0; c < cout; ++c) CHECK(zero.value()(0, l, c) == b[c]);

    // centred impulse (tap floor((K-1)/2)) on every input channel, one output channel
    std::mt19937_64 rng(5);
    nc::Tensor<float> x({1, 16, 3});
    std::uniform_real_distribution<float> u(-1, 1);
    for (auto& v : x.span()) v = u(rng);
    nc::Tensor<float> w({5, 3, 1});
    for (std::size_t c = 0; c < 3; ++c) w(2, c, 0) = 1.0f;
    auto y = nc::conv1d(tape, tape.constant(x), tape.constant(w), tape.constant(nc::Tensor<float>({1})));
    for (std::size_t l = 0; l < 16; ++l)
      CHECK(y.value()(0, l, 0) == doctest::Approx(x(0, l, 0) + x(0, l, 1) + x(0, l, 2)));
  }

  TEST_CASE("batchnorm behaviour") {
    std::mt19937_64 rng(7);
    nc::Tape<double> tape(false);
    auto x = random_tensor({8, 3}, rng, -3.0, 3.0);
    TensorD mean({3}), var({3}, 1.0);
    auto ident = nc::batchnorm(tape, tape.constant(x), tape.constant(TensorD({3}, 1.0)), tape.constant(TensorD({3})),
                               mean, var, {.train = false, .momentum = 0.99, .eps = 0.0});
    CHECK(ident.value() == x);

    nc::BatchNormOptions train{.train = true, .momentum = 0.99, .eps = 1e-3};
    auto y = nc::batchnorm(tape, tape.constant(x), tape.constant(TensorD({3}, 1.0)), tape.constant(TensorD({3})), mean,
                           var, train);
    for (std::size_t f = 0; f < 3; ++f) {
      double m = 0, v = 0;
      for (std::size_t r = 0; r < 8; ++r) m += y.value()(r, f);
      m /= 8;
      for (std::size_t r = 0; r < 8; ++r) v += (y.value()(r, f) - m) * (y.value()(r, f) - m);
      v /= 8;
      CHECK(std::abs(m) < 1e-5);
      // eps keeps the variance just below one; compare against the exact shrink factor
      double bv = 0, bm = 0;
      for (std::size_t r = 0; r < 8; ++r) bm += x(r, f);
      bm /= 8;
      for (std::size_t r = 0; r < 8; ++r) bv += (x(r, f) - bm) * (x(r, f) - bm);
      bv /= 8;
      CHECK(v == doctest::Approx(bv / (bv + 1e-3)).epsilon(1e-5));
      CHECK(std::abs(v - 1.0) < 1e-3);
    }
    CHECK(mean[0] != 0.0);  // running statistics moved

    TensorD zm({3}), uv({3}, 1.0);
    auto affine = nc::batchnorm(tape, tape.constant(x), tape.constant(TensorD({3}, 2.0)), tape.constant(TensorD({3}, 1.0)),
                                zm, uv, {.train = false, .momentum = 0.99, .eps = 0.0});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(affine.value()[i] == doctest::Approx(2 * x[i] + 1));
  }

  TEST_CASE("dropout") {
    nc::Rng rng(11);
    nc::Tape<float> tape(false);
    nc::Tensor<float> ones({1000000}, 1.0f);
    auto x = tape.constant(ones);
    CHECK(nc::dropout(tape, x, 0.0, true, rng).value() == ones);
    CHECK(nc::dropout(tape, x, 0.5, false, rng).value() == ones);
    const auto y = nc::dropout(tape, x, 0.5, true, rng).value();
    const double mean = std::accumulate(y.span().begin(), y.span().end(), 0.0) / 1e6;
    CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
    for (std::size_t i = 0; i < 1000; ++i) CHECK((y[i] == 0.0f || y[i] == 2.0f));
  }

  TEST_CASE("lstm step oracles") {
    nc::Tape<double> tape(false);
    const std::size_t d = 2, h = 3;
    nc::LstmWeights<double> zw{tape.constant(TensorD({d, 4 * h})), tape.constant(TensorD({h, 4 * h})),
                               tape.constant(TensorD({4 * h}))};
    auto [h0, c0] = nc::lstm_step(tape, tape.constant(TensorD({1, d})), tape.constant(TensorD({1, h})),
                                  tape.constant(TensorD({1, h})), zw);
    for (double v : h0.value().span()) CHECK(v == 0.0);
    for (double v : c0.value().span()) CHECK(v == 0.0);

    auto [h1, c1] = nc::lstm_step(tape, tape.constant(TensorD({1, d})), tape.constant(TensorD({1, h})),
                                  tape.constant(TensorD({1, h}, 1.0)), zw);
    for (double v : c1.value().span()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    for (double v : h1.value().span()) CHECK(v == doctest::Approx(0.231059).epsilon(1e-6));

    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
      auto x = random_tensor({3, d}, rng), hp = random_tensor({3, h}, rng), cp = random_tensor({3, h}, rng);
      auto w = random_tensor({d, 4 * h}, rng), u = random_tensor({h, 4 * h}, rng), b = random_tensor({4 * h}, rng);
      nc::LstmWeights<double> wts{tape.constant(w), tape.constant(u), tape.constant(b)};
      auto [hn, cn] = nc::lstm_step(tape, tape.constant(x), tape.constant(hp), tape.constant(cp), wts);
      TensorD hr, cr;
      reference_step(x, hp, cp, w, u, b, hr, cr);
      for (std::size_t i = 0; i < hr.size(); ++i) {
        CHECK(std::abs(hn.value()[i] - hr[i]) < 1e-6);
        CHECK(std::abs(cn.value()[i] - cr[i]) < 1e-6);
      }
    }
  }

  TEST_CASE("bilstm shapes and symmetry") {
    std::mt19937_64 rng(17);
    nc::Tape<float> tape(false);
    const std::size_t n = 64, hid = 64;
    auto w = [&](nc::Shape s) { return tape.constant(random_tensor(s, rng, -0.2, 0.2).cast<float>()); };
    nc::LstmWeights<float> f{w({1, 4 * hid}), w({hid, 4 * hid}), w({4 * hid})};
    nc::LstmWeights<float> b{w({1, 4 * hid}), w({hid, 4 * hid}), w({4 * hid})};
    auto x = tape.constant(random_tensor({1, n, 1}, rng).cast<float>());
    CHECK(nc::bilstm(tape, x, f, b, nc::LstmReturn::Sequence).shape() == nc::Shape{1, n, 2 * hid});

    nc::Tape<double> dt(false);
    auto dw = [&](nc::Shape s) { return dt.constant(random_tensor(s, rng)); };
    nc::LstmWeights<double> fw{dw({2, 12}), dw({3, 12}), dw({12})};
    auto one = dt.constant(random_tensor({2, 1, 2}, rng));
    CHECK(nc::bilstm(dt, one, fw, fw, nc::LstmReturn::Sequence).value().reshaped({2, 6}) ==
          nc::bilstm(dt, one, fw, fw, nc::LstmReturn::Final).value());

    // palindrome with shared weights: out[t] = swap_halves(out[T-1-t])
    TensorD pal({1, 5, 2});
    auto base = random_tensor({3, 2}, rng);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t c = 0; c < 2; ++c) pal(0, t, c) = base(std::min(t, 4 - t), c);
    auto seq = nc::bilstm(dt, dt.constant(pal), fw, fw, nc::LstmReturn::Sequence).value();
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(seq(0, t, j) == doctest::Approx(seq(0, 4 - t, 3 + j)).epsilon(1e-12));
      }
  }

  TEST_CASE("attention oracles") {
    std::mt19937_64 rng(19);
    nc::Tape<double> tape(false);
    auto v1 = random_tensor({1, 3}, rng);
    auto out = nc::scaled_dot_attention(tape, tape.constant(random_tensor({2, 4}, rng)),
                                        tape.constant(random_tensor({1, 4}, rng)), tape.constant(v1));
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 3; ++j) CHECK(out.value()(r, j) == doctest::Approx(v1[j]));

    TensorD k({4, 3});
    auto krow = random_tensor({3}, rng);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) k(i, j) = krow[j];
    auto v = random_tensor({4, 2}, rng);
    auto mean = nc::scaled_dot_attention(tape, tape.constant(random_tensor({1, 3}, rng)), tape.constant(k), tape.constant(v));
    for (std::size_t j = 0; j < 2; ++j) {
      const double m = (v(0, j) + v(1, j) + v(2, j) + v(3, j)) / 4.0;
      CHECK(mean.value()(0, j) == doctest::Approx(m).epsilon(1e-12));
    }

    TensorD q({2, 2}, std::vector<double>{1, 0, 0, 1}), kk({2, 2}, std::vector<double>{1, 2, 3, 4}),
        vv({2, 2}, std::vector<double>{5, 6, 7, 8});
    auto o = nc::scaled_dot_attention(tape, tape.constant(q), tape.constant(kk), tape.constant(vv)).value();
    for (std::size_t i = 0; i < 2; ++i) {
      double s0 = 0, s1 = 0;
      for (std::size_t c = 0; c < 2; ++c) {
        s0 += q(i, c) * kk(0, c);
        s1 += q(i, c) * kk(1, c);
      }
      const double e0 = std::exp(s0 / std::sqrt(2.0)), e1 = std::exp(s1 / std::sqrt(2.0));
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(std::abs(o(i, j) - (e0 * vv(0, j) + e1 * vv(1, j)) / (e0 + e1)) < 1e-6);
    }
  }

  TEST_CASE("multi-head attention composition") {
    std::mt19937_64 rng(23);
    nc::Tape<double> tape(false);
    const std::size_t dm = 4, dk = 3, s = 3;
    auto x = random_tensor({1, s, dm}, rng);
    auto wq = random_tensor({1, dm, dk}, rng), wk = random_tensor({1, dm, dk}, rng), wv = random_tensor({1, dm, dm}, rng);
    TensorD eye({dm, dm});
    for (std::size_t i = 0; i < dm; ++i) eye(i, i) = 1.0;
    auto mha = nc::multi_head_attention(
        tape, tape.constant(x), {tape.constant(wq), tape.constant(wk), tape.constant(wv), tape.constant(eye)});
    auto proj = [&](const TensorD& w) {
      return nc::matmul(tape, tape.constant(x), tape.constant(w.reshaped({dm, w.dim(2)})));
    };
    auto ref = nc::scaled_dot_attention(tape, proj(wq), proj(wk), proj(wv));
    for (std::size_t i = 0; i < ref.value().size(); ++i) CHECK(std::abs(mha.value()[i] - ref.value()[i]) < 1e-6);

    // two heads against dense + attention + concat + dense
    const std::size_t h = 2;
    auto q2 = random_tensor({h, dm, dk}, rng), k2 = random_tensor({h, dm, dk}, rng), v2 = random_tensor({h, dm, dk}, rng);
    auto wo = random_tensor({h * dk, dm}, rng);
    auto got = nc::multi_head_attention(tape, tape.constant(x),
                                        {tape.constant(q2), tape.constant(k2), tape.constant(v2), tape.constant(wo)});
    std::vector<VarD> heads;
    auto head_w = [&](const TensorD& w, std::size_t i) {
      TensorD out({dm, dk});
      for (std::size_t a = 0; a < dm; ++a)
        for (std::size_t b = 0; b < dk; ++b) out(a, b) = w(i, a, b);
      return tape.constant(out);
    };
    for (std::size_t i = 0; i < h; ++i)
      heads.push_back(nc::scaled_dot_attention(tape, nc::matmul(tape, tape.constant(x), head_w(q2, i)),
                                               nc::matmul(tape, tape.constant(x), head_w(k2, i)),
                                               nc::matmul(tape, tape.constant(x), head_w(v2, i))));
    auto expect = nc::matmul(tape, nc::concat_last(tape, heads), tape.constant(wo));
    for (std::size_t i = 0; i < expect.value().size(); ++i) CHECK(std::abs(got.value()[i] - expect.value()[i]) < 1e-6);

    nc::Tape<float> ft(false);
    auto big = nc::multi_head_attention(
        ft, ft.constant(nc::Tensor<float>({1, 1, 128}, 0.1f)),
        {ft.constant(nc::Tensor<float>({8, 128, 128}, 0.01f)), ft.constant(nc::Tensor<float>({8, 128, 128}, 0.01f)),
         ft.constant(nc::Tensor<float>({8, 128, 128}, 0.01f)), ft.constant(nc::Tensor<float>({1024, 128}, 0.01f))});
    CHECK(big.shape() == nc::Shape{1, 1, 128});
  }

  TEST_CASE("cross entropy closed forms") {
    nc::Tape<double> tape(false);
    std::vector<int> one{2};
    TensorD hot({1, 3}, std::vector<double>{0, 0, 1});
    CHECK(nc::cross_entropy(tape, tape.constant(hot), one).value()[0] == doctest::Approx(0.0));
    std::vector<int> l0{0};
    CHECK(nc::cross_entropy(tape, tape.constant(TensorD({1, 11}, 1.0 / 11)), l0).value()[0] ==
          doctest::Approx(2.397895).epsilon(1e-6));
    TensorD two({2, 2}, std::vector<double>{0.25, 0.75, 0.5, 0.5});
    std::vector<int> lab{1, 0};
    CHECK(nc::cross_entropy(tape, tape.constant(two), lab).value()[0] ==
          doctest::Approx((-std::log(0.75) - std::log(0.5)) / 2));
  }

  TEST_CASE("linear and fused gradients") {
    std::mt19937_64 rng(29);
    TapeD tape;
    auto x = random_tensor({1, 4}, rng);
    auto w = tape.input(random_tensor({4, 3}, rng));
    auto y = nc::matmul(tape, tape.constant(x), w);
    auto loss = nc::weighted_sum(tape, y, TensorD({1, 3}, 1.0));
    tape.backward(loss);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(w.grad()(i, j) == x[i]);

    TapeD t2;
    auto logits = t2.input(random_tensor({2, 4}, rng));
    std::vector<int> labels{1, 3};
    auto ce = nc::softmax_cross_entropy(t2, logits, labels);
    t2.backward(ce);
    nc::Tape<double> t3(false);
    auto p = nc::softmax(t3, t3.constant(logits.value())).value();
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 4; ++j) {
        const double expect = (p(r, j) - (static_cast<int>(j) == labels[r] ? 1.0 : 0.0)) / 2.0;
        CHECK(logits.grad()(r, j) == doctest::Approx(expect).epsilon(1e-12));
      }
  }

  TEST_CASE("finite-difference gradients for every layer op") {
    for (const auto& op : camc::testing::layer_op_cases()) {
      CAPTURE(op.name);
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        std::mt19937_64 rng(seed);
        auto [inputs, fn] = op.make(rng);
        const auto r = camc::testing::check_gradients(inputs, fn, rng);
        CAPTURE(r.worst_input);
        CHECK(r.max_rel_error < camc::testing::kFdTolerance);
      }
    }
  }

  TEST_CASE("adam") {
    nc::Param<double> p("p", TensorD({3}, std::vector<double>{1.0, -2.0, 0.5}));
    nc::Adam<double> opt({&p}, {.lr = 0.01});
    const auto before = p.value();
    p.grad();
    opt.step();
    CHECK(p.value() == before);

    p.grad() = TensorD({3}, std::vector<double>{0.3, -4.0, 1e-3});
    nc::Adam<double> fresh({&p}, {.lr = 0.01});
    const auto start = p.value();
    fresh.step();
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = p.grad()[i];
      CHECK(std::abs(start[i] - p.value()[i]) == doctest::Approx(0.01 * std::abs(g) / (std::abs(g) + 1e-8)).epsilon(1e-9));
    }

    // three steps against an independent implementation
    std::mt19937_64 rng(31);
    nc::Param<double> q("q", random_tensor({4}, rng));
    std::vector<double> ref(q.value().span().begin(), q.value().span().end()), m(4, 0.0), v(4, 0.0);
    nc::Adam<double> adam({&q});
    for (int t = 1; t <= 3; ++t) {
      auto g = random_tensor({4}, rng);
      q.grad() = g;
      adam.step();
      for (std::size_t i = 0; i < 4; ++i) {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
        ref[i] -= 0.001 * mh / (std::sqrt(vh) + 1e-8);
      }
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(q.value()[i] - ref[i]) < 1e-7);
  }

  TEST_CASE("checkpoint round trip and corruption") {
    nc::Param<float> a("net/a", tf({2, 2}, {1, 2, 3, 4})), b("net/b", tf({3}, {5, 6, 7}), false);
    auto bytes = nc::encode_checkpoint({&a, &b});
    auto back = nc::decode_checkpoint(bytes);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "net/a");
    CHECK(back[0].value == a.value());
    CHECK(back[1].value == b.value());
    bytes[12] ^= 0x01;
    CHECK_THROWS_AS(nc::decode_checkpoint(bytes), nc::CheckpointError);

    nc::Param<float> c("net/a", tf({2, 2}, {0, 0, 0, 0})), d("net/b", tf({3}, {0, 0, 0}));
    nc::assign_checkpoint(back, {&c, &d});
    CHECK(c.value() == a.value());
    nc::Param<float> wrong("net/a", tf({4}, {0, 0, 0, 0}));
    CHECK_THROWS(nc::assign_checkpoint({back[0]}, {&wrong}));
  }

  TEST_CASE("shape errors name both shapes") {
    nc::Tape<float> tape(false);
    try {
      nc::matmul(tape, tape.constant(nc::Tensor<float>({2, 3})), tape.constant(nc::Tensor<float>({4, 5})));
      FAIL("expected ShapeError");
    } catch (const nc::ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("3") != std::string::npos);
      CHECK(msg.find("4") != std::string::npos);
    }
  }
}
