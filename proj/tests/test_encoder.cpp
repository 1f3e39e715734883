#include <numeric>

#include "doctest.h"
#include "eclip/encoder.hpp"
#include "eclip/errors.hpp"
#include "eclip/model.hpp"
#include "helpers.hpp"

using namespace eclip;
using eclip::testing::random_matrix;

TEST_CASE("pool_mean") {
  Mat a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(pool_mean(a) == RowVector<Real>((RowVector<Real>(2) << 2, 3).finished()));
  Mat one(1, 2);
  one << 5, 6;
  CHECK(pool_mean(one) == RowVector<Real>(one.row(0)));
  CHECK_THROWS_AS(pool_mean(Mat(0, 3)), DegenerateError);

  std::mt19937_64 rng(2);
  const Mat m = random_matrix(100, 7, rng);
  RowVector<Real> expect(7);
  for (Eigen::Index c = 0; c < 7; ++c) {
    Real s = 0;
    for (Eigen::Index r = 0; r < 100; ++r) s += m(r, c);
    expect(c) = s / 100;
  }
  CHECK(pool_mean(m) == expect);
}

TEST_CASE("l2_normalize") {
  Vec v(2);
  v << 3, 4;
  const Vec u = l2_normalize(v);
  CHECK(u(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u(1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK((l2_normalize(u) - u).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(l2_normalize(Vec(Vec::Zero(3))), DegenerateError);
  CHECK_THROWS_AS(l2_normalize(Vec(Vec::Constant(3, 1e-14))), DegenerateError);

  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const Vec r = random_matrix(9, 1, rng);
    const Vec n = l2_normalize(r);
    CHECK(std::abs(n.norm() - 1) < 1e-12);
    CHECK((n * r.norm() - r).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("encoder spec validation") {
  CHECK_NOTHROW((EncoderSpec{4, {3}, 2}.validate()));
  CHECK_THROWS_AS((EncoderSpec{0, {}, 2}.validate()), ParameterError);
  CHECK_THROWS_AS((EncoderSpec{4, {}, 0}.validate()), ParameterError);
  CHECK_THROWS_AS((EncoderSpec{4, {0}, 2}.validate()), ParameterError);
  CHECK_THROWS_AS((EncoderSpec{5, {}, 2, Activation::tanh, 2}.validate()), ParameterError);
  CHECK(parse_activation("relu") == Activation::relu);
  CHECK(to_string(Activation::tanh) == "tanh");
  CHECK_THROWS_AS(parse_activation("gelu"), ParameterError);
}

TEST_CASE("identity network leaves unit rows unchanged") {
  const EncoderSpec spec{3, {}, 3};
  ParamSet p;
  p.add("proj.weight", Mat::Identity(3, 3));
  p.add("proj.bias", Mat::Zero(1, 3), false);
  std::mt19937_64 rng(8);
  const Mat x = l2_normalize_rows(random_matrix(5, 3, rng));
  CHECK((encode(p, spec, x) - x).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("encoded rows are unit norm and independent per sample") {
  std::mt19937_64 rng(12);
  for (auto act : {Activation::relu, Activation::tanh}) {
    const EncoderSpec spec{12, {10, 7}, 5, act, 3};
    const auto p = init_encoder(spec, rng);
    const Mat x = random_matrix(9, 12, rng, 3.0);
    const Mat e = encode(p, spec, x);
    CHECK(e.rows() == 9);
    CHECK((e.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-10);

    std::vector<Eigen::Index> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat xp(9, 12);
    for (Eigen::Index i = 0; i < 9; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    const Mat ep = encode(p, spec, xp);
    for (Eigen::Index i = 0; i < 9; ++i) CHECK(ep.row(i) == e.row(perm[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("encode shape errors") {
  std::mt19937_64 rng(1);
  const EncoderSpec spec{4, {3}, 2};
  auto p = init_encoder(spec, rng);
  CHECK_THROWS_AS(encode(p, spec, Mat::Ones(2, 5)), DimensionError);
  ParamSet wrong = p;
  wrong.at("proj.weight").value = Mat::Ones(2, 2);
  CHECK_THROWS(check_encoder_params(wrong, spec));
  CHECK_THROWS_AS(encode(p, spec, Mat(Mat::Zero(2, 4))), DegenerateError);
}

namespace {

// Scalar probe ⟨w, encode(x)⟩ and its gradients from encode_backward.
struct Probe {
  EncoderSpec spec;
  ParamSet params;
  Mat x;
  Mat w;
};

Real probe_value(const Probe& pr, const ParamSet& p, const Mat& x) {
  return (encode(p, pr.spec, x).array() * pr.w.array()).sum();
}

}  // namespace

TEST_CASE("encoder backward agrees with finite differences") {
  std::mt19937_64 rng(21);
  for (auto act : {Activation::tanh, Activation::relu}) {
    for (Eigen::Index tokens : {Eigen::Index{1}, Eigen::Index{2}}) {
      Probe pr{{6, {5, 4}, 3, act, tokens}, {}, random_matrix(3, 6, rng), random_matrix(3, 3, rng)};
      pr.params = init_encoder(pr.spec, rng);
      for (auto& t : pr.params) t.value += 0.1 * random_matrix(t.value.rows(), t.value.cols(), rng);

      ActivationTape tape;
      encode(pr.params, pr.spec, pr.x, &tape);
      ParamSet grads = pr.params;
      grads.zero_grad();
      const Mat dx = encode_backward(grads, pr.spec, tape, pr.w);
      const auto analytic = grads.gradients();
      const Real err = finite_diff_check([&](const ParamSet& p) { return probe_value(pr, p, pr.x); }, pr.params,
                                         std::span<const Mat>(analytic));
      CHECK(err < 1e-5);

      ParamSet input;
      input.add("x", pr.x);
      std::vector<Mat> dxs{dx};
      const Real err_x = finite_diff_check([&](const ParamSet& p) { return probe_value(pr, pr.params, p[0].value); },
                                           input, std::span<const Mat>(dxs));
      CHECK(err_x < 1e-5);
    }
  }
}

TEST_CASE("normalization backward agrees with finite differences") {
  std::mt19937_64 rng(5);
  const Mat z = random_matrix(4, 3, rng);
  const Mat g = random_matrix(4, 3, rng);
  Vec norms;
  const Mat e = l2_normalize_rows(z, &norms);
  const Mat dz = l2_normalize_rows_backward(e, norms, g);
  ParamSet p;
  p.add("z", z);
  std::vector<Mat> an{dz};
  const Real err = finite_diff_check(
      [&](const ParamSet& q) { return (l2_normalize_rows(q[0].value).array() * g.array()).sum(); }, p,
      std::span<const Mat>(an));
  CHECK(err < 1e-7);
}

TEST_CASE("tapes account for retained activations") {
  std::mt19937_64 rng(3);
  const EncoderSpec spec{8, {6}, 4};
  const auto p = init_encoder(spec, rng);
  const Mat x = random_matrix(5, 8, rng);
  const auto before = activation_stats();
  encode(p, spec, x);
  CHECK(activation_stats().live_matrices == before.live_matrices);
  {
    ActivationTape tape;
    encode(p, spec, x, &tape);
    CHECK(activation_stats().live_matrices > before.live_matrices);
    CHECK(activation_stats().live_elements > before.live_elements);
    ActivationTape moved = std::move(tape);
    CHECK(tape.empty());
    CHECK_FALSE(moved.empty());
  }
  CHECK(activation_stats().live_matrices == before.live_matrices);
  CHECK(activation_stats().live_elements == before.live_elements);
}

TEST_CASE("backward rejects a mismatched tape") {
  std::mt19937_64 rng(3);
  const EncoderSpec spec{8, {6}, 4};
  auto p = init_encoder(spec, rng);
  ActivationTape empty;
  CHECK_THROWS(encode_backward(p, spec, empty, Mat::Ones(2, 4)));
  ActivationTape tape;
  encode(p, spec, random_matrix(5, 8, rng), &tape);
  CHECK_THROWS_AS(encode_backward(p, spec, tape, Mat::Ones(2, 4)), DimensionError);
}

TEST_CASE("temperature clamp and model layout") {
  const EncoderSpec t{4, {3}, 2}, i{6, {}, 2};
  auto m = init_model(t, i, 7);
  CHECK(m.tau() == doctest::Approx(0.07));
  m.log_tau = 3.0;
  m.clamp_log_tau();
  CHECK(m.log_tau == log_tau_max());
  m.log_tau = -30;
  m.clamp_log_tau();
  CHECK(m.log_tau == log_tau_min());
  CHECK(std::exp(log_tau_min()) == doctest::Approx(0.01));

  const auto flat = flatten(m);
  CHECK(flat[0].name == "text.hidden0.weight");
  CHECK(flat[flat.size() - 1].name == "log_tau");
  CHECK_FALSE(flat[flat.size() - 1].decay);
  const auto back = unflatten(flat, t, i);
  CHECK(back.log_tau == m.log_tau);
  CHECK(back.text[0].value == m.text[0].value);
  CHECK(back.image[0].value == m.image[0].value);
  CHECK_THROWS((init_model(t, EncoderSpec{6, {}, 3}, 1)));
}

TEST_CASE("checkpoint round trip") {
  const EncoderSpec t{4, {3}, 2, Activation::relu, 2}, i{6, {5}, 2};
  const auto m = init_model(t, i, 9, 0.05);
  const auto path = std::filesystem::temp_directory_path() / "eclip_ckpt_roundtrip.json";
  save_checkpoint(m, path, 17);
  const auto r = load_checkpoint(path);
  CHECK(r.text_spec == t);
  CHECK(r.image_spec == i);
  CHECK(r.log_tau == m.log_tau);
  for (std::size_t k = 0; k < m.text.size(); ++k) CHECK(r.text[k].value == m.text[k].value);
  for (std::size_t k = 0; k < m.image.size(); ++k) CHECK(r.image[k].value == m.image[k].value);
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}
