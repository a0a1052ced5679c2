#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "a2s/codec.hpp"
#include "a2s/ctc.hpp"
#include "a2s/net/checkpoint.hpp"
#include "a2s/net/crnn.hpp"
#include "a2s/net/optim.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

namespace a2s::net {
namespace {

Act<double> random_input(Eigen::Index frames, Eigen::Index bins, std::uint64_t seed) {
  Rng rng(seed);
  Act<double> x(frames, bins);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(0.0, 2.0);
  return x;
}

// ------------------------------------------------------------------ config

TEST(Config, Validation) {
  ModelConfig c = test::mini_config();
  EXPECT_NO_THROW(c.validate());
  c.conv_kernel = 2;
  EXPECT_EQ(test::error_of([&] { c.validate(); }), Errc::InvalidConfig);
  c = test::mini_config();
  c.dropout = 1.0;
  EXPECT_EQ(test::error_of([&] { c.validate(); }), Errc::InvalidConfig);
  c = test::mini_config();
  c.conv_filters = 1;
  c.input_bins = 12;  // 12 -> 6 -> 3 bins of one filter: odd
  c.frame_doubling = true;
  EXPECT_EQ(c.feature_dim(), 3);
  EXPECT_EQ(test::error_of([&] { c.validate(); }), Errc::OddFeatureDim);
}

TEST(Config, JsonRoundTrip) {
  ModelConfig c = test::mini_config();
  c.frame_doubling = true;
  c.dropout = 0.25;
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<ModelConfig>(), c);
  EXPECT_EQ(nlohmann::json::object().get<ModelConfig>(), ModelConfig{});
}

TEST(Config, Shapes) {
  const ModelConfig c;  // 240 bins, two stride-2 layers, 16 filters
  EXPECT_EQ(c.conv_output_bins(), 60);
  EXPECT_EQ(c.feature_dim(), 960);
  const auto p = init_params<float>(c, 1);
  EXPECT_EQ(p.lstm[0].input_weight.rows(), 4 * 64);
  EXPECT_EQ(p.lstm[0].input_weight.cols(), 960);
  EXPECT_EQ(p.lstm[2].input_weight.cols(), 128);
  EXPECT_EQ(p.output_weight.cols(), 128);
}

// ------------------------------------------------------------------ params

TEST(Params, InitIsSeeded) {
  const auto c = test::mini_config();
  const auto a = init_params<double>(c, 5);
  const auto b = init_params<double>(c, 5);
  const auto d = init_params<double>(c, 6);
  EXPECT_EQ(a.output_weight, b.output_weight);
  EXPECT_NE(a.output_weight, d.output_weight);
  const Eigen::Index H = c.hidden_units;
  EXPECT_TRUE((a.lstm[0].bias.middleRows(H, H).array() == 1.0).all());
}

TEST(Params, NamesAreUniqueAndOrdered) {
  auto p = init_params<double>(test::mini_config(), 1);
  const auto list = tensors(p);
  std::set<std::string> names;
  for (const auto& t : list) EXPECT_TRUE(names.insert(t.name).second) << t.name;
  EXPECT_EQ(list.front().name, "conv0.weight");
  EXPECT_EQ(list.back().name, "output.bias");
  EXPECT_TRUE(names.count("lstm1.norm.running_var"));
  EXPECT_LT(parameter_count(p), parameter_count(p, false));
}

// ------------------------------------------------------------------ layers

TEST(Layers, FrameDouble) {
  Act<double> x(1, 4);
  x << 1, 2, 3, 4;
  Act<double> want(2, 2);
  want << 1, 2, 3, 4;
  EXPECT_EQ(frame_double(x), want);
  EXPECT_EQ(frame_halve(frame_double(x)), x);
  EXPECT_EQ(test::error_of([] { frame_double(Act<double>(2, 3)); }), Errc::OddFeatureDim);
}

TEST(Layers, ClippedRelu) {
  Act<double> x(1, 4);
  x << -1, 0.5, 19, 25;
  Act<double> want(1, 4);
  want << 0, 0.5, 19, 20;
  EXPECT_EQ(clipped_relu(x), want);
}

TEST(Layers, DropoutMaskKeepsExpectation) {
  Rng rng(3);
  const auto m = dropout_mask<double>(200, 50, 0.25, rng);
  const double zeros = static_cast<double>((m.array() == 0.0).count()) / static_cast<double>(m.size());
  EXPECT_NEAR(zeros, 0.25, 0.02);
  EXPECT_NEAR(m.mean(), 1.0, 0.03);
}

TEST(Layers, RunningStatsUpdate) {
  NormParams<double> p{Matrix<double>::Ones(1, 1), Matrix<double>::Zero(1, 1), Matrix<double>::Zero(1, 1),
                       Matrix<double>::Ones(1, 1)};
  Act<double> x(4, 1);
  x << 1, 2, 3, 4;
  ChannelMoments m;
  norm_forward(x, p, static_cast<NormCache<double>*>(nullptr), &m);
  update_running_stats(p, m, 0.1);
  EXPECT_NEAR(p.running_mean(0, 0), 0.25, 1e-12);
  // unbiased variance of 1..4 is 5/3
  EXPECT_NEAR(p.running_var(0, 0), 0.9 + 0.1 * 5.0 / 3.0, 1e-12);
}

// ------------------------------------------------------------------ forward

TEST(Forward, PosteriorsAreDistributions) {
  const auto c = test::mini_config();
  const auto model = Crnn<double>::initialize(c, 2);
  for (const Eigen::Index W : {1, 3, 17}) {
    const auto r = model.forward(random_input(W, c.input_bins, 9), Mode::Eval);
    const auto probs = r.posteriors.probabilities();
    ASSERT_EQ(probs.rows(), W);
    ASSERT_EQ(probs.cols(), c.vocab_size);
    for (Eigen::Index t = 0; t < W; ++t) EXPECT_NEAR(probs.row(t).sum(), 1.0, 1e-12);
    EXPECT_FALSE(r.cache.has_value());
  }
}

TEST(Forward, FrameDoublingDoublesFrames) {
  auto c = test::mini_config();
  c.frame_doubling = true;
  const auto model = Crnn<double>::initialize(c, 2);
  EXPECT_EQ(model.forward(random_input(5, c.input_bins, 1), Mode::Eval).logits.rows(), 10);
}

TEST(Forward, EvalIsPure) {
  auto c = test::mini_config();
  c.dropout = 0.5;
  const auto model = Crnn<double>::initialize(c, 2);
  const auto x = random_input(6, c.input_bins, 4);
  const auto a = model.forward(x, Mode::Eval, 1).logits;
  EXPECT_EQ(a, model.forward(x, Mode::Eval, 1).logits);
  EXPECT_EQ(a, model.forward(x, Mode::Eval, 99).logits);
}

TEST(Forward, TrainingWithoutDropoutMatchesEval) {
  const auto c = test::mini_config();
  const auto model = Crnn<double>::initialize(c, 2);
  const auto x = random_input(6, c.input_bins, 4);
  const auto t = model.forward(x, Mode::Train, 3);
  EXPECT_EQ(t.logits, model.forward(x, Mode::Eval).logits);
  EXPECT_EQ(t.norm_moments.size(), norm_layers(model.params()).size());
}

TEST(Forward, DropoutIsSeeded) {
  auto c = test::mini_config();
  c.dropout = 0.3;
  const auto model = Crnn<double>::initialize(c, 2);
  const auto x = random_input(6, c.input_bins, 4);
  EXPECT_EQ(model.forward(x, Mode::Train, 5).logits, model.forward(x, Mode::Train, 5).logits);
  EXPECT_NE(model.forward(x, Mode::Train, 5).logits, model.forward(x, Mode::Train, 6).logits);
}

TEST(Forward, FloatTracksDouble) {
  const auto c = test::mini_config();
  const auto pd = test::randomized_params(c, 8);
  const Crnn<double> md(c, pd);
  const Crnn<float> mf(c, cast_params<float>(pd));
  const auto x = random_input(7, c.input_bins, 2);
  const auto ld = md.forward(x, Mode::Eval).logits;
  const auto lf = mf.forward(x.cast<float>(), Mode::Eval).logits.cast<double>();
  EXPECT_LT((ld - lf).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Forward, RejectsWrongShapes) {
  const auto c = test::mini_config();
  const auto model = Crnn<double>::initialize(c, 2);
  EXPECT_EQ(test::error_of([&] { model.forward(Act<double>::Zero(3, 11), Mode::Eval); }), Errc::ShapeMismatch);
  EXPECT_EQ(test::error_of([&] { model.forward(Act<double>(0, 10), Mode::Eval); }), Errc::ShapeMismatch);
  auto wrong = init_params<double>(c, 1);
  wrong.output_bias.resize(3, 1);
  EXPECT_EQ(test::error_of([&] { Crnn<double>(c, wrong); }), Errc::ShapeMismatch);
}

// ------------------------------------------------------------------ backward

TEST(Backward, MatchesFiniteDifferences) {
  const auto r = test::check_network_gradient(test::mini_config(), 5, 21);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_tensor;
}

TEST(Backward, MatchesFiniteDifferencesWithDropout) {
  auto c = test::mini_config();
  c.dropout = 0.3;
  const auto r = test::check_network_gradient(c, 6, 22);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_tensor;
}

TEST(Backward, MatchesFiniteDifferencesWithFrameDoubling) {
  auto c = test::mini_config();
  c.frame_doubling = true;
  c.recurrent_layers = 1;
  const auto r = test::check_network_gradient(c, 4, 23);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_tensor;
}

TEST(Backward, ThroughCtcLoss) {
  const auto c = test::mini_config();
  const Crnn<double> model(c, test::randomized_params(c, 3));
  const auto x = random_input(6, c.input_bins, 5);
  const std::vector<Token> target{2, 3, 3};
  const auto fwd = model.forward(x, Mode::Train);
  const auto lat = ctc::ctc_loss(fwd.posteriors, target).lattice;
  const auto g = model.backward(*fwd.cache, ctc::ctc_grad(lat, fwd.posteriors));
  auto probe = model.params();
  auto& w = probe.output_weight;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double orig = w.data()[i];
    w.data()[i] = orig + h;
    const double up = ctc::ctc_loss(Crnn<double>(c, probe).forward(x, Mode::Train).posteriors, target).loss;
    w.data()[i] = orig - h;
    const double down = ctc::ctc_loss(Crnn<double>(c, probe).forward(x, Mode::Train).posteriors, target).loss;
    w.data()[i] = orig;
    EXPECT_NEAR((up - down) / (2 * h), g.output_weight.data()[i], 1e-6);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  auto c = test::mini_config();
  c.dropout = 0.2;
  const auto model = Crnn<double>::initialize(c, 2);
  const auto fwd = model.forward(random_input(4, c.input_bins, 1), Mode::Train, 7);
  const auto g = model.backward(*fwd.cache, Matrix<double>::Zero(4, c.vocab_size));
  for (const auto& t : tensors(g)) EXPECT_EQ(t.tensor->cwiseAbs().maxCoeff(), 0.0) << t.name;
}

TEST(Backward, DuplicatedSampleAveragesToTheSame) {
  const auto c = test::mini_config();
  const auto model = Crnn<double>::initialize(c, 2);
  const auto x = random_input(5, c.input_bins, 1);
  Rng rng(2);
  Matrix<double> up(5, c.vocab_size);
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.uniform(-1, 1);
  const auto single = model.backward(*model.forward(x, Mode::Train).cache, up);
  auto batch = model.backward(*model.forward(x, Mode::Train).cache, Matrix<double>(0.5 * up));
  const auto second = model.backward(*model.forward(x, Mode::Train).cache, Matrix<double>(0.5 * up));
  auto b = tensors(batch);
  const auto s = tensors(second);
  const auto one = tensors(single);
  for (std::size_t i = 0; i < b.size(); ++i) {
    *b[i].tensor += *s[i].tensor;
    EXPECT_LT((*b[i].tensor - *one[i].tensor).cwiseAbs().maxCoeff(), 1e-12) << b[i].name;
  }
}

TEST(Backward, StaleCacheIsRejected) {
  const auto c = test::mini_config();
  auto model = Crnn<double>::initialize(c, 2);
  const auto fwd = model.forward(random_input(4, c.input_bins, 1), Mode::Train);
  const Matrix<double> up = Matrix<double>::Ones(4, c.vocab_size);
  EXPECT_NO_THROW(model.backward(*fwd.cache, up));
  auto velocity = zeros_like(model.params());
  sgd_nesterov_step(model.params(), model.backward(*fwd.cache, up), velocity, 0.01);
  EXPECT_EQ(test::error_of([&] { model.backward(*fwd.cache, up); }), Errc::StaleCache);
  const auto fresh = model.forward(random_input(4, c.input_bins, 1), Mode::Train);
  EXPECT_EQ(test::error_of([&] { model.backward(*fresh.cache, Matrix<double>::Ones(3, c.vocab_size)); }),
            Errc::ShapeMismatch);
}

TEST(Backward, SoftmaxBackwardMatchesFiniteDifferences) {
  Rng rng(6);
  Matrix<double> logits(3, 4), w(3, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    logits.data()[i] = rng.uniform(-2, 2);
    w.data()[i] = rng.uniform(-1, 1);
  }
  const auto f = [&](const Matrix<double>& z) {
    return PosteriorGrid<double>::from_logits(z).probabilities().cwiseProduct(w).sum();
  };
  const auto probs = PosteriorGrid<double>::from_logits(logits).probabilities();
  const auto d = softmax_backward(probs, w);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Matrix<double> a = logits, b = logits;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    EXPECT_NEAR((f(a) - f(b)) / 2e-6, d.data()[i], 1e-8);
  }
}

TEST(Backward, MomentsUpdateRunningStats) {
  const auto c = test::mini_config();
  auto model = Crnn<double>::initialize(c, 2);
  const auto fwd = model.forward(random_input(4, c.input_bins, 1), Mode::Train);
  const auto before = model.params().output_norm.running_mean;
  const auto version = model.params().version;
  update_running_stats(model.params(), fwd.norm_moments);
  EXPECT_NE(model.params().output_norm.running_mean, before);
  EXPECT_EQ(model.params().version, version + 1);
  EXPECT_EQ(test::error_of([&] { update_running_stats(model.params(), {}); }), Errc::ShapeMismatch);
}

// ------------------------------------------------------------------ optimizer

TEST(Optimizer, Schedule) {
  EXPECT_DOUBLE_EQ(lr_at_epoch(0), 3e-4);
  EXPECT_NEAR(lr_at_epoch(1), 2.7273e-4, 1e-8);
  EXPECT_DOUBLE_EQ(lr_at_epoch(50), 3e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(51), lr_at_epoch(1));
  EXPECT_NEAR(lr_at_epoch(49), 3e-4 / std::pow(1.1, 49), 1e-18);
  EXPECT_EQ(test::error_of([] { lr_at_epoch(-1); }), Errc::InvalidConfig);
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
  auto p = init_params<double>(test::mini_config(), 1);
  const auto before = p;
  auto v = zeros_like(p);
  sgd_nesterov_step(p, zeros_like(p), v, 0.1);
  const auto a = tensors(p);
  const auto b = tensors(before);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].tensor, *b[i].tensor);
  EXPECT_EQ(p.version, before.version + 1);
}

TEST(Optimizer, TwoNesterovSteps) {
  // p0 = 1, g = 1 both steps, mu = 0.9, lr = 0.1:
  // v1 = 1, p1 = 1 - 0.1 (1 + 0.9) = 0.81; v2 = 1.9, p2 = 0.81 - 0.1 (1 + 1.71) = 0.539
  auto p = init_params<double>(test::mini_config(), 1);
  for (auto& t : tensors(p)) t.tensor->setOnes();
  auto g = zeros_like(p);
  for (auto& t : tensors(g)) t.tensor->setOnes();
  auto v = zeros_like(p);
  sgd_nesterov_step(p, g, v, 0.1, 0.9);
  EXPECT_NEAR(p.output_weight(0, 0), 0.81, 1e-15);
  sgd_nesterov_step(p, g, v, 0.1, 0.9);
  EXPECT_NEAR(p.output_weight(0, 0), 0.539, 1e-15);
  EXPECT_NEAR(v.output_weight(0, 0), 1.9, 1e-15);
  // running statistics are not optimized
  EXPECT_EQ(p.output_norm.running_mean(0, 0), 1.0);
  EXPECT_EQ(v.output_norm.running_mean(0, 0), 0.0);
}

TEST(Optimizer, NonFiniteGradient) {
  auto p = init_params<double>(test::mini_config(), 1);
  auto g = zeros_like(p);
  auto v = zeros_like(p);
  g.conv_bias[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto before = p.conv_weight[0];
  EXPECT_EQ(test::error_of([&] { sgd_nesterov_step(p, g, v, 0.1); }), Errc::NonFiniteGradient);
  EXPECT_EQ(p.conv_weight[0], before);
}

TEST(Optimizer, GlobalNormClipping) {
  auto g = zeros_like(init_params<double>(test::mini_config(), 1));
  g.output_bias(0, 0) = 3.0;
  g.output_bias(1, 0) = 4.0;
  g.output_norm.running_mean(0, 0) = 100.0;  // ignored
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
  clip_global_norm(g, 1.0);
  EXPECT_NEAR(g.output_bias(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  clip_global_norm(g, 2.0);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
}

// ------------------------------------------------------------------ checkpoint

Checkpoint sample_checkpoint() {
  const auto docs = test::preprocessed_fixtures();
  auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(docs));
  Checkpoint c;
  c.config = test::mini_config();
  c.config.vocab_size = static_cast<int>(vocab->size());
  c.vocab = vocab;
  c.params = cast_params<float>(test::randomized_params(c.config, 4));
  c.velocity = zeros_like(c.params);
  c.velocity.output_bias.setConstant(0.5f);
  c.state = {{"epoch", 3}, {"best_wer", 0.25}};
  return c;
}

TEST(Checkpoint, RoundTrip) {
  const auto c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  const auto d = decode_checkpoint(bytes, c.vocab->hash());
  EXPECT_EQ(d.config, c.config);
  EXPECT_EQ(d.vocab->hash(), c.vocab->hash());
  EXPECT_EQ(d.vocab->size(), c.vocab->size());
  EXPECT_EQ(d.state, c.state);
  const auto a = tensors(c.params);
  const auto b = tensors(d.params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].tensor, *b[i].tensor) << a[i].name;
  EXPECT_EQ(d.velocity.output_bias, c.velocity.output_bias);
  EXPECT_EQ(encode_checkpoint(d), bytes);
}

TEST(Checkpoint, RejectsCorruption) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  for (const std::size_t at : {std::size_t{0}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[at] ^= 0x40;
    EXPECT_EQ(test::error_of([&] { decode_checkpoint(bad); }), Errc::BadCheckpoint) << at;
  }
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 3));
  EXPECT_EQ(test::error_of([&] { decode_checkpoint(truncated); }), Errc::BadCheckpoint);
  EXPECT_EQ(test::error_of([&] { decode_checkpoint(std::vector<std::uint8_t>{}); }), Errc::BadCheckpoint);
}

TEST(Checkpoint, VocabularyMismatch) {
  const auto c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(test::error_of([&] { decode_checkpoint(bytes, c.vocab->hash() ^ 1); }), Errc::VocabularyMismatch);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "a2s_test_checkpoint";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  const auto c = sample_checkpoint();
  save_checkpoint(path, c);
  EXPECT_FALSE(std::filesystem::exists(dir / "model.ckpt.tmp"));
  EXPECT_EQ(encode_checkpoint(load_checkpoint(path)), encode_checkpoint(c));
  EXPECT_EQ(test::error_of([&] { load_checkpoint(dir / "missing.ckpt"); }), Errc::Io);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace a2s::net
