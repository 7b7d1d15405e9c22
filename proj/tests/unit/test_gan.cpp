#include "support.hpp"

#include "sonargen/gan/grad_check.hpp"
#include "sonargen/gan/loss.hpp"
#include "sonargen/procedural.hpp"

#include <doctest.h>

using namespace sonargen;
using FM = nn::FeatureMap<double>;

namespace {

FM filled(int h, int w, double v, int c = 1) {
  FM m(h, w, c);
  m.data.setConstant(v);
  return m;
}

template <typename S>
nn::FeatureMap<S> random_map(int h, int w, int c, std::uint64_t seed, double lo = 0, double hi = 1) {
  nn::FeatureMap<S> m(h, w, c);
  nn::Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = S(u(rng));
  return m;
}

nn::GeneratorConfig tiny_generator(nn::NormKind norm = nn::NormKind::none) {
  nn::GeneratorConfig g;
  g.base_width = 2;
  g.n_resnet_blocks = 1;
  g.n_downsamples = 1;
  g.noise_mode = false;
  g.norm = norm;
  return g;
}

nn::DiscriminatorConfig tiny_discriminator(nn::NormKind norm = nn::NormKind::none) {
  nn::DiscriminatorConfig d;
  d.base_width = 2;
  d.n_layers = 1;
  d.norm = norm;
  return d;
}

gan::GradCheckResult check_generator(nn::Generator<double>& g, std::uint64_t seed, double eps = 1e-3) {
  const auto x = random_map<double>(8, 8, 4, seed), t = random_map<double>(8, 8, 1, seed + 1);
  gan::LossFn<double> f = [&](bool grad, std::vector<std::uint8_t>* tr) {
    nn::ForwardContext ctx;
    ctx.training = grad;
    ctx.kink_trace = tr;
    const auto y = g.forward(x, ctx);
    // |t - y| has its own kink
    if (tr)
      for (Eigen::Index i = 0; i < y.data.size(); ++i) tr->push_back(y.data.data()[i] > t.data.data()[i]);
    const auto l = gan::l1_term(std::vector{t}, std::vector{y});
    if (grad) g.backward(l.grad[0], 0);
    return l.value;
  };
  return gan::grad_check<double>(f, g.parameters(), eps);
}

gan::GradCheckResult check_discriminator(nn::Discriminator<double>& d, std::uint64_t seed, double eps = 1e-3) {
  const auto xr = random_map<double>(6, 6, 3, seed), xf = random_map<double>(6, 6, 3, seed + 1);
  gan::LossFn<double> f = [&](bool grad, std::vector<std::uint8_t>* tr) {
    nn::ForwardContext ctx;
    ctx.training = grad;
    ctx.kink_trace = tr;
    ctx.slot = 0;
    const auto lr = d.forward(xr, ctx);
    ctx.slot = 1;
    const auto lf = d.forward(xf, ctx);
    const auto a = gan::bce_with_logits(std::vector{lr}, true);
    const auto b = gan::bce_with_logits(std::vector{lf}, false);
    if (grad) {
      d.backward(a.grad[0], 0);
      d.backward(b.grad[0], 1);
    }
    return a.value + b.value;
  };
  return gan::grad_check<double>(f, d.parameters(), eps);
}

}  // namespace

TEST_CASE("generator shapes") {
  nn::GeneratorConfig narrow;  // full depth, narrow filters: shape does not depend on width
  narrow.base_width = 4;
  nn::Generator<float> g(narrow);
  nn::initialize(g.parameters(), 1);
  nn::ForwardContext ctx;
  const auto full = g.forward(nn::FeatureMap<float>(464, 512, 4), ctx);
  CHECK(full.height == 464);
  CHECK(full.width == 512);
  CHECK(full.channels() == 1);
  CHECK(full.data.allFinite());
  CHECK(full.data.minCoeff() >= 0.0f);
  CHECK(full.data.maxCoeff() <= 1.0f);

  const auto desk = g.forward(nn::FeatureMap<float>(116, 128, 4), ctx);
  CHECK(desk.height == 116);
  CHECK(desk.width == 128);

  nn::Generator<float> defaults(nn::GeneratorConfig{});
  CHECK(defaults.config().n_resnet_blocks == 9);
  CHECK_THROWS_AS(g.forward(nn::FeatureMap<float>(116, 128, 3), ctx), nn::ShapeError);
}

TEST_CASE("generator output stays in [0, 1] on random inputs") {
  for (auto ups : {nn::Upsampling::transposed, nn::Upsampling::resize}) {
    auto cfg = gan::desk_generator_config();
    cfg.base_width = 4;
    cfg.upsampling = ups;
    nn::Generator<float> g(cfg);
    nn::initialize(g.parameters(), 2, cfg.init);
    for (std::uint64_t s = 0; s < 3; ++s) {
      nn::ForwardContext ctx;
      const auto y = g.forward(random_map<float>(36, 20, 4, s, -3, 3), ctx);
      CHECK(y.data.allFinite());
      CHECK(y.data.minCoeff() >= 0.0f);
      CHECK(y.data.maxCoeff() <= 1.0f);
    }
  }
}

TEST_CASE("discriminator logits") {
  nn::DiscriminatorConfig cfg;
  cfg.base_width = 4;
  const auto [h, w] = nn::Discriminator<float>::output_shape(cfg, 464, 512);
  CHECK(h >= 1);
  CHECK(w >= 1);
  CHECK(h == 56);
  CHECK(w == 62);

  nn::Discriminator<float> d(cfg);
  nn::initialize(d.parameters(), 4);
  const auto a = random_map<float>(64, 64, 3, 1);
  auto b = a;
  b.data.col(kDiscImageChannel) = random_map<float>(64, 64, 1, 2).data.col(0);
  nn::ForwardContext ctx;
  const auto la = d.forward(a, ctx), la2 = d.forward(a, ctx), lb = d.forward(b, ctx);
  CHECK(la.data == la2.data);
  CHECK(la.data != lb.data);
  CHECK_THROWS_AS(d.forward(nn::FeatureMap<float>(64, 64, 4), ctx), nn::ShapeError);
}

TEST_CASE("loss closed forms") {
  const double ln2 = std::log(2.0);
  SUBCASE("ideal discriminator") {
    CHECK(gan::d_loss(std::vector{filled(4, 4, 50.0)}, std::vector{filled(4, 4, -50.0)}) < 1e-12);
    const std::vector<double> one{1.0, 1.0}, zero{0.0, 0.0};
    CHECK(gan::d_loss_from_probabilities(one, zero) == 0.0);
  }
  SUBCASE("undecided discriminator") {
    CHECK(std::abs(gan::d_loss(std::vector{FM(4, 4, 1)}, std::vector{FM(4, 4, 1)}) - 2 * ln2) <= 1e-9);
    CHECK(std::abs(gan::d_loss(std::vector{FM(1, 1, 1)}, std::vector{FM(1, 1, 1)}) - 2 * ln2) <= 1e-9);
    CHECK(std::abs(gan::d_loss(std::vector{FM(7, 3, 1), FM(7, 3, 1)}, std::vector{FM(7, 3, 1)}) - 2 * ln2) <= 1e-9);
    const std::vector<double> half{0.5};
    CHECK(std::abs(gan::d_loss_from_probabilities(half, half) - 2 * ln2) <= 1e-12);
  }
  SUBCASE("l1 term") {
    const std::vector y{filled(5, 6, 0.3)}, r{filled(5, 6, 0.8)};
    CHECK(gan::l1_term(y, y).value == 0.0);
    CHECK(100.0 * gan::l1_term(r, y).value == doctest::Approx(50.0).epsilon(1e-12));
  }
  SUBCASE("ideal generator") {
    const std::vector y{filled(5, 6, 0.3)};
    CHECK(std::abs(gan::g_loss(std::vector{filled(2, 2, 50.0)}, y, y, 100.0)) <= 1e-9);
    const std::vector<double> one{1.0};
    CHECK(gan::g_adversarial_from_probabilities(one) == 0.0);
  }
  SUBCASE("loss floor on random logits") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto a = random_map<double>(3, 3, 1, s, -20, 20), b = random_map<double>(3, 3, 1, s + 100, -20, 20);
      CHECK(gan::d_loss(std::vector{a}, std::vector{b}) >= 0.0);
      CHECK(gan::g_adversarial(std::vector{b}).value >= 0.0);
    }
  }
  SUBCASE("non-finite logits are rejected") {
    CHECK_THROWS_AS(gan::d_loss(std::vector{filled(1, 1, std::nan(""))}, std::vector{FM(1, 1, 1)}), nn::NumericError);
  }
}

TEST_CASE("finite-difference gradient oracle") {
  SUBCASE("generator under l1") {
    for (std::uint64_t seed : {1, 2, 3}) {
      nn::Generator<double> g(tiny_generator());
      nn::initialize(g.parameters(), seed);
      CHECK(g.parameter_count() <= 10000);
      const auto r = check_generator(g, seed);
      CHECK(r.checked > 0);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
  SUBCASE("generator with resize upsampling and scaled init") {
    auto cfg = tiny_generator();
    cfg.upsampling = nn::Upsampling::resize;
    nn::Generator<double> g(cfg);
    nn::initialize(g.parameters(), 5, nn::InitScheme::scaled);
    const auto r = check_generator(g, 5);
    CHECK(r.max_relative_error < 1e-4);
  }
  SUBCASE("discriminator under d_loss") {
    for (std::uint64_t seed : {1, 2, 3}) {
      nn::Discriminator<double> d(tiny_discriminator());
      nn::initialize(d.parameters(), seed + 7);
      const auto [h, w] = nn::Discriminator<double>::output_shape(tiny_discriminator(), 6, 6);
      CHECK(h * w == 1);
      const auto r = check_discriminator(d, seed);
      CHECK(r.checked > 0);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
  SUBCASE("symmetric zero weights broken by seeded init") {
    nn::Generator<double> g(tiny_generator());
    for (auto* p : g.parameters()) p->value.setZero();
    nn::initialize(g.parameters(), 11);
    double spread = 0;
    for (auto* p : g.parameters())
      if (p->name.ends_with(".weight")) spread += (p->value.array() - p->value.mean()).abs().sum();
    CHECK(spread > 0);
    CHECK(check_generator(g, 11).max_relative_error < 1e-4);
  }
  SUBCASE("instance-normalized discriminator converges with the step") {
    nn::Discriminator<double> d(tiny_discriminator(nn::NormKind::instance));
    nn::initialize(d.parameters(), 8);
    // central-difference error shrinks with the square of the step
    const double coarse = check_discriminator(d, 1, 1e-3).max_relative_error;
    const double fine = check_discriminator(d, 1, 1e-4).max_relative_error;
    CHECK(fine < coarse / 50);
    CHECK(check_discriminator(d, 1, 1e-5).max_relative_error < 1e-4);
  }
}

TEST_CASE("training schedule and determinism") {
  const auto world = demo_world(7);
  const auto corpus = make_corpus(world, demo_route(40 * 32 / 16.0 + 10, 32), 25, 3, [] {
    CorpusOptions o;
    o.tile_rows = 32;
    o.conditioning = ConditioningConfig::for_tile_rows(32);
    return o;
  }());
  auto run = [&] {
    auto model = test::tiny_model(32, 32, 2);
    gan::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 10;
    cfg.seed = 4;
    gan::Trainer t(cfg, model);
    auto log = t.run(corpus);
    return std::make_tuple(log, t.schedule(), t.d_steps(), t.g_steps());
  };
  const auto [log, schedule, d_steps, g_steps] = run();
  REQUIRE(log.size() == 2);
  CHECK(g_steps == 2 * 2);
  CHECK(d_steps == 3 * g_steps);
  std::string expected;
  for (int i = 0; i < 4; ++i) expected += "DDDG";
  CHECK(schedule == expected);

  const auto [log2, s2, d2, g2] = run();
  for (std::size_t e = 0; e < log.size(); ++e) {
    CHECK(log[e].l1 == log2[e].l1);
    CHECK(log[e].d_loss == log2[e].d_loss);
    CHECK(log[e].g_adv == log2[e].g_adv);
    CHECK(log[e].d_acc == log2[e].d_acc);
  }
}

TEST_CASE("batches per epoch") {
  CHECK(gan::batches_per_epoch(540, 10) == 54);
  CHECK(gan::batches_per_epoch(200, 10) == 20);
  const gan::TrainConfig defaults;
  CHECK(defaults.epochs == 200);
  CHECK(defaults.batch_size == 10);
  CHECK(defaults.d_steps_per_g_step == 3);
  CHECK(defaults.l1_weight == 100.0);
  CHECK(defaults.learning_rate == 2e-4);
  CHECK(defaults.beta1 == 0.5);
  CHECK(defaults.beta2 == 0.999);
}

TEST_CASE("train config validation") {
  gan::TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("checkpoint round trip") {
  test::TempDir dir("ckpt");
  auto model = test::tiny_model(32, 64, 2);
  gan::Checkpoint ck;
  ck.model = model;
  ck.epoch = 3;
  gan::save_checkpoint(ck, dir.path);
  const auto back = gan::load_checkpoint(dir.path);
  CHECK(back.epoch == 3);
  CHECK(!back.id.empty());
  CHECK(back.model->tile_rows == 32);
  CHECK(back.model->tile_cols == 64);
  auto pa = model->generator->parameters(), pb = back.model->generator->parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

  const auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  const auto shape = gan::model_from_meta(meta);
  CHECK(shape->generator->parameter_count() == model->generator->parameter_count());
  CHECK(shape->discriminator->parameter_count() == model->discriminator->parameter_count());
  CHECK(meta["format_version"] == kFormatVersion);

  auto tampered = meta;
  tampered["format_version"] = 7;
  write_file_atomic(dir / "meta.json", tampered.dump());
  CHECK_THROWS_AS(gan::load_checkpoint(dir.path), IoError);
}
