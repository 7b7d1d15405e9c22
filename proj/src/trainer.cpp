#include "sonargen/gan/trainer.hpp"

#include "sonargen/gan/loss.hpp"
#include "sonargen/image_io.hpp"
#include "sonargen/util.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <numeric>
#include <random>

namespace sonargen::gan {

using nn::FeatureMap;

void TrainConfig::validate() const {
  std::vector<FieldError> errors;
  if (epochs <= 0) errors.push_back({"epochs", "must be positive"});
  if (batch_size <= 0) errors.push_back({"batch_size", "must be positive"});
  if (d_steps_per_g_step <= 0) errors.push_back({"d_steps_per_g_step", "must be positive"});
  if (!(l1_weight >= 0)) errors.push_back({"l1_weight", "must be non-negative"});
  if (!(learning_rate > 0)) errors.push_back({"learning_rate", "must be positive"});
  if (!(beta1 >= 0 && beta1 < 1)) errors.push_back({"beta1", "must lie in [0, 1)"});
  if (!(beta2 >= 0 && beta2 < 1)) errors.push_back({"beta2", "must lie in [0, 1)"});
  if (checkpoint_every < 0) errors.push_back({"checkpoint_every", "must be non-negative"});
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"d_steps_per_g_step", c.d_steps_per_g_step},
       {"l1_weight", c.l1_weight},
       {"learning_rate", c.learning_rate},
       {"adam_betas", {c.beta1, c.beta2}},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.d_steps_per_g_step = j.value("d_steps_per_g_step", d.d_steps_per_g_step);
  c.l1_weight = j.value("l1_weight", d.l1_weight);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  if (j.contains("adam_betas")) {
    c.beta1 = j["adam_betas"].at(0).get<double>();
    c.beta2 = j["adam_betas"].at(1).get<double>();
  }
  c.seed = j.value("seed", d.seed);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

void to_json(nlohmann::json& j, const EpochLog& e) {
  j = {{"epoch", e.epoch},           {"d_loss", e.d_loss},   {"g_adv", e.g_adv},
       {"l1", e.l1},                 {"d_real_acc", e.d_real_acc}, {"d_fake_acc", e.d_fake_acc},
       {"d_acc", e.d_acc},           {"d_steps", e.d_steps}, {"g_steps", e.g_steps},
       {"seconds", e.seconds}};
}

void from_json(const nlohmann::json& j, EpochLog& e) {
  e.epoch = j.at("epoch").get<int>();
  e.d_loss = j.at("d_loss").get<double>();
  e.g_adv = j.at("g_adv").get<double>();
  e.l1 = j.at("l1").get<double>();
  e.d_real_acc = j.value("d_real_acc", 0.0);
  e.d_fake_acc = j.value("d_fake_acc", 0.0);
  e.d_acc = j.value("d_acc", 0.0);
  e.d_steps = j.value("d_steps", 0L);
  e.g_steps = j.value("g_steps", 0L);
  e.seconds = j.value("seconds", 0.0);
}

// --- Model ------------------------------------------------------------------

Model::Model(const nn::GeneratorConfig& g, const nn::DiscriminatorConfig& d, const ConditioningConfig& c, int rows,
             int cols)
    : generator_config(g), discriminator_config(d), conditioning(c), tile_rows(rows), tile_cols(cols) {
  if (g.in_channels != GeneratorInput::kChannels)
    throw ValidationError("generator in_channels must be " + std::to_string(GeneratorInput::kChannels));
  if (g.out_channels != 1) throw ValidationError("generator out_channels must be 1");
  if (d.in_channels != DiscriminatorInput::kChannels)
    throw ValidationError("discriminator in_channels must be " + std::to_string(DiscriminatorInput::kChannels));
  const int m = 1 << g.n_downsamples;
  if (rows <= 0 || cols <= 0 || rows % m != 0 || cols % m != 0)
    throw ValidationError("tile size " + std::to_string(rows) + "x" + std::to_string(cols) + " must be divisible by " +
                          std::to_string(m));
  if (c.snippet_rows <= 0 || c.snippet_rows > rows) throw ValidationError("snippet_rows must lie in [1, tile_rows]");
  generator = std::make_unique<nn::Generator<float>>(g);
  discriminator = std::make_unique<nn::Discriminator<float>>(d);
}

nn::GeneratorConfig desk_generator_config() {
  nn::GeneratorConfig g;
  g.base_width = 16;
  g.norm = nn::NormKind::none;
  g.init = nn::InitScheme::scaled;
  g.upsampling = nn::Upsampling::transposed;
  return g;
}

nn::DiscriminatorConfig desk_discriminator_config() {
  nn::DiscriminatorConfig d;
  d.base_width = 16;
  d.norm = nn::NormKind::none;
  return d;
}

void Model::initialize(std::uint64_t seed) {
  nn::initialize(generator->parameters(), derive_seed(seed, 101), generator->config().init);
  nn::initialize(discriminator->parameters(), derive_seed(seed, 202));
}

// --- Checkpoints ------------------------------------------------------------

namespace {

constexpr char kParamsMagic[8] = {'S', 'G', 'P', 'A', 'R', 'A', 'M', '1'};

void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(const std::string& in, size_t& off) {
  if (off + 8 > in.size()) throw IoError("params.bin truncated");
  std::uint64_t v;
  std::memcpy(&v, in.data() + off, 8);
  off += 8;
  return v;
}

void write_tensors(std::string& out, const char* group, const std::vector<nn::Parameter<float>*>& params) {
  put_u64(out, params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    const std::string name = std::string(group) + "." + std::to_string(i) + "." + p->name;
    put_u64(out, name.size());
    out += name;
    put_u64(out, std::uint64_t(p->value.rows()));
    put_u64(out, std::uint64_t(p->value.cols()));
    out.append(reinterpret_cast<const char*>(p->value.data()), size_t(p->value.size()) * sizeof(float));
  }
}

void read_tensors(const std::string& in, size_t& off, const char* group,
                  const std::vector<nn::Parameter<float>*>& params) {
  const auto n = get_u64(in, off);
  if (n != params.size())
    throw IoError(std::string("params.bin: ") + group + " has " + std::to_string(n) + " tensors, network needs " +
                  std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const auto len = get_u64(in, off);
    if (off + len > in.size()) throw IoError("params.bin truncated");
    const std::string name = in.substr(off, len);
    off += len;
    const auto rows = get_u64(in, off), cols = get_u64(in, off);
    if (rows != std::uint64_t(p->value.rows()) || cols != std::uint64_t(p->value.cols()))
      throw IoError("params.bin: shape mismatch for " + name);
    const size_t bytes = size_t(rows * cols) * sizeof(float);
    if (off + bytes > in.size()) throw IoError("params.bin truncated");
    std::memcpy(p->value.data(), in.data() + off, bytes);
    off += bytes;
    p->zero_grad();
  }
}

std::string params_blob(Model& m) {
  std::string out(kParamsMagic, sizeof kParamsMagic);
  write_tensors(out, "generator", m.generator->parameters());
  write_tensors(out, "discriminator", m.discriminator->parameters());
  return out;
}

}  // namespace

std::shared_ptr<Model> model_from_meta(const nlohmann::json& meta) {
  if (!meta.contains("format_version") || meta["format_version"] != kFormatVersion)
    throw VersionError("checkpoint format_version unsupported (expected " + std::to_string(kFormatVersion) + ")");
  try {
    const auto& cfg = meta.at("config");
    return std::make_shared<Model>(cfg.at("generator").get<nn::GeneratorConfig>(),
                                   cfg.at("discriminator").get<nn::DiscriminatorConfig>(),
                                   cfg.at("conditioning").get<ConditioningConfig>(), cfg.at("tile_rows").get<int>(),
                                   cfg.at("tile_cols").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint meta.json: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  auto& m = *ckpt.model;
  const std::string blob = params_blob(m);
  nlohmann::json meta = {{"format_version", kFormatVersion},
                         {"id", hex64(fnv1a64(blob))},
                         {"epoch", ckpt.epoch},
                         {"config",
                          {{"generator", m.generator_config},
                           {"discriminator", m.discriminator_config},
                           {"conditioning", m.conditioning},
                           {"train", ckpt.train},
                           {"tile_rows", m.tile_rows},
                           {"tile_cols", m.tile_cols}}},
                         {"metrics", ckpt.log}};
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "params.bin", blob);
  write_file_atomic(dir / "meta.json", meta.dump(2));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "meta.json")) throw IoError("checkpoint has no meta.json: " + dir.string());
  auto meta = nlohmann::json::parse(read_file(dir / "meta.json"), nullptr, false);
  if (meta.is_discarded()) throw IoError("checkpoint meta.json is malformed");
  Checkpoint ck;
  ck.model = model_from_meta(meta);
  try {
    ck.epoch = meta.value("epoch", 0);
    ck.train = meta["config"].value("train", TrainConfig{});
    if (meta.contains("metrics")) ck.log = meta["metrics"].get<std::vector<EpochLog>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint meta.json: ") + e.what());
  }
  const std::string blob = read_file(dir / "params.bin");
  if (blob.size() < sizeof kParamsMagic || std::memcmp(blob.data(), kParamsMagic, sizeof kParamsMagic) != 0)
    throw IoError("params.bin has a bad header");
  size_t off = sizeof kParamsMagic;
  read_tensors(blob, off, "generator", ck.model->generator->parameters());
  read_tensors(blob, off, "discriminator", ck.model->discriminator->parameters());
  if (off != blob.size()) throw IoError("params.bin has trailing bytes");
  ck.id = hex64(fnv1a64(blob));
  return ck;
}

// --- Inputs -----------------------------------------------------------------

GeneratorInput generator_input_for(const CorpusExample& ex, const ConditioningConfig& cond) {
  const auto block = make_conditioning(ex.snippet, ex.yaw, ex.map.rows(), ex.map.cols(), cond.theta_max());
  return assemble_generator_input(ex.map, block);
}

Image run_generator(nn::Generator<float>& g, const GeneratorInput& in, bool noise, std::uint64_t seed) {
  nn::Rng rng(seed);
  nn::ForwardContext ctx;
  ctx.noise = noise;
  ctx.rng = &rng;
  const auto y = g.forward(in.channels, ctx);
  return get_channel(y, 0);
}

// --- Trainer ----------------------------------------------------------------

namespace {

nn::AdamConfig adam_of(const TrainConfig& c) { return {c.learning_rate, c.beta1, c.beta2, 1e-8}; }

struct Prepared {
  FeatureMap<float> g_in;   // 4 channels
  FeatureMap<float> d_in;   // map, snippet, image slot
  FeatureMap<float> real;   // 1 channel
};

FeatureMap<float> with_image(FeatureMap<float> base, const FeatureMap<float>& image) {
  base.data.col(kDiscImageChannel) = image.data.col(0);
  return base;
}

double share(const std::vector<FeatureMap<float>>& logits, bool positive) {
  double hit = 0, n = 0;
  for (const auto& l : logits) {
    hit += positive ? (l.data.array() > 0).count() : (l.data.array() < 0).count();
    n += double(l.data.size());
  }
  return hit / n;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<Model> model)
    : cfg_(cfg),
      model_(std::move(model)),
      g_opt_(model_->generator->parameters(), adam_of(cfg_)),
      d_opt_(model_->discriminator->parameters(), adam_of(cfg_)) {
  cfg_.validate();
}

Checkpoint Trainer::checkpoint(int epoch) const {
  Checkpoint c;
  c.model = model_;
  c.train = cfg_;
  c.epoch = epoch;
  c.log = log_;
  return c;
}

std::vector<EpochLog> Trainer::run(const Corpus& corpus, const std::optional<std::filesystem::path>& out,
                                   const EpochCallback& on_epoch) {
  auto& G = *model_->generator;
  auto& D = *model_->discriminator;
  const int B = cfg_.batch_size;
  if (corpus.size() < std::size_t(B))
    throw ValidationError("corpus holds " + std::to_string(corpus.size()) + " examples, fewer than one batch of " +
                          std::to_string(B));
  if (corpus.meta.tile_rows != model_->tile_rows || corpus.meta.tile_cols != model_->tile_cols)
    throw ValidationError("corpus tile size does not match the model");

  std::vector<Prepared> data;
  data.reserve(corpus.size());
  for (const auto& ex : corpus.examples) {
    Prepared p;
    p.g_in = generator_input_for(ex, model_->conditioning).channels;
    p.real = FeatureMap<float>(ex.image.rows(), ex.image.cols(), 1);
    set_channel(p.real, 0, ex.image.intensity);
    p.d_in = assemble_discriminator_input(ex.map, ex.snippet, ex.image.intensity).channels;
    data.push_back(std::move(p));
  }

  const int n_batches = batches_per_epoch(corpus.size(), B);
  std::vector<std::size_t> order(corpus.size());
  const float l1_w = float(cfg_.l1_weight);
  const int first_epoch = log_.empty() ? 1 : log_.back().epoch + 1;

  for (int epoch = first_epoch; epoch < first_epoch + cfg_.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg_.seed, 1000 + std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    double d_loss_sum = 0, real_acc = 0, fake_acc = 0;
    long d_evals = 0;

    for (int b = 0; b < n_batches; ++b) {
      std::vector<const Prepared*> batch;
      for (int i = 0; i < B; ++i) batch.push_back(&data[order[size_t(b * B + i)]]);

      // Fakes, computed once per batch with activations cached for the G step.
      nn::Rng noise_rng(derive_seed(cfg_.seed, (std::uint64_t(epoch) << 20) + std::uint64_t(b)));
      G.clear();
      std::vector<FeatureMap<float>> fakes, reals;
      for (int i = 0; i < B; ++i) {
        nn::ForwardContext ctx;
        ctx.training = true;
        ctx.noise = G.config().noise_mode;
        ctx.rng = &noise_rng;
        ctx.slot = i;
        fakes.push_back(G.forward(batch[size_t(i)]->g_in, ctx));
        reals.push_back(batch[size_t(i)]->real);
      }

      for (int s = 0; s < cfg_.d_steps_per_g_step; ++s) {
        D.clear();
        std::vector<FeatureMap<float>> real_logits, fake_logits;
        for (int i = 0; i < B; ++i) {
          nn::ForwardContext ctx;
          ctx.training = true;
          ctx.slot = i;
          real_logits.push_back(D.forward(batch[size_t(i)]->d_in, ctx));
          ctx.slot = B + i;
          fake_logits.push_back(D.forward(with_image(batch[size_t(i)]->d_in, fakes[size_t(i)]), ctx));
        }
        const auto lr = bce_with_logits(real_logits, true);
        const auto lf = bce_with_logits(fake_logits, false);
        const double loss = double(lr.value) + double(lf.value);
        if (!std::isfinite(loss))
          throw NumericError("non-finite discriminator loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
        d_loss_sum += loss;
        real_acc += share(real_logits, true);
        fake_acc += share(fake_logits, false);
        ++d_evals;
        for (int i = 0; i < B; ++i) {
          D.backward(lr.grad[size_t(i)], i);
          D.backward(lf.grad[size_t(i)], B + i);
        }
        d_opt_.step();
        schedule_ += 'D';
      }

      // Generator step through the updated discriminator.
      D.clear();
      std::vector<FeatureMap<float>> fake_logits;
      for (int i = 0; i < B; ++i) {
        nn::ForwardContext ctx;
        ctx.training = true;
        ctx.slot = i;
        fake_logits.push_back(D.forward(with_image(batch[size_t(i)]->d_in, fakes[size_t(i)]), ctx));
      }
      const auto adv = g_adversarial(fake_logits);
      const auto l1 = l1_term(reals, fakes);
      if (!std::isfinite(double(adv.value)) || !std::isfinite(double(l1.value)))
        throw NumericError("non-finite generator loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      log.g_adv += adv.value;
      log.l1 += l1.value;
      for (int i = 0; i < B; ++i) {
        const auto dx = D.backward(adv.grad[size_t(i)], i);
        FeatureMap<float> dy = l1.grad[size_t(i)];
        dy.data *= l1_w;
        dy.data.col(0) += dx.data.col(kDiscImageChannel);
        G.backward(dy, i);
      }
      D.zero_grad();
      g_opt_.step();
      schedule_ += 'G';
      G.clear();
      D.clear();
    }

    log.d_loss = d_loss_sum / double(d_evals);
    log.g_adv /= n_batches;
    log.l1 /= n_batches;
    log.d_real_acc = real_acc / double(d_evals);
    log.d_fake_acc = fake_acc / double(d_evals);
    log.d_acc = 0.5 * (log.d_real_acc + log.d_fake_acc);
    log.d_steps = d_opt_.steps();
    log.g_steps = g_opt_.steps();
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_.push_back(log);
    if (on_epoch) on_epoch(log);

    const bool last = epoch == first_epoch + cfg_.epochs - 1;
    if (out && (last || (cfg_.checkpoint_every > 0 && epoch % cfg_.checkpoint_every == 0))) {
      save_checkpoint(checkpoint(epoch), last ? *out : *out / ("epoch_" + std::to_string(epoch)));
    }
  }
  return log_;
}

}  // namespace sonargen::gan
