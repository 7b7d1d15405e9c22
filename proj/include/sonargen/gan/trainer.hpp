#ifndef SONARGEN_GAN_TRAINER_HPP
#define SONARGEN_GAN_TRAINER_HPP

#include "sonargen/conditioning.hpp"
#include "sonargen/nn/adam.hpp"
#include "sonargen/nn/networks.hpp"
#include "sonargen/procedural.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sonargen::gan {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 10;
  int d_steps_per_g_step = 3;
  double l1_weight = 100.0;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 writes only the final one

  void validate() const;
};

/// Full batches per epoch; a trailing partial batch is dropped.
inline int batches_per_epoch(std::size_t examples, int batch_size) { return int(examples / std::size_t(batch_size)); }

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLog {
  int epoch = 0;
  double d_loss = 0;
  double g_adv = 0;
  double l1 = 0;
  double d_real_acc = 0;  // share of real patches scored real
  double d_fake_acc = 0;  // share of fake patches scored fake
  double d_acc = 0;       // mean of the two
  long d_steps = 0;
  long g_steps = 0;
  double seconds = 0;
};

void to_json(nlohmann::json& j, const EpochLog& e);
void from_json(const nlohmann::json& j, EpochLog& e);

/// Generator and discriminator pair with the constants needed to feed them.
struct Model {
  nn::GeneratorConfig generator_config;
  nn::DiscriminatorConfig discriminator_config;
  ConditioningConfig conditioning;
  int tile_rows = 116;
  int tile_cols = 128;
  std::unique_ptr<nn::Generator<float>> generator;
  std::unique_ptr<nn::Discriminator<float>> discriminator;

  Model(const nn::GeneratorConfig& g, const nn::DiscriminatorConfig& d, const ConditioningConfig& c, int rows,
        int cols);
  void initialize(std::uint64_t seed);
};

/// Reduced-scale networks for 116x128 tiles on a single CPU core: 16 base
/// filters, no normalization, He-scaled initialization.
nn::GeneratorConfig desk_generator_config();
nn::DiscriminatorConfig desk_discriminator_config();

struct Checkpoint {
  std::shared_ptr<Model> model;
  TrainConfig train;
  int epoch = 0;
  std::vector<EpochLog> log;
  std::string id;  // content hash of the parameter blob
};

/// Directory with params.bin and meta.json. meta.json alone suffices to
/// rebuild the network shapes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
/// Shape-only reconstruction from meta.json; parameters stay uninitialized.
std::shared_ptr<Model> model_from_meta(const nlohmann::json& meta);

/// Adversarial trainer. Every batch computes the fakes once, then runs
/// d_steps_per_g_step discriminator updates followed by one generator update.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::shared_ptr<Model> model);

  using EpochCallback = std::function<void(const EpochLog&)>;

  /// Trains on `corpus` for cfg.epochs. Checkpoints go under `out` when given.
  std::vector<EpochLog> run(const Corpus& corpus, const std::optional<std::filesystem::path>& out = std::nullopt,
                            const EpochCallback& on_epoch = {});

  long d_steps() const { return d_opt_.steps(); }
  long g_steps() const { return g_opt_.steps(); }
  /// Optimizer step order, one character per update ('D' or 'G').
  const std::string& schedule() const { return schedule_; }
  const std::shared_ptr<Model>& model() const { return model_; }
  Checkpoint checkpoint(int epoch) const;

 private:
  TrainConfig cfg_;
  std::shared_ptr<Model> model_;
  nn::Adam<float> g_opt_;
  nn::Adam<float> d_opt_;
  std::string schedule_;
  std::vector<EpochLog> log_;
};

/// Generator and discriminator inputs for one corpus example.
GeneratorInput generator_input_for(const CorpusExample& ex, const ConditioningConfig& cond);

/// One generator pass. With `noise`, dropout is drawn from `seed`.
Image run_generator(nn::Generator<float>& g, const GeneratorInput& in, bool noise, std::uint64_t seed);

}  // namespace sonargen::gan

#endif  // SONARGEN_GAN_TRAINER_HPP
