#include "sonargen/nn/networks.hpp"

namespace sonargen::nn {

NormKind norm_from_string(const std::string& s) {
  if (s == "instance") return NormKind::instance;
  if (s == "none") return NormKind::none;
  throw std::invalid_argument("unknown norm kind: " + s);
}

std::string to_string(NormKind k) { return k == NormKind::instance ? "instance" : "none"; }

Upsampling upsampling_from_string(const std::string& s) {
  if (s == "resize") return Upsampling::resize;
  if (s == "transposed") return Upsampling::transposed;
  throw std::invalid_argument("unknown upsampling: " + s);
}

std::string to_string(Upsampling u) { return u == Upsampling::resize ? "resize" : "transposed"; }

InitScheme init_from_string(const std::string& s) {
  if (s == "normal") return InitScheme::normal;
  if (s == "scaled") return InitScheme::scaled;
  throw std::invalid_argument("unknown init scheme: " + s);
}

std::string to_string(InitScheme s) { return s == InitScheme::normal ? "normal" : "scaled"; }

void GeneratorConfig::validate() const {
  if (in_channels < 1 || out_channels < 1 || base_width < 1 || n_resnet_blocks < 0 || n_downsamples < 0)
    throw std::invalid_argument("generator config: non-positive size");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("generator config: dropout_rate");
}

void DiscriminatorConfig::validate() const {
  if (in_channels < 1 || base_width < 1 || n_layers < 1)
    throw std::invalid_argument("discriminator config: non-positive size");
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"in_channels", c.in_channels},   {"out_channels", c.out_channels},
       {"base_width", c.base_width},     {"n_resnet_blocks", c.n_resnet_blocks},
       {"n_downsamples", c.n_downsamples}, {"noise_mode", c.noise_mode},
       {"dropout_rate", c.dropout_rate}, {"norm", to_string(c.norm)}, {"stem_norm", c.stem_norm},
       {"upsampling", to_string(c.upsampling)}, {"init", to_string(c.init)}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  GeneratorConfig d;
  c.in_channels = j.value("in_channels", d.in_channels);
  c.out_channels = j.value("out_channels", d.out_channels);
  c.base_width = j.value("base_width", d.base_width);
  c.n_resnet_blocks = j.value("n_resnet_blocks", d.n_resnet_blocks);
  c.n_downsamples = j.value("n_downsamples", d.n_downsamples);
  c.noise_mode = j.value("noise_mode", d.noise_mode);
  c.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  c.stem_norm = j.value("stem_norm", d.stem_norm);
  c.upsampling = upsampling_from_string(j.value("upsampling", to_string(d.upsampling)));
  c.init = init_from_string(j.value("init", to_string(d.init)));
  c.norm = norm_from_string(j.value("norm", to_string(d.norm)));
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"base_width", c.base_width},
       {"n_layers", c.n_layers},
       {"norm", to_string(c.norm)}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  DiscriminatorConfig d;
  c.in_channels = j.value("in_channels", d.in_channels);
  c.base_width = j.value("base_width", d.base_width);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.norm = norm_from_string(j.value("norm", to_string(d.norm)));
}

}  // namespace sonargen::nn
