#include "utilgen/diffusion/checkpoint.hpp"

#include "utilgen/core/error.hpp"
#include "utilgen/nn/serialize.hpp"

namespace utilgen::diffusion {

using nlohmann::json;

namespace {

json denoiser_json(const Denoiser& d) {
  return {{"feature_dim", d.feature_dim()},
          {"time_dim", d.time_dim()},
          {"total_steps", d.total_steps()},
          {"null_token", nn::to_json(d.null_token())},
          {"net", nn::to_json(d.net())}};
}

Denoiser denoiser_from_json(const json& j) {
  return Denoiser(nn::mlp_from_json(j.at("net")), nn::vector_from_json(j.at("null_token")),
                  j.at("feature_dim").get<int>(), j.at("time_dim").get<int>(), j.at("total_steps").get<int>());
}

json tokens_json(const std::vector<ClassToken>& tokens) {
  json arr = json::array();
  for (const auto& t : tokens) arr.push_back({{"class", t.class_id}, {"embedding", nn::to_json(t.embedding)}});
  return arr;
}

std::vector<ClassToken> tokens_from_json(const json& arr) {
  std::vector<ClassToken> out;
  for (const auto& t : arr) out.push_back({t.at("class").get<int>(), nn::vector_from_json(t.at("embedding"))});
  return out;
}

}  // namespace

void save_generator(const std::filesystem::path& path, const GeneratorCheckpoint& ckpt,
                    const std::string& config_hash) {
  json payload = {{"alpha_bar", ckpt.schedule.alpha_bars()},
                  {"trainable", denoiser_json(ckpt.state.trainable)},
                  {"reference", denoiser_json(ckpt.state.reference)},
                  {"tokens", tokens_json(ckpt.tokens)}};
  nn::write_checkpoint(path, "generator", config_hash, payload);
}

GeneratorCheckpoint load_generator(const std::filesystem::path& path, std::string* config_hash) {
  const json p = nn::read_checkpoint(path, "generator", config_hash);
  try {
    GeneratorCheckpoint ckpt;
    ckpt.schedule = NoiseSchedule(p.at("alpha_bar").get<std::vector<double>>());
    ckpt.state.trainable = denoiser_from_json(p.at("trainable"));
    ckpt.state.reference = denoiser_from_json(p.at("reference"));
    ckpt.tokens = tokens_from_json(p.at("tokens"));
    return ckpt;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_tokens(const std::filesystem::path& path, const std::vector<ClassToken>& tokens,
                 const std::string& config_hash) {
  nn::write_checkpoint(path, "tokens", config_hash, tokens_json(tokens));
}

std::vector<ClassToken> load_tokens(const std::filesystem::path& path) {
  try {
    return tokens_from_json(nn::read_checkpoint(path, "tokens"));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace utilgen::diffusion
