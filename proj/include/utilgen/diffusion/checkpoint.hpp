#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "utilgen/diffusion/denoiser.hpp"
#include "utilgen/diffusion/schedule.hpp"

namespace utilgen::diffusion {

struct GeneratorCheckpoint {
  NoiseSchedule schedule;
  DenoiserState state;
  std::vector<ClassToken> tokens;
};

void save_generator(const std::filesystem::path& path, const GeneratorCheckpoint& ckpt, const std::string& config_hash);
GeneratorCheckpoint load_generator(const std::filesystem::path& path, std::string* config_hash = nullptr);

// Class tokens (or optimized prompts) on their own, one embedding per class.
void save_tokens(const std::filesystem::path& path, const std::vector<ClassToken>& tokens, const std::string& config_hash);
std::vector<ClassToken> load_tokens(const std::filesystem::path& path);

}  // namespace utilgen::diffusion
