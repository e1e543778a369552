#pragma once

#include <optional>
#include <string>

#include "flashcg/model.hpp"

namespace flashcg {

inline constexpr char kParamsMagic[4] = {'F', 'L', 'C', 'G'};
inline constexpr std::uint32_t kParamsVersion = 1;

// Writes the FLCG container: magic, version, ModelConfig fields, then named
// tensors. fp16_scaled layers keep their fp16 bit patterns and scales.
void save_params(const std::string& path, const ModelParams& params);

// Reads an FLCG container. When `expected` is given, every tensor shape is
// checked against it and the first mismatch is reported by tensor name.
ModelParams load_params(const std::string& path,
                        const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace flashcg
