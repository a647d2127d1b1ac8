#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nis/controller.hpp"

namespace nis {

// Binary weight envelope: 8-byte magic, version (u32 LE), size tag (u32 LE),
// then the weights as little-endian 64-bit floats in declaration order. The
// size tag is the hidden width for the policy and the class count for the
// cost predictor; it guards against loading a blob into the wrong shape.
inline constexpr char kPolicyMagic[9] = "NISPOL01";
inline constexpr char kPredictorMagic[9] = "NISPRD01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_weights(const std::string& path, const char* magic, std::uint32_t size_tag,
                  std::span<const double> weights);
// returns the weights; size_tag is validated when expect_tag != 0
std::vector<double> load_weights(const std::string& path, const char* magic,
                                 std::uint32_t expect_tag);

void save_policy(const std::string& path, const PolicyModel& model);
PolicyModel load_policy(const std::string& path);

}  // namespace nis
