#include "nis/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nis {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_weights(const std::string& path, const char* magic, std::uint32_t size_tag,
                  std::span<const double> weights) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(magic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, size_tag);
  for (double d : weights) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (u >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<double> load_weights(const std::string& path, const char* magic,
                                 std::uint32_t expect_tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char got[8];
  in.read(got, 8);
  if (!in || std::memcmp(got, magic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  const std::uint32_t tag = get_u32(in);
  if (expect_tag != 0 && tag != expect_tag)
    throw std::runtime_error("checkpoint shape mismatch in " + path);
  std::vector<double> w;
  unsigned char b[8];
  while (in.read(reinterpret_cast<char*>(b), 8)) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
    w.push_back(std::bit_cast<double>(u));
  }
  if (in.gcount() != 0) throw std::runtime_error("truncated checkpoint: " + path);
  return w;
}

void save_policy(const std::string& path, const PolicyModel& model) {
  if (!model.initialized()) throw std::logic_error("saving uninitialized policy");
  save_weights(path, kPolicyMagic, PolicyModel::kHidden, model.w);
}

PolicyModel load_policy(const std::string& path) {
  PolicyModel m;
  m.w = load_weights(path, kPolicyMagic, PolicyModel::kHidden);
  if (!m.initialized())
    throw std::runtime_error("policy checkpoint has wrong weight count: " + path);
  return m;
}

}  // namespace nis
