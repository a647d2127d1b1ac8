#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "nis/types.hpp"

namespace nis {

// Orders group paths root-first, numerically per component ("0/2" < "0/10").
struct PathLess {
  bool operator()(const std::string& a, const std::string& b) const;
};

// The blueprint a build follows: hyper-parameters per group path. The root
// group is "0"; the child group at slot s of block j in a group with fanout x
// appends "/<j*x+s>". A block is interior iff its child-slot paths are
// present; partial sibling slots are a validation error.
struct ParameterIndex {
  std::map<std::string, HyperParams, PathLess> groups;

  bool contains(const std::string& path) const { return groups.count(path) != 0; }
  const HyperParams& at(const std::string& path) const;
};

struct ConfigParseError : std::runtime_error {
  int line;
  ConfigParseError(int line_no, const std::string& what)
      : std::runtime_error("config line " + std::to_string(line_no) + ": " + what),
        line(line_no) {}
};

// Text format, one group per line:
//   path blockType x y alpha beta gamma1,...,gammaK
// gamma column is "-" when y = 1 (no link distances). '#' starts a comment.
ParameterIndex parse_config(std::istream& in);
ParameterIndex parse_config_file(const std::string& file);
void write_config(std::ostream& out, const ParameterIndex& pi);
void write_config_file(const std::string& file, const ParameterIndex& pi);

std::string format_double(double v);  // shortest round-trip form, locale-free

}  // namespace nis
