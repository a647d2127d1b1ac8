#include "nis/params.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace nis {

namespace {

// split a path into numeric components; throws on junk
std::vector<std::uint64_t> path_components(const std::string& p) {
  std::vector<std::uint64_t> out;
  std::size_t i = 0;
  while (i < p.size()) {
    std::size_t j = p.find('/', i);
    if (j == std::string::npos) j = p.size();
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(p.data() + i, p.data() + j, v);
    if (ec != std::errc() || ptr != p.data() + j)
      throw std::invalid_argument("bad path component in '" + p + "'");
    out.push_back(v);
    i = j + 1;
  }
  if (out.empty()) throw std::invalid_argument("empty group path");
  return out;
}

double parse_double(const std::string& tok, int line, const char* what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ConfigParseError(line, std::string("bad ") + what + " '" + tok + "'");
  return v;
}

}  // namespace

bool PathLess::operator()(const std::string& a, const std::string& b) const {
  // component-at-a-time numeric comparison; no allocation, this sits on the
  // hot path of every ParameterIndex lookup during a build
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    std::size_t ja = a.find('/', ia), jb = b.find('/', ib);
    if (ja == std::string::npos) ja = a.size();
    if (jb == std::string::npos) jb = b.size();
    std::uint64_t va = 0, vb = 0;
    std::from_chars(a.data() + ia, a.data() + ja, va);
    std::from_chars(b.data() + ib, b.data() + jb, vb);
    if (va != vb) return va < vb;
    ia = ja + 1;
    ib = jb + 1;
  }
  return ia < a.size() ? false : ib < b.size();
}

const HyperParams& ParameterIndex::at(const std::string& path) const {
  auto it = groups.find(path);
  if (it == groups.end())
    throw std::out_of_range("no hyper-parameters for group path " + path);
  return it->second;
}

ParameterIndex parse_config(std::istream& in) {
  ParameterIndex pi;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string path, type_tok, x_tok, y_tok, a_tok, b_tok, g_tok;
    if (!(ls >> path)) continue;  // blank
    if (!(ls >> type_tok >> x_tok >> y_tok >> a_tok >> b_tok >> g_tok))
      throw ConfigParseError(line_no, "expected 7 columns");
    std::string extra;
    if (ls >> extra) throw ConfigParseError(line_no, "trailing token '" + extra + "'");

    HyperParams hp;
    try {
      // validate shape and canonicalize ("007/1" -> "7/1") so downstream
      // string comparisons agree with the numeric path order
      std::string canon;
      for (std::uint64_t c : path_components(path)) {
        if (!canon.empty()) canon += '/';
        canon += std::to_string(c);
      }
      path = std::move(canon);
      hp.block_type = block_type_from_string(type_tok);
    } catch (const std::invalid_argument& e) {
      throw ConfigParseError(line_no, e.what());
    }
    hp.x = static_cast<std::uint32_t>(parse_double(x_tok, line_no, "x"));
    hp.y = static_cast<std::uint32_t>(parse_double(y_tok, line_no, "y"));
    hp.alpha = parse_double(a_tok, line_no, "alpha");
    hp.beta = parse_double(b_tok, line_no, "beta");
    if (g_tok != "-") {
      std::size_t i = 0;
      while (i <= g_tok.size()) {
        std::size_t j = g_tok.find(',', i);
        if (j == std::string::npos) j = g_tok.size();
        hp.gamma.push_back(parse_double(g_tok.substr(i, j - i), line_no, "gamma"));
        i = j + 1;
        if (j == g_tok.size()) break;
      }
    }
    if (hp.gamma.size() != HyperParams::gamma_count(hp.y))
      throw ConfigParseError(line_no, "gamma entry count must be floor(log2 y)");
    if (pi.groups.count(path)) throw ConfigParseError(line_no, "duplicate path " + path);
    pi.groups.emplace(path, std::move(hp));
  }
  if (pi.groups.empty())
    throw ConfigParseError(line_no, "config defines no groups");
  if (!pi.contains("0")) throw ConfigParseError(line_no, "missing root group path 0");
  return pi;
}

ParameterIndex parse_config_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config file " + file);
  return parse_config(in);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

void write_config(std::ostream& out, const ParameterIndex& pi) {
  for (const auto& [path, hp] : pi.groups) {
    out << path << ' ' << to_string(hp.block_type) << ' ' << hp.x << ' ' << hp.y << ' '
        << format_double(hp.alpha) << ' ' << format_double(hp.beta) << ' ';
    if (hp.gamma.empty()) {
      out << '-';
    } else {
      for (std::size_t i = 0; i < hp.gamma.size(); ++i) {
        if (i) out << ',';
        out << format_double(hp.gamma[i]);
      }
    }
    out << '\n';
  }
}

void write_config_file(const std::string& file, const ParameterIndex& pi) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write config file " + file);
  write_config(out, pi);
}

}  // namespace nis
