#include "fdn/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fdn::cfg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues parse_kv(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues load_kv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv(ss.str());
}

void KvWriter::set(const std::string& key, const std::string& value) {
  items_.emplace_back(key, value);
}

void KvWriter::set(const std::string& key, double value) {
  std::ostringstream os;
  os.precision(17);
  os << value;
  items_.emplace_back(key, os.str());
}

void KvWriter::set(const std::string& key, long long value) {
  items_.emplace_back(key, std::to_string(value));
}

void KvWriter::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write: " + path);
  for (const auto& [k, v] : items_) f << k << " = " << v << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (double d : parse_double_list(csv)) out.push_back(static_cast<int>(d));
  return out;
}

void apply_chain_overrides(sim::ChainParams& p, const KeyValues& kv) {
  for (const auto& [key, val] : kv) {
    if (key.rfind("sim.", 0) != 0) continue;
    const std::string k = key.substr(4);
    if (k == "n_links") p.n_links = std::stoi(val);
    else if (k == "link_lengths") p.link_lengths = parse_double_list(val);
    else if (k == "link_masses") p.link_masses = parse_double_list(val);
    else if (k == "actuated") p.actuated = parse_int_list(val);
    else if (k == "passive_stiffness") p.passive_stiffness = std::stod(val);
    else if (k == "passive_damping") p.passive_damping = std::stod(val);
    else if (k == "gravity") p.gravity = std::stod(val);
    else if (k == "floor_enabled") p.floor_enabled = (val == "true" || val == "1");
    else if (k == "floor_friction_coulomb") p.floor_friction_coulomb = std::stod(val);
    else if (k == "tau_max") p.tau_max = std::stod(val);
    else if (k == "tip_mass") p.tip_mass = std::stod(val);
    else if (k == "joint_armature") p.joint_armature = std::stod(val);
    else throw std::runtime_error("unknown sim override: " + key);
  }
  p.validate();
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace fdn::cfg
