#pragma once

// Plain-text `key = value` files: scenario overrides, sweep configs, and the
// per-run manifest written next to every output.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fdn/sim.hpp"

namespace fdn::cfg {

using KeyValues = std::map<std::string, std::string>;

// '#' starts a comment; blank lines ignored; keys and values trimmed.
KeyValues load_kv(const std::string& path);
KeyValues parse_kv(const std::string& text);

// Ordered writer used for manifests (insertion order preserved).
class KvWriter {
public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  void save(const std::string& path) const;

private:
  std::vector<std::pair<std::string, std::string>> items_;
};

std::vector<double> parse_double_list(const std::string& csv);
std::vector<int> parse_int_list(const std::string& csv);

// Applies recognized ChainParams keys (link_lengths, link_masses, actuated,
// passive_stiffness, passive_damping, gravity, floor_enabled,
// floor_friction_coulomb, tau_max, tip_mass, n_links); throws on unknown keys
// prefixed "sim.".
void apply_chain_overrides(sim::ChainParams& params, const KeyValues& kv);

// ISO-8601 UTC timestamp for manifests.
std::string timestamp_utc();

}  // namespace fdn::cfg
