#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctr {

// FNV-1a over the file bytes, hex-encoded. Used to fingerprint run inputs and
// outputs in manifests.
std::string file_digest(const std::string& path);

// Everything needed to reproduce one CLI run: the effective configuration,
// seeds, and digests of inputs and outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
  std::vector<std::pair<std::string, std::string>> outputs;  // path, digest
  std::vector<std::pair<std::string, double>> timings_ms;

  nlohmann::json to_json() const;
  void write(const std::string& path) const;
};

}  // namespace ctr
